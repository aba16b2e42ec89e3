mod common;

use common::*;
use proptest::prelude::*;
use puretone::eos::GammaLawEos;
use puretone::evolve::{
    boundary_operator, second_derivative_quiet, EvolutionConfig, Evolver, FourierField,
};
use puretone::profile::{Medium, PiecewiseConstantProfile, Profile};
use puretone::sl_core::fundamental_matrix;
use puretone::spectrum::{eigen_solve, Chi};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn shifted_quiet_states_are_fixed_points() {
    let m = two_level_medium();
    let ef = eigen_solve(&m.profile, 1, Chi::Periodic).unwrap();
    let ev = Evolver::new(&m, ef.period, EvolutionConfig::new(16)).unwrap();
    for z in [0.0, 1e-3, -0.2] {
        let q = FourierField::constant(ef.period, 16, m.p_bar + z);
        let out = ev.nonlinear(&q).unwrap();
        assert!(out.max_abs_diff(&q) < 1e-14, "z={z}");
        assert!(boundary_operator(&out, Chi::Periodic)
            .b
            .iter()
            .all(|v| v.abs() < 1e-14));
    }
}

#[test]
fn linearized_constant_profile_is_trigonometric() {
    let p: Profile = PiecewiseConstantProfile::constant(1.0, 1.0).unwrap().into();
    let m = Medium::new(GammaLawEos::new(1.4, 1.0).unwrap(), 1.0, p).unwrap();
    let period = 4.0;
    let ev = Evolver::new(&m, period, EvolutionConfig::new(8).with_dx(2e-4)).unwrap();
    let q = FourierField::constant(period, 8, 1.0);
    for j in 1..=8 {
        let (_, d) = ev
            .linearized(&q, &FourierField::cos_mode(period, 8, j, 1.0))
            .unwrap();
        let w = j as f64 * d.nu();
        assert!((d.a[j] - w.cos()).abs() < 1e-9, "j={j}");
        assert!((d.b[j] - w.sin()).abs() < 1e-9, "j={j}");
    }
}

/// Three routes to the mixed second derivative at the quiet state.
#[test]
fn second_derivative_three_routes() {
    let m = two_level_medium();
    let ef = eigen_solve(&m.profile, 1, Chi::Periodic).unwrap();
    let duhamel = second_derivative_quiet(&m, &ef).unwrap();
    let modes = 16;
    let ev = Evolver::new(&m, ef.period, EvolutionConfig::new(modes).with_dx(5e-4)).unwrap();
    let one = FourierField::constant(ef.period, modes, 1.0);
    let cosk = FourierField::cos_mode(ef.period, modes, 1, 1.0);
    let spectral = boundary_operator(
        &ev.second_variation_quiet(m.p_bar, &one, &cosk).unwrap(),
        Chi::Periodic,
    )
    .b[1];
    let f = |al: f64, z: f64| {
        let mut y = FourierField::constant(ef.period, modes, m.p_bar + z);
        y.a[1] = al;
        boundary_operator(&ev.nonlinear(&y).unwrap(), Chi::Periodic).b[1]
    };
    let h = 1e-4;
    let fd = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
    let rel = |a: f64| (a - duhamel.pairing).abs() / duhamel.pairing.abs();
    assert!(rel(spectral) < 1e-7, "{spectral} vs {}", duhamel.pairing);
    assert!(rel(fd) < 1e-6, "{fd} vs {}", duhamel.pairing);
    // k odd under chi = 1: phi(ell) vanishes and the pairing reduces to phi~(ell) b(ell)
    let psi = fundamental_matrix(&m.profile, ef.omega).unwrap();
    assert!((duhamel.phi_hat - psi.m[0][1] * duhamel.b_ell).abs() < 1e-8);
}

#[test]
fn pairing_scales_with_curvature() {
    // at fixed sigma, v_pp(p_bar) = (1/gamma + 1) sigma^2 / p_bar
    let ef = eigen_solve(&two_level(), 2, Chi::Periodic).unwrap();
    let run = |g: f64| {
        let m = Medium::new(GammaLawEos::new(g, 1.0).unwrap(), 1.0, two_level()).unwrap();
        second_derivative_quiet(&m, &ef).unwrap().pairing
    };
    let ratio = run(1.4) / run(3.0);
    let expect = (1.0 / 1.4 + 1.0) / (1.0 / 3.0 + 1.0);
    assert!((ratio - expect).abs() < 1e-9 * expect);
}

#[test]
fn genuine_nonlinearity_sign_on_random_profiles() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..30 {
        let (s, w) = random_pwc(&mut rng, 4, (0.3, 3.0));
        let p: Profile = PiecewiseConstantProfile::new(s, w).unwrap().into();
        let m = Medium::new(
            GammaLawEos::new(rng.gen_range(1.1..3.0), 1.0).unwrap(),
            1.3,
            p,
        )
        .unwrap();
        let k = rng.gen_range(1..=5);
        let chi = if k % 2 == 0 && rng.gen_bool(0.5) {
            Chi::Acoustic
        } else {
            Chi::Periodic
        };
        let ef = eigen_solve(&m.profile, k, chi).unwrap();
        assert!(second_derivative_quiet(&m, &ef).unwrap().b_ell < 0.0);
    }
}

fn field_strategy() -> impl Strategy<Value = FourierField> {
    (
        prop::collection::vec(-1.0f64..1.0, 6),
        prop::collection::vec(-1.0f64..1.0, 6),
        0.5f64..8.0,
    )
        .prop_map(|(a, mut b, period)| {
            b[0] = 0.0;
            FourierField { period, a, b }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn shift_and_reflect_identities(f in field_strategy(), tau in -5.0f64..5.0, t in -5.0f64..5.0) {
        prop_assert!((f.shift(tau).eval(t) - f.eval(t - tau)).abs() < 1e-12);
        prop_assert!((f.reflect().eval(t) - f.eval(-t)).abs() < 1e-12);
        prop_assert!(f.project_even().max_abs_diff(&f.reflect().project_even()) < 1e-14);
    }

    #[test]
    fn boundary_operator_is_odd_part_after_quarter_shift(f in field_strategy()) {
        let direct = f.shift(f.period / 4.0).project_odd();
        prop_assert!(direct.max_abs_diff(&boundary_operator(&f, Chi::Periodic)) < 1e-12);
        prop_assert!(f.project_odd().max_abs_diff(&boundary_operator(&f, Chi::Acoustic)) == 0.0);
    }

    #[test]
    fn samples_match_pointwise_evaluation(f in field_strategy()) {
        let s = f.sample(32);
        for (n, v) in s.iter().enumerate() {
            prop_assert!((v - f.eval(n as f64 * f.period / 32.0)).abs() < 1e-12);
        }
    }
}
