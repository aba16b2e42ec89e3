//! Independent oracles shared by the integration tests. Nothing here calls the
//! transfer-matrix or Prüfer code of the crate.
#![allow(dead_code)]

use puretone::eos::GammaLawEos;
use puretone::profile::{Medium, PiecewiseConstantProfile, Profile};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn two_level() -> Profile {
    PiecewiseConstantProfile::new(vec![1.0, 2.0], vec![0.5, 0.5])
        .unwrap()
        .into()
}

pub fn two_level_medium() -> Medium {
    Medium::new(GammaLawEos::new(1.4, 1.0).unwrap(), 1.0, two_level()).unwrap()
}

fn rk4(f: &dyn Fn(f64, [f64; 2]) -> [f64; 2], x: f64, y: [f64; 2], h: f64) -> [f64; 2] {
    let add = |a: [f64; 2], b: [f64; 2], s: f64| [a[0] + s * b[0], a[1] + s * b[1]];
    let k1 = f(x, y);
    let k2 = f(x + h / 2.0, add(y, k1, h / 2.0));
    let k3 = f(x + h / 2.0, add(y, k2, h / 2.0));
    let k4 = f(x + h, add(y, k3, h));
    [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Fixed-step RK4 for `phi' = -w psi`, `psi' = sigma(x)^2 w phi` over `[0, ell]`,
/// restarted at every breakpoint. Columns are the images of `(1,0)` and `(0,1)`.
pub fn dense_psi_fn(
    sigma: &dyn Fn(f64) -> f64,
    breaks: &[f64],
    omega: f64,
    steps: usize,
) -> [[f64; 2]; 2] {
    let ell = *breaks.last().unwrap();
    let f = |x: f64, y: [f64; 2]| {
        let s = sigma(x);
        [-omega * y[1], s * s * omega * y[0]]
    };
    let mut cols = [[1.0, 0.0], [0.0, 1.0]];
    for c in cols.iter_mut() {
        let mut x0 = 0.0;
        for &x1 in breaks {
            let n = ((steps as f64 * (x1 - x0) / ell).ceil() as usize).max(1);
            let h = (x1 - x0) / n as f64;
            for i in 0..n {
                // sample the interior of the piece so the left limit is never used
                let xa = x0 + i as f64 * h;
                let g = |x: f64, y: [f64; 2]| f(x.clamp(x0 + 1e-15 * ell, x1 - 1e-15 * ell), y);
                *c = rk4(&g, xa, *c, h);
            }
            x0 = x1;
        }
    }
    [[cols[0][0], cols[1][0]], [cols[0][1], cols[1][1]]]
}

pub fn dense_psi_pwc(sigma: &[f64], widths: &[f64], omega: f64, steps: usize) -> [[f64; 2]; 2] {
    let mut breaks = Vec::new();
    let mut x = 0.0;
    for w in widths {
        x += w;
        breaks.push(x);
    }
    let b2 = breaks.clone();
    let s = sigma.to_vec();
    let sig = move |xx: f64| {
        let i = b2.iter().position(|&b| xx < b).unwrap_or(s.len() - 1);
        s[i]
    };
    dense_psi_fn(&sig, &breaks, omega, steps)
}

/// Random piecewise constant profile with `1..=n_max` levels on `[0, 1]`.
pub fn random_pwc(
    rng: &mut ChaCha8Rng,
    n_max: usize,
    sigma_range: (f64, f64),
) -> (Vec<f64>, Vec<f64>) {
    let n = rng.gen_range(1..=n_max);
    let sigma: Vec<f64> = (0..n)
        .map(|_| rng.gen_range(sigma_range.0..sigma_range.1))
        .collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut widths: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let head: f64 = widths[..n - 1].iter().sum();
    widths[n - 1] = 1.0 - head;
    (sigma, widths)
}

pub fn max_entry_diff(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            d = d.max((a[i][j] - b[i][j]).abs());
        }
    }
    d
}

/// Bisection on a sign change of `f` in `[a, b]`.
pub fn bisect(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 || (b - a) < 1e-15 * b.abs() {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}
