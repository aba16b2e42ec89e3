//! Eigenfrequencies, divisors, resonance checks and genericity sampling.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{JumpAngleParams, Profile};
use crate::sl_core::{angle_chain, angle_with_derivative, fundamental_matrix};

/// Boundary indicator at `x = ell`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chi {
    /// Shifted periodic condition, `chi = 1`.
    Periodic,
    /// Reflecting wall `u = 0`, `chi = 0`.
    Acoustic,
}

impl Chi {
    pub fn value(self) -> u32 {
        match self {
            Chi::Periodic => 1,
            Chi::Acoustic => 0,
        }
    }

    /// `(sin, cos)` of `j chi pi / 2`, exact.
    pub fn phase(self, j: usize) -> (f64, f64) {
        match self {
            Chi::Acoustic => (0.0, 1.0),
            Chi::Periodic => match j % 4 {
                0 => (0.0, 1.0),
                1 => (1.0, 0.0),
                2 => (0.0, -1.0),
                _ => (-1.0, 0.0),
            },
        }
    }

    pub fn admits(self, k: usize) -> bool {
        k >= 1 && (self == Chi::Periodic || k % 2 == 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenFrequency {
    pub k: usize,
    pub omega: f64,
    pub period: f64,
    pub chi: Chi,
    pub kappa_residual: f64,
}

/// `kappa(omega) = (2/pi) theta(ell, omega)`.
pub fn kappa(profile: &Profile, omega: f64) -> Result<f64> {
    kappa_with_derivative(profile, omega).map(|(k, _)| k)
}

pub fn kappa_with_derivative(profile: &Profile, omega: f64) -> Result<(f64, f64)> {
    if !(omega >= 0.0) {
        return Err(Error::Domain(format!(
            "omega must be nonnegative, got {omega}"
        )));
    }
    let (t, dt) = angle_with_derivative(profile, omega, 0.0)?;
    Ok((t / FRAC_PI_2, dt / FRAC_PI_2))
}

/// Monotone root of `kappa(omega) = k` by safeguarded Newton inside a bracket.
fn solve_kappa<F>(mut f: F, k: usize, guess: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let target = k as f64;
    let (mut lo, mut hi) = (0.0, guess.max(1e-12) * 1.5);
    let mut expansions = 0;
    loop {
        let (kh, _) = f(hi)?;
        if kh >= target {
            break;
        }
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 200 || !hi.is_finite() {
            return Err(Error::Bracket(format!("no upper bracket for k={k}")));
        }
    }
    let mut w = if guess > lo && guess < hi {
        guess
    } else {
        0.5 * (lo + hi)
    };
    let mut best = (w, f64::INFINITY);
    for _ in 0..300 {
        let (kw, dk) = f(w)?;
        let r = kw - target;
        if r.abs() < best.1.abs() {
            best = (w, r);
        }
        if r == 0.0 || (r.abs() <= 8.0 * f64::EPSILON * target.max(1.0)) {
            return Ok((w, r));
        }
        if r < 0.0 {
            lo = w;
        } else {
            hi = w;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(best);
        }
        let newton = w - r / dk;
        w = if dk > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(best)
}

/// `k`-th eigenfrequency: `theta(ell, omega_k) = k pi / 2`.
pub fn eigen_solve(profile: &Profile, k: usize, chi: Chi) -> Result<EigenFrequency> {
    if !chi.admits(k) {
        return Err(Error::Domain(format!(
            "mode k={k} not admissible for chi={}",
            chi.value()
        )));
    }
    let guess = k as f64 * profile.lambda();
    let (omega, res) = match profile {
        Profile::Pwc(p) => {
            let params = p.to_jump_angles();
            solve_kappa(|w| Ok(kappa_chain(&params, w)), k, guess)?
        }
        Profile::Smooth(_) => solve_kappa(|w| kappa_with_derivative(profile, w), k, guess)?,
    };
    Ok(EigenFrequency {
        k,
        omega,
        period: 2.0 * PI * k as f64 / omega,
        chi,
        kappa_residual: res,
    })
}

fn kappa_chain(params: &JumpAngleParams, omega: f64) -> (f64, f64) {
    let (t, dt) = angle_chain(params, omega, 0.0);
    (t / FRAC_PI_2, dt / FRAC_PI_2)
}

/// Eigenfrequencies of a piecewise constant profile given in jump/angle form.
pub fn eigen_ladder_params(params: &JumpAngleParams, kmax: usize) -> Result<Vec<f64>> {
    let lambda = FRAC_PI_2 / params.angles.iter().sum::<f64>();
    (1..=kmax)
        .map(|k| solve_kappa(|w| Ok(kappa_chain(params, w)), k, k as f64 * lambda).map(|r| r.0))
        .collect()
}

pub fn eigen_table(profile: &Profile, ks: &[usize], chi: Chi) -> Result<Vec<EigenFrequency>> {
    ks.iter().map(|&k| eigen_solve(profile, k, chi)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivisorTable {
    pub period: f64,
    pub chi: Chi,
    /// `delta[j - 1]` is the `j`-th divisor.
    pub delta: Vec<f64>,
}

impl DivisorTable {
    pub fn get(&self, j: usize) -> f64 {
        self.delta[j - 1]
    }

    pub fn j_max(&self) -> usize {
        self.delta.len()
    }

    pub fn bound(&self) -> f64 {
        self.delta.iter().fold(0.0, |m, d| m.max(d.abs()))
    }
}

/// `delta_j(T) = (0 1) R(j chi pi/2) Psi(ell; j 2 pi / T) (1 0)^T`.
pub fn divisor(profile: &Profile, period: f64, chi: Chi, j: usize) -> Result<f64> {
    let psi = fundamental_matrix(profile, j as f64 * 2.0 * PI / period)?;
    let (s, c) = chi.phase(j);
    Ok(s * psi.m[0][0] + c * psi.m[1][0])
}

pub fn divisors(profile: &Profile, period: f64, chi: Chi, j_max: usize) -> Result<DivisorTable> {
    if !(period > 0.0) {
        return Err(Error::Domain(format!(
            "period must be positive, got {period}"
        )));
    }
    let delta = (1..=j_max)
        .map(|j| divisor(profile, period, chi, j))
        .collect::<Result<_>>()?;
    Ok(DivisorTable { period, chi, delta })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Nonresonant,
    Borderline,
    Resonant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceThresholds {
    /// Smallest divisor must exceed this for a nonresonant verdict.
    pub tol: f64,
    /// Below this the mode is called resonant; in between is borderline.
    pub resonant_below: f64,
}

impl Default for ResonanceThresholds {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            resonant_below: 1e-10,
        }
    }
}

/// Nearest frequency relation `k omega_l ~ j omega_k` for one divisor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMatch {
    pub j: usize,
    pub delta: f64,
    pub l: usize,
    /// `|k omega_l - j omega_k| / omega_k`.
    pub ratio_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub k: usize,
    pub chi: Chi,
    pub omega: f64,
    pub period: f64,
    pub j_max: usize,
    pub thresholds: ResonanceThresholds,
    pub min_residual: f64,
    pub argmin_j: usize,
    /// Every `j != k` with `|delta_j| <= tol`.
    pub offending: Vec<usize>,
    pub verdict: Verdict,
    pub matches: Vec<FrequencyMatch>,
}

/// Divisor scan at `T_k` with a frequency-ratio cross-check per `j`.
pub fn resonance_scan(
    profile: &Profile,
    k: usize,
    chi: Chi,
    j_max: usize,
    thresholds: ResonanceThresholds,
) -> Result<ResonanceReport> {
    let ef = eigen_solve(profile, k, chi)?;
    let table = divisors(profile, ef.period, chi, j_max)?;
    let mut min_residual = f64::INFINITY;
    let mut argmin_j = 0;
    let mut offending = Vec::new();
    let mut matches = Vec::new();
    for j in 1..=j_max {
        if j == k {
            continue;
        }
        let d = table.get(j);
        if d.abs() < min_residual {
            min_residual = d.abs();
            argmin_j = j;
        }
        if d.abs() <= thresholds.tol {
            offending.push(j);
        }
        matches.push(nearest_match(profile, &ef, j, d)?);
    }
    let verdict = if min_residual > thresholds.tol {
        Verdict::Nonresonant
    } else if min_residual < thresholds.resonant_below {
        Verdict::Resonant
    } else {
        Verdict::Borderline
    };
    Ok(ResonanceReport {
        k,
        chi,
        omega: ef.omega,
        period: ef.period,
        j_max,
        thresholds,
        min_residual,
        argmin_j,
        offending,
        verdict,
        matches,
    })
}

/// The eigenvalue `omega_l` closest to `j omega_k / k` with the parity `delta_j` probes.
fn nearest_match(
    profile: &Profile,
    ef: &EigenFrequency,
    j: usize,
    delta: f64,
) -> Result<FrequencyMatch> {
    let target = j as f64 * ef.omega / ef.k as f64;
    let kap = kappa(profile, target)?;
    // delta_j vanishes when theta(ell) = l pi/2 with l of the parity the boundary row selects
    let parity = match ef.chi {
        Chi::Periodic => j % 2,
        Chi::Acoustic => 0,
    };
    let mut l = kap.round() as i64;
    if (l.rem_euclid(2)) as usize != parity {
        l = if kap >= l as f64 { l + 1 } else { l - 1 };
    }
    let l = l.max(if parity == 0 { 2 } else { 1 }) as usize;
    let wl = eigen_solve(profile, l, if parity == 0 { ef.chi } else { Chi::Periodic })?.omega;
    Ok(FrequencyMatch {
        j,
        delta,
        l,
        ratio_residual: (ef.k as f64 * wl - j as f64 * ef.omega).abs() / ef.omega,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericityConfig {
    pub levels: usize,
    pub samples: usize,
    pub seed: u64,
    pub jump_range: [f64; 2],
    pub angle_range: [f64; 2],
    pub k_max: usize,
    pub l_max: usize,
    pub j_max: usize,
    pub exact_tol: f64,
    /// Histogram bins are decades `[10^e, 10^(e+1))` for `e` in this range.
    pub hist_decades: [i32; 2],
}

impl Default for GenericityConfig {
    fn default() -> Self {
        Self {
            levels: 2,
            samples: 10_000,
            seed: 0,
            jump_range: [0.2, 5.0],
            angle_range: [0.1, 3.0],
            k_max: 12,
            l_max: 12,
            j_max: 24,
            exact_tol: 1e-12,
            hist_decades: [-17, 0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: usize,
    pub jumps: Vec<f64>,
    pub angles: Vec<f64>,
    pub min_residual: f64,
    /// `(k, l, j)` attaining the minimum.
    pub argmin: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Lower decade exponent of each bin; values below the first bin land in it.
    pub decades: Vec<i32>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericityStats {
    pub config: GenericityConfig,
    pub completed: usize,
    pub failures: usize,
    pub exact_resonances: usize,
    pub histogram: Histogram,
    pub min_of_min: f64,
    pub median_min: f64,
    pub mean_log10_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenericityRun {
    pub stats: GenericityStats,
    pub records: Vec<SampleRecord>,
}

/// Parameter draw for sample `id`; independent of thread scheduling.
pub fn draw_sample(cfg: &GenericityConfig, id: usize) -> JumpAngleParams {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(id as u64);
    let jumps = (0..cfg.levels - 1)
        .map(|_| draw(&mut rng, cfg.jump_range))
        .collect();
    let angles = (0..cfg.levels)
        .map(|_| draw(&mut rng, cfg.angle_range))
        .collect();
    JumpAngleParams { jumps, angles }
}

fn draw(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.gen_range(range[0]..range[1])
    } else {
        range[0]
    }
}

/// Smallest relative residual `|k w_l - j w_k| / (k w_l)` over the triple box.
pub fn min_frequency_residual(
    omegas: &[f64],
    k_max: usize,
    l_max: usize,
    j_max: usize,
) -> (f64, [usize; 3]) {
    let mut best = (f64::INFINITY, [0; 3]);
    for k in 1..=k_max {
        let wk = omegas[k - 1];
        for l in 1..=l_max {
            let kwl = k as f64 * omegas[l - 1];
            for j in 1..=j_max {
                if l == k && j == k {
                    continue;
                }
                let r = (kwl - j as f64 * wk).abs() / kwl;
                if r < best.0 {
                    best = (r, [k, l, j]);
                }
            }
        }
    }
    best
}

pub fn genericity_mc(cfg: &GenericityConfig) -> Result<GenericityRun> {
    if cfg.levels < 2 || cfg.samples == 0 {
        return Err(Error::Usage(
            "genericity needs at least 2 levels and 1 sample".into(),
        ));
    }
    let top = cfg.k_max.max(cfg.l_max);
    let results: Vec<Option<SampleRecord>> = (0..cfg.samples)
        .into_par_iter()
        .map(|id| {
            let params = draw_sample(cfg, id);
            let omegas = eigen_ladder_params(&params, top).ok()?;
            let (min_residual, argmin) =
                min_frequency_residual(&omegas, cfg.k_max, cfg.l_max, cfg.j_max);
            Some(SampleRecord {
                id,
                jumps: params.jumps,
                angles: params.angles,
                min_residual,
                argmin,
            })
        })
        .collect();
    let failures = results.iter().filter(|r| r.is_none()).count();
    let records: Vec<SampleRecord> = results.into_iter().flatten().collect();
    let mins: Vec<f64> = records.iter().map(|r| r.min_residual).collect();
    let stats = GenericityStats {
        config: cfg.clone(),
        completed: records.len(),
        failures,
        exact_resonances: mins.iter().filter(|&&m| m < cfg.exact_tol).count(),
        histogram: histogram(&mins, cfg.hist_decades),
        min_of_min: mins.iter().cloned().fold(f64::INFINITY, f64::min),
        median_min: median(&mins),
        mean_log10_min: if mins.is_empty() {
            f64::NAN
        } else {
            mins.iter().map(|m| m.max(1e-300).log10()).sum::<f64>() / mins.len() as f64
        },
    };
    Ok(GenericityRun { stats, records })
}

pub fn histogram(values: &[f64], decades: [i32; 2]) -> Histogram {
    let ds: Vec<i32> = (decades[0]..decades[1]).collect();
    let mut counts = vec![0; ds.len()];
    for &v in values {
        let e = if v > 0.0 {
            v.log10().floor() as i32
        } else {
            decades[0]
        };
        let i = (e.clamp(decades[0], decades[1] - 1) - decades[0]) as usize;
        counts[i] += 1;
    }
    Histogram {
        decades: ds,
        counts,
    }
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}
