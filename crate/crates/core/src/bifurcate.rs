//! Newton solve for pure-tone solutions bifurcating from a linear k-mode.
//!
//! Data at `x = 0` is `y0 = p_bar + z + alpha cos(k nu t) + sum_{j != k} a_j cos(j nu t)`.
//! The unknowns `(z, a_j)` are fixed by requiring every sine coefficient of
//! `S E(y0)` to vanish. Rows are scaled so that the Euclidean norm of the
//! scaled residual equals the weighted norm of `S E(y0)`: the `k` row by
//! `k^(2b)`, the others by `j^b / delta_j`.
//!
//! For even `k` the solution is `T/2`-periodic and only even modes are used.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{
    boundary_operator, second_derivative_quiet, weighted_norm, EvolutionConfig, Evolver,
    FourierField, SecondDerivative,
};
use crate::linwave::{field_from_trajectory, x_grid, TileField, TileMeta};
use crate::profile::Medium;
use crate::spectrum::{
    divisors, eigen_solve, resonance_scan, Chi, DivisorTable, EigenFrequency, ResonanceThresholds,
    Verdict,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_newton: usize,
    pub fd_rel_step: f64,
    pub tail_ratio: f64,
    pub max_mode_doublings: usize,
    pub n_quad: Option<usize>,
    pub dx: Option<f64>,
    pub sobolev_b: f64,
    pub thresholds: ResonanceThresholds,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_newton: 30,
            fd_rel_step: 1e-7,
            tail_ratio: 1e-3,
            max_mode_doublings: 2,
            n_quad: None,
            dx: None,
            sobolev_b: 3.0,
            thresholds: ResonanceThresholds::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BifurcationProblem {
    pub medium: Medium,
    pub k: usize,
    pub chi: Chi,
    pub modes: usize,
    pub alphas: Vec<f64>,
    pub settings: SolverSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PureToneSolution {
    pub alpha: f64,
    pub z: f64,
    /// Cosine coefficients indexed by mode; entries `0` and `k` are zero.
    pub a: Vec<f64>,
    pub modes: usize,
    pub period: f64,
    pub p_bar: f64,
    /// `p_bar + z`, the mean pressure at `x = 0`.
    pub effective_p_bar: f64,
    pub residual_weighted: f64,
    pub residual_auxiliary: f64,
    pub residual_bifurcation: f64,
    pub newton_iters: usize,
}

impl PureToneSolution {
    pub fn initial_data(&self, k: usize) -> FourierField {
        let mut y = FourierField::zeros(self.period, self.modes);
        y.a.copy_from_slice(&self.a);
        y.a[0] = self.p_bar + self.z;
        y.a[k] = self.alpha;
        y
    }

    pub fn max_aux(&self) -> f64 {
        self.a.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Problem data after the resonance gate.
pub struct Prepared<'a> {
    pub problem: &'a BifurcationProblem,
    pub eigen: EigenFrequency,
    pub divisors: DivisorTable,
    pub modes: usize,
    evolver: Evolver<'a>,
    /// Active modes other than `k`, in unknown order.
    others: Vec<usize>,
}

impl BifurcationProblem {
    pub fn new(medium: Medium, k: usize, chi: Chi, modes: usize) -> Self {
        Self {
            medium,
            k,
            chi,
            modes,
            alphas: Vec::new(),
            settings: SolverSettings::default(),
        }
    }

    pub fn with_alphas(mut self, alphas: Vec<f64>) -> Self {
        self.alphas = alphas;
        self
    }

    fn evolution_config(&self, modes: usize) -> EvolutionConfig {
        let mut cfg = EvolutionConfig::new(modes);
        if let Some(nq) = self.settings.n_quad {
            cfg.n_quad = nq.max(4 * modes);
        }
        cfg.dx = self.settings.dx;
        cfg.sobolev_b = self.settings.sobolev_b;
        cfg
    }

    /// Runs the resonance gate and builds the solver state for `modes`.
    pub fn prepare(&self, modes: usize) -> Result<Prepared<'_>> {
        let scan = resonance_scan(
            &self.medium.profile,
            self.k,
            self.chi,
            modes.max(self.k),
            self.settings.thresholds,
        )?;
        if scan.verdict != Verdict::Nonresonant {
            return Err(Error::Resonant {
                k: self.k,
                j: scan.argmin_j,
                residual: scan.min_residual,
            });
        }
        let eigen = eigen_solve(&self.medium.profile, self.k, self.chi)?;
        let table = divisors(&self.medium.profile, eigen.period, self.chi, modes)?;
        let evolver = Evolver::new(&self.medium, eigen.period, self.evolution_config(modes))?;
        let step = if self.k % 2 == 0 { 2 } else { 1 };
        let others = (step..=modes)
            .step_by(step)
            .filter(|&j| j != self.k)
            .collect();
        Ok(Prepared {
            problem: self,
            eigen,
            divisors: table,
            modes,
            evolver,
            others,
        })
    }

    pub fn solve_at_alpha(
        &self,
        alpha: f64,
        warm: Option<&PureToneSolution>,
    ) -> Result<PureToneSolution> {
        let mut modes = self.modes;
        for attempt in 0..=self.settings.max_mode_doublings {
            let prep = self.prepare(modes)?;
            let sol = prep.solve(alpha, warm)?;
            if prep.tail_ok(&sol) || attempt == self.settings.max_mode_doublings {
                return Ok(sol);
            }
            modes *= 2;
        }
        unreachable!()
    }

    /// Solves along the increasing amplitude schedule, warm-starting each point.
    pub fn branch_continue(&self) -> Result<BranchReport> {
        let mut alphas = self.alphas.clone();
        alphas.sort_by(|a, b| a.total_cmp(b));
        let prep = self.prepare(self.modes)?;
        let mut solutions: Vec<PureToneSolution> = Vec::new();
        let mut failure = None;
        for &alpha in &alphas {
            let res = match solutions.last() {
                Some(prev) if prev.modes == prep.modes => prep.solve(alpha, Some(prev)),
                prev => self.solve_at_alpha(alpha, prev),
            };
            let res = res.and_then(|s| {
                if prep.tail_ok(&s) || s.modes != prep.modes {
                    Ok(s)
                } else {
                    self.solve_at_alpha(alpha, Some(&s))
                }
            });
            match res {
                Ok(s) => solutions.push(s),
                Err(e) => {
                    failure = Some(BranchFailure {
                        alpha,
                        kind: e.kind().into(),
                        message: e.to_string(),
                    });
                    break;
                }
            }
        }
        Ok(BranchReport {
            k: self.k,
            chi: self.chi,
            omega: prep.eigen.omega,
            period: prep.eigen.period,
            largest_alpha: solutions.last().map(|s| s.alpha),
            solutions,
            failure,
        })
    }

    /// Trajectory of a solution at the nodes of `x_grid(ell, nx)` and the sampled base tile.
    pub fn solution_tile(
        &self,
        sol: &PureToneSolution,
        nx: usize,
        nt: usize,
    ) -> Result<(TileField, Vec<FourierField>)> {
        let evolver = Evolver::new(&self.medium, sol.period, self.evolution_config(sol.modes))?;
        let x = x_grid(self.medium.profile.ell(), nx);
        let fields = evolver.nonlinear_trajectory(&sol.initial_data(self.k), &x)?;
        let meta = TileMeta {
            profile_hash: None,
            k: self.k,
            alpha: sol.alpha,
            chi: self.chi,
        };
        let tile = field_from_trajectory(&self.medium.profile, &x, &fields, nt, meta)?;
        Ok((tile, fields))
    }

    /// Mixed finite difference of the k-th sine coefficient of `S E(p_bar + z + alpha cos)`
    /// against the Duhamel value of the same second derivative.
    pub fn dgdz_check(&self, h: f64) -> Result<DgdzCheck> {
        let prep = self.prepare(self.modes)?;
        let f = |al: f64, z: f64| -> Result<f64> {
            let mut y =
                FourierField::constant(prep.eigen.period, prep.modes, self.medium.p_bar + z);
            y.a[self.k] = al;
            Ok(boundary_operator(&prep.evolver.nonlinear(&y)?, self.chi).b[self.k])
        };
        let fd = (f(h, h)? - f(h, -h)? - f(-h, h)? + f(-h, -h)?) / (4.0 * h * h);
        let d2 = second_derivative_quiet(&self.medium, &prep.eigen)?;
        let psi = crate::sl_core::fundamental_matrix(&self.medium.profile, prep.eigen.omega)?;
        let (s, c) = self.chi.phase(self.k);
        let predicted_sign = (s * psi.m[0][1] + c * psi.m[1][1]) * d2.b_ell;
        Ok(DgdzCheck {
            finite_difference: fd,
            duhamel: d2.pairing,
            relative_difference: (fd - d2.pairing).abs() / d2.pairing.abs(),
            sign_agrees: fd.signum() == d2.pairing.signum()
                && predicted_sign.signum() == d2.pairing.signum(),
            step: h,
            second_derivative: d2,
        })
    }
}

impl Prepared<'_> {
    fn dim(&self) -> usize {
        self.others.len() + 1
    }

    fn assemble(&self, alpha: f64, u: &[f64]) -> FourierField {
        let mut y = FourierField::constant(
            self.eigen.period,
            self.modes,
            self.problem.medium.p_bar + u[0],
        );
        y.a[self.problem.k] = alpha;
        for (i, &j) in self.others.iter().enumerate() {
            y.a[j] = u[i + 1];
        }
        y
    }

    fn row_scales(&self) -> Vec<f64> {
        let b = self.problem.settings.sobolev_b;
        let k = self.problem.k;
        let mut s = vec![(k as f64).powf(2.0 * b)];
        s.extend(
            self.others
                .iter()
                .map(|&j| (j as f64).powf(b) / self.divisors.get(j)),
        );
        s
    }

    /// Modes other than `k` that carry unknowns.
    pub fn active_modes(&self) -> &[usize] {
        &self.others
    }

    /// Sine coefficients `r_1..r_M` of `S E(y0)` for coefficients `a` indexed by mode.
    pub fn residual_modes(&self, alpha: f64, z: f64, a: &[f64]) -> Result<Vec<f64>> {
        if a.len() != self.modes + 1 {
            return Err(Error::Usage(format!(
                "expected {} coefficients, got {}",
                self.modes + 1,
                a.len()
            )));
        }
        let mut y =
            FourierField::constant(self.eigen.period, self.modes, self.problem.medium.p_bar + z);
        for j in 1..=self.modes {
            y.a[j] = a[j];
        }
        y.a[self.problem.k] = alpha;
        let s = boundary_operator(&self.evolver.nonlinear(&y)?, self.problem.chi);
        Ok(s.b[1..].to_vec())
    }

    /// Sine coefficients of `S E(y0)` on the active rows (k first).
    pub fn residual(&self, alpha: f64, u: &[f64]) -> Result<Vec<f64>> {
        let out = self.evolver.nonlinear(&self.assemble(alpha, u))?;
        let s = boundary_operator(&out, self.problem.chi);
        let mut r = vec![s.b[self.problem.k]];
        r.extend(self.others.iter().map(|&j| s.b[j]));
        Ok(r)
    }

    fn scaled(&self, alpha: f64, u: &[f64], scales: &[f64]) -> Result<DVector<f64>> {
        let r = self.residual(alpha, u)?;
        Ok(DVector::from_iterator(
            r.len(),
            r.iter().zip(scales).map(|(a, b)| a * b),
        ))
    }

    fn jacobian(
        &self,
        alpha: f64,
        u: &[f64],
        f0: &DVector<f64>,
        scales: &[f64],
    ) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let step = self.problem.settings.fd_rel_step;
        let cols: Vec<Result<DVector<f64>>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let h = step * u[i].abs().max(1.0);
                let mut up = u.to_vec();
                up[i] += h;
                let h = up[i] - u[i];
                Ok((self.scaled(alpha, &up, scales)? - f0) / h)
            })
            .collect();
        let mut jac = DMatrix::zeros(n, n);
        for (i, c) in cols.into_iter().enumerate() {
            jac.set_column(i, &c?);
        }
        Ok(jac)
    }

    fn tail_ok(&self, s: &PureToneSolution) -> bool {
        let m = s.max_aux();
        let ratio = self.problem.settings.tail_ratio;
        m == 0.0 || (s.a[self.modes].abs() < ratio * m && s.a[self.modes - 1].abs() < ratio * m)
    }

    fn package(&self, alpha: f64, u: &[f64], iters: usize) -> Result<PureToneSolution> {
        let k = self.problem.k;
        let y0 = self.assemble(alpha, u);
        let s = boundary_operator(&self.evolver.nonlinear(&y0)?, self.problem.chi);
        let weighted = weighted_norm(&s, &self.divisors, self.problem.settings.sobolev_b, k)?;
        let mut aux = s.clone();
        aux.b[k] = 0.0;
        let auxiliary = weighted_norm(&aux, &self.divisors, self.problem.settings.sobolev_b, k)?;
        let mut a = vec![0.0; self.modes + 1];
        for (i, &j) in self.others.iter().enumerate() {
            a[j] = u[i + 1];
        }
        let p_bar = self.problem.medium.p_bar;
        Ok(PureToneSolution {
            alpha,
            z: u[0],
            a,
            modes: self.modes,
            period: self.eigen.period,
            p_bar,
            effective_p_bar: p_bar + u[0],
            residual_weighted: weighted,
            residual_auxiliary: auxiliary,
            residual_bifurcation: (s.b[k] * (k as f64).powf(2.0 * self.problem.settings.sobolev_b))
                .abs(),
            newton_iters: iters,
        })
    }

    /// Newton iteration with finite-difference Jacobian and step halving.
    pub fn solve(&self, alpha: f64, warm: Option<&PureToneSolution>) -> Result<PureToneSolution> {
        let n = self.dim();
        let mut u = vec![0.0; n];
        if alpha == 0.0 {
            return self.package(alpha, &u, 0);
        }
        if let Some(w) = warm.filter(|w| w.alpha != 0.0 && w.modes == self.modes) {
            let q = (alpha / w.alpha).powi(2);
            u[0] = w.z * q;
            for (i, &j) in self.others.iter().enumerate() {
                u[i + 1] = w.a[j] * q;
            }
        }
        let settings = &self.problem.settings;
        let scales = self.row_scales();
        let mut f = self.scaled(alpha, &u, &scales)?;
        let mut norm = f.norm();
        let mut jac: Option<DMatrix<f64>> = None;
        let fail = |reason: String| Error::Newton { alpha, reason };
        for iter in 0..settings.max_newton {
            if norm < settings.tol {
                return self.package(alpha, &u, iter);
            }
            let j = match jac.take() {
                Some(j) => j,
                None => self.jacobian(alpha, &u, &f, &scales)?,
            };
            let delta = j
                .clone()
                .lu()
                .solve(&(-&f))
                .ok_or_else(|| fail("singular Jacobian".into()))?;
            let mut lambda = 1.0;
            let (new_u, new_f, new_norm) = loop {
                let trial: Vec<f64> = u
                    .iter()
                    .zip(delta.iter())
                    .map(|(a, d)| a + lambda * d)
                    .collect();
                let tf = self.scaled(alpha, &trial, &scales)?;
                let tn = tf.norm();
                if tn < norm || lambda < 1.0 / 64.0 {
                    break (trial, tf, tn);
                }
                lambda *= 0.5;
            };
            if new_norm >= norm {
                // stalled; accept only if the floor is already within tolerance
                return Err(fail(format!(
                    "no decrease from weighted residual {norm:.3e}"
                )));
            }
            // keep the Jacobian while convergence is fast
            if new_norm < 0.1 * norm && lambda == 1.0 {
                jac = Some(j);
            }
            u = new_u;
            f = new_f;
            norm = new_norm;
        }
        if norm < settings.tol {
            return self.package(alpha, &u, settings.max_newton);
        }
        Err(fail(format!(
            "weighted residual {norm:.3e} after {} iterations",
            settings.max_newton
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchFailure {
    pub alpha: f64,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    pub k: usize,
    pub chi: Chi,
    pub omega: f64,
    pub period: f64,
    pub solutions: Vec<PureToneSolution>,
    pub largest_alpha: Option<f64>,
    pub failure: Option<BranchFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgdzCheck {
    pub finite_difference: f64,
    pub duhamel: f64,
    pub relative_difference: f64,
    pub sign_agrees: bool,
    pub step: f64,
    pub second_derivative: SecondDerivative,
}
