//! Marching in `x` of `T`-periodic time signals.
//!
//! With `y = p + u` (`p` even in `t`, `u` odd) the system `p_x + u_t = 0`,
//! `u_x - v(p, s)_t = 0` becomes `y_x + (R- y - v(R+ y, s))_t = 0`. In
//! trigonometric coefficients `y = a_0 + sum a_j cos(j nu t) + b_j sin(j nu t)`:
//!
//! ```text
//! a_j' = -j nu b_j,    b_j' = -j nu V_j,    a_0' = 0,
//! ```
//!
//! where `V_j` are cosine coefficients of `v(p(t), s(x))`, computed by
//! collocation on an oversampled grid. The flux is evaluated as an increment
//! over `v(p_bar)` so that small signals keep full relative precision.
//! Coefficients pass unchanged across entropy jumps.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{Medium, Segment};
use crate::spectrum::{Chi, DivisorTable, EigenFrequency};

/// Real trigonometric coefficients of a `T`-periodic signal.
///
/// `a[0]` is the mean; `b[0]` is always zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierField {
    pub period: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl FourierField {
    pub fn zeros(period: f64, modes: usize) -> Self {
        Self {
            period,
            a: vec![0.0; modes + 1],
            b: vec![0.0; modes + 1],
        }
    }

    pub fn constant(period: f64, modes: usize, value: f64) -> Self {
        let mut f = Self::zeros(period, modes);
        f.a[0] = value;
        f
    }

    pub fn cos_mode(period: f64, modes: usize, k: usize, amp: f64) -> Self {
        let mut f = Self::zeros(period, modes);
        f.a[k] = amp;
        f
    }

    pub fn modes(&self) -> usize {
        self.a.len() - 1
    }

    pub fn nu(&self) -> f64 {
        2.0 * PI / self.period
    }

    pub fn eval(&self, t: f64) -> f64 {
        let w = self.nu() * t;
        let mut s = self.a[0];
        for j in 1..self.a.len() {
            let (sn, cs) = (j as f64 * w).sin_cos();
            s += self.a[j] * cs + self.b[j] * sn;
        }
        s
    }

    /// Even part (`p` when the field is `y`).
    pub fn project_even(&self) -> Self {
        Self {
            period: self.period,
            a: self.a.clone(),
            b: vec![0.0; self.b.len()],
        }
    }

    /// Odd part (`u` when the field is `y`).
    pub fn project_odd(&self) -> Self {
        Self {
            period: self.period,
            a: vec![0.0; self.a.len()],
            b: self.b.clone(),
        }
    }

    /// `t -> f(t - tau)`.
    pub fn shift(&self, tau: f64) -> Self {
        let mut out = self.clone();
        for j in 1..self.a.len() {
            let (s, c) = (j as f64 * self.nu() * tau).sin_cos();
            out.a[j] = self.a[j] * c - self.b[j] * s;
            out.b[j] = self.a[j] * s + self.b[j] * c;
        }
        out
    }

    /// `t -> f(-t)`.
    pub fn reflect(&self) -> Self {
        let mut out = self.clone();
        for v in out.b.iter_mut() {
            *v = -*v;
        }
        out
    }

    /// Samples on `t_n = n T / nt`.
    pub fn sample(&self, nt: usize) -> Vec<f64> {
        (0..nt)
            .map(|n| self.eval(n as f64 * self.period / nt as f64))
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.a
            .iter()
            .zip(&other.a)
            .chain(self.b.iter().zip(&other.b))
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().chain(&self.b).all(|v| v.is_finite())
    }

    fn to_state(&self, out: &mut [f64]) {
        let n = self.a.len();
        out[..n].copy_from_slice(&self.a);
        out[n..2 * n].copy_from_slice(&self.b);
    }

    fn from_state(period: f64, modes: usize, s: &[f64]) -> Self {
        let n = modes + 1;
        Self {
            period,
            a: s[..n].to_vec(),
            b: s[n..2 * n].to_vec(),
        }
    }
}

/// `R- T^{chi T/4}`: odd part of `y(t - chi T/4)`.
///
/// On a cosine mode evolved linearly this yields `delta_j sin(j nu t)`.
pub fn boundary_operator(y: &FourierField, chi: Chi) -> FourierField {
    let mut out = FourierField::zeros(y.period, y.modes());
    for j in 1..=y.modes() {
        let (s, c) = chi.phase(j);
        out.b[j] = y.a[j] * s + y.b[j] * c;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub modes: usize,
    pub n_quad: usize,
    /// Upper bound on the x-step; the stability bound applies when smaller.
    pub dx: Option<f64>,
    pub sobolev_b: f64,
    pub guard_factor: f64,
}

impl EvolutionConfig {
    pub fn new(modes: usize) -> Self {
        Self {
            modes,
            n_quad: 4 * modes.max(1),
            dx: None,
            sobolev_b: 3.0,
            guard_factor: 10.0,
        }
    }

    pub fn with_dx(mut self, dx: f64) -> Self {
        self.dx = Some(dx);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes == 0 {
            return Err(Error::Usage("mode cutoff must be positive".into()));
        }
        if self.n_quad < 4 * self.modes {
            return Err(Error::Usage(format!(
                "n_quad = {} below 4M = {}",
                self.n_quad,
                4 * self.modes
            )));
        }
        if let Some(dx) = self.dx {
            if !(dx > 0.0) {
                return Err(Error::Usage(format!("dx must be positive, got {dx}")));
            }
        }
        Ok(())
    }
}

/// Collocation tables and step control for one period and mode cutoff.
pub struct Evolver<'a> {
    medium: &'a Medium,
    cfg: EvolutionConfig,
    period: f64,
    nu: f64,
    m: usize,
    nq: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    dx_max: f64,
}

enum Kind {
    Nonlinear,
    Linearized,
    SecondVariation { p0: f64 },
}

impl<'a> Evolver<'a> {
    pub fn new(medium: &'a Medium, period: f64, cfg: EvolutionConfig) -> Result<Self> {
        cfg.validate()?;
        if !(period > 0.0) {
            return Err(Error::Domain(format!(
                "period must be positive, got {period}"
            )));
        }
        let (m, nq) = (cfg.modes, cfg.n_quad);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(nq);
        let inverse = planner.plan_fft_inverse(nq);
        let nu = 2.0 * PI / period;
        let stable = 0.125 / (medium.profile.sigma_max() * m as f64 * nu);
        let dx_max = cfg.dx.map_or(stable, |d| d.min(stable));
        Ok(Self {
            medium,
            cfg,
            period,
            nu,
            m,
            nq,
            forward,
            inverse,
            dx_max,
        })
    }

    pub fn config(&self) -> &EvolutionConfig {
        &self.cfg
    }

    pub fn dx_max(&self) -> f64 {
        self.dx_max
    }

    fn check_field(&self, y: &FourierField) -> Result<()> {
        if y.modes() != self.m || (y.period - self.period).abs() > 1e-14 * self.period {
            return Err(Error::Usage(format!(
                "field has M={} T={}, evolver expects M={} T={}",
                y.modes(),
                y.period,
                self.m,
                self.period
            )));
        }
        Ok(())
    }

    fn a_at(&self, seg: &Segment, x: f64) -> f64 {
        self.medium.a_from_sigma(seg.sigma(x))
    }

    /// Cosine coefficients `(2/nq) sum_n g_n cos(j t_n)`, `j = 1..M`, into `out[1..]`.
    fn analyze(&self, g: &[f64], out: &mut [f64], buf: &mut [Complex64]) {
        for (c, &v) in buf.iter_mut().zip(g) {
            *c = Complex64::new(v, 0.0);
        }
        self.forward.process(buf);
        let s = 2.0 / self.nq as f64;
        out[0] = 0.0;
        for j in 1..=self.m {
            out[j] = s * buf[j].re;
        }
    }

    /// Samples of `a_0 - offset + sum a_j cos(j t_n) + b_j sin(j t_n)`.
    fn synth(
        &self,
        a: &[f64],
        b: Option<&[f64]>,
        offset: f64,
        out: &mut [f64],
        buf: &mut [Complex64],
    ) {
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        buf[0] = Complex64::new(a[0] - offset, 0.0);
        for j in 1..=self.m {
            let bj = b.map_or(0.0, |b| b[j]);
            let c = Complex64::new(0.5 * a[j], -0.5 * bj);
            buf[j] = c;
            buf[self.nq - j] = c.conj();
        }
        self.inverse.process(buf);
        for (o, c) in out.iter_mut().zip(buf.iter()) {
            *o = c.re;
        }
    }

    /// Writes `(a', b')` given `b` and flux coefficients `v`.
    fn wave_rhs(&self, b: &[f64], v: &[f64], out: &mut [f64]) {
        let w = self.m + 1;
        out[0] = 0.0;
        out[w] = 0.0;
        for j in 1..w {
            let jn = j as f64 * self.nu;
            out[j] = -jn * b[j];
            out[w + j] = -jn * v[j];
        }
    }

    fn rhs(
        &self,
        kind: &Kind,
        seg: &Segment,
        x: f64,
        y: &[f64],
        out: &mut [f64],
        work: &mut Work,
    ) -> Result<()> {
        let w = self.m + 1;
        let eos = &self.medium.eos;
        let pb = self.medium.p_bar;
        let a_ent = self.a_at(seg, x);
        match kind {
            Kind::Nonlinear | Kind::Linearized => {
                self.synth(&y[..w], None, pb, &mut work.dp, &mut work.buf);
                for n in 0..self.nq {
                    work.g[n] = eos
                        .volume_increment_a(pb, work.dp[n], a_ent)
                        .ok_or(Error::Positivity { x })?;
                }
                self.analyze(&work.g, &mut work.coef, &mut work.buf);
                self.wave_rhs(&y[w..2 * w], &work.coef, &mut out[..2 * w]);
                if let Kind::Linearized = kind {
                    let tan = &y[2 * w..4 * w];
                    self.synth(&tan[..w], None, 0.0, &mut work.g, &mut work.buf);
                    for n in 0..self.nq {
                        let p = pb + work.dp[n];
                        let v = a_ent * p.powf(-1.0 / eos.gamma);
                        work.g[n] *= -v / (eos.gamma * p);
                    }
                    self.analyze(&work.g, &mut work.coef, &mut work.buf);
                    self.wave_rhs(&tan[w..], &work.coef, &mut out[2 * w..4 * w]);
                }
            }
            Kind::SecondVariation { p0 } => {
                let v0 = a_ent * p0.powf(-1.0 / eos.gamma);
                let vp = -v0 / (eos.gamma * p0);
                let g = 1.0 / eos.gamma;
                let vpp = g * (g + 1.0) * v0 / (p0 * p0);
                for f in 0..3 {
                    let blk = &y[2 * w * f..2 * w * (f + 1)];
                    for j in 0..w {
                        work.coef[j] = vp * blk[j];
                    }
                    if f == 2 {
                        self.synth(&y[..w], None, 0.0, &mut work.dp, &mut work.buf);
                        self.synth(&y[2 * w..3 * w], None, 0.0, &mut work.g, &mut work.buf);
                        for n in 0..self.nq {
                            work.g[n] *= vpp * work.dp[n];
                        }
                        let mut forcing = vec![0.0; w];
                        self.analyze(&work.g, &mut forcing, &mut work.buf);
                        for j in 1..w {
                            work.coef[j] += forcing[j];
                        }
                    }
                    let coef = work.coef.clone();
                    self.wave_rhs(&blk[w..], &coef, &mut out[2 * w * f..2 * w * (f + 1)]);
                }
            }
        }
        Ok(())
    }

    /// max_t |y_t| on the collocation grid.
    pub fn max_time_derivative(&self, y: &FourierField) -> f64 {
        let w = self.m + 1;
        let (mut da, mut db) = (vec![0.0; w], vec![0.0; w]);
        for j in 1..w {
            let jn = j as f64 * self.nu;
            da[j] = jn * y.b[j];
            db[j] = -jn * y.a[j];
        }
        let mut vals = vec![0.0; self.nq];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nq];
        self.synth(&da, Some(&db), 0.0, &mut vals, &mut buf);
        vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sorted step stops: segment boundaries, requested nodes and the ends.
    fn stops(&self, x0: f64, x1: f64, nodes: &[f64]) -> Vec<f64> {
        let tol = 1e-13 * self.medium.profile.ell();
        let mut s = vec![x0, x1];
        for seg in self.medium.profile.segments() {
            for b in [seg.x0, seg.x1] {
                if b > x0 && b < x1 {
                    s.push(b);
                }
            }
        }
        s.extend(nodes.iter().filter(|&&n| n > x0 && n < x1));
        s.sort_by(|a, b| a.total_cmp(b));
        s.dedup_by(|b, a| (*b - *a).abs() <= tol);
        s
    }

    fn march<F>(
        &self,
        kind: &Kind,
        state: &mut [f64],
        x0: f64,
        x1: f64,
        nodes: &[f64],
        mut at_stop: F,
    ) -> Result<()>
    where
        F: FnMut(f64, &[f64]) -> Result<()>,
    {
        let segs = self.medium.profile.segments();
        let stops = self.stops(x0, x1, nodes);
        let dim = state.len();
        let mut work = Work::new(self.nq, self.m);
        let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
            vec![0.0; dim],
            vec![0.0; dim],
            vec![0.0; dim],
            vec![0.0; dim],
            vec![0.0; dim],
        );
        let guard = match kind {
            Kind::Nonlinear => {
                let f = FourierField::from_state(self.period, self.m, state);
                Some(self.cfg.guard_factor * self.max_time_derivative(&f))
            }
            _ => None,
        };
        at_stop(stops[0], state)?;
        let mut count = 0usize;
        for win in stops.windows(2) {
            let (xa, xb) = (win[0], win[1]);
            let mid = 0.5 * (xa + xb);
            let seg = segs
                .iter()
                .find(|s| mid >= s.x0 && mid <= s.x1)
                .ok_or_else(|| Error::Domain(format!("x={mid} outside profile")))?;
            let n = ((xb - xa) / self.dx_max).ceil().max(1.0) as usize;
            let h = (xb - xa) / n as f64;
            for i in 0..n {
                let x = xa + i as f64 * h;
                self.rhs(kind, seg, x, state, &mut k1, &mut work)?;
                for d in 0..dim {
                    tmp[d] = state[d] + 0.5 * h * k1[d];
                }
                self.rhs(kind, seg, x + 0.5 * h, &tmp, &mut k2, &mut work)?;
                for d in 0..dim {
                    tmp[d] = state[d] + 0.5 * h * k2[d];
                }
                self.rhs(kind, seg, x + 0.5 * h, &tmp, &mut k3, &mut work)?;
                for d in 0..dim {
                    tmp[d] = state[d] + h * k3[d];
                }
                self.rhs(kind, seg, x + h, &tmp, &mut k4, &mut work)?;
                for d in 0..dim {
                    state[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
                }
                count += 1;
                if let Some(g) = guard {
                    if g > 0.0 && count % 4 == 0 {
                        let f = FourierField::from_state(self.period, self.m, state);
                        let grad = self.max_time_derivative(&f);
                        if grad > g {
                            return Err(Error::ShockProximity {
                                x: x + h,
                                grad,
                                guard: g,
                            });
                        }
                    }
                }
            }
            if state.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("state at x={xb}")));
            }
            at_stop(xb, state)?;
        }
        Ok(())
    }

    pub fn nonlinear(&self, y0: &FourierField) -> Result<FourierField> {
        self.nonlinear_span(y0, 0.0, self.medium.profile.ell())
    }

    pub fn nonlinear_span(&self, y0: &FourierField, x0: f64, x1: f64) -> Result<FourierField> {
        self.check_field(y0)?;
        let mut st = vec![0.0; 2 * (self.m + 1)];
        y0.to_state(&mut st);
        self.march(&Kind::Nonlinear, &mut st, x0, x1, &[], |_, _| Ok(()))?;
        Ok(FourierField::from_state(self.period, self.m, &st))
    }

    /// Fields at each of `nodes` (sorted, within `[0, ell]`).
    pub fn nonlinear_trajectory(
        &self,
        y0: &FourierField,
        nodes: &[f64],
    ) -> Result<Vec<FourierField>> {
        self.check_field(y0)?;
        let ell = self.medium.profile.ell();
        let tol = 1e-13 * ell;
        let mut st = vec![0.0; 2 * (self.m + 1)];
        y0.to_state(&mut st);
        let mut out: Vec<Option<FourierField>> = vec![None; nodes.len()];
        let mut next = 0;
        self.march(&Kind::Nonlinear, &mut st, 0.0, ell, nodes, |x, s| {
            while next < nodes.len() && (nodes[next] - x).abs() <= tol {
                out[next] = Some(FourierField::from_state(self.period, self.m, s));
                next += 1;
            }
            Ok(())
        })?;
        out.into_iter()
            .map(|f| {
                f.ok_or_else(|| {
                    Error::Usage("trajectory nodes must be sorted within [0, ell]".into())
                })
            })
            .collect()
    }

    /// Evolves base data and a tangent together; returns `(E(y0), DE(y0)[dy0])`.
    pub fn linearized(
        &self,
        y0: &FourierField,
        dy0: &FourierField,
    ) -> Result<(FourierField, FourierField)> {
        self.check_field(y0)?;
        self.check_field(dy0)?;
        let w = self.m + 1;
        let mut st = vec![0.0; 4 * w];
        y0.to_state(&mut st[..2 * w]);
        dy0.to_state(&mut st[2 * w..]);
        self.march(
            &Kind::Linearized,
            &mut st,
            0.0,
            self.medium.profile.ell(),
            &[],
            |_, _| Ok(()),
        )?;
        Ok((
            FourierField::from_state(self.period, self.m, &st[..2 * w]),
            FourierField::from_state(self.period, self.m, &st[2 * w..]),
        ))
    }

    /// `D^2 E(p0)[y1, y2]` at the quiet state of pressure `p0`.
    pub fn second_variation_quiet(
        &self,
        p0: f64,
        y1: &FourierField,
        y2: &FourierField,
    ) -> Result<FourierField> {
        self.check_field(y1)?;
        self.check_field(y2)?;
        let w = self.m + 1;
        let mut st = vec![0.0; 6 * w];
        y1.to_state(&mut st[..2 * w]);
        y2.to_state(&mut st[2 * w..4 * w]);
        let kind = Kind::SecondVariation { p0 };
        self.march(
            &kind,
            &mut st,
            0.0,
            self.medium.profile.ell(),
            &[],
            |_, _| Ok(()),
        )?;
        Ok(FourierField::from_state(self.period, self.m, &st[4 * w..]))
    }
}

struct Work {
    dp: Vec<f64>,
    g: Vec<f64>,
    coef: Vec<f64>,
    buf: Vec<Complex64>,
}

impl Work {
    fn new(nq: usize, m: usize) -> Self {
        Self {
            dp: vec![0.0; nq],
            g: vec![0.0; nq],
            coef: vec![0.0; m + 1],
            buf: vec![Complex64::new(0.0, 0.0); nq],
        }
    }
}

pub fn nonlinear_evolve(
    medium: &Medium,
    y0: &FourierField,
    cfg: EvolutionConfig,
) -> Result<FourierField> {
    Evolver::new(medium, y0.period, cfg)?.nonlinear(y0)
}

pub fn linearized_evolve(
    medium: &Medium,
    y0: &FourierField,
    dy0: &FourierField,
    cfg: EvolutionConfig,
) -> Result<FourierField> {
    Evolver::new(medium, y0.period, cfg)?
        .linearized(y0, dy0)
        .map(|r| r.1)
}

/// Second derivative of the boundary map at the quiet state along `(1, cos(w_k t))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondDerivative {
    pub k: usize,
    pub omega: f64,
    pub phi_hat: f64,
    pub psi_hat: f64,
    /// Variation-of-parameters coefficients at `ell`.
    pub a_ell: f64,
    pub b_ell: f64,
    /// `sin(k chi pi/2) phi_hat + cos(k chi pi/2) psi_hat`.
    pub pairing: f64,
}

/// Duhamel integration of `phi^' + w psi^ = 0`, `psi^' - sigma^2 w phi^ = -v_pp w phi_k`.
///
/// With `(phi^, psi^) = Psi (a, b)`: `a' = v_pp w phi phi~`, `b' = -v_pp w phi^2`.
pub fn second_derivative_quiet(medium: &Medium, ef: &EigenFrequency) -> Result<SecondDerivative> {
    let w = ef.omega;
    let segs = medium.profile.segments();
    let ell = medium.profile.ell();
    // state: phi, psi, phi~, psi~, a, b
    let mut y = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
    for seg in &segs {
        let rate = w * seg.sigma_max() + 1.0;
        y = crate::ode::integrate(
            |x, s: &[f64; 6]| {
                let sg = seg.sigma(x);
                let vpp = medium.vpp_from_sigma(sg);
                [
                    -w * s[1],
                    sg * sg * w * s[0],
                    -w * s[3],
                    sg * sg * w * s[2],
                    vpp * w * s[0] * s[2],
                    -vpp * w * s[0] * s[0],
                ]
            },
            seg.x0,
            seg.x1,
            y,
            1e-13,
            0.05 / rate,
            1e-9 * ell,
        )?;
    }
    let (a, b) = (y[4], y[5]);
    let phi_hat = y[0] * a + y[2] * b;
    let psi_hat = y[1] * a + y[3] * b;
    let (s, c) = ef.chi.phase(ef.k);
    Ok(SecondDerivative {
        k: ef.k,
        omega: w,
        phi_hat,
        psi_hat,
        a_ell: a,
        b_ell: b,
        pairing: s * phi_hat + c * psi_hat,
    })
}

/// `||y||^2 = beta^2 + sum_{j != k} c_j^2 delta_j^-2 j^(2b)` with `beta = c_k k^(2b)`.
///
/// `c_j` are the sine coefficients of `y`.
pub fn weighted_norm(y: &FourierField, table: &DivisorTable, b: f64, k: usize) -> Result<f64> {
    if table.j_max() < y.modes() {
        return Err(Error::Usage(format!(
            "divisor table covers {} modes, field has {}",
            table.j_max(),
            y.modes()
        )));
    }
    let mut sum = 0.0;
    for j in 1..=y.modes() {
        let c = y.b[j];
        let jw = (j as f64).powf(b);
        if j == k {
            let beta = c * jw * jw;
            sum += beta * beta;
        } else if c != 0.0 {
            let d = table.get(j);
            if d == 0.0 {
                return Err(Error::Resonant {
                    k,
                    j,
                    residual: 0.0,
                });
            }
            sum += (c * jw / d).powi(2);
        }
    }
    Ok(sum.sqrt())
}
