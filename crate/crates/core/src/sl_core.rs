//! Sturm–Liouville machinery for `phi' = -w psi`, `psi' = sigma^2 w phi`.
//!
//! Prüfer variables: `phi = r cos(theta) / sqrt(sigma)`,
//! `psi = r sqrt(sigma) sin(theta)`. On constant stretches theta advances by
//! `w sigma dx`; across a jump the angle maps through [`jump_angle`] and the
//! radius scales by [`jump_radius_factor`]. Angles are tracked with their full
//! winding so they stay continuous and unbounded.

use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::Mul;

use crate::error::{Error, Result};
use crate::profile::{JumpAngleParams, Profile, Segment};

const PRUFER_TOL: f64 = 1e-11;
const MIN_STEP_FRAC: f64 = 1e-9;

/// 2×2 real matrix `[[phi, phi~], [psi, psi~]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix {
    pub m: [[f64; 2]; 2],
}

impl TransferMatrix {
    pub const IDENTITY: Self = Self {
        m: [[1.0, 0.0], [0.0, 1.0]],
    };

    pub fn new(m: [[f64; 2]; 2]) -> Self {
        Self { m }
    }

    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            m: [[c, -s], [s, c]],
        }
    }

    /// `diag(1/sqrt(q), sqrt(q))`.
    pub fn scaling(q: f64) -> Self {
        let r = q.sqrt();
        Self {
            m: [[1.0 / r, 0.0], [0.0, r]],
        }
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }

    pub fn column(&self, j: usize) -> [f64; 2] {
        [self.m[0][j], self.m[1][j]]
    }

    /// Inverse using unit determinant.
    pub fn symplectic_inverse(&self) -> Self {
        let m = &self.m;
        Self {
            m: [[m[1][1], -m[0][1]], [-m[1][0], m[0][0]]],
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                d = d.max((self.m[i][j] - other.m[i][j]).abs());
            }
        }
        d
    }
}

impl Mul for TransferMatrix {
    type Output = TransferMatrix;

    fn mul(self, rhs: Self) -> Self {
        let (a, b) = (&self.m, &rhs.m);
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Self { m: out }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruferState {
    pub theta: f64,
    pub r: f64,
}

impl PruferState {
    /// Prüfer coordinates of `(phi, psi)` where the local coefficient is `sigma`.
    pub fn from_physical(phi: f64, psi: f64, sigma: f64) -> Self {
        let rs = sigma.sqrt();
        let (x, y) = (rs * phi, psi / rs);
        Self {
            theta: y.atan2(x),
            r: x.hypot(y),
        }
    }

    pub fn to_physical(&self, sigma: f64) -> [f64; 2] {
        let rs = sigma.sqrt();
        let (s, c) = self.theta.sin_cos();
        [self.r * c / rs, self.r * rs * s]
    }
}

fn check_jump(j: f64) -> Result<()> {
    if j > 0.0 && j.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "jump ratio must be positive, got {j}"
        )))
    }
}

/// Branch index `m` and reduced angle `z - m pi` in `[-pi/2, pi/2)`.
#[inline]
fn reduce(z: f64) -> (f64, f64) {
    let m = (z / PI + 0.5).floor();
    (m, z - m * PI)
}

#[inline]
pub(crate) fn h(j: f64, z: f64) -> f64 {
    let (m, w) = reduce(z);
    let (s, c) = w.sin_cos();
    // c >= 0 on the reduced range, so atan2 stays on the principal branch
    m * PI + (j * s).atan2(c)
}

#[inline]
pub(crate) fn h_z(j: f64, z: f64) -> f64 {
    let (s, c) = z.sin_cos();
    j / (c * c + j * j * s * s)
}

#[inline]
fn h_j(j: f64, z: f64) -> f64 {
    let (s, c) = z.sin_cos();
    s * c / (c * c + j * j * s * s)
}

/// Angle map across a jump with ratio `J = sigma(x-)/sigma(x+)`.
pub fn jump_angle(j: f64, z: f64) -> Result<f64> {
    check_jump(j)?;
    Ok(h(j, z))
}

pub fn jump_angle_dz(j: f64, z: f64) -> Result<f64> {
    check_jump(j)?;
    Ok(h_z(j, z))
}

pub fn jump_angle_dj(j: f64, z: f64) -> Result<f64> {
    check_jump(j)?;
    Ok(h_j(j, z))
}

/// Ratio `r(x+)/r(x-)` across a jump.
pub fn jump_radius_factor(j: f64, theta_minus: f64) -> Result<f64> {
    check_jump(j)?;
    let (s, c) = theta_minus.sin_cos();
    Ok((c * c / j + j * s * s).sqrt())
}

/// Prüfer angle, log radius and `d theta / d omega` carried together.
#[derive(Debug, Clone, Copy)]
struct AngleState {
    theta: f64,
    log_r: f64,
    zeta: f64,
}

fn prufer_rhs(seg: &Segment, omega: f64, x: f64, st: AngleState) -> AngleState {
    let s = seg.sigma(x);
    let q = seg.dsigma(x) / s;
    let (s2, c2) = (2.0 * st.theta).sin_cos();
    AngleState {
        theta: omega * s - 0.5 * q * s2,
        log_r: 0.5 * q * c2,
        zeta: s - q * c2 * st.zeta,
    }
}

fn rk4_step(seg: &Segment, omega: f64, x: f64, h: f64, y: AngleState) -> AngleState {
    let add = |a: AngleState, b: AngleState, c: f64| AngleState {
        theta: a.theta + c * b.theta,
        log_r: a.log_r + c * b.log_r,
        zeta: a.zeta + c * b.zeta,
    };
    let k1 = prufer_rhs(seg, omega, x, y);
    let k2 = prufer_rhs(seg, omega, x + 0.5 * h, add(y, k1, 0.5 * h));
    let k3 = prufer_rhs(seg, omega, x + 0.5 * h, add(y, k2, 0.5 * h));
    let k4 = prufer_rhs(seg, omega, x + h, add(y, k3, h));
    AngleState {
        theta: y.theta + h / 6.0 * (k1.theta + 2.0 * k2.theta + 2.0 * k3.theta + k4.theta),
        log_r: y.log_r + h / 6.0 * (k1.log_r + 2.0 * k2.log_r + 2.0 * k3.log_r + k4.log_r),
        zeta: y.zeta + h / 6.0 * (k1.zeta + 2.0 * k2.zeta + 2.0 * k3.zeta + k4.zeta),
    }
}

/// Advances within one segment from `x0` to `x1`.
fn advance_segment(
    seg: &Segment,
    omega: f64,
    y: AngleState,
    x0: f64,
    x1: f64,
    ell: f64,
) -> Result<AngleState> {
    if x1 <= x0 {
        return Ok(y);
    }
    if seg.is_constant() {
        let s = seg.sigma(x0);
        return Ok(AngleState {
            theta: y.theta + omega * s * (x1 - x0),
            log_r: y.log_r,
            zeta: y.zeta + s * (x1 - x0),
        });
    }
    let floor = MIN_STEP_FRAC * ell;
    let mut x = x0;
    let mut y = y;
    let rate = omega * seg.sigma_max() + 1.0;
    let mut h = (0.05 / rate).min(x1 - x0);
    while x < x1 {
        let last = x + h >= x1;
        let step = if last { x1 - x } else { h };
        let full = rk4_step(seg, omega, x, step, y);
        let half = rk4_step(seg, omega, x, 0.5 * step, y);
        let two = rk4_step(seg, omega, x + 0.5 * step, 0.5 * step, half);
        let err = ((two.theta - full.theta).abs())
            .max((two.log_r - full.log_r).abs())
            .max((two.zeta - full.zeta).abs() / (1.0 + two.zeta.abs()))
            / 15.0;
        if !err.is_finite() {
            return Err(Error::Integration(format!(
                "non-finite Prüfer state at x={x}"
            )));
        }
        if err <= PRUFER_TOL {
            // local extrapolation
            y = AngleState {
                theta: two.theta + (two.theta - full.theta) / 15.0,
                log_r: two.log_r + (two.log_r - full.log_r) / 15.0,
                zeta: two.zeta + (two.zeta - full.zeta) / 15.0,
            };
            x = if last { x1 } else { x + step };
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * (PRUFER_TOL / err).powf(0.2)).clamp(0.2, 5.0)
        };
        h = step * factor;
        if h < floor && x < x1 && (x1 - x) > floor {
            return Err(Error::Integration(format!(
                "Prüfer step underflow at x={x}"
            )));
        }
    }
    Ok(y)
}

/// Integrates the Prüfer system over `[x0, x1]` inside a single C¹ segment.
pub fn prufer_advance(
    seg: &Segment,
    omega: f64,
    state: PruferState,
    x0: f64,
    x1: f64,
) -> Result<PruferState> {
    let y = AngleState {
        theta: state.theta,
        log_r: state.r.ln(),
        zeta: 0.0,
    };
    let out = advance_segment(seg, omega, y, x0, x1, (seg.x1 - seg.x0).max(x1 - x0))?;
    Ok(PruferState {
        theta: out.theta,
        r: state.r * (out.log_r - y.log_r).exp(),
    })
}

/// Like [`prufer_advance`] but also returns `d theta / d omega` accumulated on the span.
pub fn prufer_advance_with_sensitivity(
    seg: &Segment,
    omega: f64,
    theta: f64,
    zeta: f64,
    x0: f64,
    x1: f64,
) -> Result<(f64, f64)> {
    let y = AngleState {
        theta,
        log_r: 0.0,
        zeta,
    };
    let out = advance_segment(seg, omega, y, x0, x1, (seg.x1 - seg.x0).max(x1 - x0))?;
    Ok((out.theta, out.zeta))
}

/// Angle recurrence for piecewise constant profiles.
///
/// Returns `theta(ell)` and its derivative in `omega`.
pub fn angle_chain(params: &JumpAngleParams, omega: f64, theta0: f64) -> (f64, f64) {
    let n = params.angles.len();
    let (mut g, mut dg) = (theta0, 0.0);
    for i in 0..n {
        g += omega * params.angles[i];
        dg += params.angles[i];
        if i + 1 < n {
            let j = params.jumps[i];
            dg *= h_z(j, g);
            g = h(j, g);
        }
    }
    (g, dg)
}

/// `theta(ell, omega)` and `d theta / d omega` from initial angle `theta0`.
pub fn angle_with_derivative(profile: &Profile, omega: f64, theta0: f64) -> Result<(f64, f64)> {
    if let Profile::Pwc(p) = profile {
        return Ok(angle_chain(&p.to_jump_angles(), omega, theta0));
    }
    let segs = profile.segments();
    let ell = profile.ell();
    let mut y = AngleState {
        theta: theta0,
        log_r: 0.0,
        zeta: 0.0,
    };
    for (i, seg) in segs.iter().enumerate() {
        y = advance_segment(seg, omega, y, seg.x0, seg.x1, ell)?;
        if let Some(next) = segs.get(i + 1) {
            let j = seg.sigma(seg.x1) / next.sigma(next.x0);
            y.zeta *= h_z(j, y.theta);
            y.theta = h(j, y.theta);
        }
    }
    Ok((y.theta, y.zeta))
}

pub fn angle_at_ell(profile: &Profile, omega: f64, theta0: f64) -> Result<f64> {
    if omega < 0.0 {
        return Err(Error::Domain(format!(
            "omega must be nonnegative, got {omega}"
        )));
    }
    angle_with_derivative(profile, omega, theta0).map(|(t, _)| t)
}

/// Prüfer state at `ell` including radius, applying jump factors.
pub fn prufer_at_ell(profile: &Profile, omega: f64, start: PruferState) -> Result<PruferState> {
    let segs = profile.segments();
    let mut st = start;
    for (i, seg) in segs.iter().enumerate() {
        st = prufer_advance(seg, omega, st, seg.x0, seg.x1)?;
        if let Some(next) = segs.get(i + 1) {
            let j = seg.sigma(seg.x1) / next.sigma(next.x0);
            st.r *= jump_radius_factor(j, st.theta)?;
            st.theta = h(j, st.theta);
        }
    }
    Ok(st)
}

/// Transfer matrix in `(phi, psi)` across one segment between `x0` and `x1`.
fn segment_matrix(seg: &Segment, omega: f64, x0: f64, x1: f64) -> Result<TransferMatrix> {
    if seg.is_constant() {
        let s = seg.sigma(x0);
        return Ok(TransferMatrix::scaling(s)
            * TransferMatrix::rotation(omega * s * (x1 - x0))
            * TransferMatrix::scaling(1.0 / s));
    }
    let (s0, s1) = (seg.sigma(x0), seg.sigma(x1));
    let mut m = [[0.0; 2]; 2];
    for (col, start) in [[1.0, 0.0], [0.0, 1.0]].iter().enumerate() {
        let st = PruferState::from_physical(start[0], start[1], s0);
        let out = prufer_advance(seg, omega, st, x0, x1)?.to_physical(s1);
        m[0][col] = out[0];
        m[1][col] = out[1];
    }
    Ok(TransferMatrix { m })
}

/// Transfer matrix from `x0` to `x1` (both in `[0, ell]`, `x0 <= x1`).
///
/// `(phi, psi)` are continuous across jumps, so segments simply compose.
pub fn fundamental_matrix_span(
    profile: &Profile,
    omega: f64,
    x0: f64,
    x1: f64,
) -> Result<TransferMatrix> {
    let mut out = TransferMatrix::IDENTITY;
    for seg in profile.segments() {
        let a = x0.max(seg.x0);
        let b = x1.min(seg.x1);
        if b > a {
            out = segment_matrix(&seg, omega, a, b)? * out;
        }
    }
    Ok(out)
}

/// Fundamental matrix `Psi(ell; omega)` with `Psi(0) = I`.
pub fn fundamental_matrix(profile: &Profile, omega: f64) -> Result<TransferMatrix> {
    match profile {
        Profile::Pwc(p) => Ok(pwc_product(&p.to_jump_angles(), p.sigma_levels(), omega)),
        Profile::Smooth(_) => fundamental_matrix_span(profile, omega, 0.0, profile.ell()),
    }
}

/// `M(sigma_N) R(w theta_N) M(J_{N-1}) ... R(w theta_1) M(1/sigma_1)`.
pub fn pwc_product(params: &JumpAngleParams, sigma: &[f64], omega: f64) -> TransferMatrix {
    let n = params.angles.len();
    let mut out = TransferMatrix::scaling(1.0 / sigma[0]);
    for i in 0..n {
        out = TransferMatrix::rotation(omega * params.angles[i]) * out;
        if i + 1 < n {
            out = TransferMatrix::scaling(params.jumps[i]) * out;
        }
    }
    TransferMatrix::scaling(sigma[n - 1]) * out
}

/// Angle of the quarter-turn count `k`.
pub fn quarter_turns(k: usize) -> f64 {
    k as f64 * FRAC_PI_2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::PiecewiseConstantProfile;

    #[test]
    fn jump_angle_fixed_points_and_values() {
        for &j in &[0.2, 1.0, 3.7] {
            assert!((jump_angle(j, FRAC_PI_2).unwrap() - FRAC_PI_2).abs() < 1e-15);
            for m in -4..=4 {
                let z = m as f64 * FRAC_PI_2;
                assert!((jump_angle(j, z).unwrap() - z).abs() < 1e-14 * (1.0 + z.abs()));
            }
        }
        for &z in &[-2.0, 0.3, 1.4, 7.9] {
            assert!((jump_angle(1.0, z).unwrap() - z).abs() < 1e-14);
        }
        // mpmath: atan(2)
        assert!((jump_angle(2.0, PI / 4.0).unwrap() - 1.107_148_717_794_090_5).abs() < 1e-15);
        assert!(jump_angle(0.0, 1.0).is_err());
    }

    #[test]
    fn jump_derivatives() {
        let j = 1.7;
        assert!((jump_angle_dz(j, 0.0).unwrap() - j).abs() < 1e-15);
        assert!((jump_angle_dz(j, FRAC_PI_2).unwrap() - 1.0 / j).abs() < 1e-15);
        assert!(jump_angle_dj(j, FRAC_PI_2).unwrap().abs() < 1e-15);
        let e = 1e-5;
        for &z in &[0.2, 1.1, 2.5, -0.7, 5.3] {
            let fz = (h(j, z + e) - h(j, z - e)) / (2.0 * e);
            let fj = (h(j + e, z) - h(j - e, z)) / (2.0 * e);
            assert!((fz - jump_angle_dz(j, z).unwrap()).abs() < 1e-7);
            assert!((fj - jump_angle_dj(j, z).unwrap()).abs() < 1e-7);
            assert!(jump_angle_dj(j, z).unwrap().abs() <= 0.5 / j + 1e-15);
        }
        // sharp bound 1/(2J) attained at tan z = 1/J
        let zs = (1.0 / j).atan();
        assert!((jump_angle_dj(j, zs).unwrap() - 0.5 / j).abs() < 1e-15);
    }

    #[test]
    fn radius_factor_values() {
        let j: f64 = 2.5;
        assert!((jump_radius_factor(j, 0.0).unwrap() - 1.0 / j.sqrt()).abs() < 1e-15);
        assert!((jump_radius_factor(j, FRAC_PI_2).unwrap() - j.sqrt()).abs() < 1e-15);
        assert!((jump_radius_factor(1.0, 0.77).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_rotation() {
        let p: Profile = PiecewiseConstantProfile::constant(1.0, 1.0).unwrap().into();
        let seg = p.segments()[0];
        let st = prufer_advance(
            &seg,
            FRAC_PI_2,
            PruferState { theta: 0.0, r: 2.0 },
            0.0,
            1.0,
        )
        .unwrap();
        assert!((st.theta - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(st.r, 2.0);
        let m = fundamental_matrix(&p, 0.83).unwrap();
        assert!(m.max_abs_diff(&TransferMatrix::rotation(0.83)) < 1e-15);
    }

    #[test]
    fn two_level_angle() {
        let p: Profile = PiecewiseConstantProfile::new(vec![1.0, 2.0], vec![0.5, 0.5])
            .unwrap()
            .into();
        let w = 1.231;
        let th = angle_at_ell(&p, w, 0.0).unwrap();
        assert!((th - (w + h(0.5, 0.5 * w))).abs() < 1e-14);
        assert!((th - FRAC_PI_2).abs() < 1e-3);
    }

    #[test]
    fn prufer_roundtrip() {
        let st = PruferState::from_physical(0.3, -1.2, 2.0);
        let back = st.to_physical(2.0);
        assert!((back[0] - 0.3).abs() < 1e-15 && (back[1] + 1.2).abs() < 1e-15);
    }
}
