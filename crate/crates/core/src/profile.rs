//! Wavespeed profiles on `[0, ell]`.
//!
//! A profile is a list of segments. Each segment has either a constant
//! `sigma` or a monotone cubic interpolant of sampled values. Any mismatch of
//! one-sided limits between consecutive segments is a jump. Jumps never sit at
//! `x = 0` or `x = ell`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eos::GammaLawEos;
use crate::error::{Error, Result};

const LENGTH_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstantProfile {
    sigma: Vec<f64>,
    widths: Vec<f64>,
    ell: f64,
}

impl PiecewiseConstantProfile {
    pub fn new(sigma: Vec<f64>, widths: Vec<f64>) -> Result<Self> {
        let ell = widths.iter().sum();
        Self::with_length(sigma, widths, ell)
    }

    /// Checks that the widths add up to `ell`.
    pub fn with_length(sigma: Vec<f64>, widths: Vec<f64>, ell: f64) -> Result<Self> {
        if sigma.is_empty() || sigma.len() != widths.len() {
            return Err(Error::InvalidProfile(format!(
                "need matching nonempty level lists, got {} sigmas and {} widths",
                sigma.len(),
                widths.len()
            )));
        }
        if let Some(s) = sigma.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidProfile(format!(
                "sigma must be positive, got {s}"
            )));
        }
        if let Some(l) = widths.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidProfile(format!(
                "widths must be positive, got {l}"
            )));
        }
        let total: f64 = widths.iter().sum();
        if !(ell > 0.0) || (total - ell).abs() > LENGTH_RTOL * ell {
            return Err(Error::InvalidProfile(format!(
                "widths sum to {total}, expected ell = {ell}"
            )));
        }
        Ok(Self { sigma, widths, ell })
    }

    pub fn constant(sigma0: f64, ell: f64) -> Result<Self> {
        Self::new(vec![sigma0], vec![ell])
    }

    /// Inverts the jump/angle parameterization given the first level.
    pub fn from_jump_angles(jumps: &[f64], angles: &[f64], sigma_1: f64) -> Result<Self> {
        if angles.is_empty() || jumps.len() + 1 != angles.len() {
            return Err(Error::InvalidProfile(format!(
                "expected N-1 jumps for N angles, got {} and {}",
                jumps.len(),
                angles.len()
            )));
        }
        if jumps
            .iter()
            .chain(angles)
            .chain([&sigma_1])
            .any(|v| !(*v > 0.0))
        {
            return Err(Error::InvalidProfile(
                "jumps, angles and sigma_1 must be positive".into(),
            ));
        }
        let mut sigma = Vec::with_capacity(angles.len());
        let mut s = sigma_1;
        for i in 0..angles.len() {
            sigma.push(s);
            if i < jumps.len() {
                s /= jumps[i];
            }
        }
        let widths = angles.iter().zip(&sigma).map(|(t, s)| t / s).collect();
        Self::new(sigma, widths)
    }

    pub fn to_jump_angles(&self) -> JumpAngleParams {
        JumpAngleParams {
            jumps: self.sigma.windows(2).map(|w| w[0] / w[1]).collect(),
            angles: self
                .sigma
                .iter()
                .zip(&self.widths)
                .map(|(s, l)| s * l)
                .collect(),
        }
    }

    pub fn sigma_levels(&self) -> &[f64] {
        &self.sigma
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn sigma_integral(&self) -> f64 {
        self.sigma
            .iter()
            .zip(&self.widths)
            .map(|(s, l)| s * l)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpAngleParams {
    pub jumps: Vec<f64>,
    pub angles: Vec<f64>,
}

/// Shape-preserving C¹ cubic through samples (Fritsch–Butland slopes).
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::InvalidProfile(format!(
                "piece needs at least two samples with matching lengths, got {} x and {} sigma",
                n,
                y.len()
            )));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidProfile(
                "piece abscissae must increase strictly".into(),
            ));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let del: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = del[0];
            d[1] = del[0];
        } else {
            for i in 1..n - 1 {
                if del[i - 1] * del[i] > 0.0 {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    d[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
                }
            }
            d[0] = edge_slope(h[0], h[1], del[0], del[1]);
            d[n - 1] = edge_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
        }
        Ok(Self { x, y, d })
    }

    fn locate(&self, t: f64) -> usize {
        let i = self.x.partition_point(|&xi| xi <= t);
        i.clamp(1, self.x.len() - 1) - 1
    }

    pub fn value(&self, t: f64) -> f64 {
        let i = self.locate(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
            s * (1.0 - s) * (1.0 - s),
            s * s * (3.0 - 2.0 * s),
            s * s * (s - 1.0),
        );
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let i = self.locate(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (g00, g10, g01, g11) = (
            6.0 * s * (s - 1.0),
            (1.0 - s) * (1.0 - 3.0 * s),
            6.0 * s * (1.0 - s),
            s * (3.0 * s - 2.0),
        );
        (g00 * self.y[i] + g01 * self.y[i + 1]) / h + g10 * self.d[i] + g11 * self.d[i + 1]
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn samples(&self) -> &[f64] {
        &self.y
    }

    pub fn start(&self) -> f64 {
        self.x[0]
    }

    pub fn end(&self) -> f64 {
        *self.x.last().unwrap()
    }
}

fn edge_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() || m0 == 0.0 {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothProfile {
    pieces: Vec<MonotoneCubic>,
    ell: f64,
}

impl SmoothProfile {
    pub fn new(pieces: Vec<MonotoneCubic>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidProfile(
                "smooth profile needs at least one piece".into(),
            ));
        }
        if pieces[0].start() != 0.0 {
            return Err(Error::InvalidProfile(
                "first piece must start at x = 0".into(),
            ));
        }
        for w in pieces.windows(2) {
            if w[0].end() != w[1].start() {
                return Err(Error::InvalidProfile(format!(
                    "pieces must abut: {} != {}",
                    w[0].end(),
                    w[1].start()
                )));
            }
        }
        for p in &pieces {
            if p.samples().iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(Error::InvalidProfile(
                    "sigma samples must be positive".into(),
                ));
            }
        }
        let ell = pieces.last().unwrap().end();
        Ok(Self { pieces, ell })
    }

    pub fn pieces(&self) -> &[MonotoneCubic] {
        &self.pieces
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.pieces.iter().map(|p| p.start()).collect();
        b.push(self.ell);
        b
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    /// Adaptive Simpson per knot interval.
    pub fn sigma_integral(&self) -> f64 {
        let mut total = 0.0;
        for p in &self.pieces {
            for w in p.knots().windows(2) {
                total += adaptive_simpson(&|x| p.value(x), w[0], w[1], 1e-10, 40);
            }
        }
        total
    }
}

pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        left + right + diff / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Pwc(PiecewiseConstantProfile),
    Smooth(SmoothProfile),
}

#[derive(Debug, Clone, Copy)]
pub enum Shape<'a> {
    Constant(f64),
    Cubic(&'a MonotoneCubic),
}

/// One continuous stretch of a profile.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    pub x0: f64,
    pub x1: f64,
    pub shape: Shape<'a>,
}

impl Segment<'_> {
    pub fn sigma(&self, x: f64) -> f64 {
        match self.shape {
            Shape::Constant(s) => s,
            Shape::Cubic(c) => c.value(x),
        }
    }

    pub fn dsigma(&self, x: f64) -> f64 {
        match self.shape {
            Shape::Constant(_) => 0.0,
            Shape::Cubic(c) => c.derivative(x),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.shape, Shape::Constant(_))
    }

    pub fn sigma_max(&self) -> f64 {
        match self.shape {
            Shape::Constant(s) => s,
            // monotone between knots, so the samples bound the interpolant
            Shape::Cubic(c) => c.samples().iter().cloned().fold(0.0, f64::max),
        }
    }
}

impl From<PiecewiseConstantProfile> for Profile {
    fn from(p: PiecewiseConstantProfile) -> Self {
        Profile::Pwc(p)
    }
}

impl From<SmoothProfile> for Profile {
    fn from(p: SmoothProfile) -> Self {
        Profile::Smooth(p)
    }
}

impl Profile {
    pub fn ell(&self) -> f64 {
        match self {
            Profile::Pwc(p) => p.ell(),
            Profile::Smooth(p) => p.ell(),
        }
    }

    pub fn segments(&self) -> Vec<Segment<'_>> {
        match self {
            Profile::Pwc(p) => {
                let mut x0 = 0.0;
                let n = p.len();
                p.sigma
                    .iter()
                    .zip(&p.widths)
                    .enumerate()
                    .map(|(i, (s, l))| {
                        let x1 = if i + 1 == n { p.ell } else { x0 + l };
                        let seg = Segment {
                            x0,
                            x1,
                            shape: Shape::Constant(*s),
                        };
                        x0 = x1;
                        seg
                    })
                    .collect()
            }
            Profile::Smooth(p) => p
                .pieces
                .iter()
                .map(|c| Segment {
                    x0: c.start(),
                    x1: c.end(),
                    shape: Shape::Cubic(c),
                })
                .collect(),
        }
    }

    /// Right-continuous wavespeed coefficient (left limit at `x = ell`).
    pub fn sigma_at(&self, x: f64) -> f64 {
        let segs = self.segments();
        let seg = segs
            .iter()
            .find(|s| x < s.x1)
            .unwrap_or_else(|| segs.last().unwrap());
        seg.sigma(x)
    }

    pub fn sigma_max(&self) -> f64 {
        self.segments()
            .iter()
            .map(|s| s.sigma_max())
            .fold(0.0, f64::max)
    }

    pub fn sigma_integral(&self) -> f64 {
        match self {
            Profile::Pwc(p) => p.sigma_integral(),
            Profile::Smooth(p) => p.sigma_integral(),
        }
    }

    /// Asymptotic eigenfrequency spacing `(pi/2) / int sigma`.
    pub fn lambda(&self) -> f64 {
        std::f64::consts::FRAC_PI_2 / self.sigma_integral()
    }

    /// Interior jump locations with their ratios `sigma(x-)/sigma(x+)`.
    pub fn jumps(&self) -> Vec<(f64, f64)> {
        self.segments()
            .windows(2)
            .map(|w| (w[0].x1, w[0].sigma(w[0].x1) / w[1].sigma(w[1].x0)))
            .collect()
    }

    pub fn as_pwc(&self) -> Option<&PiecewiseConstantProfile> {
        match self {
            Profile::Pwc(p) => Some(p),
            Profile::Smooth(_) => None,
        }
    }
}

/// A profile together with the thermodynamics needed for nonlinear work.
#[derive(Debug, Clone, PartialEq)]
pub struct Medium {
    pub eos: GammaLawEos,
    pub p_bar: f64,
    pub profile: Profile,
}

impl Medium {
    pub fn new(eos: GammaLawEos, p_bar: f64, profile: Profile) -> Result<Self> {
        eos.validate()?;
        if !(p_bar > 0.0 && p_bar.is_finite()) {
            return Err(Error::InvalidProfile(format!(
                "pbar must be positive, got {p_bar}"
            )));
        }
        Ok(Self {
            eos,
            p_bar,
            profile,
        })
    }

    /// Entropy constant `A` giving wavespeed `sigma` at the ambient pressure.
    pub fn a_from_sigma(&self, sigma: f64) -> f64 {
        self.eos.gamma * sigma * sigma * self.p_bar.powf(1.0 + 1.0 / self.eos.gamma)
    }

    /// `v_pp(p_bar, s)` expressed through the wavespeed coefficient.
    pub fn vpp_from_sigma(&self, sigma: f64) -> f64 {
        (1.0 / self.eos.gamma + 1.0) * sigma * sigma / self.p_bar
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| match e {
            Error::InvalidProfile(m) => Error::Parse {
                path: path.to_path_buf(),
                message: m,
            },
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProfileFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidProfile(e.to_string()))?;
        file.into_medium()
    }

    pub fn to_file_format(&self) -> ProfileFile {
        let (kind, levels, pieces) = match &self.profile {
            Profile::Pwc(p) => (
                "pwc",
                Some(
                    p.sigma
                        .iter()
                        .zip(&p.widths)
                        .map(|(s, l)| Level {
                            sigma: Some(*s),
                            a: None,
                            l: *l,
                        })
                        .collect(),
                ),
                None,
            ),
            Profile::Smooth(p) => (
                "smooth",
                None,
                Some(
                    p.pieces
                        .iter()
                        .map(|c| PieceSpec {
                            x: c.x.clone(),
                            sigma: c.y.clone(),
                        })
                        .collect(),
                ),
            ),
        };
        ProfileFile {
            ell: self.profile.ell(),
            pbar: self.p_bar,
            eos: self.eos,
            kind: kind.into(),
            levels,
            pieces,
        }
    }
}

/// On-disk profile description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileFile {
    pub ell: f64,
    pub pbar: f64,
    pub eos: GammaLawEos,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<Level>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pieces: Option<Vec<PieceSpec>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Level {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(rename = "L")]
    pub l: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PieceSpec {
    pub x: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl ProfileFile {
    pub fn into_medium(self) -> Result<Medium> {
        self.eos
            .validate()
            .map_err(|e| Error::InvalidProfile(e.to_string()))?;
        if !(self.pbar > 0.0) {
            return Err(Error::InvalidProfile(format!(
                "pbar must be positive, got {}",
                self.pbar
            )));
        }
        let profile = match self.kind.as_str() {
            "pwc" => {
                let levels = self
                    .levels
                    .ok_or_else(|| Error::InvalidProfile("kind \"pwc\" requires levels".into()))?;
                let mut sigma = Vec::with_capacity(levels.len());
                for lv in &levels {
                    let s = match (lv.sigma, lv.a) {
                        (Some(s), None) => s,
                        (None, Some(a)) => self
                            .eos
                            .sigma_of_a(self.pbar, a)
                            .map_err(|e| Error::InvalidProfile(e.to_string()))?,
                        _ => {
                            return Err(Error::InvalidProfile(
                                "each level needs exactly one of sigma or A".into(),
                            ))
                        }
                    };
                    sigma.push(s);
                }
                let widths = levels.iter().map(|l| l.l).collect();
                Profile::Pwc(PiecewiseConstantProfile::with_length(
                    sigma, widths, self.ell,
                )?)
            }
            "smooth" => {
                let pieces = self.pieces.ok_or_else(|| {
                    Error::InvalidProfile("kind \"smooth\" requires pieces".into())
                })?;
                let cubics = pieces
                    .into_iter()
                    .map(|p| MonotoneCubic::new(p.x, p.sigma))
                    .collect::<Result<Vec<_>>>()?;
                let sp = SmoothProfile::new(cubics)?;
                if (sp.ell() - self.ell).abs() > LENGTH_RTOL * self.ell {
                    return Err(Error::InvalidProfile(format!(
                        "pieces end at {}, expected ell = {}",
                        sp.ell(),
                        self.ell
                    )));
                }
                Profile::Smooth(sp)
            }
            other => return Err(Error::InvalidProfile(format!("unknown kind \"{other}\""))),
        };
        Medium::new(self.eos, self.pbar, profile)
    }
}
