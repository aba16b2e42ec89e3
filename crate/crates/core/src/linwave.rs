//! Linear k-modes on grids and the reflected space-time tile.
//!
//! A solution on `[0, ell] x [0, T)` with `u(0, t) = 0` and the boundary
//! condition at `ell` extends to `[0, 4 ell]` (`chi = 1`) by
//!
//! ```text
//! [ell, 2ell]:  p(2ell - x, t + T/2),  -u(2ell - x, t + T/2),  s(2ell - x)
//! [2ell, 3ell]: p(x - 2ell, t + T/2),   u(x - 2ell, t + T/2),  s(x - 2ell)
//! [3ell, 4ell]: p(4ell - x, t),        -u(4ell - x, t),        s(4ell - x)
//! ```
//!
//! For `chi = 0` only the first reflection is used (without time shift) and
//! the period in `x` is `2 ell`. All maps are index maps on the grid.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::FourierField;
use crate::profile::Profile;
use crate::sl_core::fundamental_matrix_span;
use crate::spectrum::{Chi, EigenFrequency};

pub const TILE_MAGIC: &[u8; 8] = b"PTTILE01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMode {
    pub k: usize,
    pub omega: f64,
    pub period: f64,
    pub chi: Chi,
    pub x: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl LinearMode {
    /// `sin(k chi pi/2) phi(ell) + cos(k chi pi/2) psi(ell)`.
    pub fn boundary_defect(&self) -> f64 {
        let (s, c) = self.chi.phase(self.k);
        s * self.phi.last().unwrap() + c * self.psi.last().unwrap()
    }
}

/// Uniform grid `x_i = i ell / nx`, `i = 0..=nx`.
pub fn x_grid(ell: f64, nx: usize) -> Vec<f64> {
    (0..=nx)
        .map(|i| {
            if i == nx {
                ell
            } else {
                i as f64 * ell / nx as f64
            }
        })
        .collect()
}

/// Eigenfunctions from `(phi, psi)(0) = (1, 0)`, continuous across jumps.
pub fn eigenfunction_profiles(
    profile: &Profile,
    ef: &EigenFrequency,
    nx: usize,
) -> Result<LinearMode> {
    if nx == 0 {
        return Err(Error::Usage("nx must be positive".into()));
    }
    let x = x_grid(profile.ell(), nx);
    let mut phi = vec![1.0];
    let mut psi = vec![0.0];
    let mut v = [1.0, 0.0];
    for w in x.windows(2) {
        v = fundamental_matrix_span(profile, ef.omega, w[0], w[1])?.apply(v);
        phi.push(v[0]);
        psi.push(v[1]);
    }
    Ok(LinearMode {
        k: ef.k,
        omega: ef.omega,
        period: ef.period,
        chi: ef.chi,
        x,
        phi,
        psi,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileMeta {
    pub profile_hash: Option<String>,
    pub k: usize,
    pub alpha: f64,
    pub chi: Chi,
}

/// Samples of `p` and `u` on a tensor grid; `p[i * nt + n]` is at `(x_i, t_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileField {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub period: f64,
    pub p: Vec<f64>,
    pub u: Vec<f64>,
    pub sigma: Vec<f64>,
    pub meta: TileMeta,
}

impl TileField {
    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn nt(&self) -> usize {
        self.t.len()
    }

    pub fn p_at(&self, i: usize, n: usize) -> f64 {
        self.p[i * self.nt() + n]
    }

    pub fn u_at(&self, i: usize, n: usize) -> f64 {
        self.u[i * self.nt() + n]
    }

    fn row(v: &[f64], i: usize, nt: usize) -> &[f64] {
        &v[i * nt..(i + 1) * nt]
    }

    /// True when the first and last x rows coincide exactly.
    pub fn is_x_periodic(&self) -> bool {
        let (nt, last) = (self.nt(), self.nx() - 1);
        Self::row(&self.p, 0, nt) == Self::row(&self.p, last, nt)
            && Self::row(&self.u, 0, nt)
                .iter()
                .zip(Self::row(&self.u, last, nt))
                .all(|(a, b)| a == b)
            && self.sigma[0] == self.sigma[last]
    }

    /// Largest violation of `p` even / `u` odd in `x` (about 0, mod the x period) and in `t`.
    pub fn symmetry_defect(&self) -> f64 {
        let (nx, nt) = (self.nx(), self.nt());
        let mut d: f64 = 0.0;
        for i in 0..nx {
            let ir = nx - 1 - i;
            for n in 0..nt {
                let nr = (nt - n) % nt;
                d = d
                    .max((self.p_at(i, n) - self.p_at(ir, n)).abs())
                    .max((self.u_at(i, n) + self.u_at(ir, n)).abs())
                    .max((self.p_at(i, n) - self.p_at(i, nr)).abs())
                    .max((self.u_at(i, n) + self.u_at(i, nr)).abs());
            }
        }
        d
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(["x", "t", "p", "u"])
            .map_err(|e| csv_err(path, e))?;
        for (i, x) in self.x.iter().enumerate() {
            for (n, t) in self.t.iter().enumerate() {
                w.write_record(&[fmt(*x), fmt(*t), fmt(self.p_at(i, n)), fmt(self.u_at(i, n))])
                    .map_err(|e| csv_err(path, e))?;
            }
        }
        w.flush().map_err(|source| Error::Io {
            path: path.into(),
            source,
        })
    }

    /// Header: 8-byte magic, `nx` and `nt` as u64 LE, period as f64 LE; then
    /// `x`, `t`, `p`, `u` as little-endian f64, arrays row-major in `(x, t)`.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(32 + 8 * (self.nx() + self.nt() + self.p.len() * 2));
        buf.extend_from_slice(TILE_MAGIC);
        buf.extend_from_slice(&(self.nx() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.nt() as u64).to_le_bytes());
        buf.extend_from_slice(&self.period.to_le_bytes());
        for v in self.x.iter().chain(&self.t).chain(&self.p).chain(&self.u) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.into(),
            source,
        })?;
        f.write_all(&buf).map_err(|source| Error::Io {
            path: path.into(),
            source,
        })
    }

    /// Reads `(x, t, period, p, u)` written by [`write_binary`](Self::write_binary).
    pub fn read_binary(path: &Path) -> Result<(Vec<f64>, Vec<f64>, f64, Vec<f64>, Vec<f64>)> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|source| Error::Io {
                path: path.into(),
                source,
            })?;
        let bad = |m: &str| Error::Parse {
            path: path.into(),
            message: m.into(),
        };
        if bytes.len() < 32 || &bytes[..8] != TILE_MAGIC {
            return Err(bad("not a tile file"));
        }
        let word = |o: usize| <[u8; 8]>::try_from(&bytes[o..o + 8]).unwrap();
        let nx = u64::from_le_bytes(word(8)) as usize;
        let nt = u64::from_le_bytes(word(16)) as usize;
        let period = f64::from_le_bytes(word(24));
        let total = nx + nt + 2 * nx * nt;
        if bytes.len() != 32 + 8 * total {
            return Err(bad("truncated tile file"));
        }
        let vals: Vec<f64> = (0..total)
            .map(|i| f64::from_le_bytes(word(32 + 8 * i)))
            .collect();
        let (x, rest) = vals.split_at(nx);
        let (t, rest) = rest.split_at(nt);
        let (p, u) = rest.split_at(nx * nt);
        Ok((x.to_vec(), t.to_vec(), period, p.to_vec(), u.to_vec()))
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.into(),
        message: e.to_string(),
    }
}

fn check_nt(nt: usize, chi: Chi) -> Result<()> {
    let q = if chi == Chi::Periodic { 4 } else { 2 };
    if nt == 0 || nt % q != 0 {
        return Err(Error::Usage(format!(
            "nt must be a positive multiple of {q}, got {nt}"
        )));
    }
    Ok(())
}

fn t_grid(period: f64, nt: usize) -> Vec<f64> {
    (0..nt).map(|n| n as f64 * period / nt as f64).collect()
}

fn sigma_on(profile: &Profile, x: &[f64]) -> Vec<f64> {
    x.iter().map(|&xi| profile.sigma_at(xi)).collect()
}

/// `P = cos(w t) phi(x)`, `U = sin(w t) psi(x)` on `[0, ell] x [0, T)`.
pub fn mode_field(profile: &Profile, mode: &LinearMode, nt: usize) -> Result<TileField> {
    check_nt(nt, mode.chi)?;
    let t = t_grid(mode.period, nt);
    let mut p = Vec::with_capacity(mode.x.len() * nt);
    let mut u = Vec::with_capacity(mode.x.len() * nt);
    for i in 0..mode.x.len() {
        for tn in &t {
            let (s, c) = (mode.omega * tn).sin_cos();
            p.push(c * mode.phi[i]);
            u.push(s * mode.psi[i]);
        }
    }
    Ok(TileField {
        x: mode.x.clone(),
        t,
        period: mode.period,
        p,
        u,
        sigma: sigma_on(profile, &mode.x),
        meta: TileMeta {
            profile_hash: None,
            k: mode.k,
            alpha: 0.0,
            chi: mode.chi,
        },
    })
}

/// Grid samples of `p` (even part) and `u` (odd part) of fields along `x`.
pub fn field_from_trajectory(
    profile: &Profile,
    x: &[f64],
    fields: &[FourierField],
    nt: usize,
    meta: TileMeta,
) -> Result<TileField> {
    check_nt(nt, meta.chi)?;
    if fields.len() != x.len() || fields.is_empty() {
        return Err(Error::Usage("one field per x node required".into()));
    }
    let period = fields[0].period;
    let mut p = Vec::with_capacity(x.len() * nt);
    let mut u = Vec::with_capacity(x.len() * nt);
    for f in fields {
        p.extend(f.project_even().sample(nt));
        u.extend(f.project_odd().sample(nt));
    }
    Ok(TileField {
        x: x.to_vec(),
        t: t_grid(period, nt),
        period,
        p,
        u,
        sigma: sigma_on(profile, x),
        meta,
    })
}

/// Constant field `p = p_bar`, `u = 0`.
pub fn quiet_field(
    profile: &Profile,
    p_bar: f64,
    period: f64,
    nx: usize,
    nt: usize,
    chi: Chi,
) -> Result<TileField> {
    check_nt(nt, chi)?;
    let x = x_grid(profile.ell(), nx);
    let n = x.len() * nt;
    Ok(TileField {
        sigma: sigma_on(profile, &x),
        x,
        t: t_grid(period, nt),
        period,
        p: vec![p_bar; n],
        u: vec![0.0; n],
        meta: TileMeta {
            profile_hash: None,
            k: 0,
            alpha: 0.0,
            chi,
        },
    })
}

/// `(max_t |u(0, t)|, max_t |R- T^{chi T/4} (p + u)(ell, t)|)` on the time grid.
pub fn boundary_residual(tile: &TileField, chi: Chi) -> Result<(f64, f64)> {
    let nt = tile.nt();
    check_nt(nt, chi)?;
    let last = tile.nx() - 1;
    let r0 = (0..nt).fold(0.0f64, |m, n| m.max(tile.u_at(0, n).abs()));
    let lag = if chi == Chi::Periodic { nt / 4 } else { 0 };
    let g = |n: usize| {
        let src = (n + nt - lag) % nt;
        tile.p_at(last, src) + tile.u_at(last, src)
    };
    let r1 = (0..nt).fold(0.0f64, |m, n| {
        m.max((0.5 * (g(n) - g((nt - n) % nt))).abs())
    });
    Ok((r0, r1))
}

/// Same residuals straight from Fourier data at the two ends.
pub fn boundary_residual_fields(
    y0: &FourierField,
    y_ell: &FourierField,
    chi: Chi,
    nt: usize,
) -> (f64, f64) {
    let r0 = y0
        .project_odd()
        .sample(nt)
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let s = crate::evolve::boundary_operator(y_ell, chi).sample(nt);
    (r0, s.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Source row, time offset and sign of `u` for extended index `i`.
fn source(i: usize, nx: usize, half: usize) -> (usize, usize, f64) {
    match i {
        _ if i <= nx => (i, 0, 1.0),
        _ if i <= 2 * nx => (2 * nx - i, half, -1.0),
        _ if i <= 3 * nx => (i - 2 * nx, half, 1.0),
        _ => (4 * nx - i, 0, -1.0),
    }
}

/// Mismatch of the two one-sided formulas at every seam `x = m ell`.
pub fn seam_jumps(tile: &TileField, chi: Chi) -> f64 {
    let (nx, nt) = (tile.nx() - 1, tile.nt());
    let half = if chi == Chi::Periodic { nt / 2 } else { 0 };
    let pieces = if chi == Chi::Periodic { 4 } else { 2 };
    let piece_value = |piece: usize, i: usize, n: usize| {
        // piece q covers [q nx, (q+1) nx]; evaluate its formula at index i
        let (src, off, sg) = match piece {
            0 => (i, 0, 1.0),
            1 => (2 * nx - i, half, -1.0),
            2 => (i - 2 * nx, half, 1.0),
            _ => (4 * nx - i, 0, -1.0),
        };
        let nn = (n + off) % nt;
        (tile.p_at(src, nn), sg * tile.u_at(src, nn))
    };
    let mut worst: f64 = 0.0;
    for m in 1..=pieces {
        let i = m * nx;
        let right = m % pieces;
        let ir = if right == 0 { 0 } else { i };
        for n in 0..nt {
            let (pl, ul) = piece_value(m - 1, i, n);
            let (pr, ur) = piece_value(right, ir, n);
            worst = worst.max((pl - pr).abs()).max((ul - ur).abs());
        }
    }
    worst
}

/// Reflects a tile on `[0, ell]` into the periodic tile. Refuses if the boundary residual exceeds `tol`.
pub fn extend_tile(tile: &TileField, chi: Chi, tol: f64) -> Result<TileField> {
    let (r0, r1) = boundary_residual(tile, chi)?;
    let r = r0.max(r1);
    if r > tol {
        return Err(Error::BoundaryResidual { residual: r, tol });
    }
    let (nx, nt) = (tile.nx() - 1, tile.nt());
    let ell = tile.x[nx];
    let half = if chi == Chi::Periodic { nt / 2 } else { 0 };
    let pieces = if chi == Chi::Periodic { 4 } else { 2 };
    let total = pieces * nx + 1;
    let mut x = Vec::with_capacity(total);
    let mut p = Vec::with_capacity(total * nt);
    let mut u = Vec::with_capacity(total * nt);
    let mut sigma = Vec::with_capacity(total);
    for i in 0..total {
        let (src, off, sg) = source(i, nx, half);
        let q = i / nx.max(1);
        x.push(if i % nx == 0 {
            q as f64 * ell
        } else {
            (q as f64 + (i % nx) as f64 / nx as f64) * ell
        });
        sigma.push(tile.sigma[src]);
        for n in 0..nt {
            let nn = (n + off) % nt;
            p.push(tile.p_at(src, nn));
            u.push(sg * tile.u_at(src, nn));
        }
    }
    Ok(TileField {
        x,
        t: tile.t.clone(),
        period: tile.period,
        p,
        u,
        sigma,
        meta: tile.meta.clone(),
    })
}
