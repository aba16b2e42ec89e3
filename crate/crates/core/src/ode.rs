//! Small adaptive RK4 (step doubling) for fixed-size real systems.

use crate::error::{Error, Result};

#[inline]
fn axpy<const N: usize>(y: &[f64; N], k: &[f64; N], h: f64) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        out[i] += h * k[i];
    }
    out
}

pub fn rk4_step<const N: usize, F>(f: &mut F, x: f64, h: f64, y: &[f64; N]) -> [f64; N]
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let k1 = f(x, y);
    let k2 = f(x + 0.5 * h, &axpy(y, &k1, 0.5 * h));
    let k3 = f(x + 0.5 * h, &axpy(y, &k2, 0.5 * h));
    let k4 = f(x + h, &axpy(y, &k3, h));
    let mut out = *y;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Integrates `y' = f(x, y)` from `x0` to `x1` with mixed absolute/relative tolerance.
pub fn integrate<const N: usize, F>(
    mut f: F,
    x0: f64,
    x1: f64,
    y0: [f64; N],
    tol: f64,
    h0: f64,
    h_min: f64,
) -> Result<[f64; N]>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let mut x = x0;
    let mut y = y0;
    let mut h = h0.min(x1 - x0);
    while x < x1 {
        let last = x + h >= x1;
        let step = if last { x1 - x } else { h };
        let full = rk4_step(&mut f, x, step, &y);
        let half = rk4_step(&mut f, x, 0.5 * step, &y);
        let two = rk4_step(&mut f, x + 0.5 * step, 0.5 * step, &half);
        let scale = 1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = two
            .iter()
            .zip(&full)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            / (15.0 * scale);
        if !err.is_finite() {
            return Err(Error::Integration(format!("non-finite state at x={x}")));
        }
        if err <= tol {
            for i in 0..N {
                y[i] = two[i] + (two[i] - full[i]) / 15.0;
            }
            x = if last { x1 } else { x + step };
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0)
        };
        h = step * factor;
        if h < h_min && (x1 - x) > h_min {
            return Err(Error::Integration(format!("step underflow at x={x}")));
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator() {
        let y = integrate(
            |_, y: &[f64; 2]| [-y[1], y[0]],
            0.0,
            10.0,
            [1.0, 0.0],
            1e-12,
            0.1,
            1e-12,
        )
        .unwrap();
        assert!((y[0] - 10f64.cos()).abs() < 1e-9);
        assert!((y[1] - 10f64.sin()).abs() < 1e-9);
    }
}
