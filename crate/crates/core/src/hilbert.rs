//! Finite-interval Hilbert transform on a monotone, possibly non-uniform grid
//!
//! ```text
//! H[X](t) = (1/pi) p.v. int_{t0}^{tm} X(tau) / (t - tau) dtau
//! ```
//!
//! so that `H[cos] = sin` and `H[sin] = -cos`. Two independent implementations:
//! [`hilbert_spectral`] (resample, Fourier multiplier, resample back) for
//! production sizes and [`hilbert_quadrature`], an O(N^2) direct principal-value
//! quadrature used as the reference.
//!
//! Both remove the sample mean first and do not restore it.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::interp::Pchip;
use crate::par::{self, Execution};
use crate::series::{check_strictly_increasing, GriddedSignal};

pub const MIN_SAMPLES: usize = 64;

fn validate(sig: &GriddedSignal) -> Result<()> {
    if sig.grid.len() != sig.values.len() {
        return Err(Error::InvalidArgument("grid and values differ in length".into()));
    }
    if sig.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData { needed: MIN_SAMPLES, got: sig.len() });
    }
    check_strictly_increasing(&sig.grid)?;
    if sig.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("signal contains non-finite samples".into()));
    }
    Ok(())
}

fn centered(values: &[f64]) -> Vec<f64> {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| v - mean).collect()
}

/// Hilbert partner via the discrete multiplier `-i sign(Omega)`.
///
/// See [`SLOW_CYCLES`] for the treatment of slow components. The centered samples are resampled (monotone cubic) onto `oversample * N`
/// uniform points spanning the grid, transformed, and interpolated back, so the
/// output grid is the input grid.
pub fn hilbert_spectral(sig: &GriddedSignal, oversample: usize) -> Result<GriddedSignal> {
    validate(sig)?;
    if oversample < 1 {
        return Err(Error::InvalidArgument("oversample factor must be at least 1".into()));
    }
    let n = sig.len();
    let m = oversample * n;
    let (g0, g1) = (sig.grid[0], sig.grid[n - 1]);
    let step = (g1 - g0) / (m - 1) as f64;
    let mut uniform: Vec<f64> = (0..m).map(|k| g0 + k as f64 * step).collect();
    uniform[m - 1] = g1;

    let values = centered(&sig.values);
    let resampled = if oversample == 1 && is_uniform(&sig.grid) { values } else { Pchip::new(&sig.grid, &values)?.eval_sorted(&uniform) };

    let partner = uniform_hilbert(&resampled);
    let back = if oversample == 1 && is_uniform(&sig.grid) { partner } else { Pchip::new(&uniform, &partner)?.eval_sorted(&sig.grid) };
    Ok(GriddedSignal { grid: sig.grid.clone(), values: back })
}

fn is_uniform(grid: &[f64]) -> bool {
    let n = grid.len();
    let h = (grid[n - 1] - grid[0]) / (n - 1) as f64;
    grid.iter().enumerate().all(|(i, g)| (g - (grid[0] + i as f64 * h)).abs() <= 1e-12 * h.max(g.abs()))
}

/// Components completing at most this many cycles over the window are
/// transformed as finite-interval signals instead of periodic ones.
pub const SLOW_CYCLES: usize = 10;
const SLOW_PADDING: usize = 4;

/// Applies `-i sign(k)` to uniformly sampled data; DC and Nyquist are zeroed.
///
/// The periodic multiplier is exact for content that closes on the window but
/// wraps slow content (a few cycles per window) onto itself. Those lowest bins
/// are therefore split off and transformed with zero padding, which
/// approximates the finite-interval integral; the split keeps the operator
/// linear.
pub(crate) fn uniform_hilbert(samples: &[f64]) -> Vec<f64> {
    let m = samples.len();
    let mut planner = FftPlanner::<f64>::new();
    let mut spec: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(m).process(&mut spec);
    spec[0] = Complex64::new(0.0, 0.0);

    let slow = SLOW_CYCLES.min((m - 1) / 2);
    let mut low = vec![Complex64::new(0.0, 0.0); m];
    for k in 1..=slow {
        low[k] = std::mem::take(&mut spec[k]);
        low[m - k] = std::mem::take(&mut spec[m - k]);
    }
    apply_multiplier(&mut spec);
    planner.plan_fft_inverse(m).process(&mut spec);
    let scale = 1.0 / m as f64;
    let mut out: Vec<f64> = spec.iter().map(|c| c.re * scale).collect();

    if slow > 0 {
        planner.plan_fft_inverse(m).process(&mut low);
        let padded_len = SLOW_PADDING * m;
        let mut padded = vec![Complex64::new(0.0, 0.0); padded_len];
        for (p, l) in padded.iter_mut().zip(&low) {
            *p = Complex64::new(l.re * scale, 0.0);
        }
        planner.plan_fft_forward(padded_len).process(&mut padded);
        apply_multiplier(&mut padded);
        planner.plan_fft_inverse(padded_len).process(&mut padded);
        let pscale = 1.0 / padded_len as f64;
        for (o, p) in out.iter_mut().zip(&padded) {
            *o += p.re * pscale;
        }
    }
    out
}

fn apply_multiplier(buf: &mut [Complex64]) {
    let m = buf.len();
    buf[0] = Complex64::new(0.0, 0.0);
    for (k, c) in buf.iter_mut().enumerate().skip(1) {
        if 2 * k < m {
            *c = Complex64::new(c.im, -c.re);
        } else if 2 * k > m {
            *c = Complex64::new(-c.im, c.re);
        } else {
            *c = Complex64::new(0.0, 0.0);
        }
    }
}

/// Direct principal-value quadrature of the finite-interval transform.
///
/// The centered signal is taken as piecewise linear between samples and each
/// cell is integrated against `1/(t - tau)` in closed form. The two cells
/// adjacent to the evaluation point combine into the principal value
/// `X(t) ln(h_left/h_right) - b_left h_left - b_right h_right`, which for a
/// symmetric neighbourhood reduces to `-b * width`.
pub fn hilbert_quadrature(sig: &GriddedSignal, exec: Execution) -> Result<GriddedSignal> {
    validate(sig)?;
    let grid = &sig.grid;
    let x = centered(&sig.values);
    let n = grid.len();
    let slopes: Vec<f64> = (0..n - 1).map(|k| (x[k + 1] - x[k]) / (grid[k + 1] - grid[k])).collect();

    let values = par::map_range(exec, n, |i| {
        let t = grid[i];
        let mut acc = 0.0;
        // cells entirely left of t: [g_k, g_{k+1}] with k + 1 < i
        for k in 0..i.saturating_sub(1) {
            acc += cell(t, grid[k], grid[k + 1], x[k], slopes[k]);
        }
        // cells entirely right of t: k > i
        for k in (i + 1)..(n - 1) {
            acc += cell(t, grid[k], grid[k + 1], x[k], slopes[k]);
        }
        // singular neighbourhood
        let mut local = 0.0;
        match (i > 0, i + 1 < n) {
            (true, true) => {
                let hl = t - grid[i - 1];
                let hr = grid[i + 1] - t;
                local += x[i] * (hl / hr).ln() - slopes[i - 1] * hl - slopes[i] * hr;
            }
            (true, false) => {
                // left cell only: log divergence of the finite-interval transform
                // at the end point is regularized with the cell width
                let hl = t - grid[i - 1];
                local -= slopes[i - 1] * hl;
            }
            (false, true) => {
                let hr = grid[i + 1] - t;
                local -= slopes[i] * hr;
            }
            (false, false) => {}
        }
        (acc + local) / std::f64::consts::PI
    });
    Ok(GriddedSignal { grid: grid.clone(), values })
}

// int_u^v (x_u + s (tau - u)) / (t - tau) dtau for t outside [u, v]
#[inline]
fn cell(t: f64, u: f64, v: f64, xu: f64, s: f64) -> f64 {
    let c = t - u;
    let d = t - v;
    let at_t = xu + s * c;
    at_t * (c / d).ln() - s * (v - u)
}
