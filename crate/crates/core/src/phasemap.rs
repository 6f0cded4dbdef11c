//! Protophase-to-phase transformation.
//!
//! A protophase `theta = Theta(phi)` grows non-uniformly; its density on the
//! circle has Fourier coefficients `F_k = <exp(-i k theta)>_t`, and
//!
//! ```text
//! psi = theta + sum_{k != 0} F_k / (i k) (exp(i k theta) - 1)
//! ```
//!
//! flattens the density, giving a phase that grows uniformly on average.
//! [`phase_from_rate`] inverts a known rate `dtheta/dt = f(theta)` directly and
//! serves as an independent route to the same phase on synthetic data.

use std::f64::consts::TAU;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::series::TimeSeries;

pub const MIN_CYCLES: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseMapOptions {
    pub k_max: usize,
    /// Drop harmonics below the statistical floor `2 / sqrt(N)`.
    pub threshold: bool,
}

impl Default for PhaseMapOptions {
    fn default() -> Self {
        Self { k_max: 24, threshold: true }
    }
}

/// `F_1 ... F_kmax`; `F_0 = 1` and `F_{-k} = conj(F_k)` are implied.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCoeffs {
    pub coeffs: Vec<Complex64>,
    /// Samples inside the averaging window.
    pub n_samples: usize,
}

impl DensityCoeffs {
    pub fn k_max(&self) -> usize {
        self.coeffs.len()
    }

    pub fn get(&self, k: usize) -> Complex64 {
        self.coeffs[k - 1]
    }

    pub fn noise_floor(&self) -> f64 {
        2.0 / (self.n_samples as f64).sqrt()
    }

    /// Copy with every `|F_k|` below the noise floor set to zero.
    pub fn thresholded(&self) -> Self {
        let floor = self.noise_floor();
        let coeffs = self.coeffs.iter().map(|&c| if c.norm() < floor { Complex64::new(0.0, 0.0) } else { c }).collect();
        Self { coeffs, n_samples: self.n_samples }
    }

    /// `sum_k 2 |F_k|`; below 1 the transformation is guaranteed monotone.
    pub fn monotonicity_bound(&self) -> f64 {
        self.coeffs.iter().map(|c| 2.0 * c.norm()).sum()
    }
}

// Fractional sample position where `values` first (or last) reaches `level`.
fn crossing(values: &[f64], level: f64, last: bool) -> Option<f64> {
    let hit = |i: usize| {
        let (a, b) = (values[i], values[i + 1]);
        (a <= level && level <= b && a != b).then(|| i as f64 + (level - a) / (b - a))
    };
    if last {
        (0..values.len() - 1).rev().find_map(hit)
    } else {
        (0..values.len() - 1).find_map(hit)
    }
}

/// Averages `exp(-i k theta(t))` over the longest stretch of whole protophase
/// cycles, which keeps finite-window leakage out of the coefficients.
pub fn density_coeffs(theta: &TimeSeries, k_max: usize, exec: Execution) -> Result<DensityCoeffs> {
    if k_max < 1 {
        return Err(Error::InvalidArgument("k_max must be at least 1".into()));
    }
    let v = &theta.values;
    if v.len() < 3 {
        return Err(Error::InsufficientData { needed: 3, got: v.len() });
    }
    let (lo, hi) = (v.iter().cloned().fold(f64::MAX, f64::min), v.iter().cloned().fold(f64::MIN, f64::max));
    let first_cycle = (v[0].max(lo) / TAU).ceil();
    let last_cycle = (v[v.len() - 1].min(hi) / TAU).floor();
    if !(hi - lo >= MIN_CYCLES * TAU) || last_cycle - first_cycle < 1.0 {
        let cycles = ((hi - lo) / TAU).max(0.0);
        return Err(Error::InsufficientData { needed: (MIN_CYCLES * v.len() as f64 / cycles.max(1.0)) as usize, got: v.len() });
    }
    let start = crossing(v, first_cycle * TAU, false).ok_or(Error::InsufficientData { needed: 3, got: 0 })?;
    let end = crossing(v, last_cycle * TAU, true).ok_or(Error::InsufficientData { needed: 3, got: 0 })?;
    let ia = start.ceil() as usize;
    let ib = end.floor() as usize;
    if ib <= ia {
        return Err(Error::InsufficientData { needed: 3, got: ib.saturating_sub(ia) });
    }
    let span = (end - start) * theta.dt;

    let coeffs = par::map_range(exec, k_max, |km1| {
        let k = (km1 + 1) as f64;
        let f = |i: usize| Complex64::from_polar(1.0, -k * v[i]);
        let mut acc = Complex64::new(0.0, 0.0);
        for i in ia + 1..ib {
            acc += f(i);
        }
        acc += (f(ia) + f(ib)) * 0.5;
        acc *= theta.dt;
        // end pieces: the integrand equals 1 exactly at whole-cycle crossings
        let one = Complex64::new(1.0, 0.0);
        acc += (one + f(ia)) * (0.5 * (ia as f64 - start) * theta.dt);
        acc += (one + f(ib)) * (0.5 * (end - ib as f64) * theta.dt);
        acc / span
    });
    Ok(DensityCoeffs { coeffs, n_samples: ib - ia + 1 })
}

/// Result of [`to_phase`].
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTransform {
    pub psi: TimeSeries,
    /// `sum 2 |F_k|` of the coefficients actually applied.
    pub bound: f64,
}

/// Applies the density-flattening correction with the given coefficients.
///
/// When `sum 2|F_k| >= 1` monotonicity is not guaranteed analytically; the
/// output is then checked and a non-monotone result is reported as
/// [`Error::NonMonotonePhase`].
pub fn to_phase(theta: &TimeSeries, coeffs: &DensityCoeffs, exec: Execution) -> Result<PhaseTransform> {
    // F_k / (i k) = (Im F_k - i Re F_k) / k, so the +-k pair contributes
    // 2 [Im F_k (cos k theta - 1) + Re F_k sin k theta] / k
    let terms: Vec<(f64, f64, f64)> =
        coeffs.coeffs.iter().enumerate().filter(|(_, c)| c.norm() > 0.0).map(|(i, c)| ((i + 1) as f64, c.re, c.im)).collect();
    let v = &theta.values;
    let mut psi = vec![0.0; v.len()];
    par::fill(exec, &mut psi, |i| {
        let th = v[i];
        let corr: f64 = terms
            .iter()
            .map(|&(k, re, im)| {
                let (s, c) = (k * th).sin_cos();
                2.0 * (im * (c - 1.0) + re * s) / k
            })
            .sum();
        th + corr
    });
    let bound = coeffs.monotonicity_bound();
    if bound >= 1.0 && psi.windows(2).any(|w| !(w[1] > w[0])) && theta.is_strictly_increasing() {
        return Err(Error::NonMonotonePhase { bound });
    }
    Ok(PhaseTransform { psi: theta.with_values(psi), bound })
}

/// Estimates the coefficients from `theta` and applies the correction.
pub fn protophase_to_phase(theta: &TimeSeries, opts: &PhaseMapOptions, exec: Execution) -> Result<PhaseTransform> {
    let mut coeffs = density_coeffs(theta, opts.k_max, exec)?;
    if opts.threshold {
        coeffs = coeffs.thresholded();
    }
    to_phase(theta, &coeffs, exec)
}

/// A 2 pi-periodic function tabulated at `2 pi k / M`, `k = 0..M`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicTable {
    pub values: Vec<f64>,
}

impl PeriodicTable {
    pub fn from_fn(m: usize, f: impl Fn(f64) -> f64) -> Self {
        Self { values: (0..m).map(|k| f(TAU * k as f64 / m as f64)).collect() }
    }

    pub fn step(&self) -> f64 {
        TAU / self.values.len() as f64
    }

    /// Piecewise-linear periodic interpolation.
    pub fn eval(&self, x: f64) -> f64 {
        let m = self.values.len();
        let pos = x.rem_euclid(TAU) / self.step();
        let k = (pos.floor() as usize).min(m - 1);
        let f = pos - k as f64;
        self.values[k] + f * (self.values[(k + 1) % m] - self.values[k])
    }
}

// int over [0, len] of 1 / (a + s x), exact for the linear segment
fn inverse_linear_integral(a: f64, b: f64, len: f64, frac: f64) -> f64 {
    let end = a + frac * (b - a);
    if (b - a).abs() <= 1e-12 * a.abs() {
        frac * len / (0.5 * (a + end))
    } else {
        (end / a).ln() * len / (b - a)
    }
}

/// `phi(theta) = int_0^theta omega / f(theta') dtheta'` with
/// `omega = 2 pi / int_0^{2 pi} dtheta / f`, so `phi` gains exactly 2 pi per cycle.
pub fn phase_from_rate(theta: &TimeSeries, rate: &PeriodicTable) -> Result<TimeSeries> {
    let m = rate.values.len();
    if m < 2 {
        return Err(Error::InsufficientData { needed: 2, got: m });
    }
    if let Some(k) = rate.values.iter().position(|&f| !(f > 0.0) || !f.is_finite()) {
        return Err(Error::InvalidArgument(format!("rate must be positive, got {} at node {k}", rate.values[k])));
    }
    let h = rate.step();
    let mut cumulative = Vec::with_capacity(m + 1);
    cumulative.push(0.0);
    for k in 0..m {
        let (a, b) = (rate.values[k], rate.values[(k + 1) % m]);
        cumulative.push(cumulative[k] + inverse_linear_integral(a, b, h, 1.0));
    }
    let total = cumulative[m];
    let omega = TAU / total;
    let values = theta
        .values
        .iter()
        .map(|&th| {
            let cycles = (th / TAU).floor();
            let pos = (th - cycles * TAU) / h;
            let k = (pos.floor() as usize).min(m - 1);
            let frac = pos - k as f64;
            let (a, b) = (rate.values[k], rate.values[(k + 1) % m]);
            let within = cumulative[k] + inverse_linear_integral(a, b, h, frac);
            omega * within + cycles * TAU
        })
        .collect();
    Ok(theta.with_values(values))
}
