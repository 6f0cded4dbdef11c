//! Reconstruction quality: normalized phase and frequency deviations from a
//! reference phase, the mean growth rate, and the phase modulation.
//!
//! With `q` the reconstructed phase, `phi` the reference and `w` the regression
//! slope of `phi` over the interior window `[t_min, t_max]`:
//!
//! ```text
//! std_phase = sqrt( int (q - phi)^2 / int (phi - w t - c)^2 )
//! std_freq  = sqrt( int (q' - phi')^2 / int (phi' - w)^2 )
//! ```
//!
//! where `c` removes the mean of `phi - w t`. A reconstruction that grows
//! linearly scores exactly 1 on both, a perfect one 0.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{trapezoid, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricOptions {
    /// Fraction of the span skipped at each end.
    pub window_fraction: f64,
    /// Remove the constant offset between `q` and `phi` before comparing.
    pub match_offset: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self { window_fraction: 0.1, match_offset: true }
    }
}

impl MetricOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.window_fraction) {
            return Err(Error::InvalidArgument("window fraction must be in [0, 0.5)".into()));
        }
        Ok(())
    }
}

/// Sample indices of the interior window.
pub fn window(n: usize, fraction: f64) -> Range<usize> {
    if n == 0 {
        return 0..0;
    }
    let last = (n - 1) as f64;
    let lo = (fraction * last).ceil() as usize;
    let hi = ((1.0 - fraction) * last).floor() as usize;
    lo..(hi + 1).max(lo)
}

fn check_window(len: usize, fraction: f64) -> Result<Range<usize>> {
    if !(0.0..0.5).contains(&fraction) {
        return Err(Error::InvalidArgument("window fraction must be in [0, 0.5)".into()));
    }
    let w = window(len, fraction);
    if w.len() < 3 {
        return Err(Error::InsufficientData { needed: 3, got: w.len() });
    }
    Ok(w)
}

fn same_grid(a: &TimeSeries, b: &TimeSeries) -> Result<()> {
    if a.len() != b.len() || a.t0 != b.t0 || a.dt != b.dt {
        return Err(Error::InvalidArgument("series must share the same time grid".into()));
    }
    Ok(())
}

/// Ordinary least-squares slope of `q` against time over the interior window.
pub fn mean_frequency(q: &TimeSeries, fraction: f64) -> Result<f64> {
    let w = check_window(q.len(), fraction)?;
    Ok(regression(q, w)?.0)
}

// (slope, intercept)
fn regression(q: &TimeSeries, w: Range<usize>) -> Result<(f64, f64)> {
    let m = w.len() as f64;
    let (mut st, mut sq) = (0.0, 0.0);
    for i in w.clone() {
        st += q.time(i);
        sq += q.values[i];
    }
    let (tm, qm) = (st / m, sq / m);
    let (mut stt, mut stq, mut sqq) = (0.0, 0.0, 0.0);
    for i in w {
        let dt = q.time(i) - tm;
        let dq = q.values[i] - qm;
        stt += dt * dt;
        stq += dt * dq;
        sqq += dq * dq;
    }
    if sqq == 0.0 || stt == 0.0 {
        return Err(Error::InvalidArgument("cannot regress a constant series".into()));
    }
    let slope = stq / stt;
    Ok((slope, qm - slope * tm))
}

fn window_integral(values: impl Iterator<Item = f64>, dt: f64) -> f64 {
    let v: Vec<f64> = values.collect();
    trapezoid(&v, dt)
}

/// Normalized phase deviation of `q` from the reference `phi`.
pub fn phase_error(q: &TimeSeries, phi: &TimeSeries, opts: &MetricOptions) -> Result<f64> {
    same_grid(q, phi)?;
    let w = check_window(q.len(), opts.window_fraction)?;
    let span = q.dt * (w.len() - 1) as f64;
    let omega = regression(phi, w.clone())?.0;
    let trend = |i: usize| phi.values[i] - omega * phi.time(i);
    let trend_mean = window_integral(w.clone().map(trend), q.dt) / span;
    let norm = window_integral(w.clone().map(|i| (trend(i) - trend_mean).powi(2)), q.dt);
    if norm < 1e-12 * span {
        return Err(Error::NormalizationDegenerate { energy: norm });
    }
    let offset = if opts.match_offset { window_integral(w.clone().map(|i| phi.values[i] - q.values[i]), q.dt) / span } else { 0.0 };
    let num = window_integral(w.map(|i| (q.values[i] + offset - phi.values[i]).powi(2)), q.dt);
    Ok((num / norm).sqrt())
}

/// Normalized deviation of the instantaneous frequency `qdot` from `phidot`.
pub fn freq_error(qdot: &TimeSeries, phidot: &TimeSeries, omega_tilde: f64, fraction: f64) -> Result<f64> {
    same_grid(qdot, phidot)?;
    let w = check_window(qdot.len(), fraction)?;
    let span = qdot.dt * (w.len() - 1) as f64;
    let norm = window_integral(w.clone().map(|i| (phidot.values[i] - omega_tilde).powi(2)), qdot.dt);
    if norm < 1e-12 * span {
        return Err(Error::NormalizationDegenerate { energy: norm });
    }
    let num = window_integral(w.map(|i| (qdot.values[i] - phidot.values[i]).powi(2)), qdot.dt);
    Ok((num / norm).sqrt())
}

/// `q(t) - omega t`.
pub fn modulation(q: &TimeSeries, omega: f64) -> TimeSeries {
    let values = q.values.iter().enumerate().map(|(i, v)| v - omega * q.time(i)).collect();
    q.with_values(values)
}

/// Error summary for one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub n: usize,
    pub std_phase: f64,
    pub std_freq: f64,
    /// Mean growth rate of the reconstructed phase.
    pub omega_tilde: f64,
    pub window: (f64, f64),
}

impl ErrorReport {
    pub fn window_bounds(len: usize, t0: f64, dt: f64, fraction: f64) -> (f64, f64) {
        let w = window(len, fraction);
        (t0 + w.start as f64 * dt, t0 + (w.end - 1) as f64 * dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DT: f64 = 0.01;

    fn phase() -> TimeSeries {
        TimeSeries::from_fn(0.0, DT, 100_000, |t| 0.3 + 0.2 * t + 0.1 * (1.12 * t).sin() + 0.05 * (0.3 * t).cos())
    }

    #[test]
    fn window_skips_ten_percent() {
        let w = window(101, 0.1);
        assert_eq!(w, 10..91);
        assert_eq!(window(0, 0.1), 0..0);
    }

    #[test]
    fn mean_frequency_of_lines_and_modulated_phase() {
        let line = TimeSeries::from_fn(0.0, DT, 10_000, |t| 0.2 * t + 1.7);
        assert!((mean_frequency(&line, 0.1).unwrap() - 0.2).abs() < 1e-12);
        let q = TimeSeries::from_fn(0.0, DT, 200_000, |t| 0.2 * t + 0.1 * (1.12 * t).sin());
        assert!((mean_frequency(&q, 0.1).unwrap() - 0.2).abs() < 1e-3);
        let flat = TimeSeries::from_fn(0.0, DT, 100, |_| 1.0);
        assert!(mean_frequency(&flat, 0.1).is_err());
    }

    #[test]
    fn phase_error_calibration() {
        let phi = phase();
        let opts = MetricOptions::default();
        assert_eq!(phase_error(&phi, &phi, &opts).unwrap(), 0.0);
        let omega = mean_frequency(&phi, 0.1).unwrap();
        let linear = TimeSeries::from_fn(0.0, DT, phi.len(), |t| omega * t - 4.0);
        assert!((phase_error(&linear, &phi, &opts).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn phase_error_of_partially_removed_modulation() {
        let phi = phase();
        let opts = MetricOptions::default();
        let omega = mean_frequency(&phi, 0.1).unwrap();
        let q = phi.with_values(phi.values.iter().enumerate().map(|(i, p)| p - 0.1 * (p - omega * phi.time(i))).collect());
        // independent evaluation: rectangle-rule sums on the window
        let w = window(phi.len(), 0.1);
        let resid: Vec<f64> = w.clone().map(|i| phi.values[i] - omega * phi.time(i)).collect();
        let m = resid.iter().sum::<f64>() / resid.len() as f64;
        let norm: f64 = resid.iter().map(|r| (r - m).powi(2)).sum();
        let num: f64 = resid.iter().map(|r| (0.1 * (r - m)).powi(2)).sum();
        let oracle = (num / norm).sqrt();
        assert!((oracle - 0.1).abs() < 1e-12);
        assert!((phase_error(&q, &phi, &opts).unwrap() - 0.1).abs() < 1e-4);
    }

    #[test]
    fn phase_error_is_offset_invariant() {
        let phi = phase();
        let opts = MetricOptions::default();
        let q = phi.with_values(phi.values.iter().map(|p| p + 0.02 * (p * 3.0).sin()).collect());
        let shifted = q.with_values(q.values.iter().map(|v| v + 17.3).collect());
        let a = phase_error(&q, &phi, &opts).unwrap();
        let b = phase_error(&shifted, &phi, &opts).unwrap();
        assert!((a - b).abs() < 1e-9 * a);
    }

    #[test]
    fn unmodulated_reference_is_degenerate() {
        let phi = TimeSeries::from_fn(0.0, DT, 1000, |t| 0.2 * t);
        let err = phase_error(&phi, &phi, &MetricOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NormalizationDegenerate { .. }));
        let rate = TimeSeries::from_fn(0.0, DT, 1000, |_| 0.2);
        assert!(matches!(freq_error(&rate, &rate, 0.2, 0.1), Err(Error::NormalizationDegenerate { .. })));
    }

    #[test]
    fn freq_error_calibration() {
        let omega = 0.2;
        let phidot = TimeSeries::from_fn(0.0, DT, 50_000, |t| omega + 0.112 * (1.12 * t).cos());
        assert_eq!(freq_error(&phidot, &phidot, omega, 0.1).unwrap(), 0.0);
        let flat = phidot.with_values(vec![omega; phidot.len()]);
        assert!((freq_error(&flat, &phidot, omega, 0.1).unwrap() - 1.0).abs() < 1e-12);
        let half = phidot.with_values(phidot.values.iter().map(|v| omega + 0.5 * (v - omega)).collect());
        assert!((freq_error(&half, &phidot, omega, 0.1).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn modulation_removes_trend() {
        let line = TimeSeries::from_fn(0.0, DT, 1000, |t| 0.2 * t);
        assert!(modulation(&line, 0.2).values.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = TimeSeries::from_fn(0.0, DT, 100, |t| t);
        let b = TimeSeries::from_fn(0.0, DT, 99, |t| t);
        assert!(phase_error(&a, &b, &MetricOptions::default()).is_err());
    }
}
