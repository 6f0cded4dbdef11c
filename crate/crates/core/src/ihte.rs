//! Iterated Hilbert transform embeddings.
//!
//! Starting from `theta_0 = t`, each step treats the current protophase as
//! time: the partner `Y = H[X]` is computed on the grid `theta_n`, the arc
//! length `L` of the embedding `(X, Y)` is accumulated, and `theta_{n+1}` is
//! the spline through `(L(t_j), 2 pi j)` at the feature times `t_j`. Samples
//! never move; only the grid they are labelled with changes.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::embed::{self, arc_length, detect_features, Embedding, FeatureOptions, FeatureSet};
use crate::error::{Error, Result};
use crate::hilbert::hilbert_spectral;
use crate::metrics;
use crate::series::{GriddedSignal, TimeSeries};

/// Boundary effects of the finite-window transform need this many periods.
pub const MIN_PERIODS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IhteConfig {
    pub n_iter: usize,
    pub quantile: f64,
    pub refractory: f64,
    pub oversample: usize,
    /// Protophase bins for the band-width diagnostic.
    pub bins: usize,
    /// Fraction discarded at each end by diagnostics and waveforms.
    pub edge_fraction: f64,
}

impl Default for IhteConfig {
    fn default() -> Self {
        Self { n_iter: 10, quantile: 0.75, refractory: 0.5, oversample: 2, bins: 128, edge_fraction: 0.1 }
    }
}

impl IhteConfig {
    pub fn features(&self) -> FeatureOptions {
        FeatureOptions { quantile: self.quantile, refractory: self.refractory }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iter < 1 {
            return Err(Error::InvalidArgument("n_iter must be at least 1".into()));
        }
        if self.oversample < 1 {
            return Err(Error::InvalidArgument("oversample must be at least 1".into()));
        }
        if self.bins < 4 {
            return Err(Error::InvalidArgument("at least 4 bins are needed".into()));
        }
        if !(0.0..1.0).contains(&self.quantile) || !(self.refractory >= 0.0) {
            return Err(Error::InvalidArgument("quantile must be in [0, 1) and refractory >= 0".into()));
        }
        if !(0.0..0.5).contains(&self.edge_fraction) {
            return Err(Error::InvalidArgument("edge fraction must be in [0, 0.5)".into()));
        }
        Ok(())
    }
}

/// Geometry of the embedding `(X, Y_n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics {
    pub n: usize,
    /// Mean over protophase bins of the transverse width of the embedding.
    pub bandwidth: f64,
    /// RMS distance between embedding points at consecutive features.
    pub closure_gap: f64,
    /// Sign changes of the discrete curvature; small loops show up here.
    pub curvature_sign_changes: usize,
    /// Curvature sign changes per protophase cycle.
    pub loop_density: f64,
}

/// Loop density above which an embedding is considered noise dominated.
/// Clean embeddings of the test oscillator stay below about 8 per cycle.
pub const LOOP_DENSITY_LIMIT: f64 = 20.0;

impl Diagnostics {
    pub fn is_loopy(&self) -> bool {
        !(self.loop_density <= LOOP_DENSITY_LIMIT)
    }
}

/// One step: partner, arc length and the next protophase.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub partner: Vec<f64>,
    pub length: Vec<f64>,
    pub theta: Vec<f64>,
}

fn guard(values: &[f64], iteration: usize, stage: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalFailure { iteration, stage })
    }
}

/// Computes `theta_{n+1}` from `X` labelled by `theta_n`; `iteration` is `n + 1`.
pub fn ihte_step(x: &[f64], theta: &[f64], feats: &FeatureSet, oversample: usize, iteration: usize) -> Result<Step> {
    let sig = GriddedSignal::new(theta.to_vec(), x.to_vec())?;
    let partner = hilbert_spectral(&sig, oversample)?.values;
    guard(&partner, iteration, "hilbert")?;
    let emb = Embedding::new(sig.grid, sig.values, partner)?;
    let length = arc_length(&emb).values;
    guard(&length, iteration, "arc_length")?;
    let next = embed::protophase_from_length(&length, feats)?.theta;
    guard(&next, iteration, "protophase")?;
    Ok(Step { partner: emb.y, length, theta: next })
}

/// Every protophase of a run, with the partners and diagnostics behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub t0: f64,
    pub dt: f64,
    pub signal: Vec<f64>,
    /// `protophases[0]` is the time grid, `protophases[n]` is `theta_n`.
    pub protophases: Vec<Vec<f64>>,
    /// `partners[n - 1]` is `Y_n = H[X(theta_{n-1})]`.
    pub partners: Vec<Vec<f64>>,
    pub features: FeatureSet,
    /// `diagnostics[n - 1]` describes the embedding `(X, Y_n)`.
    pub diagnostics: Vec<Diagnostics>,
    pub edge_fraction: f64,
}

impl IterationTrace {
    pub fn n_iter(&self) -> usize {
        self.protophases.len() - 1
    }

    pub fn protophase(&self, n: usize) -> TimeSeries {
        TimeSeries { t0: self.t0, dt: self.dt, values: self.protophases[n].clone() }
    }

    pub fn final_protophase(&self) -> TimeSeries {
        self.protophase(self.n_iter())
    }

    pub fn embedding(&self, n: usize) -> Embedding {
        Embedding { grid: self.protophases[n - 1].clone(), x: self.signal.clone(), y: self.partners[n - 1].clone() }
    }

    /// Waveform of the signal against `theta_n`, edges excluded.
    pub fn waveform_at(&self, n: usize, bins: usize) -> Result<Waveform> {
        let w = metrics::window(self.signal.len(), self.edge_fraction);
        waveform(&self.protophases[n][w.clone()], &self.signal[w], bins)
    }

    /// Waveform of the signal against the final protophase, edges excluded.
    pub fn waveform(&self, bins: usize) -> Result<Waveform> {
        self.waveform_at(self.n_iter(), bins)
    }
}

/// Runs `cfg.n_iter` steps from `theta_0 = t`.
pub fn run_ihte(x: &TimeSeries, cfg: &IhteConfig) -> Result<IterationTrace> {
    cfg.validate()?;
    if let Some(i) = x.first_non_finite() {
        return Err(Error::InvalidArgument(format!("signal sample {i} is not finite")));
    }
    let time = x.times();
    let feats = detect_features(&GriddedSignal::new(time.clone(), x.values.clone())?, cfg.features())?;
    if feats.len() < MIN_PERIODS {
        return Err(Error::InsufficientFeatures { found: feats.len(), needed: MIN_PERIODS });
    }

    let mut protophases = vec![time];
    let mut partners = Vec::with_capacity(cfg.n_iter);
    let mut diagnostics = Vec::with_capacity(cfg.n_iter);
    for n in 1..=cfg.n_iter {
        let step = ihte_step(&x.values, &protophases[n - 1], &feats, cfg.oversample, n)?;
        let emb = Embedding { grid: protophases[n - 1].clone(), x: x.values.clone(), y: step.partner };
        diagnostics.push(diagnose(n, &emb, &step.theta, &feats, cfg));
        partners.push(emb.y);
        protophases.push(step.theta);
    }
    Ok(IterationTrace {
        t0: x.t0,
        dt: x.dt,
        signal: x.values.clone(),
        protophases,
        partners,
        features: feats,
        diagnostics,
        edge_fraction: cfg.edge_fraction,
    })
}

fn diagnose(n: usize, emb: &Embedding, theta: &[f64], feats: &FeatureSet, cfg: &IhteConfig) -> Diagnostics {
    let w = metrics::window(theta.len(), cfg.edge_fraction);
    let widths = transverse_widths(&theta[w.clone()], &emb.x[w.clone()], &emb.y[w.clone()], cfg.bins);
    let finite: Vec<f64> = widths.into_iter().flatten().collect();
    let bandwidth = if finite.is_empty() { f64::NAN } else { finite.iter().sum::<f64>() / finite.len() as f64 };
    let inside = |p: f64| p >= w.start as f64 && p <= (w.end - 1) as f64;
    let gaps: Vec<f64> = feats
        .positions
        .windows(2)
        .filter(|pair| inside(pair[0]) && inside(pair[1]))
        .map(|pair| {
            let dx = embed::lerp_at(&emb.x, pair[1]) - embed::lerp_at(&emb.x, pair[0]);
            let dy = embed::lerp_at(&emb.y, pair[1]) - embed::lerp_at(&emb.y, pair[0]);
            dx.hypot(dy)
        })
        .collect();
    let closure_gap = (gaps.iter().map(|g| g * g).sum::<f64>() / gaps.len().max(1) as f64).sqrt();
    let cycles = (theta[w.end - 1] - theta[w.start]) / TAU;
    let interior = Embedding { grid: emb.grid[w.clone()].to_vec(), x: emb.x[w.clone()].to_vec(), y: emb.y[w].to_vec() };
    let curvature_sign_changes = interior.curvature_sign_changes();
    let loop_density = curvature_sign_changes as f64 / cycles;
    Diagnostics { n, bandwidth, closure_gap, curvature_sign_changes, loop_density }
}

// Sample indices grouped by bin of theta mod 2 pi, plus the offset of each
// sample from its bin centre.
fn bin_samples(theta: &[f64], bins: usize) -> Vec<Vec<(usize, f64)>> {
    let width = TAU / bins as f64;
    let mut out = vec![Vec::new(); bins];
    for (i, th) in theta.iter().enumerate() {
        let wrapped = th.rem_euclid(TAU);
        let b = ((wrapped / width) as usize).min(bins - 1);
        out[b].push((i, wrapped - (b as f64 + 0.5) * width));
    }
    out
}

// Least-squares quadratic in the bin offset; None when underdetermined.
fn quadratic_fit(members: &[(usize, f64)], values: &[f64]) -> Option<Vector3<f64>> {
    if members.len() < 4 {
        return None;
    }
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for &(i, d) in members {
        let row = Vector3::new(1.0, d, d * d);
        ata += row * row.transpose();
        atb += row * values[i];
    }
    ata.lu().solve(&atb)
}

// Width of the point cloud normal to the local curve direction in each bin.
fn transverse_widths(theta: &[f64], x: &[f64], y: &[f64], bins: usize) -> Vec<Option<f64>> {
    bin_samples(theta, bins)
        .iter()
        .map(|members| {
            let cx = quadratic_fit(members, x)?;
            let cy = quadratic_fit(members, y)?;
            let (lo, hi) = members.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &(i, d)| {
                let rx = x[i] - (cx[0] + cx[1] * d + cx[2] * d * d);
                let ry = y[i] - (cy[0] + cy[1] * d + cy[2] * d * d);
                let (tx, ty) = (cx[1] + 2.0 * cx[2] * d, cy[1] + 2.0 * cy[2] * d);
                let norm = tx.hypot(ty);
                let normal = if norm > 0.0 { (tx * ry - ty * rx) / norm } else { rx.hypot(ry) };
                (lo.min(normal), hi.max(normal))
            });
            Some(hi - lo)
        })
        .collect()
}

/// Bin-averaged signal as a function of protophase.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub centers: Vec<f64>,
    pub mean: Vec<f64>,
    /// Range of the residuals from a local quadratic fit in each bin; a
    /// single-valued waveform has spread near zero.
    pub spread: Vec<f64>,
    /// Bins without enough samples; their mean is interpolated from neighbours.
    pub gaps: Vec<usize>,
}

impl Waveform {
    pub fn range(&self) -> f64 {
        let (lo, hi) = self.mean.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi - lo
    }

    pub fn max_spread(&self) -> f64 {
        self.spread.iter().cloned().filter(|s| s.is_finite()).fold(0.0, f64::max)
    }

    pub fn mean_spread(&self) -> f64 {
        let finite: Vec<f64> = self.spread.iter().cloned().filter(|s| s.is_finite()).collect();
        finite.iter().sum::<f64>() / finite.len().max(1) as f64
    }
}

/// Tabulates `X` against `theta mod 2 pi` in `bins` uniform bins.
pub fn waveform(theta: &[f64], x: &[f64], bins: usize) -> Result<Waveform> {
    if theta.len() != x.len() {
        return Err(Error::InvalidArgument("protophase and signal differ in length".into()));
    }
    if bins < 2 {
        return Err(Error::InvalidArgument("at least 2 bins are needed".into()));
    }
    let width = TAU / bins as f64;
    let grouped = bin_samples(theta, bins);
    let mut mean = vec![f64::NAN; bins];
    let mut spread = vec![f64::NAN; bins];
    let mut gaps = Vec::new();
    for (b, members) in grouped.iter().enumerate() {
        match quadratic_fit(members, x) {
            Some(c) => {
                mean[b] = members.iter().map(|&(i, _)| x[i]).sum::<f64>() / members.len() as f64;
                let (lo, hi) = members.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &(i, d)| {
                    let r = x[i] - (c[0] + c[1] * d + c[2] * d * d);
                    (lo.min(r), hi.max(r))
                });
                spread[b] = hi - lo;
            }
            None => gaps.push(b),
        }
    }
    if gaps.len() == bins {
        return Err(Error::InsufficientData { needed: 4 * bins, got: x.len() });
    }
    for &b in &gaps {
        // nearest filled bins on either side, periodically
        let left = (1..bins).map(|s| (b + bins - s) % bins).find(|&k| mean[k].is_finite()).unwrap();
        let right = (1..bins).map(|s| (b + s) % bins).find(|&k| mean[k].is_finite()).unwrap();
        let dl = ((b + bins - left) % bins) as f64;
        let dr = ((right + bins - b) % bins) as f64;
        mean[b] = (mean[left] * dr + mean[right] * dl) / (dl + dr);
    }
    let centers = (0..bins).map(|b| (b as f64 + 0.5) * width).collect();
    Ok(Waveform { centers, mean, spread, gaps })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rms_detrended(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len();
        let w = n / 10..n - n / 10;
        let d: Vec<f64> = w.map(|i| a[i] - b[i]).collect();
        let m = d.iter().sum::<f64>() / d.len() as f64;
        (d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / d.len() as f64).sqrt()
    }

    #[test]
    fn unmodulated_cosine_is_reconstructed_at_once() {
        let x = TimeSeries::from_fn(0.0, 0.05, 62_832, |t| (0.2 * t).cos());
        let trace = run_ihte(&x, &IhteConfig { n_iter: 3, ..IhteConfig::default() }).unwrap();
        let exact: Vec<f64> = x.times().iter().map(|t| 0.2 * t).collect();
        let first = rms_detrended(&trace.protophases[1], &exact);
        assert!(first < 1e-2, "{first}");
        for n in 2..=3 {
            assert!(rms_detrended(&trace.protophases[n], &exact) <= first + 1e-3);
        }
    }

    #[test]
    fn protophases_are_anchored_and_monotone() {
        let x = TimeSeries::from_fn(0.0, 0.05, 40_000, |t| {
            let p = 0.2 * t + 0.3 * (0.05 * t).sin();
            p.cos() + 0.3 * (2.0 * p).cos()
        });
        let trace = run_ihte(&x, &IhteConfig { n_iter: 4, ..IhteConfig::default() }).unwrap();
        assert_eq!(trace.protophases.len(), 5);
        assert_eq!(trace.protophases[0], x.times());
        for theta in &trace.protophases[1..] {
            assert!(theta.windows(2).all(|w| w[1] > w[0]));
            for (j, &pos) in trace.features.positions.iter().enumerate() {
                // exact at the knots; linear interpolation between samples costs ~1e-6
                assert!((embed::lerp_at(theta, pos) - TAU * j as f64).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn fixed_point_is_idempotent() {
        let n = 40_000;
        let theta: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 * 0.05;
                0.2 * t + 0.4 * (0.037 * t).sin() - 1.0
            })
            .collect();
        let x: Vec<f64> = theta.iter().map(|th| th.cos()).collect();
        let time: Vec<f64> = (0..n).map(|i| i as f64 * 0.05).collect();
        let feats = detect_features(&GriddedSignal::new(time, x.clone()).unwrap(), FeatureOptions::default()).unwrap();
        // features of cos(theta) sit at theta = 2 pi j; relabel theta accordingly
        let k0 = (embed::lerp_at(&theta, feats.positions[0]) / TAU).round();
        let relabelled: Vec<f64> = theta.iter().map(|t| t - k0 * TAU).collect();
        let step = ihte_step(&x, &relabelled, &feats, 2, 1).unwrap();
        let d = rms_detrended(&step.theta, &relabelled);
        assert!(d < 1e-3, "{d}");
    }

    #[test]
    fn short_signals_are_rejected() {
        let x = TimeSeries::from_fn(0.0, 0.01, 31_416, |t| (0.2 * t).cos());
        assert!(matches!(run_ihte(&x, &IhteConfig::default()), Err(Error::InsufficientFeatures { needed: 20, .. })));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut x = TimeSeries::from_fn(0.0, 0.01, 40_000, |t| (0.2 * t).cos());
        x.values[77] = f64::NAN;
        assert!(matches!(run_ihte(&x, &IhteConfig::default()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let x = TimeSeries::from_fn(0.0, 0.01, 40_000, |t| (0.2 * t).cos());
        for cfg in [
            IhteConfig { n_iter: 0, ..IhteConfig::default() },
            IhteConfig { oversample: 0, ..IhteConfig::default() },
            IhteConfig { quantile: 1.5, ..IhteConfig::default() },
        ] {
            assert!(matches!(run_ihte(&x, &cfg), Err(Error::InvalidArgument(_))));
        }
    }

    #[test]
    fn waveform_of_exact_phase_is_the_cosine() {
        let theta: Vec<f64> = (0..62_832).map(|i| i as f64 * 0.01).collect();
        let x: Vec<f64> = theta.iter().map(|t| t.cos()).collect();
        let w = waveform(&theta, &x, 128).unwrap();
        assert!(w.gaps.is_empty());
        for (c, m) in w.centers.iter().zip(&w.mean) {
            assert!((m - c.cos()).abs() < 1e-3);
        }
        assert!(w.max_spread() < 1e-6 * w.range());
    }

    #[test]
    fn waveform_spread_sees_a_second_branch() {
        let theta: Vec<f64> = (0..62_832).map(|i| i as f64 * 0.01).collect();
        let x: Vec<f64> = theta.iter().enumerate().map(|(i, t)| t.cos() + if (i / 700) % 2 == 0 { 0.1 } else { 0.0 }).collect();
        let w = waveform(&theta, &x, 64).unwrap();
        assert!(w.mean_spread() > 0.05);
    }

    #[test]
    fn empty_bins_are_interpolated() {
        // samples only in the first half of the circle
        let theta: Vec<f64> = (0..20).flat_map(|k| (0..300).map(move |i| TAU * k as f64 + PI_HALF * i as f64 / 150.0)).collect();
        let x: Vec<f64> = theta.iter().map(|t| t.rem_euclid(TAU)).collect();
        let w = waveform(&theta, &x, 16).unwrap();
        assert!(!w.gaps.is_empty());
        assert!(w.mean.iter().all(|m| m.is_finite()));
    }

    const PI_HALF: f64 = std::f64::consts::FRAC_PI_2;

    #[test]
    fn transverse_width_of_a_band() {
        // circle traced with a slowly varying radius: width equals the radius span
        let n = 200_000;
        let theta: Vec<f64> = (0..n).map(|i| i as f64 * 0.005).collect();
        let r: Vec<f64> = theta.iter().map(|t| 1.0 + 0.05 * (0.013 * t).sin()).collect();
        let x: Vec<f64> = theta.iter().zip(&r).map(|(t, r)| r * t.cos()).collect();
        let y: Vec<f64> = theta.iter().zip(&r).map(|(t, r)| r * t.sin()).collect();
        let widths = transverse_widths(&theta, &x, &y, 64);
        for w in widths.into_iter().flatten() {
            assert!((w - 0.1).abs() < 0.01, "{w}");
        }
    }
}
