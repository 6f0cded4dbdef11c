//! Scoring reconstructed protophases and phases against a known phase.

use serde::{Deserialize, Serialize};

use crate::coupling::{factorize, fit_coupling, CouplingOptions, CouplingSurface, FactorPair};
use crate::error::Result;
use crate::ihte::IterationTrace;
use crate::metrics::{self, ErrorReport, MetricOptions};
use crate::par::Execution;
use crate::phasemap::{protophase_to_phase, PhaseMapOptions};
use crate::series::TimeSeries;
use crate::sgfilter::{self, SgSpec};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub metrics: MetricOptions,
    pub filter: SgSpec,
    pub phasemap: PhaseMapOptions,
    pub exec: Execution,
}

/// True phase with its filtered derivative and mean frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub phi: TimeSeries,
    pub phidot: TimeSeries,
    pub omega: f64,
}

impl Reference {
    pub fn new(phi: TimeSeries, opts: &ScoreOptions) -> Result<Self> {
        let phidot = sgfilter::derivative(&phi, &opts.filter)?;
        let omega = metrics::mean_frequency(&phi, opts.metrics.window_fraction)?;
        Ok(Self { phi, phidot, omega })
    }
}

/// Phase and frequency error of `q`; `omega_tilde` in the report is the mean
/// growth rate of `q` itself.
pub fn score(n: usize, q: &TimeSeries, reference: &Reference, opts: &ScoreOptions) -> Result<ErrorReport> {
    let frac = opts.metrics.window_fraction;
    let qdot = sgfilter::derivative(q, &opts.filter)?;
    Ok(ErrorReport {
        n,
        std_phase: metrics::phase_error(q, &reference.phi, &opts.metrics)?,
        std_freq: metrics::freq_error(&qdot, &reference.phidot, reference.omega, frac)?,
        omega_tilde: metrics::mean_frequency(q, frac)?,
        window: ErrorReport::window_bounds(q.len(), q.t0, q.dt, frac),
    })
}

/// Per-iteration errors of the protophases `theta_n` and of the phases
/// `psi_n` derived from them, for `n = 1..=n_iter`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceScores {
    pub theta: Vec<ErrorReport>,
    pub psi: Vec<ErrorReport>,
}

impl TraceScores {
    pub fn first(&self) -> (&ErrorReport, &ErrorReport) {
        (&self.theta[0], &self.psi[0])
    }

    pub fn last(&self) -> (&ErrorReport, &ErrorReport) {
        (self.theta.last().unwrap(), self.psi.last().unwrap())
    }
}

pub fn score_trace(trace: &IterationTrace, reference: &Reference, opts: &ScoreOptions) -> Result<TraceScores> {
    let mut theta = Vec::with_capacity(trace.n_iter());
    let mut psi = Vec::with_capacity(trace.n_iter());
    for n in 1..=trace.n_iter() {
        let th = trace.protophase(n);
        theta.push(score(n, &th, reference, opts)?);
        let phase = protophase_to_phase(&th, &opts.phasemap, opts.exec)?.psi;
        psi.push(score(n, &phase, reference, opts)?);
    }
    Ok(TraceScores { theta, psi })
}

/// `q` shifted by its mean offset from `phi` over the interior window.
pub fn align(q: &TimeSeries, phi: &TimeSeries, fraction: f64) -> TimeSeries {
    let w = metrics::window(q.len().min(phi.len()), fraction);
    let shift = w.clone().map(|i| phi.values[i] - q.values[i]).sum::<f64>() / w.len().max(1) as f64;
    q.with_values(q.values.iter().map(|v| v + shift).collect())
}

fn interior(s: &TimeSeries, fraction: f64) -> TimeSeries {
    let w = metrics::window(s.len(), fraction);
    TimeSeries { t0: s.time(w.start), dt: s.dt, values: s.values[w].to_vec() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingFit {
    pub surface: CouplingSurface,
    pub factors: FactorPair,
    /// Mean growth rate subtracted from the filtered phase velocity.
    pub omega: f64,
}

/// Coupling surface and its factors from a reconstructed phase `q` and the
/// forcing phase `eta`. The rate is the filtered derivative of `q`; only the
/// interior window enters the fit.
pub fn fit_phase_coupling(q: &TimeSeries, eta: &TimeSeries, opts: &ScoreOptions, coupling: &CouplingOptions) -> Result<CouplingFit> {
    let frac = opts.metrics.window_fraction;
    let rate = sgfilter::derivative(q, &opts.filter)?;
    let omega = metrics::mean_frequency(q, frac)?;
    let surface = fit_coupling(&interior(q, frac), &interior(eta, frac), &interior(&rate, frac), omega, coupling, opts.exec)?;
    let factors = factorize(&surface, coupling.k_steps)?;
    Ok(CouplingFit { surface, factors, omega })
}

/// Root-mean-square of `a - b` relative to the root-mean-square of `b`.
pub fn relative_rms(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Smooths a noisy observable and, when given, the reference phase with the
/// same filter so both see identical frequency response.
pub fn noisy_preprocess(x: &TimeSeries, phi: Option<&TimeSeries>, spec: &SgSpec) -> Result<(TimeSeries, Option<TimeSeries>)> {
    let smoothed = sgfilter::smooth(x, spec)?;
    let phi = phi.map(|p| sgfilter::smooth(p, spec)).transpose()?;
    Ok((smoothed, phi))
}
