#![allow(dead_code)]

use ihte::analysis::{self, Reference, ScoreOptions};
use ihte::ihte::{run_ihte, IhteConfig, IterationTrace};
use ihte::metrics;
use ihte::sim::{observe, simulate, Observable, SimOptions, SlParams, SlTrajectory};
use ihte::TimeSeries;

pub const PERIODS: f64 = 100.0;
pub const DT: f64 = 0.01;

pub struct Run {
    pub params: SlParams,
    pub traj: SlTrajectory,
    pub x: TimeSeries,
    pub trace: IterationTrace,
}

impl Run {
    pub fn reference(&self, opts: &ScoreOptions) -> Reference {
        Reference::new(self.traj.phase(), opts).unwrap()
    }
}

pub fn forced(r: f64) -> SlParams {
    SlParams { r, ..SlParams::default() }
}

pub fn run(params: SlParams, kind: Observable, seed: u64) -> Run {
    let traj = simulate(&params, &SimOptions { seed, ..SimOptions::periods(&params, PERIODS, DT) }).unwrap();
    let x = observe(&traj, kind).unwrap();
    let trace = run_ihte(&x, &IhteConfig::default()).unwrap();
    Run { params, traj, x, trace }
}

/// Slope and residual RMS of the least-squares line through `(x, y)` on the
/// interior window.
pub fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let w = metrics::window(x.len(), 0.1);
    let m = w.len() as f64;
    let mx = x[w.clone()].iter().sum::<f64>() / m;
    let my = y[w.clone()].iter().sum::<f64>() / m;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for i in w.clone() {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx).powi(2);
    }
    let k = sxy / sxx;
    let res = w.map(|i| (y[i] - my - k * (x[i] - mx)).powi(2)).sum::<f64>() / m;
    (k, res.sqrt())
}

/// Relative RMS error of the response curve recovered from phase `q`, and the
/// factorized coupling surface, both in the gauge of the true phase.
pub fn coupling_from(run: &Run, q: &TimeSeries, opts: &ScoreOptions) -> (f64, ihte::coupling::CouplingSurface) {
    let aligned = analysis::align(q, &run.traj.phase(), opts.metrics.window_fraction);
    let fit = analysis::fit_phase_coupling(&aligned, &run.traj.forcing_phase(), opts, &Default::default()).unwrap();
    let g = fit.surface.grid_size;
    let truth: Vec<f64> = (0..g).map(|k| run.params.prc(ihte::coupling::node(k, g))).collect();
    let z: Vec<f64> = fit.factors.z.iter().map(|v| v / run.params.eps).collect();
    (analysis::relative_rms(&z, &truth), fit.factors.product())
}

pub fn true_coupling(params: &SlParams, g: usize) -> ihte::coupling::CouplingSurface {
    ihte::coupling::CouplingSurface::from_fn(g, |p, e| params.coupling(p, e))
}
