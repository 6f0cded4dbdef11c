//! The experiment pipeline behind each subcommand. Every run produces its
//! tables in memory; [`crate::output::Bundle`] writes them.

use std::fmt::Write as _;

use ihte::analysis::{self, noisy_preprocess, CouplingFit, Reference, ScoreOptions};
use ihte::coupling::node;
use ihte::fmt::sig15;
use ihte::ihte::{run_ihte, IterationTrace};
use ihte::metrics::ErrorReport;
use ihte::phasemap::protophase_to_phase;
use ihte::sim::{observe, simulate, SlTrajectory};
use ihte::{Execution, TimeSeries};

use crate::config::{ExperimentConfig, Format};
use crate::error::{CliError, Stage};
use crate::output::OutFile;

/// Waveform bins in `waveform.csv`.
pub const WAVEFORM_BINS: usize = 128;

pub struct Simulated {
    pub traj: SlTrajectory,
    pub x: TimeSeries,
}

pub fn simulate_signal(cfg: &ExperimentConfig) -> Result<Simulated, CliError> {
    let traj = simulate(&cfg.oscillator, &cfg.sim_options()).stage("simulate")?;
    let x = observe(&traj, cfg.observable).stage("simulate")?;
    Ok(Simulated { traj, x })
}

/// Per-iteration scores of `theta_n` and `psi_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub theta: ErrorReport,
    pub psi: ErrorReport,
}

pub struct Reconstruction {
    /// The signal that entered the embedding (smoothed when preprocessing).
    pub x: TimeSeries,
    pub trace: IterationTrace,
    /// `psi[n - 1]` is the phase derived from `theta_n`.
    pub psi: Vec<TimeSeries>,
    pub errors: Option<Vec<ErrorRow>>,
}

pub fn score_options(cfg: &ExperimentConfig) -> ScoreOptions {
    ScoreOptions { metrics: cfg.metrics, filter: cfg.filter, phasemap: cfg.phasemap, exec: Execution::Parallel }
}

/// IHTE, phase maps and, with a reference phase, error scores.
pub fn reconstruct(cfg: &ExperimentConfig, x: &TimeSeries, phi: Option<&TimeSeries>) -> Result<Reconstruction, CliError> {
    let opts = score_options(cfg);
    let (x, phi) = if cfg.preprocess { noisy_preprocess(x, phi, &cfg.filter).stage("preprocess")? } else { (x.clone(), phi.cloned()) };
    let trace = run_ihte(&x, &cfg.ihte).stage("ihte")?;
    let psi = (1..=trace.n_iter())
        .map(|n| protophase_to_phase(&trace.protophase(n), &cfg.phasemap, opts.exec).map(|t| t.psi))
        .collect::<ihte::Result<Vec<_>>>()
        .stage("phasemap")?;
    let errors = match phi {
        None => None,
        Some(phi) => {
            let reference = Reference::new(phi, &opts).stage("metrics")?;
            let mut rows = Vec::with_capacity(psi.len());
            for (k, p) in psi.iter().enumerate() {
                let n = k + 1;
                rows.push(ErrorRow {
                    theta: analysis::score(n, &trace.protophase(n), &reference, &opts).stage("metrics")?,
                    psi: analysis::score(n, p, &reference, &opts).stage("metrics")?,
                });
            }
            Some(rows)
        }
    };
    Ok(Reconstruction { x, trace, psi, errors })
}

pub struct PrcResult {
    pub fit: CouplingFit,
    /// Relative RMS error of `Z / eps` against the oscillator's response curve.
    pub z_error: f64,
    /// Largest deviation of the factorized surface from the true coupling.
    pub q_error: f64,
}

/// Coupling surface and response curve from the final phase, aligned to the
/// true phase of the simulation.
pub fn prc(cfg: &ExperimentConfig, rec: &Reconstruction, sim: &Simulated) -> Result<PrcResult, CliError> {
    let opts = score_options(cfg);
    let coupling = cfg.coupling.unwrap_or_default();
    let phase = rec.psi.last().expect("at least one iteration");
    let aligned = analysis::align(phase, &sim.traj.phase(), opts.metrics.window_fraction);
    let fit = analysis::fit_phase_coupling(&aligned, &sim.traj.forcing_phase(), &opts, &coupling).stage("coupling")?;
    let p = &cfg.oscillator;
    let g = coupling.grid_size;
    let truth: Vec<f64> = (0..g).map(|k| p.prc(node(k, g))).collect();
    let z: Vec<f64> = fit.factors.z.iter().map(|v| v / p.eps).collect();
    let product = fit.factors.product();
    let q_error = (0..g * g).map(|k| (product.values[k] - p.coupling(node(k / g, g), node(k % g, g))).abs()).fold(0.0, f64::max);
    Ok(PrcResult { z_error: analysis::relative_rms(&z, &truth), q_error, fit })
}

fn csv(header: &str, rows: impl Iterator<Item = String>) -> Vec<u8> {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s.into_bytes()
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    let v: Vec<String> = values.into_iter().map(sig15).collect();
    v.join(",")
}

/// `t,x` with shortest round-trip formatting, so re-ingesting reproduces the
/// samples bit for bit.
pub fn signal_table(x: &TimeSeries) -> Vec<u8> {
    csv("t,x", (0..x.len()).map(|i| format!("{:?},{:?}", x.time(i), x.values[i])))
}

pub fn trajectory_table(traj: &SlTrajectory) -> Vec<u8> {
    let mut out = Vec::new();
    traj.write_csv(&mut out).expect("writing to memory");
    out
}

pub fn errors_table(rows: &[ErrorRow]) -> Vec<u8> {
    csv(
        "n,std_theta,std_psi,std_thetadot,std_psidot,omega_tilde_theta,omega_tilde_psi,t_min,t_max",
        rows.iter().map(|r| {
            let (a, b) = r.theta.window;
            format!(
                "{},{}",
                r.theta.n,
                join([r.theta.std_phase, r.psi.std_phase, r.theta.std_freq, r.psi.std_freq, r.theta.omega_tilde, r.psi.omega_tilde, a, b])
            )
        }),
    )
}

pub fn diagnostics_table(trace: &IterationTrace) -> Vec<u8> {
    csv(
        "n,bandwidth,closure_gap,curvature_sign_changes,loop_density,loopy",
        trace.diagnostics.iter().map(|d| {
            format!(
                "{},{},{},{},{},{}",
                d.n,
                sig15(d.bandwidth),
                sig15(d.closure_gap),
                d.curvature_sign_changes,
                sig15(d.loop_density),
                d.is_loopy()
            )
        }),
    )
}

pub fn waveform_table(trace: &IterationTrace) -> Result<Vec<u8>, CliError> {
    let first = trace.waveform_at(1, WAVEFORM_BINS).stage("waveform")?;
    let last = trace.waveform(WAVEFORM_BINS).stage("waveform")?;
    Ok(csv(
        "bin_center,mean_first,spread_first,mean_last,spread_last",
        (0..WAVEFORM_BINS).map(|k| join([first.centers[k], first.mean[k], first.spread[k], last.mean[k], last.spread[k]])),
    ))
}

/// Per-sample protophases and phases of the first and last iteration, with
/// the true phase when known.
pub fn phases_table(rec: &Reconstruction, phi: Option<&TimeSeries>) -> Vec<u8> {
    let n = rec.trace.n_iter();
    let (t1, tn) = (&rec.trace.protophases[1], &rec.trace.protophases[n]);
    let (p1, pn) = (&rec.psi[0], &rec.psi[n - 1]);
    let header = if phi.is_some() {
        "t,x,theta_first,theta_last,psi_first,psi_last,phi_true"
    } else {
        "t,x,theta_first,theta_last,psi_first,psi_last"
    };
    csv(
        header,
        (0..rec.x.len()).map(|i| {
            let mut row = join([rec.x.time(i), rec.x.values[i], t1[i], tn[i], p1.values[i], pn.values[i]]);
            if let Some(phi) = phi {
                let _ = write!(row, ",{}", sig15(phi.values[i]));
            }
            row
        }),
    )
}

pub fn prc_tables(cfg: &ExperimentConfig, res: &PrcResult) -> Vec<OutFile> {
    let mut surface = Vec::new();
    res.fit.surface.write_csv(&mut surface).expect("writing to memory");
    let mut factors = Vec::new();
    res.fit.factors.write_csv(&mut factors).expect("writing to memory");
    let p = &cfg.oscillator;
    let g = res.fit.surface.grid_size;
    let prc = csv("angle,z_over_eps,z_true", (0..g).map(|k| join([node(k, g), res.fit.factors.z[k] / p.eps, p.prc(node(k, g))])));
    let summary = csv(
        "omega_tilde,residual,z_relative_rms,q_max_error",
        std::iter::once(join([res.fit.omega, res.fit.factors.residual, res.z_error, res.q_error])),
    );
    vec![
        OutFile::new("coupling.csv", surface),
        OutFile::new("factors.csv", factors),
        OutFile::new("prc.csv", prc),
        OutFile::new("prc_summary.csv", summary),
    ]
}

fn reconstruction_tables(cfg: &ExperimentConfig, rec: &Reconstruction, phi: Option<&TimeSeries>) -> Result<Vec<OutFile>, CliError> {
    let mut files =
        vec![OutFile::new("diagnostics.csv", diagnostics_table(&rec.trace)), OutFile::new("waveform.csv", waveform_table(&rec.trace)?)];
    if let Some(rows) = &rec.errors {
        files.push(OutFile::new("errors.csv", errors_table(rows)));
        if cfg.output.formats.contains(&Format::Json) {
            let json: Vec<_> = rows.iter().map(|r| serde_json::json!({ "theta": r.theta, "psi": r.psi })).collect();
            let mut bytes = serde_json::to_vec_pretty(&json).expect("serializable");
            bytes.push(b'\n');
            files.push(OutFile::new("errors.json", bytes));
        }
    }
    if cfg.output.series {
        files.push(OutFile::new("phases.csv", phases_table(rec, phi)));
    }
    Ok(files)
}

pub fn run_simulate(cfg: &ExperimentConfig) -> Result<Vec<OutFile>, CliError> {
    let sim = simulate_signal(cfg)?;
    Ok(vec![OutFile::new("trajectory.csv", trajectory_table(&sim.traj)), OutFile::new("signal.csv", signal_table(&sim.x))])
}

pub fn run_reconstruct(cfg: &ExperimentConfig) -> Result<Vec<OutFile>, CliError> {
    let sim = simulate_signal(cfg)?;
    let phi = sim.traj.phase();
    let rec = reconstruct(cfg, &sim.x, Some(&phi))?;
    let mut files = reconstruction_tables(cfg, &rec, Some(&phi))?;
    if cfg.coupling.is_some() {
        files.extend(prc_tables(cfg, &prc(cfg, &rec, &sim)?));
    }
    if cfg.output.series {
        files.push(OutFile::new("signal.csv", signal_table(&sim.x)));
    }
    Ok(files)
}

pub fn run_prc(cfg: &ExperimentConfig) -> Result<Vec<OutFile>, CliError> {
    let mut cfg = cfg.clone();
    cfg.coupling.get_or_insert_with(Default::default);
    run_reconstruct(&cfg)
}

/// Reconstruction of an external signal: no reference phase, so no errors.
pub fn run_ingested(cfg: &ExperimentConfig, x: &TimeSeries) -> Result<Vec<OutFile>, CliError> {
    let rec = reconstruct(cfg, x, None)?;
    let mut files = reconstruction_tables(cfg, &rec, None)?;
    if !cfg.output.series {
        files.push(OutFile::new("phases.csv", phases_table(&rec, None)));
    }
    Ok(files)
}

/// Runs every sweep point (in parallel) and merges the final-iteration
/// errors into `summary.csv`, ordered as the sweep was declared.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<OutFile>, CliError> {
    use rayon::prelude::*;
    let children = cfg.expand();
    type Child = (Vec<OutFile>, Vec<String>);
    let results: Vec<Result<Child, CliError>> = children
        .par_iter()
        .map(|(key, child)| {
            let files = run_reconstruct(child)?;
            let errors = files.iter().find(|f| f.path == "errors.csv").expect("simulated runs are scored");
            let text = std::str::from_utf8(&errors.bytes).expect("utf-8 table");
            let rows = text
                .lines()
                .skip(1)
                .map(|l| format!("{key},{},{},{l}", sig15(child.oscillator.r), sig15(child.oscillator.sigma)))
                .collect();
            Ok((files.into_iter().map(|f| f.nested(&format!("runs/{key}"))).collect(), rows))
        })
        .collect();
    let mut files = Vec::new();
    let mut summary = Vec::new();
    for r in results {
        let (f, rows) = r?;
        files.extend(f);
        summary.extend(rows);
    }
    let header = "key,r,sigma,n,std_theta,std_psi,std_thetadot,std_psidot,omega_tilde_theta,omega_tilde_psi,t_min,t_max";
    files.push(OutFile::new("summary.csv", csv(header, summary.into_iter())));
    Ok(files)
}
