//! Experiment configuration: one TOML file per experiment, with `--set`
//! overrides applied to the parsed document before it is typed.

use std::path::{Path, PathBuf};

use ihte::coupling::CouplingOptions;
use ihte::ihte::IhteConfig;
use ihte::metrics::MetricOptions;
use ihte::phasemap::PhaseMapOptions;
use ihte::sgfilter::SgSpec;
use ihte::sim::{Observable, SimOptions, SlParams};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Prefix of the output directory name.
    pub name: String,
    pub observable: Observable,
    /// Smooth the signal (and the reference phase) with `filter` before the
    /// embedding; meant for noisy runs.
    pub preprocess: bool,
    pub oscillator: SlParams,
    pub simulation: Simulation,
    pub ihte: IhteConfig,
    pub phasemap: PhaseMapOptions,
    pub filter: SgSpec,
    pub metrics: MetricOptions,
    /// Coupling and response-curve stage; skipped when absent.
    pub coupling: Option<CouplingOptions>,
    pub sweep: Sweep,
    pub output: Output,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            observable: Observable::X1,
            preprocess: false,
            oscillator: SlParams::default(),
            simulation: Simulation::default(),
            ihte: IhteConfig::default(),
            phasemap: PhaseMapOptions::default(),
            filter: SgSpec::default(),
            metrics: MetricOptions::default(),
            coupling: None,
            sweep: Sweep::default(),
            output: Output::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Simulation {
    /// Recorded length in base periods.
    pub periods: f64,
    pub dt: f64,
    pub seed: u64,
    pub transient_periods: f64,
    /// `[re, im]` of the state at the start of the transient.
    pub initial: Option<[f64; 2]>,
}

impl Default for Simulation {
    fn default() -> Self {
        Self { periods: 100.0, dt: 0.01, seed: 0, transient_periods: 20.0, initial: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sweep {
    pub r: Vec<f64>,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub dir: PathBuf,
    /// `csv` tables are always written; `json` adds `errors.json`.
    pub formats: Vec<Format>,
    /// Also write per-sample tables (signal, protophases, phases).
    pub series: bool,
}

impl Default for Output {
    fn default() -> Self {
        Self { dir: PathBuf::from("results"), formats: vec![Format::Csv], series: false }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: Self = doc.try_into().map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let module = |m: &str, r: ihte::Result<()>| r.map_err(|e| CliError::Config(format!("{m}: {e}")));
        module("oscillator", self.oscillator.validate())?;
        module("ihte", self.ihte.validate())?;
        module("filter", self.filter.validate())?;
        module("metrics", self.metrics.validate())?;
        if let Some(c) = &self.coupling {
            module("coupling", c.validate())?;
        }
        if self.phasemap.k_max < 1 {
            return Err(CliError::Config("phasemap: k_max must be at least 1".into()));
        }
        let s = &self.simulation;
        if !(s.dt > 0.0) || !(s.periods > 0.0) || !(s.transient_periods >= 0.0) {
            return Err(CliError::Config("simulation: dt and periods must be positive".into()));
        }
        if self.sweep.r.iter().chain(&self.sweep.sigma).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CliError::Config("sweep: values must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn sim_options(&self) -> SimOptions {
        let s = &self.simulation;
        SimOptions {
            duration: s.periods * self.oscillator.period(),
            dt: s.dt,
            seed: s.seed,
            initial: s.initial.map(|[re, im]| Complex64::new(re, im)),
            transient_periods: s.transient_periods,
        }
    }

    /// Hex digest of the canonical serialization together with the command.
    pub fn digest(&self, command: &str) -> String {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update([0]);
        h.update(self.to_toml().as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// One configuration per sweep point, in `r`-major order. Without sweep
    /// values this is the configuration itself.
    pub fn expand(&self) -> Vec<(String, ExperimentConfig)> {
        let rs = if self.sweep.r.is_empty() { vec![self.oscillator.r] } else { self.sweep.r.clone() };
        let sigmas = if self.sweep.sigma.is_empty() { vec![self.oscillator.sigma] } else { self.sweep.sigma.clone() };
        let mut out = Vec::new();
        for &r in &rs {
            for &sigma in &sigmas {
                let mut child = self.clone();
                child.sweep = Sweep::default();
                child.oscillator.r = r;
                child.oscillator.sigma = sigma;
                out.push((format!("r{r}_sigma{sigma}"), child));
            }
        }
        out
    }
}

/// Applies `a.b.c=value`; the value is read as a TOML literal, or as a bare
/// string when that fails.
pub fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| CliError::Config(format!("override {spec:?} is not of the form key=value")))?;
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let keys: Vec<&str> = path.trim().split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut table = doc;
    for k in parents {
        let entry = table.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| CliError::Config(format!("override {spec:?}: {k} is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml("", &[]).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn round_trip_is_lossless() {
        let text = r#"
            name = "fig4"
            observable = "X2"
            [oscillator]
            r = 1.8
            sigma = 0.05
            [simulation]
            initial = [1.5, -0.25]
            [coupling]
            kappa = 150.0
            [sweep]
            r = [0.4, 1.8]
            [output]
            formats = ["csv", "json"]
        "#;
        let cfg = ExperimentConfig::from_toml(text, &[]).unwrap();
        assert_eq!(cfg.observable, Observable::X2);
        assert_eq!(cfg.coupling.unwrap().kappa, 150.0);
        assert_eq!(cfg.coupling.unwrap().grid_size, 64);
        let again = ExperimentConfig::from_toml(&cfg.to_toml(), &[]).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.digest("reconstruct"), again.digest("reconstruct"));
        assert_ne!(cfg.digest("reconstruct"), cfg.digest("prc"));
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let sets = ["oscillator.r=3.5".to_string(), "ihte.n_iter=4".into(), "observable=X3".into(), "sweep.sigma=[0.1, 0.2]".into()];
        let cfg = ExperimentConfig::from_toml("[oscillator]\nr = 1.0\n", &sets).unwrap();
        assert_eq!(cfg.oscillator.r, 3.5);
        assert_eq!(cfg.ihte.n_iter, 4);
        assert_eq!(cfg.observable, Observable::X3);
        assert_eq!(cfg.sweep.sigma, vec![0.1, 0.2]);
    }

    #[test]
    fn unknown_and_invalid_keys_are_config_errors() {
        for text in ["bogus = 1", "[ihte]\nn_iters = 3", "[filter]\nwindow = 24", "[oscillator]\nmu = -1.0"] {
            assert!(matches!(ExperimentConfig::from_toml(text, &[]), Err(CliError::Config(_))), "{text}");
        }
        assert!(matches!(ExperimentConfig::from_toml("", &["nonsense".into()]), Err(CliError::Config(_))));
    }

    #[test]
    fn sweep_expands_in_order() {
        let cfg = ExperimentConfig::from_toml("[sweep]\nr = [0.4, 5.6]\nsigma = [0.0, 0.1]", &[]).unwrap();
        let keys: Vec<String> = cfg.expand().into_iter().map(|(k, _)| k).collect();
        assert_eq!(keys, ["r0.4_sigma0", "r0.4_sigma0.1", "r5.6_sigma0", "r5.6_sigma0.1"]);
        let (_, child) = &cfg.expand()[3];
        assert_eq!((child.oscillator.r, child.oscillator.sigma), (5.6, 0.1));
        assert!(child.sweep.r.is_empty());
        assert_eq!(ExperimentConfig::default().expand().len(), 1);
    }
}
