//! Reading external signals: a single column `x` or two columns `t,x`, with
//! an optional header line.

use std::path::Path;

use ihte::TimeSeries;

use crate::error::CliError;

/// Relative tolerance on the sampling step of a `t,x` file.
pub const UNIFORMITY_TOLERANCE: f64 = 1e-6;

pub fn ingest_signal(path: &Path, dt_declared: Option<f64>) -> Result<TimeSeries, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_signal(file, dt_declared).map_err(|e| match e {
        CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn read_signal<R: std::io::Read>(reader: R, dt_declared: Option<f64>) -> Result<TimeSeries, CliError> {
    if let Some(dt) = dt_declared {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(CliError::Config(format!("declared dt must be positive, got {dt}")));
        }
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut t = Vec::new();
    let mut x = Vec::new();
    let mut columns = None;
    for (k, record) in rdr.records().enumerate() {
        let line = k + 1;
        let record = record.map_err(|e| CliError::Input(format!("line {line}: {e}")))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: Vec<Option<f64>> = record.iter().map(|f| f.parse::<f64>().ok()).collect();
        if k == 0 && parsed.iter().all(Option::is_none) {
            continue;
        }
        let width = *columns.get_or_insert(record.len());
        if record.len() != width || !(1..=2).contains(&width) {
            return Err(CliError::Input(format!("line {line}: expected 1 or 2 columns consistently, got {}", record.len())));
        }
        let mut values = Vec::with_capacity(width);
        for (field, v) in record.iter().zip(parsed) {
            match v {
                Some(v) if v.is_finite() => values.push(v),
                _ => return Err(CliError::Input(format!("line {line}: non-finite or unreadable value {field:?}"))),
            }
        }
        if width == 2 {
            t.push(values[0]);
        }
        x.push(values[width - 1]);
    }
    if x.len() < 2 {
        return Err(CliError::Input(format!("need at least 2 samples, got {}", x.len())));
    }
    if t.is_empty() {
        let dt = dt_declared.ok_or_else(|| CliError::Config("single-column input needs a declared dt".into()))?;
        return Ok(TimeSeries::new(0.0, dt, x).expect("validated step"));
    }
    let mean = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if !(mean > 0.0) {
        return Err(CliError::Input("time column must increase".into()));
    }
    for (i, w) in t.windows(2).enumerate() {
        let step = w[1] - w[0];
        if (step - mean).abs() > UNIFORMITY_TOLERANCE * mean {
            return Err(CliError::Input(format!(
                "time step {step} before sample {} deviates from the mean step {mean}; resample the signal onto a uniform grid first",
                i + 2
            )));
        }
    }
    let dt = match dt_declared {
        Some(dt) if (dt - mean).abs() > UNIFORMITY_TOLERANCE * mean => {
            return Err(CliError::Input(format!("declared dt {dt} does not match the time column step {mean}")));
        }
        Some(dt) => dt,
        None => mean,
    };
    Ok(TimeSeries::new(t[0], dt, x).expect("validated step"))
}
