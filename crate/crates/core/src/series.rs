//! Sampled signals: uniformly sampled [`TimeSeries`] and [`GriddedSignal`] on an
//! arbitrary strictly increasing grid.

use crate::error::{Error, Result};

/// Uniformly sampled scalar signal `values[i]` at `t0 + i * dt`.
///
/// Also used for unwrapped phases and protophases sampled on the time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidArgument("start time must be finite".into()));
        }
        Ok(Self { t0, dt, values })
    }

    /// Samples `f` at `n` points starting at `t0`.
    pub fn from_fn(t0: f64, dt: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..n).map(|i| f(t0 + i as f64 * dt)).collect();
        Self { t0, dt, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Same grid, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self { t0: self.t0, dt: self.dt, values }
    }

    pub fn span(&self) -> f64 {
        self.dt * self.len().saturating_sub(1) as f64
    }

    pub fn is_strictly_increasing(&self) -> bool {
        first_non_increasing(&self.values).is_none()
    }

    /// Index of the first non-finite sample, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }
}

/// Signal sampled on a strictly increasing, possibly non-uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedSignal {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl GriddedSignal {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::InvalidArgument(format!("grid has {} points but {} values", grid.len(), values.len())));
        }
        check_strictly_increasing(&grid)?;
        Ok(Self { grid, values })
    }

    pub fn from_series(series: &TimeSeries) -> Self {
        Self { grid: series.times(), values: series.values.clone() }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

pub(crate) fn first_non_increasing(xs: &[f64]) -> Option<usize> {
    xs.windows(2).position(|w| !(w[1] > w[0])).map(|i| i + 1)
}

pub(crate) fn check_strictly_increasing(xs: &[f64]) -> Result<()> {
    match first_non_increasing(xs) {
        Some(index) => Err(Error::MonotonicityViolation { index }),
        None => Ok(()),
    }
}

/// Trapezoid integral of uniformly spaced samples.
pub(crate) fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => dt * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1])),
    }
}
