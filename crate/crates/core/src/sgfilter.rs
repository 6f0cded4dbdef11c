//! Savitzky-Golay least-squares polynomial smoothing and differentiation,
//! `SG[order, window, repeats]`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgSpec {
    pub order: usize,
    pub window: usize,
    pub repeats: usize,
}

impl Default for SgSpec {
    /// `SG[12, 25, 4]`.
    fn default() -> Self {
        Self { order: 12, window: 25, repeats: 4 }
    }
}

impl SgSpec {
    pub fn validate(&self) -> Result<()> {
        if self.window.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("window must be odd, got {}", self.window)));
        }
        if self.order >= self.window {
            return Err(Error::InvalidArgument("polynomial order must be below the window length".into()));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidArgument("repeats must be at least 1".into()));
        }
        Ok(())
    }
}

/// Convolution weights for every evaluation position inside one window.
///
/// Position `half` is the centered interior filter; the others serve the
/// first and last `half` samples, which are fitted over the leading/trailing
/// full window and evaluated off-center.
#[derive(Debug, Clone)]
pub struct SavitzkyGolay {
    window: usize,
    smooth: Vec<Vec<f64>>,
    // derivative with respect to the sample index
    deriv: Vec<Vec<f64>>,
}

impl SavitzkyGolay {
    pub fn new(order: usize, window: usize) -> Result<Self> {
        SgSpec { order, window, repeats: 1 }.validate()?;
        let half = (window / 2) as f64;
        // abscissae scaled to [-1, 1] for conditioning
        let scale = if half > 0.0 { half } else { 1.0 };
        let z: Vec<f64> = (0..window).map(|j| (j as f64 - half) / scale).collect();
        let vander = DMatrix::from_fn(window, order + 1, |j, k| z[j].powi(k as i32));
        let pinv = vander
            .svd(true, true)
            .pseudo_inverse(1e-13)
            .map_err(|e| Error::InternalInvariant(format!("Savitzky-Golay design matrix: {e}")))?;

        let mut smooth = Vec::with_capacity(window);
        let mut deriv = Vec::with_capacity(window);
        for &ze in &z {
            let s: Vec<f64> = (0..window).map(|j| (0..=order).map(|k| ze.powi(k as i32) * pinv[(k, j)]).sum()).collect();
            let d: Vec<f64> =
                (0..window).map(|j| (1..=order).map(|k| k as f64 * ze.powi(k as i32 - 1) * pinv[(k, j)]).sum::<f64>() / scale).collect();
            smooth.push(s);
            deriv.push(d);
        }
        Ok(Self { window, smooth, deriv })
    }

    pub fn from_spec(spec: &SgSpec) -> Result<Self> {
        spec.validate()?;
        Self::new(spec.order, spec.window)
    }

    pub fn smooth_once(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.apply(x, &self.smooth, 1.0)
    }

    /// First derivative, `dt` being the sample spacing.
    pub fn derivative_once(&self, x: &[f64], dt: f64) -> Result<Vec<f64>> {
        self.apply(x, &self.deriv, 1.0 / dt)
    }

    fn apply(&self, x: &[f64], weights: &[Vec<f64>], factor: f64) -> Result<Vec<f64>> {
        let (n, w) = (x.len(), self.window);
        if n < w {
            return Err(Error::InsufficientData { needed: w, got: n });
        }
        let half = w / 2;
        let dot = |wts: &[f64], seg: &[f64]| wts.iter().zip(seg).map(|(a, b)| a * b).sum::<f64>() * factor;
        let mut out = Vec::with_capacity(n);
        for i in 0..half {
            out.push(dot(&weights[i], &x[..w]));
        }
        let center = &weights[half];
        for i in half..n - half {
            out.push(dot(center, &x[i - half..i + half + 1]));
        }
        for i in n - half..n {
            out.push(dot(&weights[i - (n - w)], &x[n - w..]));
        }
        Ok(out)
    }
}

/// Applies the smoothing filter `spec.repeats` times.
pub fn smooth(sig: &TimeSeries, spec: &SgSpec) -> Result<TimeSeries> {
    let filter = SavitzkyGolay::from_spec(spec)?;
    let mut values = filter.smooth_once(&sig.values)?;
    for _ in 1..spec.repeats {
        values = filter.smooth_once(&values)?;
    }
    Ok(sig.with_values(values))
}

/// First derivative: `repeats - 1` smoothing passes followed by one
/// differentiating pass, so the signal sees the filter `repeats` times in total.
pub fn derivative(sig: &TimeSeries, spec: &SgSpec) -> Result<TimeSeries> {
    let filter = SavitzkyGolay::from_spec(spec)?;
    let mut values = sig.values.clone();
    if values.len() < spec.window {
        return Err(Error::InsufficientData { needed: spec.window, got: values.len() });
    }
    for _ in 1..spec.repeats {
        values = filter.smooth_once(&values)?;
    }
    Ok(sig.with_values(filter.derivative_once(&values, sig.dt)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn interior(n: usize) -> std::ops::Range<usize> {
        n / 10..n - n / 10
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(SgSpec { order: 4, window: 24, repeats: 1 }.validate().is_err());
        assert!(SgSpec { order: 25, window: 25, repeats: 1 }.validate().is_err());
        assert!(SgSpec { order: 4, window: 25, repeats: 0 }.validate().is_err());
        let short = TimeSeries::from_fn(0.0, 0.01, 20, |t| t);
        assert!(matches!(smooth(&short, &SgSpec::default()), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn reproduces_polynomials_up_to_order() {
        let spec = SgSpec { order: 12, window: 25, repeats: 1 };
        let poly = |t: f64| (0..=12).map(|k| (0.3 - 0.05 * k as f64) * (t - 1.0).powi(k)).sum::<f64>();
        let sig = TimeSeries::from_fn(0.0, 0.01, 400, poly);
        let out = smooth(&sig, &spec).unwrap();
        for i in 0..sig.len() {
            let v = sig.values[i];
            assert!((out.values[i] - v).abs() < 1e-8 * v.abs().max(1.0), "i={i}");
        }
    }

    #[test]
    fn derivative_of_ramp_and_constant() {
        let spec = SgSpec::default();
        let ramp = TimeSeries::from_fn(0.0, 0.01, 500, |t| 2.5 * t - 1.0);
        let d = derivative(&ramp, &spec).unwrap();
        for i in interior(500) {
            assert!((d.values[i] - 2.5).abs() < 1e-10 * 2.5);
        }
        let flat = TimeSeries::from_fn(0.0, 0.01, 500, |_| 4.0);
        let d = derivative(&flat, &spec).unwrap();
        for i in interior(500) {
            assert!(d.values[i].abs() < 1e-10);
        }
    }

    #[test]
    fn noise_variance_shrinks() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let v: Vec<f64> = (0..5000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let sig = TimeSeries::new(0.0, 0.01, v).unwrap();
        let out = smooth(&sig, &SgSpec::default()).unwrap();
        let var = |x: &[f64]| {
            let m = x.iter().sum::<f64>() / x.len() as f64;
            x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
        };
        assert!(var(&out.values) < var(&sig.values));
    }

    #[test]
    fn cosine_passes_through() {
        let sig = TimeSeries::from_fn(0.0, 0.01, 5000, f64::cos);
        let out = smooth(&sig, &SgSpec::default()).unwrap();
        for i in interior(5000) {
            assert!((out.values[i] - sig.values[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn derivative_of_modulated_phase() {
        let sig = TimeSeries::from_fn(0.0, 0.01, 20_000, |t| 0.2 * t + 0.1 * (1.12 * t).sin());
        let d = derivative(&sig, &SgSpec::default()).unwrap();
        let r = interior(sig.len());
        let rms =
            (r.clone().map(|i| (d.values[i] - (0.2 + 0.112 * (1.12 * sig.time(i)).cos())).powi(2)).sum::<f64>() / r.len() as f64).sqrt();
        assert!(rms < 1e-3);
    }

    #[test]
    fn repeats_compose() {
        let sig = TimeSeries::from_fn(0.0, 0.01, 300, |t| (3.0 * t).sin() + (t * 17.0).cos().powi(3));
        let once = SgSpec { order: 4, window: 11, repeats: 1 };
        let twice = SgSpec { repeats: 2, ..once };
        let a = smooth(&sig, &twice).unwrap();
        let b = smooth(&smooth(&sig, &once).unwrap(), &once).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn linear_and_shift_equivariant_on_interior() {
        let spec = SgSpec { order: 6, window: 15, repeats: 2 };
        let f = |t: f64| (2.0 * t).sin();
        let g = |t: f64| (t * t * 0.1).cos();
        let a = smooth(&TimeSeries::from_fn(0.0, 0.01, 600, f), &spec).unwrap();
        let b = smooth(&TimeSeries::from_fn(0.0, 0.01, 600, g), &spec).unwrap();
        let c = smooth(&TimeSeries::from_fn(0.0, 0.01, 600, |t| 3.0 * f(t) - g(t)), &spec).unwrap();
        for i in 0..600 {
            assert!((3.0 * a.values[i] - b.values[i] - c.values[i]).abs() < 1e-12);
        }
        // shifting by 40 samples shifts the interior output by 40 samples
        let shifted = smooth(&TimeSeries::from_fn(0.4, 0.01, 600, f), &spec).unwrap();
        for i in 100..500 {
            assert!((shifted.values[i] - a.values[i + 40]).abs() < 1e-12);
        }
    }
}
