//! Shape-preserving piecewise cubic Hermite interpolation (Fritsch-Carlson slopes
//! with the Fritsch-Butland harmonic mean, as in PCHIP).
//!
//! Between two knots the interpolant stays within the knot values, and on
//! monotone data it is monotone. Resampling inside the Hilbert transform and the
//! protophase spline over arc length both rely on that.

use crate::error::{Error, Result};
use crate::series::check_strictly_increasing;

#[derive(Debug, Clone)]
pub struct Pchip<'a> {
    x: &'a [f64],
    y: &'a [f64],
    slopes: Vec<f64>,
}

impl<'a> Pchip<'a> {
    pub fn new(x: &'a [f64], y: &'a [f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidArgument("knot abscissae and values differ in length".into()));
        }
        if x.len() < 2 {
            return Err(Error::InsufficientData { needed: 2, got: x.len() });
        }
        check_strictly_increasing(x)?;
        let slopes = pchip_slopes(x, y);
        Ok(Self { x, y, slopes })
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// Evaluates at a single point. Outside the knot range the end cubic is extended.
    pub fn eval(&self, xq: f64) -> f64 {
        let k = self.interval(xq);
        self.eval_in(k, xq)
    }

    /// Evaluates at non-decreasing query points in one sweep.
    pub fn eval_sorted(&self, xq: &[f64]) -> Vec<f64> {
        let last = self.x.len() - 2;
        let mut k = 0;
        xq.iter()
            .map(|&q| {
                while k < last && q >= self.x[k + 1] {
                    k += 1;
                }
                self.eval_in(k, q)
            })
            .collect()
    }

    fn interval(&self, xq: f64) -> usize {
        let last = self.x.len() - 2;
        match self.x.partition_point(|&v| v <= xq) {
            0 => 0,
            p => (p - 1).min(last),
        }
    }

    #[inline]
    fn eval_in(&self, k: usize, xq: f64) -> f64 {
        let h = self.x[k + 1] - self.x[k];
        let s = (xq - self.x[k]) / h;
        let (y0, y1) = (self.y[k], self.y[k + 1]);
        let (d0, d1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1
    }
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut d = vec![0.0; n];
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
        return d;
    }
    for k in 1..n - 1 {
        let (a, b) = (delta[k - 1], delta[k]);
        if a == 0.0 || b == 0.0 || a.signum() != b.signum() {
            d[k] = 0.0;
        } else {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / a + w2 / b);
        }
    }
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

// Three-point end formula, clipped to keep the end interval shape-preserving.
fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() || del0 == 0.0 {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_knots_and_lines() {
        let x = [0.0, 0.5, 1.7, 2.0, 3.5];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let p = Pchip::new(&x, &y).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((p.eval(*xi) - yi).abs() < 1e-14);
        }
        for q in [0.1, 0.9, 2.4, 3.0] {
            assert!((p.eval(q) - (3.0 * q - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn no_overshoot_at_step() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [0.0, 0.0, 1.0, 1.0, 1.0];
        let p = Pchip::new(&x, &y).unwrap();
        let q: Vec<f64> = (0..=400).map(|i| i as f64 * 0.01).collect();
        for v in p.eval_sorted(&q) {
            assert!((-1e-15..=1.0 + 1e-15).contains(&v));
        }
    }

    #[test]
    fn sorted_and_single_evaluation_agree() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).powf(1.3)).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        let p = Pchip::new(&x, &y).unwrap();
        let q: Vec<f64> = (0..300).map(|i| i as f64 * 0.09).collect();
        let a = p.eval_sorted(&q);
        for (qi, ai) in q.iter().zip(&a) {
            assert_eq!(p.eval(*qi), *ai);
        }
    }

    proptest! {
        #[test]
        fn monotone_data_gives_monotone_interpolant(
            steps in prop::collection::vec((0.01f64..3.0, 0.0f64..5.0), 3..40)
        ) {
            let mut x = vec![0.0];
            let mut y = vec![0.0];
            for (dx, dy) in &steps {
                x.push(x.last().unwrap() + dx);
                y.push(y.last().unwrap() + dy);
            }
            let p = Pchip::new(&x, &y).unwrap();
            let end = *x.last().unwrap();
            let q: Vec<f64> = (0..=2000).map(|i| end * i as f64 / 2000.0).collect();
            let v = p.eval_sorted(&q);
            for w in v.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-12);
            }
        }
    }
}
