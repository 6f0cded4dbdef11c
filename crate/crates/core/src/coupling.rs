//! Coupling function on the torus and its rank-1 factorization.
//!
//! The phase velocity deviation `Q(phi, eta) = phidot - omega` is estimated at
//! the nodes of a regular `G x G` grid by Nadaraya-Watson regression with the
//! periodic kernel `exp(kappa (cos dphi + cos deta - 2))`. A rank-1 fit
//! `Q ~ Z(phi) P(eta)` then separates the phase response from the forcing.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::series::TimeSeries;

/// Kernel factors below `exp(-KERNEL_CUTOFF)` are dropped.
const KERNEL_CUTOFF: f64 = 40.0;
/// Nodes with less kernel mass than this fraction of the mean are undersampled.
pub const MIN_RELATIVE_MASS: f64 = 1e-8;
const CHUNK: usize = 16_384;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingOptions {
    pub kappa: f64,
    pub grid_size: usize,
    pub k_steps: usize,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        Self { kappa: 200.0, grid_size: 64, k_steps: 30 }
    }
}

impl CouplingOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::InvalidArgument("kappa must be positive".into()));
        }
        if self.grid_size < 4 {
            return Err(Error::InvalidArgument("grid_size must be at least 4".into()));
        }
        if self.k_steps < 1 {
            return Err(Error::InvalidArgument("k_steps must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn kernel(dphi: f64, deta: f64, kappa: f64) -> f64 {
    (kappa * (dphi.cos() + deta.cos() - 2.0)).exp()
}

/// Angle of grid node `g`.
pub fn node(g: usize, grid_size: usize) -> f64 {
    TAU * g as f64 / grid_size as f64
}

/// `Q` on the nodes `(node(g), node(h))`, stored row-major with `phi` as row.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSurface {
    pub grid_size: usize,
    pub kappa: f64,
    pub values: Vec<f64>,
    /// Kernel mass behind each node.
    pub mass: Vec<f64>,
}

impl CouplingSurface {
    pub fn from_fn(grid_size: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid_size * grid_size);
        for g in 0..grid_size {
            for h in 0..grid_size {
                values.push(f(node(g, grid_size), node(h, grid_size)));
            }
        }
        Self { grid_size, kappa: f64::NAN, values, mass: vec![f64::NAN; grid_size * grid_size] }
    }

    pub fn at(&self, g: usize, h: usize) -> f64 {
        self.values[g * self.grid_size + h]
    }

    pub fn max_abs_diff(&self, other: &CouplingSurface) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "phi,eta,q_value")?;
        for g in 0..self.grid_size {
            for h in 0..self.grid_size {
                let (p, e) = (node(g, self.grid_size), node(h, self.grid_size));
                writeln!(w, "{},{},{}", crate::fmt::sig15(p), crate::fmt::sig15(e), crate::fmt::sig15(self.at(g, h)))?;
            }
        }
        Ok(())
    }
}

// Kernel factors exp(kappa (cos(node - x) - 1)) for the nodes near x that
// survive the cutoff, as (node index, factor).
fn factors(x: f64, grid_size: usize, kappa: f64, reach: usize, out: &mut Vec<(usize, f64)>) {
    out.clear();
    let step = TAU / grid_size as f64;
    let centre = (x.rem_euclid(TAU) / step).round() as isize;
    let g = grid_size as isize;
    for off in -(reach as isize)..=(reach as isize) {
        let k = (centre + off).rem_euclid(g) as usize;
        let e = kappa * ((node(k, grid_size) - x).cos() - 1.0);
        if e > -KERNEL_CUTOFF {
            out.push((k, e.exp()));
        }
    }
}

fn reach(grid_size: usize, kappa: f64) -> usize {
    let c = 1.0 - KERNEL_CUTOFF / kappa;
    let half = grid_size / 2;
    if c <= -1.0 {
        return half;
    }
    let delta = c.acos();
    ((delta / (TAU / grid_size as f64)).ceil() as usize + 1).min(half)
}

/// Nadaraya-Watson estimate of `rate - omega` on the torus grid.
///
/// Samples are accumulated in fixed-size chunks whose partial sums are added
/// in order, so the result does not depend on the execution mode.
pub fn fit_coupling(
    phi: &TimeSeries,
    eta: &TimeSeries,
    rate: &TimeSeries,
    omega: f64,
    opts: &CouplingOptions,
    exec: Execution,
) -> Result<CouplingSurface> {
    opts.validate()?;
    let n = phi.len();
    if eta.len() != n || rate.len() != n {
        return Err(Error::InvalidArgument("phi, eta and rate must have equal length".into()));
    }
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    for (name, s) in [("phi", phi), ("eta", eta), ("rate", rate)] {
        if let Some(i) = s.first_non_finite() {
            return Err(Error::InvalidArgument(format!("{name} sample {i} is not finite")));
        }
    }
    let g = opts.grid_size;
    let r = reach(g, opts.kappa);
    let partials = par::map_chunks(exec, n, CHUNK, |range| {
        let mut num = vec![0.0; g * g];
        let mut den = vec![0.0; g * g];
        let (mut fa, mut fb) = (Vec::new(), Vec::new());
        for i in range {
            factors(phi.values[i], g, opts.kappa, r, &mut fa);
            factors(eta.values[i], g, opts.kappa, r, &mut fb);
            let q = rate.values[i];
            for &(a, wa) in &fa {
                let row = a * g;
                for &(b, wb) in &fb {
                    let w = wa * wb;
                    den[row + b] += w;
                    num[row + b] += w * q;
                }
            }
        }
        (num, den)
    });
    let mut num = vec![0.0; g * g];
    let mut den = vec![0.0; g * g];
    for (pn, pd) in partials {
        for k in 0..g * g {
            num[k] += pn[k];
            den[k] += pd[k];
        }
    }
    let mean_mass = den.iter().sum::<f64>() / den.len() as f64;
    let cells: Vec<(usize, usize)> =
        (0..g * g).filter(|&k| !(den[k] >= MIN_RELATIVE_MASS * mean_mass) || den[k] == 0.0).map(|k| (k / g, k % g)).collect();
    if !cells.is_empty() {
        return Err(Error::UndersampledRegion { cells });
    }
    let values = num.iter().zip(&den).map(|(n, d)| n / d - omega).collect();
    Ok(CouplingSurface { grid_size: g, kappa: opts.kappa, values, mass: den })
}

/// `Q ~ Z(phi) P(eta)` with `RMS(P) = 1/sqrt(2)` and a positive first cosine
/// coefficient of `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub z: Vec<f64>,
    pub p: Vec<f64>,
    /// RMS of `Q - Z P` after the last step.
    pub residual: f64,
    /// Residual after each alternation step.
    pub history: Vec<f64>,
}

impl FactorPair {
    pub fn product(&self) -> CouplingSurface {
        let g = self.z.len();
        let mut values = Vec::with_capacity(g * g);
        for zg in &self.z {
            for ph in &self.p {
                values.push(zg * ph);
            }
        }
        CouplingSurface { grid_size: g, kappa: f64::NAN, values, mass: vec![f64::NAN; g * g] }
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "angle,z_value,p_value")?;
        let g = self.z.len();
        for k in 0..g {
            let a = crate::fmt::sig15(node(k, g));
            writeln!(w, "{a},{},{}", crate::fmt::sig15(self.z[k]), crate::fmt::sig15(self.p[k]))?;
        }
        Ok(())
    }
}

fn mean_square(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64
}

fn residual(q: &CouplingSurface, z: &[f64], p: &[f64]) -> f64 {
    let g = q.grid_size;
    let mut acc = 0.0;
    for a in 0..g {
        for b in 0..g {
            acc += (q.at(a, b) - z[a] * p[b]).powi(2);
        }
    }
    (acc / (g * g) as f64).sqrt()
}

/// Alternating least squares from `P(eta) = cos(eta)`.
pub fn factorize(q: &CouplingSurface, k_steps: usize) -> Result<FactorPair> {
    let g = q.grid_size;
    let init: Vec<f64> = (0..g).map(|h| node(h, g).cos()).collect();
    factorize_from(q, k_steps, init)
}

/// Alternating least squares from a given forcing profile.
pub fn factorize_from(q: &CouplingSurface, k_steps: usize, init: Vec<f64>) -> Result<FactorPair> {
    let g = q.grid_size;
    if k_steps < 1 {
        return Err(Error::InvalidArgument("k_steps must be at least 1".into()));
    }
    if init.len() != g || q.values.len() != g * g {
        return Err(Error::InvalidArgument("factor and surface sizes differ".into()));
    }
    if q.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("coupling surface is not finite".into()));
    }
    let scale = mean_square(&q.values);
    let floor = 1e-300_f64.max(1e-30 * scale);
    let mut p = init;
    let mut z = vec![0.0; g];
    let mut history = Vec::with_capacity(k_steps);
    for _ in 0..k_steps {
        let pp = mean_square(&p);
        if !(pp > floor.sqrt()) {
            return Err(Error::DegenerateFactorization("forcing profile vanished".into()));
        }
        for (a, za) in z.iter_mut().enumerate() {
            *za = (0..g).map(|b| q.at(a, b) * p[b]).sum::<f64>() / g as f64 / pp;
        }
        let zz = mean_square(&z);
        if !(zz > floor.sqrt()) {
            return Err(Error::DegenerateFactorization("response profile vanished".into()));
        }
        for (b, pb) in p.iter_mut().enumerate() {
            *pb = (0..g).map(|a| q.at(a, b) * z[a]).sum::<f64>() / g as f64 / zz;
        }
        history.push(residual(q, &z, &p));
    }
    let c = FRAC_1_SQRT_2 / mean_square(&p).sqrt();
    let cos1: f64 = p.iter().enumerate().map(|(h, v)| v * node(h, g).cos()).sum();
    let c = if cos1 < 0.0 { -c } else { c };
    for v in &mut p {
        *v *= c;
    }
    for v in &mut z {
        *v /= c;
    }
    let residual = residual(q, &z, &p);
    Ok(FactorPair { z, p, residual, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn iprc(phi: f64) -> f64 {
        (phi.cos() - 0.1 * phi.sin()) / 8f64.sqrt()
    }

    fn torus_samples(n: usize, seed: u64, eps: f64) -> (TimeSeries, TimeSeries, TimeSeries) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let phi: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * TAU).collect();
        let eta: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * TAU).collect();
        let rate: Vec<f64> = phi.iter().zip(&eta).map(|(p, e)| 0.2 + eps * iprc(*p) * e.cos()).collect();
        let s = |v| TimeSeries::new(0.0, 1.0, v).unwrap();
        (s(phi), s(eta), s(rate))
    }

    // every sample against every node, no cutoff
    fn dense(phi: &TimeSeries, eta: &TimeSeries, rate: &TimeSeries, omega: f64, g: usize, kappa: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for a in 0..g {
            for b in 0..g {
                let (mut num, mut den) = (0.0, 0.0);
                for i in 0..phi.len() {
                    let w = kernel(node(a, g) - phi.values[i], node(b, g) - eta.values[i], kappa);
                    num += w * rate.values[i];
                    den += w;
                }
                out.push(num / den - omega);
            }
        }
        out
    }

    #[test]
    fn kernel_values() {
        assert_eq!(kernel(0.0, 0.0, 200.0), 1.0);
        assert!((kernel(std::f64::consts::PI, 0.0, 200.0) - (-400.0f64).exp()).abs() < 1e-300);
        assert!((kernel(TAU, -TAU, 200.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_sum_matches_dense_oracle() {
        let (phi, eta, rate) = torus_samples(4000, 3, 0.1);
        let opts = CouplingOptions { kappa: 20.0, grid_size: 16, k_steps: 30 };
        let fast = fit_coupling(&phi, &eta, &rate, 0.2, &opts, Execution::Parallel).unwrap();
        let slow = dense(&phi, &eta, &rate, 0.2, 16, 20.0);
        for (a, b) in fast.values.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn execution_modes_agree_bitwise() {
        let (phi, eta, rate) = torus_samples(50_000, 4, 0.1);
        let opts = CouplingOptions { grid_size: 32, ..CouplingOptions::default() };
        let a = fit_coupling(&phi, &eta, &rate, 0.2, &opts, Execution::Parallel).unwrap();
        let b = fit_coupling(&phi, &eta, &rate, 0.2, &opts, Execution::Sequential).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_rate_gives_flat_surface() {
        let (phi, eta, _) = torus_samples(20_000, 5, 0.0);
        let rate = phi.with_values(vec![0.7; phi.len()]);
        let opts = CouplingOptions { kappa: 50.0, grid_size: 16, k_steps: 30 };
        let q = fit_coupling(&phi, &eta, &rate, 0.2, &opts, Execution::Parallel).unwrap();
        for v in &q.values {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn synthetic_coupling_is_recovered() {
        let eps = 0.1;
        let (phi, eta, rate) = torus_samples(300_000, 6, eps);
        let q = fit_coupling(&phi, &eta, &rate, 0.2, &CouplingOptions::default(), Execution::Parallel).unwrap();
        let truth = CouplingSurface::from_fn(64, |p, e| eps * iprc(p) * e.cos());
        let rms = |v: &[f64]| (mean_square(v)).sqrt();
        let diff: Vec<f64> = q.values.iter().zip(&truth.values).map(|(a, b)| a - b).collect();
        assert!(rms(&diff) < 0.03 * rms(&truth.values), "{}", rms(&diff) / rms(&truth.values));
    }

    #[test]
    fn empty_regions_are_reported() {
        // samples confined to a band of phi
        let (phi, eta, rate) = torus_samples(20_000, 7, 0.1);
        let phi = phi.with_values(phi.values.iter().map(|p| p * 0.25).collect());
        match fit_coupling(&phi, &eta, &rate, 0.2, &CouplingOptions::default(), Execution::Parallel) {
            Err(Error::UndersampledRegion { cells }) => {
                assert!(cells.iter().all(|&(a, _)| node(a, 64) > TAU * 0.25));
                assert!(cells.contains(&(40, 0)));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let (phi, eta, rate) = torus_samples(100, 8, 0.1);
        let short = TimeSeries::new(0.0, 1.0, vec![0.0; 10]).unwrap();
        let opts = CouplingOptions::default();
        assert!(matches!(fit_coupling(&phi, &short, &rate, 0.2, &opts, Execution::Sequential), Err(Error::InvalidArgument(_))));
        let bad = CouplingOptions { kappa: -1.0, ..opts };
        assert!(matches!(fit_coupling(&phi, &eta, &rate, 0.2, &bad, Execution::Sequential), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn separable_surface_is_recovered_exactly() {
        let q = CouplingSurface::from_fn(64, |p, e| 0.1 * iprc(p) * e.cos());
        let f = factorize(&q, 2).unwrap();
        for (k, z) in f.z.iter().enumerate() {
            assert!((z - 0.1 * iprc(node(k, 64))).abs() < 1e-10 * 0.1);
        }
        for (k, p) in f.p.iter().enumerate() {
            assert!((p - node(k, 64).cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn rank_one_input_has_no_residual() {
        let u: Vec<f64> = (0..32).map(|k| (0.3 * k as f64).sin() - 0.1).collect();
        let v: Vec<f64> = (0..32).map(|k| (2.0 * node(k, 32)).sin() + 0.5 * node(k, 32).cos()).collect();
        let q = CouplingSurface::from_fn(32, |p, e| {
            let (a, b) = ((p / TAU * 32.0).round() as usize, (e / TAU * 32.0).round() as usize);
            u[a % 32] * v[b % 32]
        });
        let f = factorize(&q, 30).unwrap();
        assert!(f.residual < 1e-10);
    }

    #[test]
    fn normalization_fixes_the_gauge() {
        let q = CouplingSurface::from_fn(64, |p, e| (p.sin() + 0.3) * (e + 0.4).cos() + 0.01 * (p + 2.0 * e).cos());
        let f = factorize(&q, 30).unwrap();
        assert!((mean_square(&f.p).sqrt() - FRAC_1_SQRT_2).abs() < 1e-12);
        let again = factorize(&f.product(), 30).unwrap();
        for (a, b) in f.z.iter().zip(&again.z) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in f.p.iter().zip(&again.p) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn sign_convention_follows_the_forcing() {
        let q = CouplingSurface::from_fn(32, |p, e| -p.cos() * e.cos());
        let f = factorize(&q, 5).unwrap();
        assert!(f.p[0] > 0.0);
        assert!(f.z[0] < 0.0);
    }

    #[test]
    fn residual_never_increases() {
        let q = CouplingSurface::from_fn(48, |p, e| p.sin() * e.cos() + 0.4 * (2.0 * p).cos() * (e - 1.0).sin() + 0.1 * p.cos());
        let f = factorize(&q, 30).unwrap();
        for w in f.history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn zero_surface_is_degenerate() {
        let q = CouplingSurface::from_fn(16, |_, _| 0.0);
        assert!(matches!(factorize(&q, 3), Err(Error::DegenerateFactorization(_))));
        let q = CouplingSurface::from_fn(16, |p, _| p.cos());
        // orthogonal to the initial cos(eta): the response vanishes at once
        assert!(matches!(factorize(&q, 3), Err(Error::DegenerateFactorization(_))));
    }
}
