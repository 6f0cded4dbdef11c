//! Ground-truth generator: the periodically (and optionally noise-) forced
//! Stuart-Landau oscillator
//!
//! ```text
//! da/dt = (mu + i nu) a - (1 + i alpha) a |a|^2 + i (eps cos(r omega t) + xi(t))
//! ```
//!
//! with its exact phase `phi = arg a - alpha ln|a|`, which rotates with the
//! constant frequency `omega = nu - mu alpha` in the absence of forcing.

use std::f64::consts::PI;
use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::sig15;
use crate::series::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlParams {
    pub mu: f64,
    pub alpha: f64,
    pub nu: f64,
    pub eps: f64,
    /// Forcing frequency in units of `omega`.
    pub r: f64,
    /// White-noise intensity; zero for deterministic runs.
    pub sigma: f64,
}

impl Default for SlParams {
    fn default() -> Self {
        Self { mu: 8.0, alpha: 0.1, nu: 1.0, eps: 0.1, r: 5.6, sigma: 0.0 }
    }
}

impl SlParams {
    pub fn omega(&self) -> f64 {
        self.nu - self.mu * self.alpha
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega()
    }

    pub fn forcing_frequency(&self) -> f64 {
        self.r * self.omega()
    }

    /// `alpha ln sqrt(mu)`: the value of `arg a - phi` on the limit cycle.
    ///
    /// The response curve `(cos phi - alpha sin phi) / sqrt(mu)` is exact for the
    /// phase `phi + cycle_phase_offset()`, i.e. the phase whose origin coincides
    /// with `arg a = 0` on the cycle.
    pub fn cycle_phase_offset(&self) -> f64 {
        0.5 * self.alpha * self.mu.ln()
    }

    /// Response curve in the gauge of the recorded phase `arg a - alpha ln|a|`.
    pub fn prc(&self, phi: f64) -> f64 {
        let p = phi + self.cycle_phase_offset();
        (p.cos() - self.alpha * p.sin()) / self.mu.sqrt()
    }

    /// Coupling function `eps Z(phi) cos(eta)` in the same gauge.
    pub fn coupling(&self, phi: f64, eta: f64) -> f64 {
        self.eps * self.prc(phi) * eta.cos()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.mu, self.alpha, self.nu, self.eps, self.r, self.sigma].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("oscillator parameters must be finite".into()));
        }
        if !(self.mu > 0.0) {
            return Err(Error::InvalidArgument(format!("mu must be positive, got {}", self.mu)));
        }
        if self.eps < 0.0 || self.sigma < 0.0 {
            return Err(Error::InvalidArgument("eps and sigma must be non-negative".into()));
        }
        if !(self.omega() > 0.0) {
            return Err(Error::InvalidArgument(format!("base frequency nu - mu*alpha must be positive, got {}", self.omega())));
        }
        Ok(())
    }
}

/// Integration settings for [`simulate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Length of the recorded window.
    pub duration: f64,
    pub dt: f64,
    /// Seeds the noise; unused when `sigma == 0`.
    pub seed: u64,
    /// State at the start of the transient; `None` starts on the cycle at `sqrt(mu)`.
    pub initial: Option<Complex64>,
    /// Periods integrated and discarded before recording starts at `t = 0`.
    pub transient_periods: f64,
}

impl SimOptions {
    pub fn periods(params: &SlParams, periods: f64, dt: f64) -> Self {
        Self { duration: periods * params.period(), dt, seed: 0, initial: None, transient_periods: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlTrajectory {
    pub t0: f64,
    pub dt: f64,
    pub re_a: Vec<f64>,
    pub im_a: Vec<f64>,
    /// Unwrapped true phase `arg a - alpha ln|a|`.
    pub phi_true: Vec<f64>,
    /// Unwrapped forcing phase `r omega t`.
    pub eta: Vec<f64>,
}

impl SlTrajectory {
    pub fn len(&self) -> usize {
        self.re_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re_a.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn amplitude(&self, i: usize) -> f64 {
        self.re_a[i].hypot(self.im_a[i])
    }

    pub fn phase(&self) -> TimeSeries {
        TimeSeries { t0: self.t0, dt: self.dt, values: self.phi_true.clone() }
    }

    pub fn forcing_phase(&self) -> TimeSeries {
        TimeSeries { t0: self.t0, dt: self.dt, values: self.eta.clone() }
    }

    /// Writes `t,re_a,im_a,phi_true,eta` rows with 15 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,re_a,im_a,phi_true,eta")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                sig15(self.time(i)),
                sig15(self.re_a[i]),
                sig15(self.im_a[i]),
                sig15(self.phi_true[i]),
                sig15(self.eta[i])
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Observable {
    X1,
    X2,
    X3,
}

impl Observable {
    pub fn eval(self, re: f64, im: f64) -> f64 {
        let x2 = 0.1 * im * im + 0.2 * re * re + 0.3 * im + 0.4 * re;
        match self {
            Observable::X1 => re,
            Observable::X2 => x2,
            Observable::X3 => x2 + 0.3 * re * im,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Observable::X1 => "X1",
            Observable::X2 => "X2",
            Observable::X3 => "X3",
        }
    }
}

impl std::str::FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "X1" => Ok(Observable::X1),
            "X2" => Ok(Observable::X2),
            "X3" => Ok(Observable::X3),
            other => Err(Error::InvalidArgument(format!("unknown observable {other:?}"))),
        }
    }
}

fn check_grid(duration: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::InvalidArgument(format!("duration must be positive, got {duration}")));
    }
    if duration < 100.0 * dt {
        return Err(Error::InvalidArgument("duration must cover at least 100 steps".into()));
    }
    Ok((duration / dt).round() as usize + 1)
}

struct Field {
    lin: Complex64,
    cubic: Complex64,
    eps: f64,
    forcing_freq: f64,
}

impl Field {
    fn new(p: &SlParams) -> Self {
        Self { lin: Complex64::new(p.mu, p.nu), cubic: Complex64::new(1.0, p.alpha), eps: p.eps, forcing_freq: p.forcing_frequency() }
    }

    #[inline]
    fn rhs(&self, t: f64, a: Complex64) -> Complex64 {
        self.lin * a - self.cubic * a * a.norm_sqr() + Complex64::new(0.0, self.eps * (self.forcing_freq * t).cos())
    }

    #[inline]
    fn rk4(&self, t: f64, a: Complex64, dt: f64) -> Complex64 {
        let k1 = self.rhs(t, a);
        let k2 = self.rhs(t + 0.5 * dt, a + k1 * (0.5 * dt));
        let k3 = self.rhs(t + 0.5 * dt, a + k2 * (0.5 * dt));
        let k4 = self.rhs(t + dt, a + k3 * dt);
        a + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
    }
}

#[inline]
fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Integrates the oscillator with a fixed step and records `[0, duration]`.
///
/// The deterministic vector field is advanced with classical RK4; for
/// `sigma > 0` each step additionally receives the Gaussian increment
/// `i sigma sqrt(dt) N(0,1)` (first-order stochastic scheme).
pub fn simulate(params: &SlParams, opts: &SimOptions) -> Result<SlTrajectory> {
    params.validate()?;
    let n = check_grid(opts.duration, opts.dt)?;
    if !(opts.transient_periods >= 0.0) {
        return Err(Error::InvalidArgument("transient_periods must be non-negative".into()));
    }
    let dt = opts.dt;
    let mut a = opts.initial.unwrap_or(Complex64::new(params.mu.sqrt(), 0.0));
    if a.norm() == 0.0 || !a.norm().is_finite() {
        return Err(Error::DegenerateInitialCondition("the phase is undefined at a = 0".into()));
    }

    let field = Field::new(params);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let kick = params.sigma * dt.sqrt();
    let mut step = |t: f64, a: Complex64| -> Complex64 {
        let mut next = field.rk4(t, a, dt);
        if kick > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            next.im += kick * z;
        }
        next
    };

    let transient_steps = (opts.transient_periods * params.period() / dt).round() as usize;
    for k in 0..transient_steps {
        let t = -((transient_steps - k) as f64) * dt;
        a = step(t, a);
    }

    let mut traj = SlTrajectory {
        t0: 0.0,
        dt,
        re_a: Vec::with_capacity(n),
        im_a: Vec::with_capacity(n),
        phi_true: Vec::with_capacity(n),
        eta: Vec::with_capacity(n),
    };
    let forcing_freq = params.forcing_frequency();
    let mut unwrapped_arg = a.arg();
    let mut prev_arg = unwrapped_arg;
    for i in 0..n {
        if i > 0 {
            a = step((i - 1) as f64 * dt, a);
            let arg = a.arg();
            unwrapped_arg += wrap_angle(arg - prev_arg);
            prev_arg = arg;
        }
        let radius = a.norm();
        if !radius.is_finite() || radius == 0.0 {
            return Err(Error::NumericalFailure { iteration: i, stage: "oscillator integration" });
        }
        traj.re_a.push(a.re);
        traj.im_a.push(a.im);
        traj.phi_true.push(unwrapped_arg - params.alpha * radius.ln());
        traj.eta.push(forcing_freq * i as f64 * dt);
    }
    Ok(traj)
}

/// Samples one of the polynomial observables along a trajectory.
pub fn observe(traj: &SlTrajectory, kind: Observable) -> Result<TimeSeries> {
    if traj.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let values = traj.re_a.iter().zip(&traj.im_a).map(|(&re, &im)| kind.eval(re, im)).collect();
    Ok(TimeSeries { t0: traj.t0, dt: traj.dt, values })
}

/// Integrates the first-order amplitude/phase equations
///
/// ```text
/// dR/dt   = R (mu - R^2) + eps P(t) sin(phi)
/// dphi/dt = omega + eps mu^(-1/2) (cos(phi) - alpha sin(phi)) P(t)
/// ```
///
/// from `(r0, phi0)` at `t = 0`. Here `phi` uses the cycle origin, see
/// [`SlParams::cycle_phase_offset`].
pub fn simulate_reduced(params: &SlParams, duration: f64, dt: f64, r0: f64, phi0: f64) -> Result<(TimeSeries, TimeSeries)> {
    params.validate()?;
    if params.sigma != 0.0 {
        return Err(Error::InvalidArgument("the reduced model is deterministic; set sigma = 0".into()));
    }
    let n = check_grid(duration, dt)?;
    if !(r0 > 0.0) {
        return Err(Error::DegenerateInitialCondition("initial amplitude must be positive".into()));
    }
    let (mu, alpha, eps, omega) = (params.mu, params.alpha, params.eps, params.omega());
    let nf = params.forcing_frequency();
    let inv_sqrt_mu = 1.0 / mu.sqrt();
    let rhs = |t: f64, (r, ph): (f64, f64)| {
        let p = eps * (nf * t).cos();
        (r * (mu - r * r) + p * ph.sin(), omega + p * inv_sqrt_mu * (ph.cos() - alpha * ph.sin()))
    };
    let mut state = (r0, phi0);
    let mut rs = Vec::with_capacity(n);
    let mut phis = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            let t = (i - 1) as f64 * dt;
            let (r, ph) = state;
            let k1 = rhs(t, state);
            let k2 = rhs(t + 0.5 * dt, (r + 0.5 * dt * k1.0, ph + 0.5 * dt * k1.1));
            let k3 = rhs(t + 0.5 * dt, (r + 0.5 * dt * k2.0, ph + 0.5 * dt * k2.1));
            let k4 = rhs(t + dt, (r + dt * k3.0, ph + dt * k3.1));
            state = (r + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0), ph + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1));
        }
        rs.push(state.0);
        phis.push(state.1);
    }
    Ok((TimeSeries { t0: 0.0, dt, values: rs }, TimeSeries { t0: 0.0, dt, values: phis }))
}

/// Infinitesimal phase response curve `(cos phi - alpha sin phi) / sqrt(mu)`.
pub fn iprc(phi: f64, params: &SlParams) -> Result<f64> {
    if !(params.mu > 0.0) {
        return Err(Error::InvalidArgument(format!("mu must be positive, got {}", params.mu)));
    }
    Ok((phi.cos() - params.alpha * phi.sin()) / params.mu.sqrt())
}
