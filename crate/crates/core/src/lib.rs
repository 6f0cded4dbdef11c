//! Phase reconstruction of oscillatory scalar signals with iterated Hilbert
//! transform embeddings.
//!
//! The pipeline: a signal `X(t)` is embedded as `(X, H[X])`, the arc length of
//! the embedded curve is turned into a protophase with a monotone spline through
//! signal features, and the Hilbert transform is repeated with the latest
//! protophase as the integration variable ([`ihte`]). The protophase is then
//! mapped to a uniformly growing phase ([`phasemap`]) and, for driven
//! oscillators, used to estimate the coupling function and the phase response
//! curve ([`coupling`]). [`sim`] provides a forced Stuart-Landau oscillator with
//! a known phase to validate all of it.

pub mod analysis;
pub mod coupling;
pub mod embed;
pub mod error;
pub mod fmt;
pub mod hilbert;
pub mod ihte;
pub mod interp;
pub mod metrics;
pub mod par;
pub mod phasemap;
pub mod series;
pub mod sgfilter;
pub mod sim;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use par::Execution;
pub use series::{GriddedSignal, TimeSeries};
