//! Data-driven optimal stopping.
//!
//! From one observed path of a stationary return process, [`estimator`] builds
//! kernel local-averaging estimates of the continuation values of a finite
//! horizon stopping problem, aggregates them with exponential weights and turns
//! them into a stopping rule ([`stopping`]). The remaining modules supply the
//! tooling around it: exact dynamic programming on finite models ([`oracle`]),
//! path generators ([`simulate`]), comparator policies ([`baselines`]) and the
//! benchmark driver behind the `datastop` binary ([`harness`]).

pub mod baselines;
pub mod config;
pub mod domain;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod kernel;
pub mod oracle;
pub mod returns_io;
pub mod rng;
pub mod simulate;
pub mod stopping;

pub use domain::{GainSpec, PayoffKind, PayoffSpec, ReturnPath};
pub use error::{Error, Result};
pub use estimator::{EstimatorConfig, ExpertGrid, FittedStopper, ReturnConvention};
pub use kernel::KernelProfile;
pub use stopping::{ContinuationEstimate, StopDecision};
