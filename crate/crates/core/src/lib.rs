//! Coarse variables of autonomous ODE systems and their evolution.
//!
//! - [`averaging`]: running time averages, the delay-augmented system, empirical measure averages.
//! - [`plim`]: graphs of fine states over coarse variables from the invariance PDE.
//! - [`tikhonov`]: slow-fast systems and their differential-algebraic limit.
//! - [`pta`]: coarse projective stepping from differences of burst averages.
//! - [`coarse`]: least-squares construction of instantaneous coarse functions.

pub mod averaging;
pub mod catalog;
pub mod coarse;
pub mod equilibria;
pub mod error;
pub mod integrate;
pub mod plim;
pub mod pta;
pub mod system;
pub mod tikhonov;
pub mod trajectory;

pub use averaging::{EmpiricalMeasureSummary, Observable};
pub use error::{Error, Result};
pub use integrate::{integrate, integrate_observed, IntegratorConfig, Method, Observer};
pub use system::{jacobian_check, SystemSpec};
pub use tikhonov::{DaeConfig, Epsilon, SlowFastSpec};
pub use trajectory::Trajectory;
