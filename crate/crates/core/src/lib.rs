//! Context-sensitive dynamic Bayesian networks for business-process logs.
//!
//! The crate learns a hidden-state model over event sequences in which
//! context attributes act either as causes (read before predicting the next
//! event) or as effects (read off the current event), predicts upcoming
//! activities and context values, and benchmarks those predictions against
//! frequency-based baselines.

pub mod baselines;
pub mod dbn;
pub mod error;
pub mod esa;
pub mod eventlog;
pub mod evaluation;
pub mod learning;
pub mod synthetic;

pub use error::{Error, Result};
