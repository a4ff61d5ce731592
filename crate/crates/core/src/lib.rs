//! Strong pathwise simulation of Levy-driven SDEs by Euler-Maruyama schemes
//! whose large jumps are cut by a time-dependent threshold ("dynamic
//! cutting"), alongside the fixed-threshold Asmussen-Rosinski baseline.

pub mod ar;
pub mod cutting;
pub mod dc;
pub mod engine;
pub mod error;
pub mod harness;
pub mod levy;
pub mod quad;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod validation;

pub use error::{Error, Result};
pub use levy::{LevyMeasure, Side, TruncatedStable};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
