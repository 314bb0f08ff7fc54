//! Fusion of expert outputs: dataset I/O, fusers, cost-aware expert
//! acquisition and information-theoretic diagnostics.

pub mod analysis;
pub mod dataio;
pub mod error;
pub mod frugal;
pub mod fusion;
pub mod neighbors;
pub mod presets;
pub mod rng;
pub mod subset;

pub use error::{Error, Result};
pub use subset::SubsetMask;

/// Version tag written into every JSON report.
pub const SPEC_VERSION: &str = "1.0";
