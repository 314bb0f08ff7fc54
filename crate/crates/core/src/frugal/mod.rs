//! Cost-aware sequential expert acquisition.

mod config;
mod index;
mod report;
mod search;

pub use config::{FrugalConfig, FuserBank, FuserKind, InnerKnn, MAX_BANK_QUERIES};
pub use index::{select_starting_expert, FrugalIndex, LossVector};
pub use report::{
    frontier_tsv, frugal_evaluate, frugal_evaluate_with, frugal_traces, lambda_sweep, FrontierPoint,
    FrugalReport,
};
pub use search::{
    exhaustive_shortest_path, frugal_run, Decision, FrugalStep, FrugalTrace, StopReason,
    MAX_EXHAUSTIVE_EXPERTS,
};
