use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{FrugalConfig, FuserBank};
use super::index::FrugalIndex;
use super::search::FrugalTrace;
use crate::dataio::{Dataset, TargetKind};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub lambda: f64,
    pub mean_queried: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrugalReport {
    pub config: FrugalConfig,
    pub starting_expert: usize,
    pub records: usize,
    pub final_accuracy: f64,
    pub mean_experts_queried: f64,
    pub median_experts_queried: f64,
    /// `histogram[q]` counts the records that queried exactly `q` experts.
    pub query_histogram: Vec<usize>,
    pub mean_cost: f64,
    /// Fraction of records whose final prediction is the domain expert's index;
    /// present for expert-index datasets.
    pub expert_selection_accuracy: Option<f64>,
    /// Fraction of records whose queried set contains the domain expert.
    pub domain_expert_coverage: f64,
    pub frontier: FrontierPoint,
}

impl FrugalReport {
    pub fn from_traces(index: &FrugalIndex<'_>, test: &Dataset, traces: &[FrugalTrace]) -> Self {
        let n = traces.len();
        let frac = |a: usize| if n == 0 { 0.0 } else { a as f64 / n as f64 };
        let mut histogram = vec![0usize; index.num_experts() + 1];
        let mut counts: Vec<usize> = traces.iter().map(|t| t.experts_queried).collect();
        for q in &counts {
            histogram[*q] += 1;
        }
        counts.sort_unstable();
        let median = match n {
            0 => 0.0,
            _ if n % 2 == 1 => counts[n / 2] as f64,
            _ => (counts[n / 2 - 1] + counts[n / 2]) as f64 / 2.0,
        };
        let correct = traces.iter().filter(|t| t.correct == Some(true)).count();
        let covered = traces
            .iter()
            .filter(|t| t.domain_expert_queried == Some(true))
            .count();
        let mean_queried = frac(counts.iter().sum());
        let mean_cost = if n == 0 {
            0.0
        } else {
            traces.iter().map(|t| t.total_cost).sum::<f64>() / n as f64
        };
        let accuracy = frac(correct);
        let expert_selection_accuracy = (test.schema().target_kind == TargetKind::ExpertIndex).then(|| {
            frac(
                traces
                    .iter()
                    .zip(test.records())
                    .filter(|(t, r)| t.prediction.argmax_index == r.domain)
                    .count(),
            )
        });
        let config = index.config().clone();
        Self {
            frontier: FrontierPoint {
                lambda: config.cost_model.lambda,
                mean_queried,
                accuracy,
            },
            config,
            starting_expert: index.starting_expert(),
            records: n,
            final_accuracy: accuracy,
            mean_experts_queried: mean_queried,
            median_experts_queried: median,
            query_histogram: histogram,
            mean_cost,
            expert_selection_accuracy,
            domain_expert_coverage: frac(covered),
        }
    }
}

/// Runs every test record through `index`, in parallel, in record order.
pub fn frugal_traces(index: &FrugalIndex<'_>, test: &Dataset) -> Result<Vec<FrugalTrace>> {
    index.validation().schema().check_compatible(test.schema())?;
    test.records().par_iter().map(|r| index.run_record(r)).collect()
}

pub fn frugal_evaluate_with(index: &FrugalIndex<'_>, test: &Dataset) -> Result<FrugalReport> {
    let traces = frugal_traces(index, test)?;
    Ok(FrugalReport::from_traces(index, test, &traces))
}

pub fn frugal_evaluate(
    test: &Dataset,
    validation: &Dataset,
    config: &FrugalConfig,
    bank: Option<&FuserBank>,
) -> Result<FrugalReport> {
    let index = FrugalIndex::new(validation, config.clone(), bank)?;
    frugal_evaluate_with(&index, test)
}

/// One report per `lambda`, all sharing the validation loss cache.
pub fn lambda_sweep(index: &FrugalIndex<'_>, test: &Dataset, lambdas: &[f64]) -> Result<Vec<FrugalReport>> {
    lambdas
        .iter()
        .map(|&l| frugal_evaluate_with(&index.with_lambda(l), test))
        .collect()
}

/// Tab-separated `lambda, mean_queried, accuracy` rows with a header line.
pub fn frontier_tsv(points: &[FrontierPoint]) -> String {
    let mut out = String::from("lambda\tmean_queried\taccuracy\n");
    for p in points {
        writeln!(out, "{:.6}\t{:.6}\t{:.6}", p.lambda, p.mean_queried, p.accuracy).unwrap();
    }
    out
}
