use serde::{Deserialize, Serialize};

use super::config::FuserKind;
use super::index::FrugalIndex;
use crate::dataio::ExpertOutputRecord;
use crate::error::{Error, Result};
use crate::fusion::{knn_fuse, Prediction};
use crate::neighbors::Query;
use crate::subset::{nonempty_subsets, SubsetMask};

/// Largest expert count accepted by [`exhaustive_shortest_path`].
pub const MAX_EXHAUSTIVE_EXPERTS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    NoImprovement,
    MaxQueries,
    AllQueried,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Query(usize),
    Stop(StopReason),
}

/// One iteration of the acquisition loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrugalStep {
    pub queried: SubsetMask,
    /// Estimate of stopping now: neighbor loss of `queried` plus its cost.
    pub current_estimate: f64,
    /// Best expert not yet queried and the estimate of adding it.
    pub best_candidate: Option<(usize, f64)>,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrugalTrace {
    pub record_id: Option<u64>,
    /// Experts in the order they were queried; starts with the starting expert.
    pub query_sequence: Vec<usize>,
    pub steps: Vec<FrugalStep>,
    pub stop_reason: StopReason,
    pub prediction: Prediction,
    pub experts_queried: usize,
    /// `lambda * sum of costs` of the queried experts.
    pub total_cost: f64,
    /// Estimate at the stopping point.
    pub realized_objective: f64,
    pub correct: Option<bool>,
    pub domain_expert_queried: Option<bool>,
}

impl FrugalTrace {
    pub fn queried(&self) -> SubsetMask {
        SubsetMask::from_indices(self.query_sequence.iter().copied())
    }
}

impl FrugalIndex<'_> {
    /// Final fused prediction from the experts in `queried`.
    pub fn fuse(&self, query: &Query<'_>, queried: SubsetMask) -> Result<Prediction> {
        match self.config().fuser_kind {
            FuserKind::Knn => knn_fuse(query, queried, self.validation(), self.config().kappa, true),
            FuserKind::MlpBank => self
                .bank()
                .expect("checked at construction")
                .get(queried)?
                .predict(query),
        }
    }

    /// Sequential expert acquisition for one input.
    pub fn run(&self, query: &Query<'_>) -> Result<FrugalTrace> {
        let k = self.num_experts();
        let all = SubsetMask::full(k);
        let cap = self.config().effective_max_queries(k);
        let stop_on_zero = self.config().stop_on_zero;

        let mut sequence = vec![self.starting_expert()];
        let mut queried = SubsetMask::singleton(self.starting_expert());
        let mut steps = Vec::new();
        let (stop_reason, current) = loop {
            let neighbors = self.neighbor_set(query, queried)?;
            let current = self.estimate_from_neighbors(&neighbors, queried)?;
            let capped = if queried == all {
                Some(StopReason::AllQueried)
            } else if queried.len() >= cap {
                Some(StopReason::MaxQueries)
            } else {
                None
            };
            if let Some(reason) = capped {
                steps.push(FrugalStep {
                    queried,
                    current_estimate: current,
                    best_candidate: None,
                    decision: Decision::Stop(reason),
                });
                break (reason, current);
            }

            let mut best: Option<(usize, f64)> = None;
            for f in (0..k).filter(|f| !queried.contains(*f)) {
                let est = self.estimate_from_neighbors(&neighbors, queried.with(f))?;
                if best.is_none_or(|(_, b)| est < b) {
                    best = Some((f, est));
                }
            }
            let (next, next_est) = best.expect("some expert remains unqueried");
            let delta = next_est - current;
            let stop = if stop_on_zero { delta >= 0.0 } else { delta > 0.0 };
            let decision = if stop {
                Decision::Stop(StopReason::NoImprovement)
            } else {
                Decision::Query(next)
            };
            steps.push(FrugalStep {
                queried,
                current_estimate: current,
                best_candidate: best,
                decision,
            });
            if stop {
                break (StopReason::NoImprovement, current);
            }
            queried = queried.with(next);
            sequence.push(next);
        };

        Ok(FrugalTrace {
            record_id: query.id,
            experts_queried: sequence.len(),
            total_cost: self.config().cost_model.subset_cost(queried),
            query_sequence: sequence,
            steps,
            stop_reason,
            prediction: self.fuse(query, queried)?,
            realized_objective: current,
            correct: None,
            domain_expert_queried: None,
        })
    }

    /// [`Self::run`] on a labelled record, filling in the correctness flags.
    pub fn run_record(&self, record: &ExpertOutputRecord) -> Result<FrugalTrace> {
        let mut trace = self.run(&Query::from(record))?;
        trace.correct = Some(trace.prediction.argmax_index == record.label);
        trace.domain_expert_queried = Some(trace.queried().contains(record.domain));
        Ok(trace)
    }

    /// Best subset over the full subset lattice for one input: every nonempty `S`
    /// scored by `lambda * cost(S)` plus the neighbor loss of `S` with the
    /// neighborhood taken over `S` itself. Ties prefer fewer experts, then the
    /// smaller bitmask.
    pub fn exhaustive_shortest_path(&self, query: &Query<'_>) -> Result<(SubsetMask, f64)> {
        let k = self.num_experts();
        if k > MAX_EXHAUSTIVE_EXPERTS {
            return Err(Error::TooManyExperts {
                max: MAX_EXHAUSTIVE_EXPERTS,
                found: k,
            });
        }
        let mut best: Option<(SubsetMask, f64)> = None;
        for s in nonempty_subsets(k) {
            let length = self.estimate_loss(query, s, s)?;
            let better = match best {
                None => true,
                Some((b, bl)) => length
                    .total_cmp(&bl)
                    .then(s.len().cmp(&b.len()))
                    .then(s.bits().cmp(&b.bits()))
                    .is_lt(),
            };
            if better {
                best = Some((s, length));
            }
        }
        Ok(best.expect("at least one expert"))
    }
}

pub fn frugal_run(index: &FrugalIndex<'_>, query: &Query<'_>) -> Result<FrugalTrace> {
    index.run(query)
}

pub fn exhaustive_shortest_path(index: &FrugalIndex<'_>, query: &Query<'_>) -> Result<(SubsetMask, f64)> {
    index.exhaustive_shortest_path(query)
}
