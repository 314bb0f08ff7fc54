use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, confidence_select, ensemble_average, knn_fuse, oracle_select, MlpFuser};
use crate::dataio::{Dataset, ExpertOutputRecord, TargetKind};
use crate::error::{Error, Result};
use crate::neighbors::Query;
use crate::subset::SubsetMask;

/// A fusion strategy to evaluate on a test split.
#[derive(Debug, Clone, Copy)]
pub enum Strategy<'a> {
    Mlp(&'a MlpFuser),
    Knn {
        validation: &'a Dataset,
        subset: SubsetMask,
        kappa: usize,
    },
    Ensemble,
    Confidence,
    Oracle,
}

impl Strategy<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Mlp(f) if f.target_kind() == TargetKind::ExpertIndex => "mlp-expert",
            Strategy::Mlp(_) => "mlp",
            Strategy::Knn { .. } => "knn",
            Strategy::Ensemble => "ensemble",
            Strategy::Confidence => "confidence",
            Strategy::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainAccuracy {
    pub domain: usize,
    pub count: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub strategy: String,
    pub records: usize,
    pub final_accuracy: f64,
    /// Fraction of records whose selected expert is the true domain, for
    /// strategies that select an expert.
    pub expert_selection_accuracy: Option<f64>,
    pub per_domain: Vec<DomainAccuracy>,
}

struct Outcome {
    predicted: usize,
    selected: Option<usize>,
}

/// Final target predicted when `expert` is selected for `record`.
fn follow_expert(test: &Dataset, record: &ExpertOutputRecord, expert: usize) -> Result<usize> {
    match test.schema().target_kind {
        TargetKind::ExpertIndex => Ok(expert),
        TargetKind::ClassLabel => {
            test.require_prob_outputs()?;
            Ok(argmax(record.expert(expert)))
        }
    }
}

fn outcomes(strategy: &Strategy<'_>, test: &Dataset) -> Result<Vec<Outcome>> {
    let schema = test.schema();
    match strategy {
        Strategy::Mlp(fuser) => {
            let preds = fuser.predict_dataset(test)?;
            preds
                .into_iter()
                .zip(test.records())
                .map(|(p, r)| match fuser.target_kind() {
                    TargetKind::ClassLabel => Ok(Outcome {
                        predicted: p.argmax_index,
                        selected: None,
                    }),
                    TargetKind::ExpertIndex => Ok(Outcome {
                        predicted: follow_expert(test, r, p.argmax_index)?,
                        selected: Some(p.argmax_index),
                    }),
                })
                .collect()
        }
        Strategy::Knn {
            validation,
            subset,
            kappa,
        } => {
            schema.check_compatible(validation.schema())?;
            test.records()
                .par_iter()
                .map(|r| {
                    let p = knn_fuse(&Query::from(r), *subset, validation, *kappa, true)?;
                    Ok(Outcome {
                        predicted: p.argmax_index,
                        selected: (schema.target_kind == TargetKind::ExpertIndex).then_some(p.argmax_index),
                    })
                })
                .collect()
        }
        Strategy::Ensemble => {
            if schema.target_kind != TargetKind::ClassLabel {
                return Err(Error::SchemaMismatch {
                    line: None,
                    expected: "class-labelled dataset".into(),
                    found: "expert-index labels".into(),
                });
            }
            test.records()
                .iter()
                .map(|r| {
                    Ok(Outcome {
                        predicted: ensemble_average(schema, r)?.argmax_index,
                        selected: None,
                    })
                })
                .collect()
        }
        Strategy::Confidence => test
            .records()
            .iter()
            .map(|r| {
                let (k, _) = confidence_select(schema, r)?;
                Ok(Outcome {
                    predicted: follow_expert(test, r, k)?,
                    selected: Some(k),
                })
            })
            .collect(),
        Strategy::Oracle => test
            .records()
            .iter()
            .map(|r| {
                let (k, _) = oracle_select(r);
                Ok(Outcome {
                    predicted: follow_expert(test, r, k)?,
                    selected: Some(k),
                })
            })
            .collect(),
    }
}

pub fn evaluate(strategy: &Strategy<'_>, test: &Dataset) -> Result<MetricsReport> {
    let outcomes = outcomes(strategy, test)?;
    let k = test.num_experts();
    let mut hits = vec![0usize; k];
    let mut counts = vec![0usize; k];
    let mut correct = 0usize;
    let mut selected_right = 0usize;
    let mut selects = false;
    for (o, r) in outcomes.iter().zip(test.records()) {
        counts[r.domain] += 1;
        if o.predicted == r.label {
            correct += 1;
            hits[r.domain] += 1;
        }
        if let Some(s) = o.selected {
            selects = true;
            if s == r.domain {
                selected_right += 1;
            }
        }
    }
    let n = test.len();
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(MetricsReport {
        strategy: strategy.name().to_string(),
        records: n,
        final_accuracy: frac(correct, n),
        expert_selection_accuracy: (selects || matches!(strategy, Strategy::Oracle))
            .then(|| frac(selected_right, n)),
        per_domain: (0..k)
            .map(|d| DomainAccuracy {
                domain: d,
                count: counts[d],
                accuracy: frac(hits[d], counts[d]),
            })
            .collect(),
    })
}
