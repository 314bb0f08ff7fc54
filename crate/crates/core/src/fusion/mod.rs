//! Fusers and baselines that turn a sample's expert outputs into a prediction.

mod baselines;
mod eval;
mod knn;
mod mlp;

use serde::{Deserialize, Serialize};

pub use baselines::{confidence_select, ensemble_average, oracle_select};
pub use eval::{evaluate, DomainAccuracy, MetricsReport, Strategy};
pub use knn::knn_fuse;
pub use mlp::{mlp_predict, train_mlp_fuser, Dense, FlatGradients, MlpFuser, TrainConfig, TrainReport};

/// Scores over classes (or experts) and the index of the best one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub scores: Vec<f64>,
    /// Lowest index attaining the maximum score.
    pub argmax_index: usize,
}

impl Prediction {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let argmax_index = argmax(&scores);
        Self { scores, argmax_index }
    }
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
