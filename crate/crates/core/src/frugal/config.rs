use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{CostModel, Dataset};
use crate::error::{Error, Result};
use crate::fusion::{train_mlp_fuser, MlpFuser, TrainConfig};
use crate::subset::{nonempty_subsets, SubsetMask};

/// Largest expert budget supported by a trained fuser bank.
pub const MAX_BANK_QUERIES: usize = 5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FuserKind {
    /// Training-free kNN fusers evaluated on the validation set.
    #[default]
    Knn,
    /// One trained MLP per expert subset.
    MlpBank,
}

/// Which neighbors the kNN fuser of a validation record uses when scoring subset `S`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerKnn {
    /// Neighbors over the outputs of `S` only, so the per-record loss depends on `S`.
    #[default]
    SubsetRestricted,
    /// Neighbors over the outputs of every expert, shared by all subsets.
    AllExperts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrugalConfig {
    /// Neighborhood size of the conditional-loss estimator.
    pub m_neighbors: usize,
    /// Neighbors voting in the kNN fuser.
    pub kappa: usize,
    pub cost_model: CostModel,
    #[serde(default)]
    pub fuser_kind: FuserKind,
    /// Cap on expert calls per query; `None` means every expert may be queried.
    #[serde(default)]
    pub max_queries: Option<usize>,
    /// Stop when the best candidate does not strictly lower the estimate.
    #[serde(default)]
    pub stop_on_zero: bool,
    #[serde(default)]
    pub inner_knn: InnerKnn,
}

impl FrugalConfig {
    pub fn knn(num_experts: usize, m_neighbors: usize, kappa: usize, lambda: f64) -> Self {
        Self {
            m_neighbors,
            kappa,
            cost_model: CostModel::uniform(num_experts, CostModel::DEFAULT_COST, lambda),
            fuser_kind: FuserKind::Knn,
            max_queries: None,
            stop_on_zero: false,
            inner_knn: InnerKnn::SubsetRestricted,
        }
    }

    pub fn effective_max_queries(&self, num_experts: usize) -> usize {
        self.max_queries.unwrap_or(num_experts).min(num_experts)
    }

    pub fn validate(&self, validation: &Dataset) -> Result<()> {
        let k = validation.num_experts();
        let n = validation.len();
        let bad = |m: String| Err(Error::InvalidConfig(m));
        self.cost_model.validate(k)?;
        if self.m_neighbors == 0 || self.m_neighbors > n {
            return bad(format!("m_neighbors {} not in [1, {n}]", self.m_neighbors));
        }
        if self.kappa == 0 || self.kappa + 1 > n {
            return bad(format!(
                "kappa {} not in [1, {}]",
                self.kappa,
                n.saturating_sub(1)
            ));
        }
        if let Some(q) = self.max_queries {
            if q == 0 || q > k {
                return bad(format!("max_queries {q} not in [1, {k}]"));
            }
        }
        if self.fuser_kind == FuserKind::MlpBank && self.effective_max_queries(k) > MAX_BANK_QUERIES {
            return bad(format!(
                "a fuser bank supports at most {MAX_BANK_QUERIES} queries; set max_queries"
            ));
        }
        Ok(())
    }
}

/// Trained fusers keyed by expert subset.
#[derive(Debug, Clone, Default)]
pub struct FuserBank {
    fusers: BTreeMap<SubsetMask, MlpFuser>,
}

impl FuserBank {
    /// Trains one fuser for every nonempty subset of at most `max_size` experts.
    /// Each fuser predicts the dataset's own target kind.
    pub fn train(train: &Dataset, max_size: usize, config: &TrainConfig) -> Result<Self> {
        let target = train.schema().target_kind;
        let subsets: Vec<SubsetMask> = nonempty_subsets(train.num_experts())
            .filter(|s| s.len() <= max_size)
            .collect();
        let fusers = subsets
            .par_iter()
            .map(|&s| train_mlp_fuser(train, s, target, config).map(|f| (s, f)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Self { fusers })
    }

    pub fn from_fusers(fusers: impl IntoIterator<Item = MlpFuser>) -> Self {
        Self {
            fusers: fusers.into_iter().map(|f| (f.subset(), f)).collect(),
        }
    }

    pub fn get(&self, subset: SubsetMask) -> Result<&MlpFuser> {
        self.fusers
            .get(&subset)
            .ok_or_else(|| Error::MissingFuser(subset.to_string()))
    }

    pub fn len(&self) -> usize {
        self.fusers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fusers.is_empty()
    }
}
