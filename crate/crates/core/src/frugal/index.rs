//! Validation-side state shared by every frugal query: per-subset fuser losses
//! on the validation records and the starting expert.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;

use super::config::{FrugalConfig, FuserBank, FuserKind, InnerKnn};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::neighbors::{majority, nearest, Neighbor, Query, SubsetFeatures};
use crate::subset::SubsetMask;

/// 0-1 losses of one subset's fuser on every validation record, in record order.
pub type LossVector = Arc<Vec<bool>>;

#[derive(Debug, Default)]
struct LossCache {
    by_subset: RwLock<HashMap<SubsetMask, LossVector>>,
}

/// Read-only index over a validation set. Subset losses are computed on first
/// use and cached; clones made with [`FrugalIndex::with_lambda`] share the cache.
#[derive(Debug, Clone)]
pub struct FrugalIndex<'a> {
    validation: &'a Dataset,
    config: FrugalConfig,
    bank: Option<&'a FuserBank>,
    cache: Arc<LossCache>,
    starting_expert: usize,
}

impl<'a> FrugalIndex<'a> {
    /// Builds the index. `bank` is required for [`FuserKind::MlpBank`].
    pub fn new(validation: &'a Dataset, config: FrugalConfig, bank: Option<&'a FuserBank>) -> Result<Self> {
        validation.require_nonempty()?;
        config.validate(validation)?;
        if config.fuser_kind == FuserKind::MlpBank && bank.is_none() {
            return Err(Error::InvalidConfig(
                "mlp-bank fuser requires a trained bank".into(),
            ));
        }
        let mut index = Self {
            validation,
            config,
            bank,
            cache: Arc::new(LossCache::default()),
            starting_expert: 0,
        };
        if index.config.inner_knn == InnerKnn::AllExperts && index.config.fuser_kind == FuserKind::Knn {
            // shared by every subset; computed up front
            index.losses(SubsetMask::full(validation.num_experts()))?;
        }
        index.starting_expert = index.compute_starting_expert()?;
        Ok(index)
    }

    pub fn validation(&self) -> &'a Dataset {
        self.validation
    }

    pub fn config(&self) -> &FrugalConfig {
        &self.config
    }

    pub fn bank(&self) -> Option<&'a FuserBank> {
        self.bank
    }

    pub fn starting_expert(&self) -> usize {
        self.starting_expert
    }

    pub fn num_experts(&self) -> usize {
        self.validation.num_experts()
    }

    /// Same validation state under a different trade-off weight.
    pub fn with_lambda(&self, lambda: f64) -> Self {
        let mut other = self.clone();
        other.config.cost_model.lambda = lambda;
        other
    }

    /// Average singleton-fuser 0-1 loss per expert (leave-one-out for kNN fusers).
    pub fn singleton_losses(&self) -> Result<Vec<f64>> {
        let n = self.validation.len() as f64;
        (0..self.num_experts())
            .map(|k| {
                let losses = self.fuser_losses(SubsetMask::singleton(k), false)?;
                Ok(losses.iter().filter(|l| **l).count() as f64 / n)
            })
            .collect()
    }

    fn compute_starting_expert(&self) -> Result<usize> {
        let avg = self.singleton_losses()?;
        let mut best = 0;
        for (k, l) in avg.iter().enumerate() {
            if *l < avg[best] {
                best = k;
            }
        }
        Ok(best)
    }

    /// Per-validation-record losses of the fuser for `subset`, honoring the
    /// configured inner-kNN semantics.
    pub fn losses(&self, subset: SubsetMask) -> Result<LossVector> {
        self.fuser_losses(subset, self.config.inner_knn == InnerKnn::AllExperts)
    }

    fn fuser_losses(&self, subset: SubsetMask, all_experts: bool) -> Result<LossVector> {
        let key = match (self.config.fuser_kind, all_experts) {
            (FuserKind::Knn, true) => SubsetMask::full(self.num_experts()),
            _ => subset,
        };
        if let Some(v) = self.cache.by_subset.read().unwrap().get(&key) {
            return Ok(v.clone());
        }
        let computed = Arc::new(self.compute_losses(key)?);
        let mut map = self.cache.by_subset.write().unwrap();
        Ok(map.entry(key).or_insert(computed).clone())
    }

    fn compute_losses(&self, subset: SubsetMask) -> Result<Vec<bool>> {
        let v = self.validation;
        match self.config.fuser_kind {
            FuserKind::Knn => {
                let kappa = self.config.kappa;
                if kappa + 1 > v.len() {
                    return Err(Error::InsufficientNeighbors {
                        needed: kappa,
                        available: v.len().saturating_sub(1),
                    });
                }
                v.schema().check_subset(subset)?;
                let features = SubsetFeatures::new(v, subset);
                let targets = v.schema().num_targets();
                Ok((0..v.len())
                    .into_par_iter()
                    .map(|i| {
                        let neighbors = features.nearest_to_member(i, kappa);
                        let labels = neighbors.iter().map(|n| v.records()[n.index].label);
                        majority(labels, targets).1 != v.records()[i].label
                    })
                    .collect())
            }
            FuserKind::MlpBank => {
                let fuser = self.bank.expect("checked at construction").get(subset)?;
                let preds = fuser.predict_dataset(v)?;
                Ok(preds
                    .iter()
                    .zip(v.records())
                    .map(|(p, r)| p.argmax_index != r.label)
                    .collect())
            }
        }
    }

    /// The `m_neighbors` validation records nearest to `query` over `queried`.
    pub fn neighbor_set(&self, query: &Query<'_>, queried: SubsetMask) -> Result<Vec<Neighbor>> {
        nearest(query, self.validation, queried, self.config.m_neighbors)
    }

    /// Estimated loss of fusing `candidate` given a neighborhood found with the
    /// already-queried experts: mean neighbor loss plus `lambda * sum of costs`.
    pub fn estimate_from_neighbors(&self, neighbors: &[Neighbor], candidate: SubsetMask) -> Result<f64> {
        let losses = self.losses(candidate)?;
        let wrong = neighbors.iter().filter(|n| losses[n.index]).count();
        Ok(wrong as f64 / neighbors.len() as f64 + self.config.cost_model.subset_cost(candidate))
    }

    /// Conditional-loss estimate of fusing `candidate` after observing `queried`.
    pub fn estimate_loss(
        &self,
        query: &Query<'_>,
        candidate: SubsetMask,
        queried: SubsetMask,
    ) -> Result<f64> {
        if queried.is_empty() || !queried.is_subset_of(candidate) {
            return Err(Error::InvalidConfig(format!(
                "queried set {queried} must be a nonempty subset of candidate {candidate}"
            )));
        }
        let neighbors = self.neighbor_set(query, queried)?;
        self.estimate_from_neighbors(&neighbors, candidate)
    }
}

/// Starting expert for `validation` under `config` (kNN fusers only).
pub fn select_starting_expert(validation: &Dataset, config: &FrugalConfig) -> Result<usize> {
    validation.require_nonempty()?;
    let config = FrugalConfig {
        fuser_kind: FuserKind::Knn,
        ..config.clone()
    };
    Ok(FrugalIndex::new(validation, config, None)?.starting_expert())
}
