//! Exact nearest-neighbor search over concatenated expert outputs.
//!
//! The distance between two samples restricted to an expert subset `S` is the
//! Euclidean norm of the difference of their concatenated outputs. Ordering uses
//! the squared distance, accumulated expert by expert in ascending index order
//! (and left to right within each expert), with ties broken by ascending record
//! id. Every search in the crate goes through [`squared_distance`] so that two
//! code paths over the same subset produce bit-identical neighbor lists.

use std::cmp::Ordering;

use crate::dataio::{Dataset, ExpertOutputRecord};
use crate::error::{Error, Result};
use crate::subset::SubsetMask;

/// A sample presented for fusion: its expert outputs and, when it belongs to a
/// dataset, its id (a validation record with the same id is never its own neighbor).
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub id: Option<u64>,
    pub(crate) outputs: &'a [f64],
    pub(crate) output_dim: usize,
}

impl<'a> Query<'a> {
    /// Raw expert-major outputs (`K * output_dim` values) without an id.
    pub fn raw(outputs: &'a [f64], output_dim: usize) -> Self {
        Self {
            id: None,
            outputs,
            output_dim,
        }
    }

    pub fn expert(&self, k: usize) -> &'a [f64] {
        &self.outputs[k * self.output_dim..(k + 1) * self.output_dim]
    }

    pub fn num_experts(&self) -> usize {
        self.outputs.len() / self.output_dim.max(1)
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn features(&self, subset: SubsetMask) -> Vec<f64> {
        subset
            .indices()
            .flat_map(|k| self.expert(k).iter().copied())
            .collect()
    }

    pub(crate) fn check_against(&self, dataset: &Dataset) -> Result<()> {
        let s = dataset.schema();
        if self.output_dim != s.output_dim || self.num_experts() != s.num_experts {
            return Err(Error::SchemaMismatch {
                line: None,
                expected: format!("K={} d={}", s.num_experts, s.output_dim),
                found: format!("K={} d={}", self.num_experts(), self.output_dim),
            });
        }
        Ok(())
    }
}

impl<'a> From<&'a ExpertOutputRecord> for Query<'a> {
    fn from(r: &'a ExpertOutputRecord) -> Self {
        Self {
            id: Some(r.id),
            outputs: r.flat_outputs(),
            output_dim: r.output_dim(),
        }
    }
}

/// Squared Euclidean distance over `subset`: one running sum over the
/// concatenated outputs, experts in ascending index order.
pub fn squared_distance(a: &Query<'_>, b: &ExpertOutputRecord, subset: SubsetMask) -> f64 {
    let mut total = 0.0;
    for k in subset.indices() {
        for (x, y) in a.expert(k).iter().zip(b.expert(k)) {
            total += (x - y) * (x - y);
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Position of the record within the searched dataset.
    pub index: usize,
    pub id: u64,
    pub squared_distance: f64,
}

impl Neighbor {
    pub fn distance(&self) -> f64 {
        self.squared_distance.sqrt()
    }

    fn order(&self, other: &Self) -> Ordering {
        self.squared_distance
            .total_cmp(&other.squared_distance)
            .then(self.id.cmp(&other.id))
    }
}

/// The `m` records of `dataset` nearest to `query` over `subset`, ascending by
/// (distance, id). A record whose id equals `query.id` is skipped.
pub fn nearest(query: &Query<'_>, dataset: &Dataset, subset: SubsetMask, m: usize) -> Result<Vec<Neighbor>> {
    query.check_against(dataset)?;
    dataset.schema().check_subset(subset)?;
    let excluded = query.id.is_some_and(|id| dataset.contains_id(id));
    let available = dataset.len() - usize::from(excluded);
    if m == 0 || m > available {
        return Err(Error::InsufficientNeighbors { needed: m, available });
    }
    let mut all: Vec<Neighbor> = dataset
        .records()
        .iter()
        .enumerate()
        .filter(|(_, r)| Some(r.id) != query.id)
        .map(|(index, r)| Neighbor {
            index,
            id: r.id,
            squared_distance: squared_distance(query, r, subset),
        })
        .collect();
    if m < all.len() {
        all.select_nth_unstable_by(m - 1, Neighbor::order);
        all.truncate(m);
    }
    all.sort_unstable_by(Neighbor::order);
    Ok(all)
}

/// Outputs of every record of a dataset restricted to one subset, stored
/// feature-major so one query's distances to all records accumulate in
/// independent lanes.
pub(crate) struct SubsetFeatures<'a> {
    dataset: &'a Dataset,
    width: usize,
    columns: Vec<f64>,
}

impl<'a> SubsetFeatures<'a> {
    pub(crate) fn new(dataset: &'a Dataset, subset: SubsetMask) -> Self {
        let width = dataset.schema().feature_len(subset);
        let n = dataset.len();
        let mut columns = vec![0.0; width * n];
        for (i, r) in dataset.records().iter().enumerate() {
            for (d, x) in r.features(subset).into_iter().enumerate() {
                columns[d * n + i] = x;
            }
        }
        Self {
            dataset,
            width,
            columns,
        }
    }

    /// Same result as [`nearest`] for the record at `index` querying its own
    /// dataset. Each pair is summed in the same feature order as
    /// [`squared_distance`], so distances agree bit for bit.
    pub(crate) fn nearest_to_member(&self, index: usize, m: usize) -> Vec<Neighbor> {
        let records = self.dataset.records();
        let n = records.len();
        let mut totals = vec![0.0; n];
        for column in self.columns.chunks_exact(n).take(self.width) {
            let x = column[index];
            for (t, y) in totals.iter_mut().zip(column) {
                let diff = x - y;
                *t += diff * diff;
            }
        }
        let own = records[index].id;
        let mut all: Vec<Neighbor> = records
            .iter()
            .zip(totals)
            .enumerate()
            .filter(|(_, (r, _))| r.id != own)
            .map(|(j, (r, total))| Neighbor {
                index: j,
                id: r.id,
                squared_distance: total,
            })
            .collect();
        if m < all.len() {
            all.select_nth_unstable_by(m - 1, Neighbor::order);
            all.truncate(m);
        }
        all.sort_unstable_by(Neighbor::order);
        all
    }
}

/// Normalized histogram of `labels` over `num_targets` values, and its
/// majority (lowest label on ties).
pub fn majority(labels: impl IntoIterator<Item = usize>, num_targets: usize) -> (Vec<f64>, usize) {
    let mut counts = vec![0usize; num_targets];
    let mut total = 0usize;
    for l in labels {
        counts[l] += 1;
        total += 1;
    }
    let mut best = 0;
    for (i, c) in counts.iter().enumerate() {
        if *c > counts[best] {
            best = i;
        }
    }
    let scores = counts.iter().map(|c| *c as f64 / total.max(1) as f64).collect();
    (scores, best)
}
