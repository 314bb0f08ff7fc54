use super::Prediction;
use crate::dataio::Dataset;
use crate::error::Result;
use crate::neighbors::{majority, nearest, Query};
use crate::subset::SubsetMask;

/// Majority label among the `kappa` validation records nearest to `query`
/// over `subset`. With `exclude_self`, a validation record sharing the
/// query's id is left out; without it the query id is ignored.
pub fn knn_fuse(
    query: &Query<'_>,
    subset: SubsetMask,
    validation: &Dataset,
    kappa: usize,
    exclude_self: bool,
) -> Result<Prediction> {
    let q = Query {
        id: if exclude_self { query.id } else { None },
        ..*query
    };
    let neighbors = nearest(&q, validation, subset, kappa)?;
    let labels = neighbors.iter().map(|n| validation.records()[n.index].label);
    let (scores, best) = majority(labels, validation.schema().num_targets());
    Ok(Prediction {
        scores,
        argmax_index: best,
    })
}
