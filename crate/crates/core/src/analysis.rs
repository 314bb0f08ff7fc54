//! Information-theoretic diagnostics of expert selection.
//!
//! All logarithms are natural; entropies and mutual information are in nats.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, TargetKind};
use crate::error::{Error, Result};
use crate::fusion::argmax;

/// Per record, the lowest-index expert whose argmax equals the label (expert 0
/// when none does). A pointwise 0-1 stand-in for the best expert of each input.
pub fn oracle_map(validation: &Dataset) -> Result<Vec<usize>> {
    validation.require_prob_outputs()?;
    if validation.schema().target_kind != TargetKind::ClassLabel {
        return Err(Error::SchemaMismatch {
            line: None,
            expected: "class-labelled dataset".into(),
            found: "expert-index labels".into(),
        });
    }
    Ok(validation
        .records()
        .iter()
        .map(|r| r.experts().position(|v| argmax(v) == r.label).unwrap_or(0))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Discretizer {
    /// The tuple of every expert's argmax class.
    ArgmaxProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FanoInputs {
    /// Entropy of the best-expert variable.
    pub entropy_h: f64,
    /// Mutual information between discretized expert outputs and the best expert.
    pub mutual_info_i: f64,
    pub num_experts: usize,
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|c| *c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Plug-in entropy of the oracle map and its mutual information with the
/// discretized expert outputs.
pub fn estimate_fano_inputs(validation: &Dataset, discretizer: Discretizer) -> Result<FanoInputs> {
    validation.require_nonempty()?;
    let best = oracle_map(validation)?;
    let k = validation.num_experts();

    let mut profile_ids: HashMap<Vec<usize>, usize> = HashMap::new();
    let profiles: Vec<usize> = validation
        .records()
        .iter()
        .map(|r| {
            let key = match discretizer {
                Discretizer::ArgmaxProfile => r.experts().map(argmax).collect::<Vec<_>>(),
            };
            let next = profile_ids.len();
            *profile_ids.entry(key).or_insert(next)
        })
        .collect();

    let n = validation.len() as f64;
    let mut best_counts = vec![0usize; k];
    let mut profile_counts = vec![0usize; profile_ids.len()];
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    for (&p, &b) in profiles.iter().zip(&best) {
        best_counts[b] += 1;
        profile_counts[p] += 1;
        *joint.entry((p, b)).or_insert(0) += 1;
    }

    let entropy_h = entropy(best_counts.iter().copied(), n);
    let mut cells: Vec<_> = joint.into_iter().collect();
    cells.sort_unstable();
    let mutual_info_i: f64 = cells
        .iter()
        .map(|&((p, b), c)| {
            let pj = c as f64 / n;
            let pp = profile_counts[p] as f64 / n;
            let pb = best_counts[b] as f64 / n;
            pj * (pj / (pp * pb)).ln()
        })
        .sum();

    Ok(FanoInputs {
        entropy_h,
        mutual_info_i: mutual_info_i.max(0.0),
        num_experts: k,
    })
}

/// `(H - I - ln 2) / ln(K - 1)`, clamped to `[0, 1]`.
pub fn fano_lower_bound(inputs: &FanoInputs) -> Result<f64> {
    if inputs.num_experts < 3 {
        return Err(Error::InvalidK(inputs.num_experts));
    }
    let raw = (inputs.entropy_h - inputs.mutual_info_i - std::f64::consts::LN_2)
        / ((inputs.num_experts - 1) as f64).ln();
    Ok(raw.clamp(0.0, 1.0))
}
