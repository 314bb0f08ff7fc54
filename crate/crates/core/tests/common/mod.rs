//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's neighbor search, fusers or estimators.

#![allow(dead_code)]

use std::collections::BTreeMap;

use foe::dataio::{Dataset, DatasetSchema, ExpertOutputRecord};

/// Squared Euclidean distance over the experts in `subset` (ascending index,
/// left to right within a block), by indexing raw vectors.
pub fn brute_distance(a: &ExpertOutputRecord, b: &ExpertOutputRecord, subset: &[usize]) -> f64 {
    let mut acc = 0.0;
    for &k in subset {
        let (x, y) = (a.expert(k), b.expert(k));
        for i in 0..x.len() {
            let d = x[i] - y[i];
            acc += d * d;
        }
    }
    acc
}

/// Linear-scan kNN: sort every candidate by (distance, id), take `kappa`,
/// count labels, pick the lowest label with the highest count.
pub fn brute_knn(
    query: &ExpertOutputRecord,
    subset: &[usize],
    pool: &Dataset,
    kappa: usize,
    exclude_id: Option<u64>,
) -> (Vec<f64>, usize) {
    let mut scored: Vec<(f64, u64, usize)> = pool
        .records()
        .iter()
        .filter(|r| Some(r.id) != exclude_id)
        .map(|r| (brute_distance(query, r, subset), r.id, r.label))
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let targets = pool.schema().num_targets();
    let mut counts = vec![0usize; targets];
    for (_, _, label) in scored.iter().take(kappa) {
        counts[*label] += 1;
    }
    let mut best = 0;
    for t in 1..targets {
        if counts[t] > counts[best] {
            best = t;
        }
    }
    let scores = counts.iter().map(|c| *c as f64 / kappa as f64).collect();
    (scores, best)
}

/// Indices of the `m` pool records nearest to `query` over `subset`.
pub fn brute_neighbors(query: &ExpertOutputRecord, subset: &[usize], pool: &Dataset, m: usize) -> Vec<usize> {
    let mut scored: Vec<(f64, u64, usize)> = pool
        .records()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.id != query.id)
        .map(|(i, r)| (brute_distance(query, r, subset), r.id, i))
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    scored.iter().take(m).map(|s| s.2).collect()
}

pub fn bits_to_indices(bits: u64) -> Vec<usize> {
    (0..64).filter(|k| bits >> k & 1 == 1).collect()
}

/// Conditional-loss estimate recomputed from scratch: the `m` validation
/// records nearest to the query over `queried`, each scored by its own
/// leave-one-out kNN fuser over `inner` (the candidate subset, or every expert),
/// plus `lambda` times the summed costs of `candidate`.
#[allow(clippy::too_many_arguments)]
pub fn reference_estimate(
    query: &ExpertOutputRecord,
    validation: &Dataset,
    candidate: &[usize],
    queried: &[usize],
    inner: &[usize],
    m: usize,
    kappa: usize,
    lambda: f64,
    costs: &[f64],
) -> f64 {
    let neighbors = brute_neighbors(query, queried, validation, m);
    let mut wrong = 0usize;
    for &i in &neighbors {
        let r = &validation.records()[i];
        let (_, pred) = brute_knn(r, inner, validation, kappa, Some(r.id));
        if pred != r.label {
            wrong += 1;
        }
    }
    let mut cost = 0.0;
    for &k in candidate {
        cost += costs[k];
    }
    wrong as f64 / neighbors.len() as f64 + lambda * cost
}

/// Enumeration over every bitmask `1..2^K` with the tie rule
/// (length, cardinality, bitmask).
pub fn enumerate_best_subset(
    query: &ExpertOutputRecord,
    validation: &Dataset,
    m: usize,
    kappa: usize,
    lambda: f64,
    costs: &[f64],
) -> (u64, f64) {
    let k = validation.num_experts();
    let mut best: Option<(u64, f64)> = None;
    for bits in 1u64..(1 << k) {
        let s = bits_to_indices(bits);
        let length = reference_estimate(query, validation, &s, &s, &s, m, kappa, lambda, costs);
        let replace = match best {
            None => true,
            Some((b, bl)) => length < bl || (length == bl && (bits.count_ones(), bits) < (b.count_ones(), b)),
        };
        if replace {
            best = Some((bits, length));
        }
    }
    best.unwrap()
}

/// Plug-in mutual information of two discrete sequences from a contingency table.
pub fn contingency_mi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut pa: BTreeMap<usize, f64> = BTreeMap::new();
    let mut pb: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0 / n;
        *pa.entry(x).or_default() += 1.0 / n;
        *pb.entry(y).or_default() += 1.0 / n;
    }
    joint
        .iter()
        .map(|(&(x, y), &p)| p * (p / (pa[&x] * pb[&y])).ln())
        .sum()
}

pub fn plugin_entropy(a: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for &x in a {
        *counts.entry(x).or_default() += 1.0;
    }
    counts.values().map(|c| -(c / n) * (c / n).ln()).sum()
}

pub fn first_argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Relabels experts: new expert `j` is old expert `perm[j]`, and a record
/// from old domain `d` moves to the new index of `d`.
pub fn permute_experts(ds: &Dataset, perm: &[usize]) -> Dataset {
    let mut inverse = vec![0; perm.len()];
    for (j, &old) in perm.iter().enumerate() {
        inverse[old] = j;
    }
    let records = ds
        .records()
        .iter()
        .map(|r| {
            let outputs = perm.iter().map(|&old| r.expert(old).to_vec()).collect();
            ExpertOutputRecord::new(r.id, inverse[r.domain], r.label, outputs)
        })
        .collect();
    let schema: DatasetSchema = *ds.schema();
    Dataset::new(schema, records).unwrap()
}

/// Malformed fixture files and the error code each must raise.
pub const MALFORMED_FIXTURES: [(&str, &str); 9] = [
    ("negative_entry.jsonl", "MalformedRecord"),
    ("wrong_arity.jsonl", "SchemaMismatch"),
    ("wrong_dim.jsonl", "SchemaMismatch"),
    ("duplicate_id.jsonl", "DuplicateId"),
    ("missing_domain.jsonl", "MalformedRecord"),
    ("bad_sum.jsonl", "MalformedRecord"),
    ("label_out_of_range.jsonl", "MalformedRecord"),
    ("truncated_line.jsonl", "MalformedRecord"),
    ("header_mismatch.jsonl", "MalformedRecord"),
];

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}
