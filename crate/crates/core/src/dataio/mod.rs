//! Expert-output datasets: schema, records, file format and the synthetic
//! domain-mixture generator.

mod jsonl;
mod synth;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use jsonl::{format_float, load_dataset, read_dataset, save_dataset, write_dataset};
pub use synth::{generate_synthetic, ErrorMode, SplitSizes, Splits, SynthConfig};

use crate::error::{Error, Result};
use crate::subset::{SubsetMask, MAX_EXPERTS};

/// Tolerance on the unit-sum constraint of probability outputs.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// Labels are class indices in `[0, C)`.
    ClassLabel,
    /// Labels are expert indices in `[0, K)`.
    ExpertIndex,
}

impl TargetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetKind::ClassLabel => "class",
            TargetKind::ExpertIndex => "expert",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "class" => Some(TargetKind::ClassLabel),
            "expert" => Some(TargetKind::ExpertIndex),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub num_experts: usize,
    pub output_dim: usize,
    pub num_classes: usize,
    pub target_kind: TargetKind,
    /// Every output vector lies on the probability simplex.
    pub prob_outputs: bool,
}

impl DatasetSchema {
    pub fn validate(&self) -> Result<()> {
        if self.num_experts == 0 || self.num_experts > MAX_EXPERTS {
            return Err(Error::InvalidConfig(format!(
                "num_experts must be in [1, {MAX_EXPERTS}], got {}",
                self.num_experts
            )));
        }
        if self.output_dim == 0 {
            return Err(Error::InvalidConfig("output_dim must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if self.prob_outputs && self.output_dim != self.num_classes {
            return Err(Error::InvalidConfig(format!(
                "probability outputs need output_dim == num_classes ({} != {})",
                self.output_dim, self.num_classes
            )));
        }
        Ok(())
    }

    /// Number of distinct target values.
    pub fn num_targets(&self) -> usize {
        match self.target_kind {
            TargetKind::ClassLabel => self.num_classes,
            TargetKind::ExpertIndex => self.num_experts,
        }
    }

    /// Length of the concatenated outputs of `subset`.
    pub fn feature_len(&self, subset: SubsetMask) -> usize {
        subset.len() * self.output_dim
    }

    pub(crate) fn check_subset(&self, subset: SubsetMask) -> Result<()> {
        if subset.is_empty() {
            return Err(Error::InvalidConfig("expert subset must be nonempty".into()));
        }
        if subset.span() > self.num_experts {
            return Err(Error::SchemaMismatch {
                line: None,
                expected: format!("experts below {}", self.num_experts),
                found: format!("subset {subset}"),
            });
        }
        Ok(())
    }

    pub(crate) fn check_compatible(&self, other: &DatasetSchema) -> Result<()> {
        if self.num_experts != other.num_experts
            || self.output_dim != other.output_dim
            || self.num_classes != other.num_classes
            || self.target_kind != other.target_kind
        {
            return Err(Error::SchemaMismatch {
                line: None,
                expected: self.describe(),
                found: other.describe(),
            });
        }
        Ok(())
    }

    pub(crate) fn describe(&self) -> String {
        format!(
            "K={} d={} C={} target={}",
            self.num_experts,
            self.output_dim,
            self.num_classes,
            self.target_kind.as_str()
        )
    }
}

/// One sample: its id, true domain, target and the outputs of every expert.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertOutputRecord {
    pub id: u64,
    pub domain: usize,
    pub label: usize,
    /// `K * d` values, expert-major: expert `k` occupies `[k*d, (k+1)*d)`.
    outputs: Vec<f64>,
    output_dim: usize,
}

impl ExpertOutputRecord {
    /// Builds a record from per-expert vectors. All vectors must share one length.
    pub fn new(id: u64, domain: usize, label: usize, outputs: Vec<Vec<f64>>) -> Self {
        let output_dim = outputs.first().map_or(0, Vec::len);
        assert!(
            outputs.iter().all(|v| v.len() == output_dim),
            "ragged expert outputs"
        );
        Self {
            id,
            domain,
            label,
            outputs: outputs.concat(),
            output_dim,
        }
    }

    pub(crate) fn from_flat(
        id: u64,
        domain: usize,
        label: usize,
        outputs: Vec<f64>,
        output_dim: usize,
    ) -> Self {
        debug_assert!(output_dim > 0 && outputs.len().is_multiple_of(output_dim));
        Self {
            id,
            domain,
            label,
            outputs,
            output_dim,
        }
    }

    pub fn num_experts(&self) -> usize {
        self.outputs.len().checked_div(self.output_dim).unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Output vector of expert `k`.
    pub fn expert(&self, k: usize) -> &[f64] {
        &self.outputs[k * self.output_dim..(k + 1) * self.output_dim]
    }

    pub fn experts(&self) -> impl Iterator<Item = &[f64]> {
        self.outputs.chunks(self.output_dim.max(1))
    }

    /// All outputs, expert-major.
    pub fn flat_outputs(&self) -> &[f64] {
        &self.outputs
    }

    /// Concatenation of the outputs of the experts in `subset`, ascending index order.
    pub fn features(&self, subset: SubsetMask) -> Vec<f64> {
        let mut out = Vec::with_capacity(subset.len() * self.output_dim);
        for k in subset.indices() {
            out.extend_from_slice(self.expert(k));
        }
        out
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = label;
        self
    }

    /// Checks this record against `schema`; `line` is the file line reported in errors.
    pub(crate) fn validate(&self, schema: &DatasetSchema, line: usize) -> Result<()> {
        if self.num_experts() != schema.num_experts {
            return Err(Error::SchemaMismatch {
                line: Some(line),
                expected: format!("K={} output vectors", schema.num_experts),
                found: format!("{} output vectors", self.num_experts()),
            });
        }
        if self.output_dim != schema.output_dim {
            return Err(Error::SchemaMismatch {
                line: Some(line),
                expected: format!("d={}", schema.output_dim),
                found: format!("vector length {}", self.output_dim),
            });
        }
        if self.domain >= schema.num_experts {
            return Err(Error::malformed(
                line,
                "domain",
                format!("{} not below K={}", self.domain, schema.num_experts),
            ));
        }
        let targets = schema.num_targets();
        if self.label >= targets {
            return Err(Error::malformed(
                line,
                "label",
                format!("{} not below {targets}", self.label),
            ));
        }
        for (k, v) in self.experts().enumerate() {
            if let Some(x) = v.iter().find(|x| !x.is_finite()) {
                return Err(Error::malformed(
                    line,
                    "outputs",
                    format!("expert {k}: non-finite entry {x}"),
                ));
            }
            if schema.prob_outputs {
                if let Some(x) = v.iter().find(|x| **x < 0.0) {
                    return Err(Error::malformed(
                        line,
                        "outputs",
                        format!("expert {k}: negative probability {x}"),
                    ));
                }
                let sum: f64 = v.iter().sum();
                if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                    return Err(Error::malformed(
                        line,
                        "outputs",
                        format!("expert {k}: probabilities sum to {sum}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// An immutable, validated collection of records sharing one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: DatasetSchema,
    records: Vec<ExpertOutputRecord>,
    by_id: HashMap<u64, usize>,
}

impl Dataset {
    /// Validates every record against `schema`. Errors report the line each
    /// record would occupy in a dataset file (record position + 2).
    pub fn new(schema: DatasetSchema, records: Vec<ExpertOutputRecord>) -> Result<Self> {
        schema.validate()?;
        let mut by_id = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            r.validate(&schema, i + 2)?;
            if by_id.insert(r.id, i).is_some() {
                return Err(Error::DuplicateId(r.id));
            }
        }
        Ok(Self {
            schema,
            records,
            by_id,
        })
    }

    pub fn schema(&self) -> &DatasetSchema {
        &self.schema
    }

    pub fn records(&self) -> &[ExpertOutputRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&ExpertOutputRecord> {
        self.by_id.get(&id).map(|&i| &self.records[i])
    }

    pub fn contains_id(&self, id: u64) -> bool {
        self.by_id.contains_key(&id)
    }

    pub fn num_experts(&self) -> usize {
        self.schema.num_experts
    }

    /// The first `n` records (or all of them).
    pub fn head(&self, n: usize) -> Dataset {
        let records: Vec<_> = self.records.iter().take(n).cloned().collect();
        Dataset::new(self.schema, records).expect("prefix of a valid dataset is valid")
    }

    /// Same records relabelled with their domain index.
    pub fn as_expert_target(&self) -> Dataset {
        let schema = DatasetSchema {
            target_kind: TargetKind::ExpertIndex,
            ..self.schema
        };
        let records = self
            .records
            .iter()
            .map(|r| r.clone().with_label(r.domain))
            .collect();
        Dataset::new(schema, records).expect("domain labels are always in range")
    }

    pub(crate) fn require_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::EmptyDataset)
        } else {
            Ok(())
        }
    }

    pub(crate) fn require_prob_outputs(&self) -> Result<()> {
        if self.schema.prob_outputs {
            Ok(())
        } else {
            Err(Error::NotProbabilityOutputs)
        }
    }
}

/// Per-expert query costs and the cost/error trade-off weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub costs: Vec<f64>,
    pub lambda: f64,
}

impl CostModel {
    /// Cost used for every expert unless configured otherwise.
    pub const DEFAULT_COST: f64 = 0.01;

    pub fn uniform(num_experts: usize, cost: f64, lambda: f64) -> Self {
        Self {
            costs: vec![cost; num_experts],
            lambda,
        }
    }

    pub fn validate(&self, num_experts: usize) -> Result<()> {
        if self.costs.len() != num_experts {
            return Err(Error::InvalidConfig(format!(
                "{} costs given for {num_experts} experts",
                self.costs.len()
            )));
        }
        if let Some(c) = self.costs.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "cost {c} is not a non-negative number"
            )));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda {} is not a non-negative number",
                self.lambda
            )));
        }
        Ok(())
    }

    /// `lambda * sum of costs` over `subset`, accumulated in ascending expert order.
    pub fn subset_cost(&self, subset: SubsetMask) -> f64 {
        self.lambda * subset.indices().map(|k| self.costs[k]).sum::<f64>()
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            costs: self.costs.clone(),
            lambda,
        }
    }
}
