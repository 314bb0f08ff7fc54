//! Synthetic domain-mixture datasets.
//!
//! Each sample draws a domain `k ~ Categorical(alpha)` and a class
//! `y ~ Uniform[0, C)`. Expert `j` is correct with probability
//! `in_domain_accuracy` when `j == k` and `off_domain_accuracy` otherwise; a
//! correct expert puts its argmax on `y`, a wrong one on a wrong class. The
//! emitted vector is a softened point mass: the argmax carries weight
//! `exp(1 / T)`, the other `C - 1` classes weight 1 each, normalized to sum to 1.
//! `T` is `confusion_temperature` for the in-domain expert and
//! `off_domain_temperature` (defaulting to the same value) for the others.
//!
//! Draw order per sample, all from the split's stream: domain, class, confuser
//! class, then one accuracy coin per expert in index order (plus one wrong-class
//! draw per erring expert under [`ErrorMode::Independent`]). Split `i` (train 0,
//! validation 1, test 2) uses substream `i` of the seed. Record ids are
//! consecutive across the three splits. Validation and test samples follow
//! the same alpha-proportional domain mixture as training.

use serde::{Deserialize, Serialize};

use super::{format_float, Dataset, DatasetSchema, ExpertOutputRecord, TargetKind};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// How erring experts pick their wrong class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMode {
    /// One wrong class is drawn per sample and every erring expert points at it.
    #[default]
    SharedConfuser,
    /// Each erring expert draws its own wrong class.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_domains: usize,
    pub num_classes: usize,
    pub mixture_weights: Vec<f64>,
    pub in_domain_accuracy: f64,
    pub off_domain_accuracy: f64,
    pub confusion_temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub off_domain_temperature: Option<f64>,
    #[serde(default)]
    pub error_mode: ErrorMode,
    pub samples_per_split: SplitSizes,
    pub seed: u64,
}

/// Smallest temperature used; smaller requests are clamped to it.
const MIN_TEMPERATURE: f64 = 1e-6;

impl SynthConfig {
    /// Uniform mixture over `num_domains` domains.
    pub fn uniform(
        num_domains: usize,
        num_classes: usize,
        in_domain_accuracy: f64,
        off_domain_accuracy: f64,
        samples_per_split: SplitSizes,
        seed: u64,
    ) -> Self {
        Self {
            num_domains,
            num_classes,
            mixture_weights: vec![1.0 / num_domains as f64; num_domains],
            in_domain_accuracy,
            off_domain_accuracy,
            confusion_temperature: 0.25,
            off_domain_temperature: None,
            error_mode: ErrorMode::SharedConfuser,
            samples_per_split,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_domains == 0 || self.num_domains > crate::subset::MAX_EXPERTS {
            return bad(format!("num_domains out of range: {}", self.num_domains));
        }
        if self.num_classes < 2 {
            return bad(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            ));
        }
        if self.mixture_weights.len() != self.num_domains {
            return bad(format!(
                "{} mixture weights for {} domains",
                self.mixture_weights.len(),
                self.num_domains
            ));
        }
        if self.mixture_weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return bad("mixture weights must be positive".into());
        }
        let total: f64 = self.mixture_weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("mixture weights sum to {total}, not 1"));
        }
        if !(self.in_domain_accuracy > 0.0 && self.in_domain_accuracy <= 1.0) {
            return bad(format!(
                "in_domain_accuracy {} not in (0, 1]",
                self.in_domain_accuracy
            ));
        }
        if !(0.0..=1.0).contains(&self.off_domain_accuracy) {
            return bad(format!(
                "off_domain_accuracy {} not in [0, 1]",
                self.off_domain_accuracy
            ));
        }
        if self.in_domain_accuracy < self.off_domain_accuracy {
            return bad("in_domain_accuracy must be at least off_domain_accuracy".into());
        }
        for t in std::iter::once(self.confusion_temperature).chain(self.off_domain_temperature) {
            if !(t.is_finite() && t > 0.0) {
                return bad(format!("temperature {t} must be positive"));
            }
        }
        Ok(())
    }

    fn schema(&self, target_kind: TargetKind) -> DatasetSchema {
        DatasetSchema {
            num_experts: self.num_domains,
            output_dim: self.num_classes,
            num_classes: self.num_classes,
            target_kind,
            prob_outputs: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

/// Rounds to the 9-significant-digit value the dataset writer would emit.
fn quantize(x: f64) -> f64 {
    format_float(x).parse().expect("formatted float parses")
}

/// Quantized (argmax mass, mass of each other class) of a softened point mass.
fn point_mass_shape(num_classes: usize, temperature: f64) -> (f64, f64) {
    let t = temperature.max(MIN_TEMPERATURE);
    // exp(-1/T) relative weight of each non-argmax class
    let r = (-1.0 / t).exp();
    let z = 1.0 + (num_classes - 1) as f64 * r;
    (quantize(1.0 / z), quantize(r / z))
}

/// Uniform draw over the classes other than `exclude`.
fn wrong_class(stream: &mut Stream, num_classes: usize, exclude: usize) -> usize {
    let w = stream.below(num_classes - 1);
    if w >= exclude {
        w + 1
    } else {
        w
    }
}

pub fn generate_synthetic(config: &SynthConfig, as_expert_target: bool) -> Result<Splits> {
    config.validate()?;
    let target_kind = if as_expert_target {
        TargetKind::ExpertIndex
    } else {
        TargetKind::ClassLabel
    };
    let schema = config.schema(target_kind);
    let in_shape = point_mass_shape(config.num_classes, config.confusion_temperature);
    let off_shape = point_mass_shape(
        config.num_classes,
        config
            .off_domain_temperature
            .unwrap_or(config.confusion_temperature),
    );

    let sizes = config.samples_per_split;
    let mut next_id = 0u64;
    let mut make_split = |split: u32, n: usize| -> Result<Dataset> {
        let mut stream = Stream::substream(config.seed, split);
        let mut records = Vec::with_capacity(n);
        for _ in 0..n {
            let domain = stream.categorical(&config.mixture_weights);
            let class = stream.below(config.num_classes);
            let confuser = wrong_class(&mut stream, config.num_classes, class);
            let mut outputs = Vec::with_capacity(config.num_domains * config.num_classes);
            for expert in 0..config.num_domains {
                let (accuracy, (top, rest)) = if expert == domain {
                    (config.in_domain_accuracy, in_shape)
                } else {
                    (config.off_domain_accuracy, off_shape)
                };
                let vote = if stream.bernoulli(accuracy) {
                    class
                } else {
                    match config.error_mode {
                        ErrorMode::SharedConfuser => confuser,
                        ErrorMode::Independent => wrong_class(&mut stream, config.num_classes, class),
                    }
                };
                outputs.extend((0..config.num_classes).map(|c| if c == vote { top } else { rest }));
            }
            let label = if as_expert_target { domain } else { class };
            records.push(ExpertOutputRecord::from_flat(
                next_id,
                domain,
                label,
                outputs,
                config.num_classes,
            ));
            next_id += 1;
        }
        Dataset::new(schema, records)
    };

    Ok(Splits {
        train: make_split(0, sizes.train)?,
        validation: make_split(1, sizes.validation)?,
        test: make_split(2, sizes.test)?,
    })
}
