//! Feed-forward fuser trained on concatenated expert outputs.
//!
//! Architecture: affine layers with rectifier activations between them and
//! inverted dropout on the input of the final layer. Training minimizes mean
//! softmax cross-entropy with AdamW (decoupled weight decay applied to every
//! parameter) over shuffled mini-batches, with a per-epoch cosine-annealed
//! learning rate `lr * (1 + cos(pi * epoch / epochs)) / 2`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::Prediction;
use crate::dataio::{Dataset, TargetKind};
use crate::error::{Error, Result};
use crate::neighbors::Query;
use crate::rng::Stream;
use crate::subset::SubsetMask;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    /// Mean batch loss above this value counts as divergence.
    pub divergence_ceiling: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256],
            epochs: 50,
            batch_size: 64,
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            dropout: 0.5,
            divergence_ceiling: 1e3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub final_loss: f64,
    pub epochs_run: usize,
    pub seed: u64,
    /// Every input feature was constant over the training set.
    pub zero_input_variance: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `(fan_out, fan_in)`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weights.t()) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpFuser {
    subset: SubsetMask,
    target_kind: TargetKind,
    num_experts: usize,
    expert_dim: usize,
    dropout: f64,
    layers: Vec<Dense>,
    report: TrainReport,
}

/// Gradients of the mean cross-entropy, laid out like [`MlpFuser::flat_parameters`].
pub type FlatGradients = Vec<f64>;

/// Weight and bias gradients (or moments) of every layer.
type LayerGrads = Vec<(Array2<f64>, Array1<f64>)>;

impl MlpFuser {
    /// An untrained fuser with fan-in uniform initialization
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for weights and biases.
    pub fn initialized(
        dataset: &Dataset,
        subset: SubsetMask,
        target_kind: TargetKind,
        config: &TrainConfig,
    ) -> Result<Self> {
        let mut fuser = Self::zeros(dataset, subset, target_kind, &config.hidden)?;
        fuser.dropout = config.dropout;
        fuser.report.seed = config.seed;
        let mut stream = Stream::substream(config.seed, 0);
        for layer in &mut fuser.layers {
            let bound = 1.0 / (layer.weights.ncols() as f64).sqrt();
            layer
                .weights
                .mapv_inplace(|_| stream.uniform_range(-bound, bound));
            layer.bias.mapv_inplace(|_| stream.uniform_range(-bound, bound));
        }
        Ok(fuser)
    }

    /// A fuser whose weights and biases are all zero.
    pub fn zeros(
        dataset: &Dataset,
        subset: SubsetMask,
        target_kind: TargetKind,
        hidden: &[usize],
    ) -> Result<Self> {
        let schema = dataset.schema();
        schema.check_subset(subset)?;
        if target_kind == TargetKind::ClassLabel && schema.target_kind != TargetKind::ClassLabel {
            return Err(Error::SchemaMismatch {
                line: None,
                expected: "class-labelled dataset".into(),
                found: "expert-index labels".into(),
            });
        }
        let out = match target_kind {
            TargetKind::ClassLabel => schema.num_classes,
            TargetKind::ExpertIndex => schema.num_experts,
        };
        let mut dims = vec![schema.feature_len(subset)];
        dims.extend_from_slice(hidden);
        dims.push(out);
        let layers = dims
            .windows(2)
            .map(|w| Dense {
                weights: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Self {
            subset,
            target_kind,
            num_experts: schema.num_experts,
            expert_dim: schema.output_dim,
            dropout: 0.0,
            layers,
            report: TrainReport {
                final_loss: f64::NAN,
                epochs_run: 0,
                seed: 0,
                zero_input_variance: false,
            },
        })
    }

    pub fn subset(&self) -> SubsetMask {
        self.subset
    }

    pub fn target_kind(&self) -> TargetKind {
        self.target_kind
    }

    pub fn train_report(&self) -> &TrainReport {
        &self.report
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// `[input, hidden..., output]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].weights.ncols()];
        dims.extend(self.layers.iter().map(|l| l.weights.nrows()));
        dims
    }

    /// Target value of `record` for this fuser: its label or its domain.
    pub fn target_of(&self, record: &crate::dataio::ExpertOutputRecord) -> usize {
        match self.target_kind {
            TargetKind::ClassLabel => record.label,
            TargetKind::ExpertIndex => record.domain,
        }
    }

    /// Feature matrix for `dataset` restricted to this fuser's subset.
    pub fn feature_matrix(&self, dataset: &Dataset) -> Array2<f64> {
        features(dataset, self.subset)
    }

    fn check_query(&self, query: &Query<'_>) -> Result<()> {
        if query.output_dim() != self.expert_dim || query.num_experts() != self.num_experts {
            return Err(Error::SchemaMismatch {
                line: None,
                expected: format!("K={} d={}", self.num_experts, self.expert_dim),
                found: format!("K={} d={}", query.num_experts(), query.output_dim()),
            });
        }
        Ok(())
    }

    /// Inference-mode logits (dropout inactive).
    pub fn logits(&self, inputs: &Array2<f64>) -> Array2<f64> {
        let mut a = inputs.clone();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            a = layer.forward(&a);
            if l < last {
                a.mapv_inplace(relu);
            }
        }
        a
    }

    pub fn predict(&self, query: &Query<'_>) -> Result<Prediction> {
        self.check_query(query)?;
        let x = Array2::from_shape_vec((1, self.layers[0].weights.ncols()), query.features(self.subset))
            .expect("feature length matches input layer");
        let logits = self.logits(&x);
        Ok(Prediction::from_scores(softmax_row(
            logits.row(0).as_slice().unwrap(),
        )))
    }

    /// Predictions for every record of `dataset`, in order.
    pub fn predict_dataset(&self, dataset: &Dataset) -> Result<Vec<Prediction>> {
        if let Some(r) = dataset.records().first() {
            self.check_query(&Query::from(r))?;
        }
        let x = self.feature_matrix(dataset);
        let logits = self.logits(&x);
        Ok(logits
            .rows()
            .into_iter()
            .map(|row| Prediction::from_scores(softmax_row(&row.to_vec())))
            .collect())
    }

    /// Mean cross-entropy on `(inputs, targets)` with dropout inactive.
    pub fn batch_loss(&self, inputs: &Array2<f64>, targets: &[usize]) -> f64 {
        let logits = self.logits(inputs);
        cross_entropy(&logits, targets).0
    }

    /// Analytic gradient of [`Self::batch_loss`].
    pub fn batch_gradients(&self, inputs: &Array2<f64>, targets: &[usize]) -> FlatGradients {
        let (_, grads) = self.loss_and_grads(inputs, targets, None);
        grads
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied().collect::<Vec<_>>())
            .collect()
    }

    /// Parameters in layer order, each layer's weights (row-major) then bias.
    pub fn flat_parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
            .collect()
    }

    pub fn set_flat_parameters(&mut self, params: &[f64]) {
        let mut it = params.iter();
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = *it.next().expect("parameter vector too short");
            }
        }
        assert!(it.next().is_none(), "parameter vector too long");
    }

    /// Forward and backward pass. `dropout_masks`, when given, holds the scaled
    /// keep-mask applied to the input of the final layer.
    fn loss_and_grads(
        &self,
        inputs: &Array2<f64>,
        targets: &[usize],
        dropout_mask: Option<&Array2<f64>>,
    ) -> (f64, LayerGrads) {
        let depth = self.layers.len();
        let mut acts = Vec::with_capacity(depth);
        let mut pre = Vec::with_capacity(depth);
        acts.push(inputs.clone());
        for l in 0..depth - 1 {
            let z = self.layers[l].forward(&acts[l]);
            let mut a = z.mapv(relu);
            if l == depth - 2 {
                if let Some(mask) = dropout_mask {
                    a *= mask;
                }
            }
            pre.push(z);
            acts.push(a);
        }
        let logits = self.layers[depth - 1].forward(&acts[depth - 1]);
        let (loss, mut grad) = cross_entropy(&logits, targets);

        let mut grads = Vec::with_capacity(depth);
        for l in (0..depth).rev() {
            let dw = grad.t().dot(&acts[l]);
            let db = grad.sum_axis(Axis(0));
            grads.push((dw, db));
            if l > 0 {
                let mut back = grad.dot(&self.layers[l].weights);
                if l == depth - 1 {
                    if let Some(mask) = dropout_mask {
                        back *= mask;
                    }
                }
                back.zip_mut_with(&pre[l - 1], |g, z| {
                    if *z <= 0.0 {
                        *g = 0.0;
                    }
                });
                grad = back;
            }
        }
        grads.reverse();
        (loss, grads)
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Exponential normalization, stabilized by subtracting the maximum.
pub(crate) fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean cross-entropy and its gradient with respect to the logits.
fn cross_entropy(logits: &Array2<f64>, targets: &[usize]) -> (f64, Array2<f64>) {
    let n = logits.nrows() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for (i, row) in logits.rows().into_iter().enumerate() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
        let log_sum = sum.ln() + max;
        total += log_sum - row[targets[i]];
        for (j, z) in row.iter().enumerate() {
            grad[[i, j]] = (z - log_sum).exp() / n;
        }
        grad[[i, targets[i]]] -= 1.0 / n;
    }
    (total / n, grad)
}

fn features(dataset: &Dataset, subset: SubsetMask) -> Array2<f64> {
    let width = dataset.schema().feature_len(subset);
    let mut x = Array2::zeros((dataset.len(), width));
    for (mut row, r) in x.rows_mut().into_iter().zip(dataset.records()) {
        for (dst, src) in row.iter_mut().zip(r.features(subset)) {
            *dst = src;
        }
    }
    x
}

struct AdamState {
    m: LayerGrads,
    v: LayerGrads,
    step: i32,
}

impl AdamState {
    fn new(layers: &[Dense]) -> Self {
        let zeros: Vec<_> = layers
            .iter()
            .map(|l| {
                (
                    Array2::zeros(l.weights.raw_dim()),
                    Array1::zeros(l.bias.raw_dim()),
                )
            })
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    fn update(&mut self, layers: &mut [Dense], grads: &[(Array2<f64>, Array1<f64>)], lr: f64, wd: f64) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        let apply = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *p *= 1.0 - lr * wd;
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        };
        for (l, layer) in layers.iter_mut().enumerate() {
            let (gw, gb) = &grads[l];
            let (mw, mb) = &mut self.m[l];
            let (vw, vb) = &mut self.v[l];
            ndarray::Zip::from(&mut layer.weights)
                .and(gw)
                .and(mw)
                .and(vw)
                .for_each(|p, g, m, v| apply(p, *g, m, v));
            ndarray::Zip::from(&mut layer.bias)
                .and(gb)
                .and(mb)
                .and(vb)
                .for_each(|p, g, m, v| apply(p, *g, m, v));
        }
    }
}

/// Trains a fuser on `train` restricted to `subset`, targeting labels
/// (`ClassLabel`) or domain indices (`ExpertIndex`).
pub fn train_mlp_fuser(
    train: &Dataset,
    subset: SubsetMask,
    target_kind: TargetKind,
    config: &TrainConfig,
) -> Result<MlpFuser> {
    config.validate()?;
    train.require_nonempty()?;
    let mut fuser = MlpFuser::initialized(train, subset, target_kind, config)?;
    let x = fuser.feature_matrix(train);
    let y: Vec<usize> = train.records().iter().map(|r| fuser.target_of(r)).collect();
    fuser.report.zero_input_variance = x.columns().into_iter().all(|c| c.iter().all(|v| *v == c[0]));

    let hidden_width = fuser.layers.last().unwrap().weights.ncols();
    let keep = 1.0 - config.dropout;
    let use_dropout = config.dropout > 0.0 && fuser.layers.len() > 1;
    let mut stream = Stream::substream(config.seed, 1);
    let mut adam = AdamState::new(&fuser.layers);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_loss = f64::NAN;

    for epoch in 0..config.epochs {
        let lr = config.learning_rate
            * 0.5
            * (1.0 + (std::f64::consts::PI * epoch as f64 / config.epochs as f64).cos());
        stream.shuffle(&mut order);
        let mut weighted = 0.0;
        for batch in order.chunks(config.batch_size) {
            let xb = x.select(Axis(0), batch);
            let yb: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
            let mask = use_dropout.then(|| {
                Array2::from_shape_fn((batch.len(), hidden_width), |_| {
                    if stream.bernoulli(keep) {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
            });
            let (loss, grads) = fuser.loss_and_grads(&xb, &yb, mask.as_ref());
            if !loss.is_finite() || loss > config.divergence_ceiling {
                return Err(Error::NonFiniteLoss { epoch, loss });
            }
            weighted += loss * batch.len() as f64;
            adam.update(&mut fuser.layers, &grads, lr, config.weight_decay);
        }
        epoch_loss = weighted / train.len() as f64;
    }

    if fuser.flat_parameters().iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFiniteLoss {
            epoch: config.epochs,
            loss: f64::NAN,
        });
    }
    fuser.report.final_loss = epoch_loss;
    fuser.report.epochs_run = config.epochs;
    Ok(fuser)
}

pub fn mlp_predict(fuser: &MlpFuser, query: &Query<'_>) -> Result<Prediction> {
    fuser.predict(query)
}

#[derive(Serialize, Deserialize)]
struct FuserFile {
    subset: u64,
    target_kind: TargetKind,
    num_experts: usize,
    expert_dim: usize,
    dropout: f64,
    layer_dims: Vec<usize>,
    /// Row-major `(fan_out, fan_in)` per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    train_report: TrainReport,
}

impl MlpFuser {
    pub fn to_json(&self) -> String {
        let file = FuserFile {
            subset: self.subset.bits(),
            target_kind: self.target_kind,
            num_experts: self.num_experts,
            expert_dim: self.expert_dim,
            dropout: self.dropout,
            layer_dims: self.layer_dims(),
            weights: self
                .layers
                .iter()
                .map(|l| l.weights.iter().copied().collect())
                .collect(),
            biases: self.layers.iter().map(|l| l.bias.to_vec()).collect(),
            train_report: self.report.clone(),
        };
        serde_json::to_string(&file).expect("fuser serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: FuserFile = serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        let dims = &file.layer_dims;
        if dims.len() < 2 || file.weights.len() != dims.len() - 1 || file.biases.len() != dims.len() - 1 {
            return Err(Error::Serialization("layer count mismatch".into()));
        }
        let subset = SubsetMask::from_bits(file.subset);
        if dims[0] != subset.len() * file.expert_dim {
            return Err(Error::Serialization("input width does not match subset".into()));
        }
        let mut layers = Vec::new();
        for (i, (w, b)) in file.weights.into_iter().zip(file.biases).enumerate() {
            let weights = Array2::from_shape_vec((dims[i + 1], dims[i]), w)
                .map_err(|e| Error::Serialization(e.to_string()))?;
            if b.len() != dims[i + 1] {
                return Err(Error::Serialization("bias length mismatch".into()));
            }
            layers.push(Dense {
                weights,
                bias: Array1::from(b),
            });
        }
        Ok(Self {
            subset,
            target_kind: file.target_kind,
            num_experts: file.num_experts,
            expert_dim: file.expert_dim,
            dropout: file.dropout,
            layers,
            report: file.train_report,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
