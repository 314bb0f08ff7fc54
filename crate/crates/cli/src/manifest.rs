//! Manifest-driven experiments: load or synthesize splits, run every listed
//! strategy, then write one report per strategy, a comparison table and
//! frontier files for frugal sweeps.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use foe::dataio::{generate_synthetic, load_dataset, Dataset, SynthConfig};
use foe::frugal::{frontier_tsv, FrugalReport};
use foe::fusion::{evaluate, MetricsReport, Strategy, TrainConfig, TrainReport};

use crate::error::{CliError, CliResult};
use crate::output::{self, cell, document, to_value};
use crate::pipeline::{self, default_kappa, FrugalSettings, Target};

pub const STRATEGY_KINDS: [&str; 6] = ["oracle", "ensemble", "confidence", "mlp", "knn", "frugal"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub name: String,
    pub seed: u64,
    /// Relative paths are taken from the manifest's directory.
    pub output_dir: PathBuf,
    pub dataset: DatasetSource,
    pub strategies: Vec<StrategyConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synth {
        config: SynthConfig,
        #[serde(default = "class_target")]
        target: Target,
    },
    Files {
        #[serde(default)]
        train: Option<PathBuf>,
        #[serde(default)]
        validation: Option<PathBuf>,
        test: PathBuf,
    },
}

fn class_target() -> Target {
    Target::Class
}

fn all_experts() -> String {
    "all".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategyConfig {
    Oracle {
        #[serde(default = "kind_oracle")]
        name: String,
    },
    Ensemble {
        #[serde(default = "kind_ensemble")]
        name: String,
    },
    Confidence {
        #[serde(default = "kind_confidence")]
        name: String,
    },
    Mlp {
        #[serde(default = "kind_mlp")]
        name: String,
        #[serde(default = "all_experts")]
        subset: String,
        #[serde(default = "class_target")]
        target: Target,
        #[serde(default)]
        train: TrainConfig,
    },
    Knn {
        #[serde(default = "kind_knn")]
        name: String,
        #[serde(default = "all_experts")]
        subset: String,
        #[serde(default = "default_kappa")]
        kappa: usize,
    },
    Frugal {
        #[serde(default = "kind_frugal")]
        name: String,
        settings: FrugalSettings,
    },
}

fn kind_oracle() -> String {
    "oracle".into()
}
fn kind_ensemble() -> String {
    "ensemble".into()
}
fn kind_confidence() -> String {
    "confidence".into()
}
fn kind_mlp() -> String {
    "mlp".into()
}
fn kind_knn() -> String {
    "knn".into()
}
fn kind_frugal() -> String {
    "frugal".into()
}

impl StrategyConfig {
    pub fn name(&self) -> &str {
        match self {
            StrategyConfig::Oracle { name }
            | StrategyConfig::Ensemble { name }
            | StrategyConfig::Confidence { name }
            | StrategyConfig::Mlp { name, .. }
            | StrategyConfig::Knn { name, .. }
            | StrategyConfig::Frugal { name, .. } => name,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            StrategyConfig::Oracle { .. } => "oracle",
            StrategyConfig::Ensemble { .. } => "ensemble",
            StrategyConfig::Confidence { .. } => "confidence",
            StrategyConfig::Mlp { .. } => "mlp",
            StrategyConfig::Knn { .. } => "knn",
            StrategyConfig::Frugal { .. } => "frugal",
        }
    }
}

/// Fills a missing `seed` key of `object` with `seed`.
fn default_seed(object: &mut Map<String, Value>, seed: u64) {
    object.entry("seed").or_insert_with(|| json!(seed));
}

fn manifest_error(message: impl Into<String>) -> CliError {
    CliError::InvalidManifest(message.into())
}

impl ExperimentManifest {
    /// Parses manifest JSON. The global seed fills in any synth or training
    /// config that does not set its own; `seed_override` replaces the global seed.
    pub fn parse(text: &str, seed_override: Option<u64>) -> CliResult<Self> {
        let mut root: Value = serde_json::from_str(text).map_err(|e| manifest_error(e.to_string()))?;
        let map = root
            .as_object_mut()
            .ok_or_else(|| manifest_error("manifest must be a JSON object"))?;
        if let Some(seed) = seed_override {
            map.insert("seed".into(), json!(seed));
        }
        let seed = map
            .get("seed")
            .and_then(Value::as_u64)
            .ok_or_else(|| manifest_error("`seed` must be a non-negative integer"))?;

        if let Some(config) = map
            .get_mut("dataset")
            .and_then(|d| d.get_mut("synth"))
            .and_then(|s| s.get_mut("config"))
            .and_then(Value::as_object_mut)
        {
            default_seed(config, seed);
        }
        let strategies = map
            .get_mut("strategies")
            .and_then(Value::as_array_mut)
            .ok_or_else(|| manifest_error("`strategies` must be a list"))?;
        for s in strategies.iter_mut() {
            let object = s
                .as_object_mut()
                .ok_or_else(|| manifest_error("each strategy must be an object"))?;
            let kind = object
                .get("kind")
                .and_then(Value::as_str)
                .ok_or_else(|| manifest_error("each strategy needs a string `kind`"))?
                .to_string();
            if !STRATEGY_KINDS.contains(&kind.as_str()) {
                return Err(CliError::UnknownStrategy(kind));
            }
            let holder = match kind.as_str() {
                "mlp" => Some(object),
                "frugal" => object
                    .entry("settings")
                    .or_insert_with(|| json!({}))
                    .as_object_mut(),
                _ => None,
            };
            if let Some(holder) = holder {
                if let Some(t) = holder.entry("train").or_insert_with(|| json!({})).as_object_mut() {
                    default_seed(t, seed);
                }
            }
        }

        let manifest: ExperimentManifest =
            serde_json::from_value(root).map_err(|e| manifest_error(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn load(path: &Path, seed_override: Option<u64>) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| foe::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text, seed_override)
    }

    fn validate(&self) -> CliResult<()> {
        if self.strategies.is_empty() {
            return Err(manifest_error("no strategies listed"));
        }
        let mut seen = BTreeSet::new();
        for s in &self.strategies {
            let name = s.name();
            let valid = !name.is_empty()
                && name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
            if !valid || name.starts_with('.') {
                return Err(manifest_error(format!(
                    "strategy name `{name}` is not a plain file name"
                )));
            }
            if name == "comparison" || !seen.insert(name) {
                return Err(manifest_error(format!(
                    "strategy name `{name}` is reserved or repeated"
                )));
            }
        }
        if let DatasetSource::Synth { config, .. } = &self.dataset {
            config.validate()?;
        }
        Ok(())
    }
}

/// The splits a manifest runs on. Absent file splits are empty.
pub struct Data {
    pub train: Option<Dataset>,
    pub validation: Option<Dataset>,
    pub test: Dataset,
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

impl DatasetSource {
    pub fn materialize(&self, base: &Path) -> CliResult<Data> {
        match self {
            DatasetSource::Synth { config, target } => {
                let s = generate_synthetic(config, *target == Target::Expert)?;
                Ok(Data {
                    train: Some(s.train),
                    validation: Some(s.validation),
                    test: s.test,
                })
            }
            DatasetSource::Files {
                train,
                validation,
                test,
            } => {
                let load = |p: &Option<PathBuf>| -> CliResult<Option<Dataset>> {
                    p.as_ref()
                        .map(|p| load_dataset(resolve(base, p)))
                        .transpose()
                        .map_err(Into::into)
                };
                Ok(Data {
                    train: load(train)?,
                    validation: load(validation)?,
                    test: load_dataset(resolve(base, test))?,
                })
            }
        }
    }
}

pub enum StrategyOutcome {
    Metrics {
        report: MetricsReport,
        experts_used: usize,
        train_report: Option<TrainReport>,
    },
    Frugal(Vec<FrugalReport>),
}

fn required<'a>(split: &'a Option<Dataset>, what: &str, strategy: &str) -> CliResult<&'a Dataset> {
    split
        .as_ref()
        .ok_or_else(|| pipeline::invalid(format!("strategy `{strategy}` needs a {what} split")))
}

pub fn run_strategy(strategy: &StrategyConfig, data: &Data) -> CliResult<StrategyOutcome> {
    let test = &data.test;
    let k = test.num_experts();
    let metrics = |strategy: Strategy<'_>, experts_used: usize| -> CliResult<StrategyOutcome> {
        Ok(StrategyOutcome::Metrics {
            report: evaluate(&strategy, test)?,
            experts_used,
            train_report: None,
        })
    };
    match strategy {
        StrategyConfig::Oracle { .. } => metrics(Strategy::Oracle, 1),
        StrategyConfig::Ensemble { .. } => metrics(Strategy::Ensemble, k),
        StrategyConfig::Confidence { .. } => metrics(Strategy::Confidence, k),
        StrategyConfig::Mlp {
            name,
            subset,
            target,
            train,
        } => {
            let split = required(&data.train, "train", name)?;
            let fuser = pipeline::train_fuser(split, subset, *target, train)?;
            Ok(StrategyOutcome::Metrics {
                report: evaluate(&Strategy::Mlp(&fuser), test)?,
                experts_used: fuser.subset().len(),
                train_report: Some(fuser.train_report().clone()),
            })
        }
        StrategyConfig::Knn { name, subset, kappa } => {
            let validation = required(&data.validation, "validation", name)?;
            let report = pipeline::knn_report(validation, test, subset, *kappa)?;
            let used = pipeline::parse_subset(subset, k)?.len();
            Ok(StrategyOutcome::Metrics {
                report,
                experts_used: used,
                train_report: None,
            })
        }
        StrategyConfig::Frugal { name, settings } => {
            let validation = required(&data.validation, "validation", name)?;
            let reports = pipeline::frugal_reports(settings, data.train.as_ref(), validation, test)?;
            Ok(StrategyOutcome::Frugal(reports))
        }
    }
}

/// Header of the comparison table.
pub const COMPARISON_HEADER: &str =
    "strategy\tkind\tlambda\trecords\taccuracy\texperts_used\texpert_selection_accuracy";

fn optional_cell(x: Option<f64>) -> String {
    x.map(cell).unwrap_or_else(|| "-".into())
}

pub fn comparison_rows(strategy: &StrategyConfig, outcome: &StrategyOutcome) -> Vec<String> {
    let (name, kind) = (strategy.name(), strategy.kind());
    match outcome {
        StrategyOutcome::Metrics {
            report, experts_used, ..
        } => vec![format!(
            "{name}\t{kind}\t-\t{}\t{}\t{}\t{}",
            report.records,
            cell(report.final_accuracy),
            cell(*experts_used as f64),
            optional_cell(report.expert_selection_accuracy)
        )],
        StrategyOutcome::Frugal(reports) => reports
            .iter()
            .map(|r| {
                format!(
                    "{name}\t{kind}\t{}\t{}\t{}\t{}\t{}",
                    cell(r.config.cost_model.lambda),
                    r.records,
                    cell(r.final_accuracy),
                    cell(r.mean_experts_queried),
                    optional_cell(r.expert_selection_accuracy)
                )
            })
            .collect(),
    }
}

/// Paths written by [`run_manifest`], in write order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunArtifacts {
    pub reports: Vec<PathBuf>,
    pub comparison: PathBuf,
    pub frontiers: Vec<PathBuf>,
}

/// Runs every strategy and only then writes artifacts, so a failing strategy
/// leaves no report behind. `base` resolves relative paths; `output_dir`
/// overrides the manifest's.
pub fn run_manifest(
    manifest: &ExperimentManifest,
    base: &Path,
    output_dir: Option<&Path>,
) -> CliResult<RunArtifacts> {
    let data = manifest.dataset.materialize(base)?;
    let outcomes = manifest
        .strategies
        .iter()
        .map(|s| run_strategy(s, &data))
        .collect::<CliResult<Vec<_>>>()?;

    let out = output_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| resolve(base, &manifest.output_dir));
    output::create_dir(&out)?;

    let dataset_echo = to_value(&manifest.dataset)?;
    let mut artifacts = RunArtifacts {
        reports: Vec::new(),
        comparison: out.join("comparison.tsv"),
        frontiers: Vec::new(),
    };
    let mut table = vec![COMPARISON_HEADER.to_string()];
    for (strategy, outcome) in manifest.strategies.iter().zip(&outcomes) {
        let mut sections = vec![
            ("experiment", json!(manifest.name)),
            ("seed", json!(manifest.seed)),
            ("dataset", dataset_echo.clone()),
            ("strategy", to_value(strategy)?),
        ];
        match outcome {
            StrategyOutcome::Metrics {
                report, train_report, ..
            } => {
                sections.push(("report", to_value(report)?));
                if let Some(t) = train_report {
                    sections.push(("train_report", to_value(t)?));
                }
            }
            StrategyOutcome::Frugal(reports) => {
                sections.push(("reports", to_value(reports)?));
                let points: Vec<_> = reports.iter().map(|r| r.frontier).collect();
                let path = out.join(format!("{}.frontier.tsv", strategy.name()));
                output::write_atomic(&path, frontier_tsv(&points).as_bytes())?;
                artifacts.frontiers.push(path);
            }
        }
        let path = out.join(format!("{}.json", strategy.name()));
        output::write_json(&path, &document(sections))?;
        artifacts.reports.push(path);
        table.extend(comparison_rows(strategy, outcome));
    }
    let mut text = table.join("\n");
    text.push('\n');
    output::write_atomic(&artifacts.comparison, text.as_bytes())?;
    Ok(artifacts)
}
