//! Command-line surface: one subcommand per pipeline stage plus `run` for manifests.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use foe::analysis::{estimate_fano_inputs, fano_lower_bound, Discretizer};
use foe::dataio::{generate_synthetic, load_dataset, write_dataset, ErrorMode, SplitSizes, SynthConfig};
use foe::frugal::frontier_tsv;
use foe::fusion::{evaluate, MlpFuser, Strategy, TrainConfig};
use foe::presets;

use crate::error::CliResult;
use crate::manifest::{run_manifest, ExperimentManifest};
use crate::output::{self, document, emit, render_json, to_value};
use crate::pipeline::{self, invalid, FrugalSettings, FuserChoice, InnerKnnChoice, Target};

#[derive(Debug, Parser)]
#[command(
    name = "foe",
    version,
    about = "Fuse expert outputs and select experts under a query budget"
)]
pub struct Cli {
    /// Seed for generation and training; overrides any seed in a manifest.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train, validation and test splits of a synthetic expert mixture.
    Synth(SynthArgs),
    /// Train an MLP fuser on a subset of experts.
    TrainFuser(TrainFuserArgs),
    /// Evaluate a fusion strategy on a test split.
    Eval(EvalArgs),
    /// Run frugal expert selection, optionally over several lambdas.
    Frugal(FrugalArgs),
    /// Information-theoretic analysis of a validation split.
    Analyze(AnalyzeArgs),
    /// Run every strategy of an experiment manifest.
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    K10Mixture,
    K6Mixture,
    K4Mixture,
    DisjointMixture,
}

impl Preset {
    fn config(self) -> SynthConfig {
        match self {
            Preset::K10Mixture => presets::k10_mixture(),
            Preset::K6Mixture => presets::k6_mixture(),
            Preset::K4Mixture => presets::k4_mixture(),
            Preset::DisjointMixture => presets::disjoint_mixture(),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ErrorModeChoice {
    SharedConfuser,
    Independent,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Start from a named configuration; other flags override its fields.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub num_domains: Option<usize>,
    #[arg(long)]
    pub num_classes: Option<usize>,
    /// Comma-separated domain probabilities; uniform when omitted.
    #[arg(long, value_delimiter = ',')]
    pub mixture_weights: Option<Vec<f64>>,
    #[arg(long)]
    pub in_domain_accuracy: Option<f64>,
    #[arg(long)]
    pub off_domain_accuracy: Option<f64>,
    #[arg(long)]
    pub confusion_temperature: Option<f64>,
    #[arg(long)]
    pub off_domain_temperature: Option<f64>,
    #[arg(long, value_enum)]
    pub error_mode: Option<ErrorModeChoice>,
    /// Record counts as `train,validation,test`.
    #[arg(long, value_delimiter = ',')]
    pub samples_per_split: Option<Vec<usize>>,
    /// Label records with their domain instead of their class.
    #[arg(long, value_enum, default_value = "class")]
    pub target: Target,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Comma-separated hidden layer widths.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
}

impl TrainArgs {
    fn config(&self, seed: Option<u64>) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            hidden: self.hidden.clone().unwrap_or(d.hidden),
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
            dropout: self.dropout.unwrap_or(d.dropout),
            divergence_ceiling: d.divergence_ceiling,
            seed: seed.unwrap_or(d.seed),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainFuserArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// `all` or a comma-separated list of expert indices.
    #[arg(long, default_value = "all")]
    pub subset: String,
    #[arg(long, value_enum, default_value = "class")]
    pub target: Target,
    #[command(flatten)]
    pub training: TrainArgs,
    /// Where to write the trained fuser.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyChoice {
    Mlp,
    Knn,
    Ensemble,
    Confidence,
    Oracle,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, value_enum)]
    pub strategy: StrategyChoice,
    /// Trained fuser file, for `--strategy mlp`.
    #[arg(long)]
    pub fuser: Option<PathBuf>,
    /// Neighbor pool, for `--strategy knn`.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    #[arg(long, default_value = "all")]
    pub subset: String,
    #[arg(long, default_value_t = pipeline::default_kappa())]
    pub kappa: usize,
    /// Report path; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FrugalArgs {
    #[arg(long)]
    pub validation: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Training split for the fuser bank.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// One lambda, or a comma-separated sweep.
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub lambda: Vec<f64>,
    #[arg(long, default_value_t = pipeline::default_m_neighbors())]
    pub m_neighbors: usize,
    #[arg(long, default_value_t = pipeline::default_kappa())]
    pub kappa: usize,
    /// Cost of every expert.
    #[arg(long, conflicts_with = "costs")]
    pub cost: Option<f64>,
    /// Comma-separated per-expert costs.
    #[arg(long, value_delimiter = ',')]
    pub costs: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "knn")]
    pub fuser: FuserChoice,
    #[arg(long)]
    pub max_queries: Option<usize>,
    /// Stop when the best candidate does not strictly lower the estimate.
    #[arg(long)]
    pub stop_on_zero: bool,
    #[arg(long, value_enum, default_value = "subset-restricted")]
    pub inner_knn: InnerKnnChoice,
    #[command(flatten)]
    pub training: TrainArgs,
    /// Report path; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Tab-separated frontier (lambda, mean_queried, accuracy).
    #[arg(long)]
    pub frontier: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub validation: PathBuf,
    /// Estimate the entropy, mutual information and error lower bound.
    #[arg(long, required = true)]
    pub fano: bool,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub manifest: PathBuf,
    /// Overrides the manifest's output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn execute(cli: Cli) -> CliResult<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Synth(a) => synth(a, seed),
        Command::TrainFuser(a) => train_fuser(a, seed),
        Command::Eval(a) => eval(a, seed),
        Command::Frugal(a) => frugal(a, seed),
        Command::Analyze(a) => analyze(a, seed),
        Command::Run(a) => run(a, seed),
    }
}

fn synth_config(a: &SynthArgs, seed: Option<u64>) -> CliResult<SynthConfig> {
    let mut cfg = match a.preset {
        Some(p) => p.config(),
        None => {
            let k = a
                .num_domains
                .ok_or_else(|| invalid("--num-domains is required without --preset"))?;
            let c = a
                .num_classes
                .ok_or_else(|| invalid("--num-classes is required without --preset"))?;
            SynthConfig::uniform(
                k,
                c,
                0.9,
                0.55,
                SplitSizes {
                    train: 1000,
                    validation: 1000,
                    test: 1000,
                },
                0,
            )
        }
    };
    if let Some(k) = a.num_domains {
        if k != cfg.num_domains {
            cfg.num_domains = k;
            cfg.mixture_weights = vec![1.0 / k as f64; k];
        }
    }
    if let Some(c) = a.num_classes {
        cfg.num_classes = c;
    }
    if let Some(w) = &a.mixture_weights {
        cfg.mixture_weights = w.clone();
    }
    if let Some(x) = a.in_domain_accuracy {
        cfg.in_domain_accuracy = x;
    }
    if let Some(x) = a.off_domain_accuracy {
        cfg.off_domain_accuracy = x;
    }
    if let Some(x) = a.confusion_temperature {
        cfg.confusion_temperature = x;
    }
    if let Some(x) = a.off_domain_temperature {
        cfg.off_domain_temperature = Some(x);
    }
    if let Some(m) = a.error_mode {
        cfg.error_mode = match m {
            ErrorModeChoice::SharedConfuser => ErrorMode::SharedConfuser,
            ErrorModeChoice::Independent => ErrorMode::Independent,
        };
    }
    if let Some(sizes) = &a.samples_per_split {
        let [train, validation, test] = sizes[..] else {
            return Err(invalid("--samples-per-split takes train,validation,test"));
        };
        cfg.samples_per_split = SplitSizes {
            train,
            validation,
            test,
        };
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn synth(a: SynthArgs, seed: Option<u64>) -> CliResult<()> {
    let cfg = synth_config(&a, seed)?;
    let splits = generate_synthetic(&cfg, a.target == Target::Expert)?;
    let mut files = Vec::new();
    for (name, ds) in [
        ("train", &splits.train),
        ("validation", &splits.validation),
        ("test", &splits.test),
    ] {
        let mut buf = Vec::new();
        write_dataset(ds, &mut buf).map_err(|e| foe::Error::Io {
            path: a.out_dir.join(name),
            source: e,
        })?;
        files.push((a.out_dir.join(format!("{name}.jsonl")), buf));
    }
    output::create_dir(&a.out_dir)?;
    for (path, buf) in &files {
        output::write_atomic(path, buf)?;
    }
    let doc = document(vec![
        ("command", json!("synth")),
        ("config", to_value(&cfg)?),
        ("target", to_value(&a.target)?),
    ]);
    output::write_json(&a.out_dir.join("synth.json"), &doc)?;
    for (path, _) in &files {
        println!("{}", path.display());
    }
    Ok(())
}

fn train_fuser(a: TrainFuserArgs, seed: Option<u64>) -> CliResult<()> {
    let train = load_dataset(&a.train)?;
    let config = a.training.config(seed);
    let fuser = pipeline::train_fuser(&train, &a.subset, a.target, &config)?;
    output::write_atomic(&a.out, fuser.to_json().as_bytes())?;
    let doc = document(vec![
        ("command", json!("train-fuser")),
        (
            "config",
            json!({
                "train": a.train,
                "subset": a.subset,
                "target": a.target,
                "training": to_value(&config)?,
                "out": a.out,
            }),
        ),
        ("train_report", to_value(fuser.train_report())?),
    ]);
    emit(None, &render_json(&doc)?)
}

fn eval(a: EvalArgs, seed: Option<u64>) -> CliResult<()> {
    let test = load_dataset(&a.test)?;
    let report = match a.strategy {
        StrategyChoice::Mlp => {
            let path = a
                .fuser
                .as_ref()
                .ok_or_else(|| invalid("--strategy mlp needs --fuser"))?;
            evaluate(&Strategy::Mlp(&MlpFuser::load(path)?), &test)?
        }
        StrategyChoice::Knn => {
            let path = a
                .validation
                .as_ref()
                .ok_or_else(|| invalid("--strategy knn needs --validation"))?;
            pipeline::knn_report(&load_dataset(path)?, &test, &a.subset, a.kappa)?
        }
        StrategyChoice::Ensemble => evaluate(&Strategy::Ensemble, &test)?,
        StrategyChoice::Confidence => evaluate(&Strategy::Confidence, &test)?,
        StrategyChoice::Oracle => evaluate(&Strategy::Oracle, &test)?,
    };
    let mut config = json!({
        "test": a.test,
        "strategy": format!("{:?}", a.strategy).to_lowercase(),
        "seed": seed,
    });
    match a.strategy {
        StrategyChoice::Mlp => config["fuser"] = json!(a.fuser),
        StrategyChoice::Knn => {
            config["validation"] = json!(a.validation);
            config["subset"] = json!(a.subset);
            config["kappa"] = json!(a.kappa);
        }
        _ => {}
    }
    let doc = document(vec![
        ("command", json!("eval")),
        ("config", config),
        ("report", to_value(&report)?),
    ]);
    emit(a.out.as_deref(), &render_json(&doc)?)
}

fn frugal(a: FrugalArgs, seed: Option<u64>) -> CliResult<()> {
    let validation = load_dataset(&a.validation)?;
    let test = load_dataset(&a.test)?;
    let train = a.train.as_ref().map(load_dataset).transpose()?;
    let settings = FrugalSettings {
        m_neighbors: a.m_neighbors,
        kappa: a.kappa,
        cost: a.cost,
        costs: a.costs.clone(),
        fuser: a.fuser,
        max_queries: a.max_queries,
        stop_on_zero: a.stop_on_zero,
        inner_knn: a.inner_knn,
        lambdas: a.lambda.clone(),
        train: a.training.config(seed),
    };
    let reports = pipeline::frugal_reports(&settings, train.as_ref(), &validation, &test)?;
    let doc = document(vec![
        ("command", json!("frugal")),
        (
            "config",
            json!({
                "validation": a.validation,
                "test": a.test,
                "train": a.train,
                "settings": to_value(&settings)?,
            }),
        ),
        ("reports", to_value(&reports)?),
    ]);
    let points: Vec<_> = reports.iter().map(|r| r.frontier).collect();
    let report_text = render_json(&doc)?;
    if let Some(path) = &a.frontier {
        output::write_atomic(path, frontier_tsv(&points).as_bytes())?;
    }
    emit(a.out.as_deref(), &report_text)
}

fn analyze(a: AnalyzeArgs, seed: Option<u64>) -> CliResult<()> {
    let validation = load_dataset(&a.validation)?;
    let inputs = estimate_fano_inputs(&validation, Discretizer::ArgmaxProfile)?;
    let bound = fano_lower_bound(&inputs)?;
    if a.json {
        let doc = document(vec![
            ("command", json!("analyze")),
            (
                "config",
                json!({"validation": a.validation, "discretizer": "argmax_profile", "seed": seed}),
            ),
            (
                "fano",
                json!({
                    "entropy_h": inputs.entropy_h,
                    "mutual_info_i": inputs.mutual_info_i,
                    "num_experts": inputs.num_experts,
                    "bound": bound,
                }),
            ),
        ]);
        emit(None, &render_json(&doc)?)
    } else {
        emit(
            None,
            &format!(
                "H\t{}\nI\t{}\nK\t{}\nbound\t{}\n",
                output::cell(inputs.entropy_h),
                output::cell(inputs.mutual_info_i),
                inputs.num_experts,
                output::cell(bound)
            ),
        )
    }
}

fn run(a: RunArgs, seed: Option<u64>) -> CliResult<()> {
    let manifest = ExperimentManifest::load(&a.manifest, seed)?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let artifacts = run_manifest(&manifest, base, a.out_dir.as_deref())?;
    let table = std::fs::read_to_string(&artifacts.comparison).map_err(|e| foe::Error::Io {
        path: artifacts.comparison.clone(),
        source: e,
    })?;
    emit(None, &table)
}
