//! Steps shared by the subcommands and the manifest runner.

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use foe::dataio::{CostModel, Dataset, TargetKind};
use foe::frugal::{lambda_sweep, FrugalConfig, FrugalIndex, FrugalReport, FuserBank, FuserKind, InnerKnn};
use foe::fusion::{evaluate, train_mlp_fuser, MetricsReport, MlpFuser, Strategy, TrainConfig};
use foe::SubsetMask;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Class,
    Expert,
}

impl From<Target> for TargetKind {
    fn from(t: Target) -> Self {
        match t {
            Target::Class => TargetKind::ClassLabel,
            Target::Expert => TargetKind::ExpertIndex,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FuserChoice {
    #[default]
    Knn,
    MlpBank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InnerKnnChoice {
    #[default]
    SubsetRestricted,
    AllExperts,
}

/// Frugal selection settings, as given on the command line or in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrugalSettings {
    #[serde(default = "default_m_neighbors")]
    pub m_neighbors: usize,
    #[serde(default = "default_kappa")]
    pub kappa: usize,
    /// Cost of every expert; ignored when `costs` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<Vec<f64>>,
    #[serde(default)]
    pub fuser: FuserChoice,
    #[serde(default)]
    pub max_queries: Option<usize>,
    #[serde(default)]
    pub stop_on_zero: bool,
    #[serde(default)]
    pub inner_knn: InnerKnnChoice,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    /// Training settings of the fuser bank.
    #[serde(default)]
    pub train: TrainConfig,
}

pub fn default_m_neighbors() -> usize {
    15
}

pub fn default_kappa() -> usize {
    9
}

fn default_lambdas() -> Vec<f64> {
    vec![0.1]
}

impl FrugalSettings {
    /// Configuration for `num_experts` experts at the first listed lambda.
    pub fn config(&self, num_experts: usize) -> CliResult<FrugalConfig> {
        let lambda = *self
            .lambdas
            .first()
            .ok_or_else(|| invalid("at least one lambda is required"))?;
        let costs = match (&self.costs, self.cost) {
            (Some(_), Some(_)) => return Err(invalid("give either cost or costs, not both")),
            (Some(list), None) => list.clone(),
            (None, c) => vec![c.unwrap_or(CostModel::DEFAULT_COST); num_experts],
        };
        Ok(FrugalConfig {
            m_neighbors: self.m_neighbors,
            kappa: self.kappa,
            cost_model: CostModel { costs, lambda },
            fuser_kind: match self.fuser {
                FuserChoice::Knn => FuserKind::Knn,
                FuserChoice::MlpBank => FuserKind::MlpBank,
            },
            max_queries: self.max_queries,
            stop_on_zero: self.stop_on_zero,
            inner_knn: match self.inner_knn {
                InnerKnnChoice::SubsetRestricted => InnerKnn::SubsetRestricted,
                InnerKnnChoice::AllExperts => InnerKnn::AllExperts,
            },
        })
    }
}

pub fn invalid(message: impl Into<String>) -> CliError {
    CliError::Core(foe::Error::InvalidConfig(message.into()))
}

pub fn parse_subset(text: &str, num_experts: usize) -> CliResult<SubsetMask> {
    Ok(SubsetMask::parse(text, num_experts)?)
}

pub fn train_fuser(
    train: &Dataset,
    subset: &str,
    target: Target,
    config: &TrainConfig,
) -> CliResult<MlpFuser> {
    let subset = parse_subset(subset, train.num_experts())?;
    Ok(train_mlp_fuser(train, subset, target.into(), config)?)
}

/// One report per lambda of `settings`, sharing the precomputed losses.
pub fn frugal_reports(
    settings: &FrugalSettings,
    train: Option<&Dataset>,
    validation: &Dataset,
    test: &Dataset,
) -> CliResult<Vec<FrugalReport>> {
    let config = settings.config(validation.num_experts())?;
    let bank = match settings.fuser {
        FuserChoice::Knn => None,
        FuserChoice::MlpBank => {
            let train = train.ok_or_else(|| invalid("the mlp-bank fuser needs a training split"))?;
            let cap = config.effective_max_queries(train.num_experts());
            Some(FuserBank::train(train, cap, &settings.train)?)
        }
    };
    let index = FrugalIndex::new(validation, config, bank.as_ref())?;
    Ok(lambda_sweep(&index, test, &settings.lambdas)?)
}

pub fn knn_report(
    validation: &Dataset,
    test: &Dataset,
    subset: &str,
    kappa: usize,
) -> CliResult<MetricsReport> {
    let subset = parse_subset(subset, test.num_experts())?;
    Ok(evaluate(
        &Strategy::Knn {
            validation,
            subset,
            kappa,
        },
        test,
    )?)
}
