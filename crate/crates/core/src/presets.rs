//! Frozen synthetic mixtures used by tests, examples and the CLI.

use crate::dataio::{ErrorMode, SplitSizes, SynthConfig};
use crate::frugal::FrugalConfig;

/// Ten domains, twenty classes, overlapping expert competence.
pub fn k10_mixture() -> SynthConfig {
    SynthConfig {
        off_domain_temperature: Some(1.0),
        ..SynthConfig::uniform(
            10,
            20,
            0.9,
            0.55,
            SplitSizes {
                train: 5000,
                validation: 1000,
                test: 5000,
            },
            7,
        )
    }
}

/// Two domains whose experts are perfect in-domain and always wrong off-domain.
pub fn disjoint_mixture() -> SynthConfig {
    SynthConfig {
        off_domain_temperature: Some(1.0),
        ..SynthConfig::uniform(
            2,
            2,
            1.0,
            0.0,
            SplitSizes {
                train: 2000,
                validation: 500,
                test: 1000,
            },
            11,
        )
    }
}

/// Six domains with a skewed mixture for the frugality sweep. Off-domain
/// experts err independently, so agreeing off-domain votes carry information.
pub fn k6_mixture() -> SynthConfig {
    SynthConfig {
        mixture_weights: vec![0.5, 0.2, 0.1, 0.1, 0.05, 0.05],
        off_domain_temperature: Some(1.0),
        error_mode: ErrorMode::Independent,
        ..SynthConfig::uniform(
            6,
            20,
            0.9,
            0.55,
            SplitSizes {
                train: 2000,
                validation: 5000,
                test: 1000,
            },
            13,
        )
    }
}

/// Frugal settings paired with [`k6_mixture`]: M = 15, kappa = 9, unit costs 0.01.
pub fn k6_frugal_config(lambda: f64) -> FrugalConfig {
    FrugalConfig::knn(6, 15, 9, lambda)
}

/// Four domains for the greedy-versus-exhaustive comparison.
pub fn k4_mixture() -> SynthConfig {
    SynthConfig {
        off_domain_temperature: Some(1.0),
        ..SynthConfig::uniform(
            4,
            6,
            0.9,
            0.55,
            SplitSizes {
                train: 0,
                validation: 200,
                test: 100,
            },
            17,
        )
    }
}

/// Lambda values of the shipped frugality sweep.
pub const LAMBDA_SWEEP: [f64; 12] = [0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Lambda grid `{0, 0.1, ..., 1.0}` for the monotonicity check.
pub fn lambda_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}
