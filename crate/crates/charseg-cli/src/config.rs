//! Experiment configuration file.
//!
//! TOML, one section per pipeline stage, every key optional. Values act as
//! defaults; command-line flags override them. Checking the file into an
//! experiment's output directory records the run's provenance.

use std::path::Path;

use charseg::crf::TrainOptions;
use charseg::eval::DEFAULT_FRACTIONS;
use charseg::srn::SrnConfig;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed for every stochastic component; flags override per command.
    pub seed: Option<u64>,
    #[serde(default)]
    pub srn: SrnSection,
    #[serde(default)]
    pub crf: CrfSection,
    #[serde(default)]
    pub features: FeatureSection,
    #[serde(default)]
    pub curve: CurveSection,
    #[serde(default)]
    pub split: SplitSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SrnSection {
    pub hidden_units: Option<usize>,
    pub bptt_steps: Option<usize>,
    pub initial_learning_rate: Option<f64>,
    pub lr_halving_threshold: Option<f64>,
    pub max_iterations: Option<usize>,
    pub init_scale: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrfSection {
    pub l2_sigma: Option<f64>,
    pub max_iterations: Option<usize>,
    pub convergence_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSection {
    /// Hidden-unit indicators per augmented row.
    pub topk: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSection {
    /// Labeled-data fractions, percent, ascending.
    pub fractions: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    /// Character-mass ratios for unlabeled/train/dev/test; must sum to 1.
    pub ratios: Option<[f64; 4]>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }

    /// Config-level seed unless the flag gave one; defaults to 1.
    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(1)
    }

    /// [`SrnConfig`] assembled from defaults ← config ← flags.
    pub fn srn_config(
        &self,
        hidden: Option<usize>,
        bptt: Option<usize>,
        max_iterations: Option<usize>,
        seed: Option<u64>,
    ) -> SrnConfig {
        let d = SrnConfig::default();
        SrnConfig {
            hidden_units: hidden.or(self.srn.hidden_units).unwrap_or(d.hidden_units),
            bptt_steps: bptt.or(self.srn.bptt_steps).unwrap_or(d.bptt_steps),
            initial_learning_rate: self
                .srn
                .initial_learning_rate
                .unwrap_or(d.initial_learning_rate),
            lr_halving_threshold: self
                .srn
                .lr_halving_threshold
                .unwrap_or(d.lr_halving_threshold),
            max_iterations: max_iterations
                .or(self.srn.max_iterations)
                .unwrap_or(d.max_iterations),
            init_scale: self.srn.init_scale.unwrap_or(d.init_scale),
            seed: self.seed(seed),
            ..d
        }
    }

    /// CRF [`TrainOptions`] assembled the same way.
    pub fn crf_options(
        &self,
        sigma: Option<f64>,
        max_iterations: Option<usize>,
        tol: Option<f64>,
        seed: Option<u64>,
    ) -> TrainOptions {
        let d = TrainOptions::default();
        TrainOptions {
            l2_sigma: sigma.or(self.crf.l2_sigma).unwrap_or(d.l2_sigma),
            max_iterations: max_iterations
                .or(self.crf.max_iterations)
                .unwrap_or(d.max_iterations),
            convergence_tol: tol.or(self.crf.convergence_tol).unwrap_or(d.convergence_tol),
            seed: self.seed(seed),
        }
    }

    pub fn topk(&self, flag: Option<usize>) -> usize {
        flag.or(self.features.topk).unwrap_or(10)
    }

    pub fn fractions(&self, flag: Option<Vec<f64>>) -> Vec<f64> {
        flag.or_else(|| self.curve.fractions.clone())
            .unwrap_or_else(|| DEFAULT_FRACTIONS.to_vec())
    }

    pub fn split_ratios(&self, flag: Option<[f64; 4]>) -> [f64; 4] {
        flag.or(self.split.ratios).unwrap_or([0.5, 0.3, 0.1, 0.1])
    }
}
