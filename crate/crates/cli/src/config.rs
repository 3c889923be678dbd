//! Experiment configuration file schema.
//!
//! A single JSON document with `dataset`, `losses`, `train`, `analysis` and
//! `output` sections. Unknown keys are rejected and every seed is explicit;
//! nothing defaults to wall-clock state.

use serde::{Deserialize, Serialize};

use dscl_core::losses::LossConfig;
use dscl_core::similarity::JsdMode;
use dscl_core::synth::SyntheticDatasetSpec;
use dscl_core::trainer::{EncoderSpec, Optimizer, TrainConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: SyntheticDatasetSpec,
    pub losses: Vec<NamedLoss>,
    pub train: TrainSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedLoss {
    pub name: String,
    pub config: LossConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub optimizer: Optimizer,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle_seed: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    pub probe_train_fraction: f64,
    pub probe_seed: u64,
    pub encoder: EncoderSpec,
    pub n_seeds: usize,
}

fn default_eval_every() -> usize {
    1
}

impl TrainSection {
    /// Core training config for one loss.
    pub fn to_train_config(&self, loss: LossConfig) -> TrainConfig {
        TrainConfig {
            loss,
            optimizer: self.optimizer,
            epochs: self.epochs,
            batch_size: self.batch_size,
            shuffle_seed: self.shuffle_seed,
            eval_every: self.eval_every,
            probe_train_fraction: self.probe_train_fraction,
            probe_seed: self.probe_seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// Histogram bins for the similarity analysis of the generated data.
    pub bins: usize,
    /// Monte Carlo pairs for the noise-rate check; 0 disables it.
    pub simulate_pairs: u64,
    pub jsd_mode: JsdMode,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            bins: 50,
            simulate_pairs: 0,
            jsd_mode: JsdMode::Pooled,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Json,
    Csv,
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Json, OutputFormat::Csv]
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: None,
            formats: default_formats(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}
