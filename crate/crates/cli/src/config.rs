use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use swinseg_datagen::DataConfig;
use swinseg_metrics::AggregationPolicy;
use swinseg_model::{SwinUnetConfig, UNetBaselineConfig};

use crate::error::{io_err, AppError, Result};

/// How the three network input channels are formed from a slice's
/// modalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelMode {
    /// (STIR, T1, T2) in that fixed order.
    Stacked,
    ReplicatedStir,
    ReplicatedT1,
    ReplicatedT2,
}

impl ChannelMode {
    pub fn label(&self) -> &'static str {
        match self {
            ChannelMode::Stacked => "(STIR, T1, T2)",
            ChannelMode::ReplicatedStir => "(STIR, STIR, STIR)",
            ChannelMode::ReplicatedT1 => "(T1, T1, T1)",
            ChannelMode::ReplicatedT2 => "(T2, T2, T2)",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransferMode {
    None,
    Encoder,
}

/// Pretext pretraining knobs: a disjoint phantom distribution trained
/// briefly, encoder weights kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretextConfig {
    pub count: usize,
    pub epochs: usize,
}

impl Default for PretextConfig {
    fn default() -> Self {
        PretextConfig { count: 80, epochs: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: SwinUnetConfig,
    pub baseline: UNetBaselineConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub channel_mode: ChannelMode,
    pub transfer: TransferMode,
    /// Encoder checkpoint consumed when `transfer == Encoder`.
    pub pretrained: Option<PathBuf>,
    pub manifest: PathBuf,
    /// Restrict training or evaluation to one center (multicenter runs).
    pub train_center: Option<u8>,
    pub test_center: Option<u8>,
    pub pretext: PretextConfig,
    pub policy: AggregationPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: SwinUnetConfig::desk(),
            baseline: UNetBaselineConfig::desk(),
            batch_size: 8,
            epochs: 20,
            learning_rate: 1e-4,
            weight_decay: 0.05,
            seed: 7,
            channel_mode: ChannelMode::Stacked,
            transfer: TransferMode::None,
            pretrained: None,
            manifest: PathBuf::from("data/manifest.json"),
            train_center: None,
            test_center: None,
            pretext: PretextConfig::default(),
            policy: AggregationPolicy::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(AppError::Config("batch size and epochs must be at least 1".to_string()));
        }
        if self.learning_rate < 0.0 || self.weight_decay < 0.0 {
            return Err(AppError::Config("learning rate and weight decay must be non-negative".to_string()));
        }
        self.model.validate()?;
        self.baseline.validate()?;
        Ok(())
    }
}

/// Root of the `--config` JSON file; any subset of sections may appear.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RootConfig {
    pub data: DataConfig,
    pub train: TrainConfig,
}

impl RootConfig {
    pub fn load(path: Option<&Path>) -> Result<RootConfig> {
        let Some(path) = path else {
            return Ok(RootConfig::default());
        };
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| AppError::Config(format!("{}: {}", path.display(), e)))
    }

    /// CLI `--seed` overrides both the dataset and training seeds.
    pub fn override_seed(&mut self, seed: Option<u64>) {
        if let Some(seed) = seed {
            self.data.spec.seed = seed;
            self.train.seed = seed;
        }
    }
}
