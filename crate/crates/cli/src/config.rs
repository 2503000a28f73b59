//! Training configuration file (TOML): trainer hyperparameters at the top
//! level, flow sizing in `[flow]`, and an optional `resume_from`
//! checkpoint to fine-tune instead of training from scratch.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use shapeflow_core::error::{Error, Result};
use shapeflow_core::flow::{FlowConfig, MaskStrategy};
use shapeflow_core::train::TrainConfig;

fn default_layers() -> usize {
    5
}
fn default_hidden() -> usize {
    1024
}
fn default_compressed() -> usize {
    512
}
fn default_compression() -> bool {
    true
}
fn default_strategy() -> String {
    MaskStrategy::Learned.name().to_string()
}
fn default_embed_dim() -> usize {
    512
}

/// `[flow]` section: network sizing and masking.
#[derive(Debug, Clone, Deserialize)]
pub struct FlowSection {
    #[serde(default = "default_layers")]
    pub n_layers: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_compressed")]
    pub compressed: usize,
    #[serde(default = "default_compression")]
    pub compression: bool,
    #[serde(default = "default_strategy")]
    pub mask_strategy: String,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
}

impl Default for FlowSection {
    fn default() -> Self {
        FlowSection {
            n_layers: default_layers(),
            hidden: default_hidden(),
            compressed: default_compressed(),
            compression: default_compression(),
            mask_strategy: default_strategy(),
            embed_dim: default_embed_dim(),
        }
    }
}

impl FlowSection {
    pub fn to_flow_config(&self, dim_shape: usize) -> FlowConfig {
        FlowConfig {
            dim_cond: self.embed_dim,
            dim_shape,
            n_layers: self.n_layers,
            hidden: self.hidden,
            compressed: self.compressed,
            compression: self.compression,
            mask_strategy: self.mask_strategy.clone(),
        }
    }
}

/// Complete training configuration file.
#[derive(Debug, Clone, Deserialize)]
pub struct TrainFileConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    #[serde(default)]
    pub flow: FlowSection,
    /// Fine-tune from this checkpoint instead of a fresh flow.
    #[serde(default)]
    pub resume_from: Option<PathBuf>,
}

impl TrainFileConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path)?;
        let config: TrainFileConfig = toml::from_str(&text)
            .map_err(|e| Error::format(format!("bad training config: {e}")))?;
        config.train.validate()?;
        MaskStrategy::from_name(&config.flow.mask_strategy)?;
        Ok(config)
    }
}
