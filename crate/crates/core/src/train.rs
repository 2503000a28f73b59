//! Dataset assembly, Adam optimization with a geometric learning-rate
//! schedule, and the training loop. Fully deterministic under a fixed
//! seed: shuffling, initialization, mask repair and optimizer state all
//! come from the same seeded generator and a fixed reduction order.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{Codec, ParamRecord};
use crate::embedding::{EmbeddingManifest, EmbeddingVector};
use crate::error::{Error, Result};
use crate::flow::backprop::{loss_and_grads, FlowGrads, LossMode, MaskEval};
use crate::flow::CouplingFlow;

/// One supervised example: a conditioning embedding and the encoded
/// parameter vector it should reproduce.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub condition: EmbeddingVector,
    pub target: Array1<f64>,
    pub label: String,
}

/// Joined dataset plus the manifest labels that had no parameter record.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub pairs: Vec<TrainingPair>,
    pub unmatched_embedding_labels: Vec<String>,
}

/// Joins labeled parameter records with every embedding carrying the same
/// label (one pair per embedding entry). Labels with parameters but no
/// embedding are a hard error; embeddings without parameters are reported
/// in the dataset, not dropped silently.
pub fn make_dataset(
    manifest: &EmbeddingManifest,
    labeled_params: &[(String, ParamRecord)],
    codec: &Codec,
) -> Result<Dataset> {
    let mut pairs = Vec::new();
    let mut missing = Vec::new();
    for (label, record) in labeled_params {
        let entries = manifest.entries_for(label);
        if entries.is_empty() {
            missing.push(label.clone());
            continue;
        }
        let target = codec.encode(record)?;
        for entry in entries {
            pairs.push(TrainingPair {
                condition: (*entry).clone(),
                target: target.clone(),
                label: label.clone(),
            });
        }
    }
    if !missing.is_empty() {
        return Err(Error::validation(format!(
            "no embedding found for labels: {}",
            missing.join(", ")
        )));
    }
    let param_labels: Vec<&String> = labeled_params.iter().map(|(l, _)| l).collect();
    let unmatched: Vec<String> = manifest
        .labels()
        .into_iter()
        .filter(|l| !param_labels.iter().any(|p| *p == l))
        .collect();
    Ok(Dataset { pairs, unmatched_embedding_labels: unmatched })
}

/// Adam moment coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

fn default_epochs() -> usize {
    6000
}
fn default_batch() -> usize {
    16
}
fn default_lr_start() -> f64 {
    1e-4
}
fn default_lr_end() -> f64 {
    1e-6
}
fn default_loss() -> LossMode {
    LossMode::L1
}
fn default_ckpt_every() -> usize {
    500
}

/// Training hyperparameters. Defaults follow the text-only protocol
/// (6000 epochs); [`TrainConfig::text_and_image`] switches to 3000.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr_start")]
    pub lr_start: f64,
    #[serde(default = "default_lr_end")]
    pub lr_end: f64,
    #[serde(default = "default_loss")]
    pub loss_mode: LossMode,
    #[serde(default)]
    pub seed: u64,
    /// A checkpoint is emitted every this many epochs (and at the end).
    #[serde(default = "default_ckpt_every")]
    pub checkpoint_every: usize,
    /// Stop early when the best loss has not improved over this many
    /// epochs.
    #[serde(default)]
    pub early_stop_plateau: Option<usize>,
    #[serde(default)]
    pub adam: AdamParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: default_epochs(),
            batch_size: default_batch(),
            lr_start: default_lr_start(),
            lr_end: default_lr_end(),
            loss_mode: default_loss(),
            seed: 0,
            checkpoint_every: default_ckpt_every(),
            early_stop_plateau: None,
            adam: AdamParams::default(),
        }
    }
}

impl TrainConfig {
    /// Text-only protocol: 6000 epochs.
    pub fn text_only() -> Self {
        Self::default()
    }

    /// Text-and-image protocol: 3000 epochs on the enlarged dataset.
    pub fn text_and_image() -> Self {
        TrainConfig { epochs: 3000, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::validation("epochs must be >= 1".to_string()));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch size must be >= 1".to_string()));
        }
        if !(self.lr_start >= self.lr_end && self.lr_end > 0.0) {
            return Err(Error::validation(format!(
                "learning rates must satisfy lr_start >= lr_end > 0, got {} and {}",
                self.lr_start, self.lr_end
            )));
        }
        Ok(())
    }
}

/// Geometric interpolation from `lr_start` at epoch 0 to `lr_end` at
/// `epochs`.
pub fn lr_at(config: &TrainConfig, epoch: usize) -> Result<f64> {
    config.validate()?;
    if epoch > config.epochs {
        return Err(Error::validation(format!(
            "epoch {epoch} outside schedule range 0..={}",
            config.epochs
        )));
    }
    let t = epoch as f64 / config.epochs as f64;
    Ok(config.lr_start * (config.lr_end / config.lr_start).powf(t))
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStat {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

/// Writes the loss history as `epoch,lr,loss` CSV.
pub fn write_loss_history_csv(stats: &[EpochStat], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("epoch,lr,loss\n");
    for s in stats {
        out.push_str(&format!("{},{},{}\n", s.epoch, s.lr, s.loss));
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

struct AdamState {
    m: FlowGrads,
    v: FlowGrads,
    t: usize,
}

impl AdamState {
    fn new(flow: &CouplingFlow) -> Self {
        let zeros = || FlowGrads {
            layers: flow
                .layers
                .iter()
                .map(|layer| crate::flow::LayerGrads {
                    s: layer.s_net.zero_grads(),
                    t: layer.t_net.zero_grads(),
                    mask_logits: layer.mask_spec.logits.as_ref().map(|l| Array1::zeros(l.len())),
                })
                .collect(),
        };
        AdamState { m: zeros(), v: zeros(), t: 0 }
    }

    fn step(&mut self, flow: &mut CouplingFlow, grads: &FlowGrads, lr: f64, params: &AdamParams) {
        self.t += 1;
        let t = self.t as f64;
        let bc1 = 1.0 - params.beta1.powf(t);
        let bc2 = 1.0 - params.beta2.powf(t);
        let update = |theta: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = params.beta1 * *m + (1.0 - params.beta1) * g;
            *v = params.beta2 * *v + (1.0 - params.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *theta -= lr * m_hat / (v_hat.sqrt() + params.epsilon);
        };
        for (((layer, g), m), v) in flow
            .layers
            .iter_mut()
            .zip(grads.layers.iter())
            .zip(self.m.layers.iter_mut())
            .zip(self.v.layers.iter_mut())
        {
            for stage in 0..layer.s_net.weights.len() {
                for (((theta, g), m), v) in layer.s_net.weights[stage]
                    .iter_mut()
                    .zip(g.s.weights[stage].iter())
                    .zip(m.s.weights[stage].iter_mut())
                    .zip(v.s.weights[stage].iter_mut())
                {
                    update(theta, *g, m, v);
                }
                for (((theta, g), m), v) in layer.s_net.biases[stage]
                    .iter_mut()
                    .zip(g.s.biases[stage].iter())
                    .zip(m.s.biases[stage].iter_mut())
                    .zip(v.s.biases[stage].iter_mut())
                {
                    update(theta, *g, m, v);
                }
            }
            for stage in 0..layer.t_net.weights.len() {
                for (((theta, g), m), v) in layer.t_net.weights[stage]
                    .iter_mut()
                    .zip(g.t.weights[stage].iter())
                    .zip(m.t.weights[stage].iter_mut())
                    .zip(v.t.weights[stage].iter_mut())
                {
                    update(theta, *g, m, v);
                }
                for (((theta, g), m), v) in layer.t_net.biases[stage]
                    .iter_mut()
                    .zip(g.t.biases[stage].iter())
                    .zip(m.t.biases[stage].iter_mut())
                    .zip(v.t.biases[stage].iter_mut())
                {
                    update(theta, *g, m, v);
                }
            }
            if let (Some(logits), Some(g), Some(m), Some(v)) = (
                layer.mask_spec.logits.as_mut(),
                g.mask_logits.as_ref(),
                m.mask_logits.as_mut(),
                v.mask_logits.as_mut(),
            ) {
                for (((theta, g), m), v) in
                    logits.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut())
                {
                    update(theta, *g, m, v);
                }
            }
        }
    }
}

/// Trains the flow in place. `on_checkpoint` fires every
/// `checkpoint_every` epochs and once at the end (argument: epochs
/// completed). Returns the per-epoch loss history.
pub fn train(
    flow: &mut CouplingFlow,
    dataset: &Dataset,
    config: &TrainConfig,
    on_checkpoint: &mut dyn FnMut(&CouplingFlow, usize) -> Result<()>,
) -> Result<Vec<EpochStat>> {
    config.validate()?;
    if dataset.pairs.is_empty() {
        return Err(Error::validation("dataset is empty".to_string()));
    }
    let c = flow.dim_cond();
    let p = flow.dim_shape();
    for pair in &dataset.pairs {
        if pair.condition.dim() != c || pair.target.len() != p {
            return Err(Error::validation(format!(
                "pair '{}' has dims ({}, {}), flow expects ({c}, {p})",
                pair.label,
                pair.condition.dim(),
                pair.target.len()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(flow);
    let mut history = Vec::with_capacity(config.epochs);
    let mut indices: Vec<usize> = (0..dataset.pairs.len()).collect();

    for epoch in 0..config.epochs {
        let lr = lr_at(config, epoch)?;
        indices.shuffle(&mut rng);
        let mut loss_acc = 0.0;
        let mut weight_acc = 0.0;
        for chunk in indices.chunks(config.batch_size) {
            let b = chunk.len();
            let mut cond = Array2::zeros((b, c));
            let mut targets = Array2::zeros((b, p));
            for (row, &idx) in chunk.iter().enumerate() {
                cond.row_mut(row).assign(&dataset.pairs[idx].condition.data);
                targets.row_mut(row).assign(&dataset.pairs[idx].target);
            }
            let (loss, grads) =
                loss_and_grads(flow, &cond, &targets, config.loss_mode, MaskEval::Hard).map_err(
                    |e| Error::numeric(format!("epoch {epoch}: {e}")),
                )?;
            adam.step(flow, &grads, lr, &config.adam);
            loss_acc += loss * b as f64;
            weight_acc += b as f64;
        }
        let loss = loss_acc / weight_acc;
        history.push(EpochStat { epoch, lr, loss });

        if config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0 {
            on_checkpoint(flow, epoch + 1)?;
        }
        if let Some(window) = config.early_stop_plateau {
            if history.len() >= 2 * window {
                let recent = &history[history.len() - window..];
                let before = &history[..history.len() - window];
                let best_recent = recent.iter().map(|s| s.loss).fold(f64::INFINITY, f64::min);
                let best_before = before.iter().map(|s| s.loss).fold(f64::INFINITY, f64::min);
                if best_recent >= best_before {
                    break;
                }
            }
        }
    }
    on_checkpoint(flow, history.len())?;
    Ok(history)
}
