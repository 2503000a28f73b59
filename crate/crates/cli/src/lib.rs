//! Command-line surface for the shapeflow pipeline: training, generation,
//! interpolation, the ablation vote harness and supporting utilities.

pub mod commands;
pub mod config;
pub mod vote;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use shapeflow_core::error::Result;

#[derive(Debug, Parser)]
#[command(
    name = "shapeflow",
    version,
    about = "Embedding-conditioned 3D shape generation (quadrupeds and procedural trees)"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a flow on labeled parameters and an embedding manifest.
    Train {
        /// Generator family: animal or tree.
        #[arg(long, value_parser = ["animal", "tree"])]
        kind: String,
        /// Directory of tree presets (*.txt) or a shape-space container (*.ssc).
        #[arg(long)]
        params: PathBuf,
        /// Embedding manifest with one or more entries per label.
        #[arg(long)]
        embeddings: PathBuf,
        /// TOML training configuration.
        #[arg(long)]
        config: PathBuf,
        /// Output checkpoint path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a mesh from a prompt (or a stored embedding).
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        /// Full prompt text, e.g. "A photo of a Gingko tree".
        #[arg(long)]
        prompt: String,
        /// Use a stored embedding instead of the mock embedder: <manifest>:<label>.
        #[arg(long)]
        embedding: Option<String>,
        /// Seed for tree meshing randomness and latent sampling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sample the shape latent instead of using the deterministic zero latent.
        #[arg(long, default_value_t = false)]
        sample_latent: bool,
        /// Output OBJ path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a spherical-interpolation sweep between two prompts.
    Interpolate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        /// Number of interpolation steps (endpoints included).
        #[arg(long)]
        steps: usize,
        /// Output directory for step_XX.obj files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired vote comparison between two checkpoints from externally
    /// produced render embeddings.
    Ablate {
        #[arg(long = "ckpt-a")]
        ckpt_a: PathBuf,
        #[arg(long = "ckpt-b")]
        ckpt_b: PathBuf,
        /// Text file with one case label per line.
        #[arg(long)]
        labels: PathBuf,
        /// Manifest with two render embeddings per label (model A first).
        #[arg(long = "render-embeddings")]
        render_embeddings: PathBuf,
        /// Output CSV vote table.
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact one-sided binomial test P(X >= wins), X ~ Binomial(total, 1/2).
    Binom {
        #[arg(long)]
        wins: u64,
        #[arg(long)]
        total: u64,
    },
    /// Inspect the shipped tree presets.
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Deterministic mock embedding of a text.
    EmbedMock {
        #[arg(long)]
        text: String,
        /// Label stored with the vector (defaults to the text itself).
        #[arg(long)]
        label: Option<String>,
        #[arg(long, default_value_t = 512)]
        dim: usize,
        /// Write a single-entry manifest instead of printing the record.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Zero-shot classification of a query against a candidate manifest.
    Classify {
        /// Query text, or <manifest>:<label> for a stored embedding.
        #[arg(long)]
        query: String,
        /// Candidate manifest; every entry is a candidate.
        #[arg(long)]
        candidates: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum PresetAction {
    /// List shipped preset names.
    List,
    /// Print one preset in the preset file format.
    Show { name: String },
}

/// Dispatches a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { kind, params, embeddings, config, out } => {
            commands::run_train(&kind, &params, &embeddings, &config, &out)
        }
        Command::Generate { ckpt, prompt, embedding, seed, sample_latent, out } => {
            commands::run_generate(&ckpt, &prompt, embedding.as_deref(), seed, sample_latent, &out)
        }
        Command::Interpolate { ckpt, from, to, steps, out } => {
            commands::run_interpolate(&ckpt, &from, &to, steps, &out)
        }
        Command::Ablate { ckpt_a, ckpt_b, labels, render_embeddings, out } => {
            commands::run_ablate(&ckpt_a, &ckpt_b, &labels, &render_embeddings, &out)
        }
        Command::Binom { wins, total } => commands::run_binom(wins, total),
        Command::Preset { action } => match action {
            PresetAction::List => commands::run_preset_list(),
            PresetAction::Show { name } => commands::run_preset_show(&name),
        },
        Command::EmbedMock { text, label, dim, out } => {
            commands::run_embed_mock(&text, label.as_deref(), dim, out.as_deref())
        }
        Command::Classify { query, candidates } => commands::run_classify(&query, &candidates),
    }
}
