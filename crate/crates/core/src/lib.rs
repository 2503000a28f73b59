//! Embedding-conditioned 3D shape generation.
//!
//! A conditional coupling flow maps embedding vectors (text or image
//! provenance) to the parameters of two bundled shape generators: a
//! PCA + linear-blend-skinning quadruped model and a procedural arboreal
//! tree generator. The crate covers the full pipeline: parameter codecs,
//! flow training with reverse-mode gradients, checkpointing, mesh
//! generation and OBJ export.

pub mod animal;
pub mod checkpoint;
pub mod codec;
pub mod embedding;
pub mod error;
pub mod flow;
pub mod mesh;
pub mod train;
pub mod tree;

pub use checkpoint::{Checkpoint, GeneratorKind};
pub use codec::{Codec, CodecStats, FieldKind, FieldSpec, ParamRecord, ParamSchema, ParamValue};
pub use embedding::{EmbeddingManifest, EmbeddingVector, PromptKind, Provenance};
pub use error::{Error, Result};
pub use flow::{CouplingFlow, CouplingLayer, FlowConfig, FlowGrads, LossMode, MaskEval, MaskSpec, MaskStrategy};
pub use mesh::{export_obj, FaceTag, TriMesh};
pub use train::{make_dataset, train, Dataset, TrainConfig, TrainingPair};
pub use tree::{generate_tree, TreeParams};
