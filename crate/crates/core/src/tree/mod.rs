//! Procedural arboreal tree generator: recursive stem growth in the
//! Weber-Penn tradition, meshed as generalized cylinders with leaf quads,
//! deterministic under a seed.

pub mod growth;
pub mod meshing;
pub mod params;
pub mod presets;

pub use growth::{grow, shape_ratio, Leaf, SpinePoint, StemNode};
pub use meshing::{generate_tree, generate_tree_with, mesh_stem, DEFAULT_RADIAL_RESOLUTION};
pub use params::{
    load_preset_file, parse_preset_text, preset_text, save_preset, tree_schema, LeafShape,
    LevelParams, TreeParams, TreeShape,
};
pub use presets::{builtin_presets, display_name, load_preset, PRESET_NAMES};
