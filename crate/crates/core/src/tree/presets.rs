//! Named reference presets shipped with the crate, one file per species.
//! The quaking aspen, black tupelo, weeping willow and black oak values
//! are transcribed from the public Weber-Penn reference tables (with
//! reduced branch counts); the rest are hand-authored fixtures. All
//! variation parameters are zero, so every preset is seed independent.

use crate::error::{Error, Result};
use crate::tree::params::{parse_preset_text, TreeParams};

macro_rules! preset_table {
    ($(($name:literal, $file:literal)),+ $(,)?) => {
        /// Shipped preset names, alphabetical.
        pub const PRESET_NAMES: [&str; 21] = [$($name),+];

        fn preset_source(name: &str) -> Option<&'static str> {
            match name {
                $($name => Some(include_str!(concat!("../../presets/", $file))),)+
                _ => None,
            }
        }
    };
}

preset_table![
    ("apple", "apple.txt"),
    ("balsam_fir", "balsam_fir.txt"),
    ("black_oak", "black_oak.txt"),
    ("black_tupelo", "black_tupelo.txt"),
    ("cypress", "cypress.txt"),
    ("douglas_fir", "douglas_fir.txt"),
    ("english_oak", "english_oak.txt"),
    ("european_larch", "european_larch.txt"),
    ("fan_palm", "fan_palm.txt"),
    ("hill_cherry", "hill_cherry.txt"),
    ("magnolia", "magnolia.txt"),
    ("maple", "maple.txt"),
    ("palm", "palm.txt"),
    ("pine", "pine.txt"),
    ("poplar", "poplar.txt"),
    ("quaking_aspen", "quaking_aspen.txt"),
    ("sassafras", "sassafras.txt"),
    ("silver_birch", "silver_birch.txt"),
    ("sphere_tree", "sphere_tree.txt"),
    ("weeping_willow", "weeping_willow.txt"),
    ("willow", "willow.txt"),
];

/// Loads a shipped preset by name; unknown names error with the full list
/// of available presets.
pub fn load_preset(name: &str) -> Result<TreeParams> {
    match preset_source(name) {
        Some(text) => parse_preset_text(text),
        None => Err(Error::validation(format!(
            "unknown preset '{name}'; available: {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}

/// `quaking_aspen` -> `Quaking Aspen`; used as the species label in
/// prompts and manifests.
pub fn display_name(preset: &str) -> String {
    preset
        .split('_')
        .map(|w| {
            let mut chars = w.chars();
            match chars.next() {
                Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// All shipped presets with display-name labels, in `PRESET_NAMES` order.
pub fn builtin_presets() -> Vec<(String, TreeParams)> {
    PRESET_NAMES
        .iter()
        .map(|name| (display_name(name), load_preset(name).expect("shipped presets parse")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::params::{preset_text, save_preset, load_preset_file};

    #[test]
    fn all_presets_load_and_validate() {
        for name in PRESET_NAMES {
            let params = load_preset(name).unwrap();
            params.validate().unwrap();
        }
    }

    /// Transcribed from the Weber-Penn quaking aspen reference entry.
    #[test]
    fn quaking_aspen_reference_fields() {
        let aspen = load_preset("quaking_aspen").unwrap();
        assert_eq!(aspen.levels, 3);
        assert_eq!(aspen.shape.name(), "tend_flame");
        assert!((aspen.ratio - 0.015).abs() < 1e-12);
        assert!((aspen.base_size - 0.4).abs() < 1e-12);
    }

    #[test]
    fn save_load_identity_for_every_preset() {
        let dir = tempfile::tempdir().unwrap();
        for name in PRESET_NAMES {
            let params = load_preset(name).unwrap();
            let path = dir.path().join(format!("{name}.txt"));
            save_preset(&params, &path).unwrap();
            let back = load_preset_file(&path).unwrap();
            assert_eq!(back, params, "{name}");
            // byte-stable second serialization
            assert_eq!(preset_text(&back), preset_text(&params));
        }
    }

    #[test]
    fn unknown_preset_lists_available() {
        match load_preset("gingko") {
            Err(Error::Validation(msg)) => {
                assert!(msg.contains("quaking_aspen") && msg.contains("weeping_willow"));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn display_names() {
        assert_eq!(display_name("quaking_aspen"), "Quaking Aspen");
        assert_eq!(display_name("palm"), "Palm");
        assert_eq!(display_name("black_tupelo"), "Black Tupelo");
    }

    #[test]
    fn preset_codec_has_expected_active_dimension() {
        let schema = crate::tree::params::tree_schema();
        let records: Vec<crate::codec::ParamRecord> =
            builtin_presets().iter().map(|(_, p)| p.to_record()).collect();
        let codec = crate::codec::Codec::fit(&schema, &records).unwrap();
        // the variation fields plus structurally constant fields prune
        // away, leaving an encoded space near the reference 60
        let dim = codec.encoded_dim();
        assert!((50..=70).contains(&dim), "encoded dim {dim}");
        // all variation fields are constants
        for (name, _) in &codec.constants {
            assert!(codec.schema.field(name).is_none());
        }
        assert!(codec.constants.iter().any(|(n, _)| n == "g_scale_v"));

        // round trip every preset exactly on categorical/integer fields
        for rec in &records {
            let enc = codec.encode(rec).unwrap();
            let back = codec.decode(&enc.view()).unwrap();
            let params_in = TreeParams::from_record(rec).unwrap();
            let params_out = TreeParams::from_record(&back).unwrap();
            assert_eq!(params_in.shape, params_out.shape);
            assert_eq!(params_in.levels, params_out.levels);
            assert_eq!(params_in.leaf_shape, params_out.leaf_shape);
            for i in 0..4 {
                assert_eq!(params_in.level[i].branches, params_out.level[i].branches);
                assert_eq!(params_in.level[i].curve_res, params_out.level[i].curve_res);
            }
        }
    }

    use crate::error::Error;
}
