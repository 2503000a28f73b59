//! Typed tree parameters, their codec schema, and the human-readable
//! preset file format (`<field> <value>` lines, `#` comments).

use std::fmt::Write as _;
use std::path::Path;

use crate::codec::{FieldSpec, ParamRecord, ParamSchema, ParamValue};
use crate::error::{Error, Result};

/// Global crown envelope selecting the shape-ratio curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeShape {
    Conical,
    Spherical,
    Hemispherical,
    Cylindrical,
    TaperedCylindrical,
    Flame,
    InverseConical,
    TendFlame,
    CustomEnvelope,
}

pub const TREE_SHAPE_NAMES: [&str; 9] = [
    "conical",
    "spherical",
    "hemispherical",
    "cylindrical",
    "tapered_cylindrical",
    "flame",
    "inverse_conical",
    "tend_flame",
    "custom_envelope",
];

impl TreeShape {
    pub fn index(&self) -> usize {
        *self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        use TreeShape::*;
        Ok(match i {
            0 => Conical,
            1 => Spherical,
            2 => Hemispherical,
            3 => Cylindrical,
            4 => TaperedCylindrical,
            5 => Flame,
            6 => InverseConical,
            7 => TendFlame,
            8 => CustomEnvelope,
            _ => return Err(Error::validation(format!("tree shape index {i} out of range"))),
        })
    }

    pub fn name(&self) -> &'static str {
        TREE_SHAPE_NAMES[self.index()]
    }
}

/// Planar leaf outline family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafShape {
    Ovate,
    Linear,
    Cordate,
    Lanceolate,
    Elliptic,
    Fan,
    Needle,
    Palmate,
}

pub const LEAF_SHAPE_NAMES: [&str; 8] =
    ["ovate", "linear", "cordate", "lanceolate", "elliptic", "fan", "needle", "palmate"];

impl LeafShape {
    pub fn index(&self) -> usize {
        *self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        use LeafShape::*;
        Ok(match i {
            0 => Ovate,
            1 => Linear,
            2 => Cordate,
            3 => Lanceolate,
            4 => Elliptic,
            5 => Fan,
            6 => Needle,
            7 => Palmate,
            _ => return Err(Error::validation(format!("leaf shape index {i} out of range"))),
        })
    }

    pub fn name(&self) -> &'static str {
        LEAF_SHAPE_NAMES[self.index()]
    }
}

/// Per-recursion-level growth controls. Angles are degrees, lengths are
/// fractions of the parent stem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelParams {
    pub length: f64,
    pub length_v: f64,
    pub branches: u32,
    pub curve_res: u32,
    pub curve: f64,
    pub curve_back: f64,
    pub curve_v: f64,
    pub seg_splits: f64,
    pub split_angle: f64,
    pub split_angle_v: f64,
    pub down_angle: f64,
    pub down_angle_v: f64,
    pub rotate: f64,
    pub rotate_v: f64,
    pub taper: f64,
}

impl Default for LevelParams {
    fn default() -> Self {
        LevelParams {
            length: 0.4,
            length_v: 0.0,
            branches: 0,
            curve_res: 3,
            curve: 0.0,
            curve_back: 0.0,
            curve_v: 0.0,
            seg_splits: 0.0,
            split_angle: 0.0,
            split_angle_v: 0.0,
            down_angle: 45.0,
            down_angle_v: 0.0,
            rotate: 137.5,
            rotate_v: 0.0,
            taper: 1.0,
        }
    }
}

/// Complete parameter record for the procedural tree generator. Always
/// carries four level blocks; blocks at or beyond `levels` are inert.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    pub shape: TreeShape,
    pub levels: u32,
    pub g_scale: f64,
    pub g_scale_v: f64,
    pub ratio: f64,
    pub ratio_power: f64,
    pub base_size: f64,
    pub level: [LevelParams; 4],
    pub leaf_count: u32,
    pub leaf_shape: LeafShape,
    pub leaf_scale: f64,
    pub leaf_scale_x: f64,
    pub leaf_bend: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            shape: TreeShape::Conical,
            levels: 1,
            g_scale: 10.0,
            g_scale_v: 0.0,
            ratio: 0.015,
            ratio_power: 1.2,
            base_size: 0.3,
            level: [LevelParams::default(); 4],
            leaf_count: 0,
            leaf_shape: LeafShape::Ovate,
            leaf_scale: 0.2,
            leaf_scale_x: 1.0,
            leaf_bend: 0.0,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.levels) {
            return Err(Error::validation(format!("levels {} outside 1..=4", self.levels)));
        }
        if self.g_scale <= 0.0 {
            return Err(Error::validation(format!("g_scale {} must be > 0", self.g_scale)));
        }
        if self.g_scale_v < 0.0 || self.ratio <= 0.0 || self.ratio_power < 0.0 {
            return Err(Error::validation("negative variation or ratio parameters".to_string()));
        }
        if !(0.0..1.0).contains(&self.base_size) {
            return Err(Error::validation(format!("base_size {} outside [0, 1)", self.base_size)));
        }
        for (i, lv) in self.level.iter().enumerate() {
            if lv.curve_res < 1 {
                return Err(Error::validation(format!("curve_res_{i} must be >= 1")));
            }
            if lv.length <= 0.0 && (i as u32) < self.levels {
                return Err(Error::validation(format!("length_{i} must be > 0")));
            }
            if lv.seg_splits < 0.0 || lv.taper < 0.0 || lv.taper > 3.0 {
                return Err(Error::validation(format!(
                    "seg_splits_{i} / taper_{i} out of range"
                )));
            }
        }
        if self.leaf_scale <= 0.0 || self.leaf_scale_x <= 0.0 {
            return Err(Error::validation("leaf scales must be > 0".to_string()));
        }
        if !(0.0..=1.0).contains(&self.leaf_bend) {
            return Err(Error::validation(format!("leaf_bend {} outside [0, 1]", self.leaf_bend)));
        }
        Ok(())
    }
}

/// Full field schema (before constant pruning), in serialization order.
pub fn tree_schema() -> ParamSchema {
    let mut fields = vec![
        FieldSpec::categorical("shape", &TREE_SHAPE_NAMES),
        FieldSpec::integer("levels", 1, 4),
        FieldSpec::numeric("g_scale", 0.05, 150.0),
        FieldSpec::numeric("g_scale_v", 0.0, 50.0),
        FieldSpec::numeric("ratio", 0.001, 1.0),
        FieldSpec::numeric("ratio_power", 0.0, 5.0),
        FieldSpec::numeric("base_size", 0.0, 0.999),
    ];
    for i in 0..4 {
        fields.push(FieldSpec::numeric(&format!("length_{i}"), 0.005, 2.0));
        fields.push(FieldSpec::numeric(&format!("length_v_{i}"), 0.0, 1.0));
        fields.push(FieldSpec::integer(&format!("branches_{i}"), 0, 500));
        fields.push(FieldSpec::integer(&format!("curve_res_{i}"), 1, 32));
        fields.push(FieldSpec::numeric(&format!("curve_{i}"), -360.0, 360.0));
        fields.push(FieldSpec::numeric(&format!("curve_back_{i}"), -360.0, 360.0));
        fields.push(FieldSpec::numeric(&format!("curve_v_{i}"), 0.0, 360.0));
        fields.push(FieldSpec::numeric(&format!("seg_splits_{i}"), 0.0, 3.0));
        fields.push(FieldSpec::numeric(&format!("split_angle_{i}"), 0.0, 180.0));
        fields.push(FieldSpec::numeric(&format!("split_angle_v_{i}"), 0.0, 180.0));
        fields.push(FieldSpec::numeric(&format!("down_angle_{i}"), -180.0, 180.0));
        fields.push(FieldSpec::numeric(&format!("down_angle_v_{i}"), 0.0, 180.0));
        fields.push(FieldSpec::numeric(&format!("rotate_{i}"), -360.0, 360.0));
        fields.push(FieldSpec::numeric(&format!("rotate_v_{i}"), 0.0, 360.0));
        fields.push(FieldSpec::numeric(&format!("taper_{i}"), 0.0, 3.0));
    }
    fields.push(FieldSpec::integer("leaf_count", 0, 2000));
    fields.push(FieldSpec::categorical("leaf_shape", &LEAF_SHAPE_NAMES));
    fields.push(FieldSpec::numeric("leaf_scale", 0.005, 5.0));
    fields.push(FieldSpec::numeric("leaf_scale_x", 0.005, 5.0));
    fields.push(FieldSpec::numeric("leaf_bend", 0.0, 1.0));
    ParamSchema::new(fields).expect("schema field names are unique")
}

impl TreeParams {
    pub fn to_record(&self) -> ParamRecord {
        let mut rec = ParamRecord::default();
        rec.set("shape", ParamValue::Categorical(self.shape.index()));
        rec.set("levels", ParamValue::Integer(self.levels as i64));
        rec.set("g_scale", ParamValue::Numeric(self.g_scale));
        rec.set("g_scale_v", ParamValue::Numeric(self.g_scale_v));
        rec.set("ratio", ParamValue::Numeric(self.ratio));
        rec.set("ratio_power", ParamValue::Numeric(self.ratio_power));
        rec.set("base_size", ParamValue::Numeric(self.base_size));
        for (i, lv) in self.level.iter().enumerate() {
            rec.set(&format!("length_{i}"), ParamValue::Numeric(lv.length));
            rec.set(&format!("length_v_{i}"), ParamValue::Numeric(lv.length_v));
            rec.set(&format!("branches_{i}"), ParamValue::Integer(lv.branches as i64));
            rec.set(&format!("curve_res_{i}"), ParamValue::Integer(lv.curve_res as i64));
            rec.set(&format!("curve_{i}"), ParamValue::Numeric(lv.curve));
            rec.set(&format!("curve_back_{i}"), ParamValue::Numeric(lv.curve_back));
            rec.set(&format!("curve_v_{i}"), ParamValue::Numeric(lv.curve_v));
            rec.set(&format!("seg_splits_{i}"), ParamValue::Numeric(lv.seg_splits));
            rec.set(&format!("split_angle_{i}"), ParamValue::Numeric(lv.split_angle));
            rec.set(&format!("split_angle_v_{i}"), ParamValue::Numeric(lv.split_angle_v));
            rec.set(&format!("down_angle_{i}"), ParamValue::Numeric(lv.down_angle));
            rec.set(&format!("down_angle_v_{i}"), ParamValue::Numeric(lv.down_angle_v));
            rec.set(&format!("rotate_{i}"), ParamValue::Numeric(lv.rotate));
            rec.set(&format!("rotate_v_{i}"), ParamValue::Numeric(lv.rotate_v));
            rec.set(&format!("taper_{i}"), ParamValue::Numeric(lv.taper));
        }
        rec.set("leaf_count", ParamValue::Integer(self.leaf_count as i64));
        rec.set("leaf_shape", ParamValue::Categorical(self.leaf_shape.index()));
        rec.set("leaf_scale", ParamValue::Numeric(self.leaf_scale));
        rec.set("leaf_scale_x", ParamValue::Numeric(self.leaf_scale_x));
        rec.set("leaf_bend", ParamValue::Numeric(self.leaf_bend));
        rec
    }

    pub fn from_record(rec: &ParamRecord) -> Result<TreeParams> {
        fn num(rec: &ParamRecord, name: &str) -> Result<f64> {
            match rec.get(name) {
                Some(ParamValue::Numeric(v)) => Ok(*v),
                other => Err(Error::validation(format!(
                    "field '{name}': expected numeric, got {other:?}"
                ))),
            }
        }
        fn int(rec: &ParamRecord, name: &str) -> Result<i64> {
            match rec.get(name) {
                Some(ParamValue::Integer(v)) => Ok(*v),
                other => Err(Error::validation(format!(
                    "field '{name}': expected integer, got {other:?}"
                ))),
            }
        }
        fn cat(rec: &ParamRecord, name: &str) -> Result<usize> {
            match rec.get(name) {
                Some(ParamValue::Categorical(v)) => Ok(*v),
                other => Err(Error::validation(format!(
                    "field '{name}': expected categorical, got {other:?}"
                ))),
            }
        }
        let mut level = [LevelParams::default(); 4];
        for (i, lv) in level.iter_mut().enumerate() {
            *lv = LevelParams {
                length: num(rec, &format!("length_{i}"))?,
                length_v: num(rec, &format!("length_v_{i}"))?,
                branches: int(rec, &format!("branches_{i}"))?.max(0) as u32,
                curve_res: int(rec, &format!("curve_res_{i}"))?.max(1) as u32,
                curve: num(rec, &format!("curve_{i}"))?,
                curve_back: num(rec, &format!("curve_back_{i}"))?,
                curve_v: num(rec, &format!("curve_v_{i}"))?,
                seg_splits: num(rec, &format!("seg_splits_{i}"))?,
                split_angle: num(rec, &format!("split_angle_{i}"))?,
                split_angle_v: num(rec, &format!("split_angle_v_{i}"))?,
                down_angle: num(rec, &format!("down_angle_{i}"))?,
                down_angle_v: num(rec, &format!("down_angle_v_{i}"))?,
                rotate: num(rec, &format!("rotate_{i}"))?,
                rotate_v: num(rec, &format!("rotate_v_{i}"))?,
                taper: num(rec, &format!("taper_{i}"))?,
            };
        }
        let params = TreeParams {
            shape: TreeShape::from_index(cat(rec, "shape")?)?,
            levels: int(rec, "levels")?.clamp(1, 4) as u32,
            g_scale: num(rec, "g_scale")?,
            g_scale_v: num(rec, "g_scale_v")?,
            ratio: num(rec, "ratio")?,
            ratio_power: num(rec, "ratio_power")?,
            base_size: num(rec, "base_size")?,
            level,
            leaf_count: int(rec, "leaf_count")?.max(0) as u32,
            leaf_shape: LeafShape::from_index(cat(rec, "leaf_shape")?)?,
            leaf_scale: num(rec, "leaf_scale")?,
            leaf_scale_x: num(rec, "leaf_scale_x")?,
            leaf_bend: num(rec, "leaf_bend")?,
        };
        params.validate()?;
        Ok(params)
    }
}

/// Serializes a record in schema order as `<field> <value>` lines.
pub fn preset_text(params: &TreeParams) -> String {
    let rec = params.to_record();
    let schema = tree_schema();
    let mut out = String::from("# shapeflow tree preset\n");
    for spec in &schema.fields {
        let value = rec.get(&spec.name).expect("record covers schema");
        match value {
            ParamValue::Numeric(v) => {
                let _ = writeln!(out, "{} {}", spec.name, v);
            }
            ParamValue::Integer(v) => {
                let _ = writeln!(out, "{} {}", spec.name, v);
            }
            ParamValue::Categorical(c) => {
                let name = match &spec.kind {
                    crate::codec::FieldKind::Categorical(classes) => &classes[*c],
                    _ => unreachable!(),
                };
                let _ = writeln!(out, "{} {}", spec.name, name);
            }
        }
    }
    out
}

/// Parses the preset format; every schema field must be present exactly
/// once.
pub fn parse_preset_text(text: &str) -> Result<TreeParams> {
    let schema = tree_schema();
    let mut rec = ParamRecord::default();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (key, value) = match (parts.next(), parts.next(), parts.next()) {
            (Some(k), Some(v), None) => (k, v),
            _ => {
                return Err(Error::format(format!(
                    "preset line {}: expected '<field> <value>', got '{line}'",
                    lineno + 1
                )))
            }
        };
        let spec = schema
            .field(key)
            .ok_or_else(|| Error::format(format!("preset line {}: unknown field '{key}'", lineno + 1)))?;
        if rec.get(key).is_some() {
            return Err(Error::format(format!("preset line {}: duplicate field '{key}'", lineno + 1)));
        }
        let parsed = match &spec.kind {
            crate::codec::FieldKind::Numeric => ParamValue::Numeric(
                value
                    .parse::<f64>()
                    .map_err(|e| Error::format(format!("preset line {}: {e}", lineno + 1)))?,
            ),
            crate::codec::FieldKind::Integer => ParamValue::Integer(
                value
                    .parse::<i64>()
                    .map_err(|e| Error::format(format!("preset line {}: {e}", lineno + 1)))?,
            ),
            crate::codec::FieldKind::Categorical(classes) => {
                let idx = classes.iter().position(|c| c == value).ok_or_else(|| {
                    Error::format(format!(
                        "preset line {}: unknown class '{value}' for '{key}' (expected one of {})",
                        lineno + 1,
                        classes.join(", ")
                    ))
                })?;
                ParamValue::Categorical(idx)
            }
        };
        rec.set(key, parsed);
    }
    for spec in &schema.fields {
        if rec.get(&spec.name).is_none() {
            return Err(Error::format(format!("preset is missing field '{}'", spec.name)));
        }
    }
    TreeParams::from_record(&rec)
}

/// Writes a preset file.
pub fn save_preset(params: &TreeParams, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, preset_text(params))?;
    Ok(())
}

/// Reads a preset file.
pub fn load_preset_file(path: impl AsRef<Path>) -> Result<TreeParams> {
    let text = std::fs::read_to_string(&path)?;
    parse_preset_text(&text)
}
