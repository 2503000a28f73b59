//! Bidirectional encoding between native shape parameters and the flow's
//! normalized real vector space.
//!
//! Numeric and integer fields are z-scored with statistics fitted on the
//! training set; categorical fields become one-hot blocks and are not
//! normalized. Fields that never vary over the training set are constants:
//! they are excluded from the encoded space and reinstated on decode.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};

/// Field payload kind. Categorical fields carry their class names.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldKind {
    Numeric,
    Integer,
    Categorical(Vec<String>),
}

impl FieldKind {
    pub fn encoded_width(&self) -> usize {
        match self {
            FieldKind::Numeric | FieldKind::Integer => 1,
            FieldKind::Categorical(classes) => classes.len(),
        }
    }
}

/// One schema entry: name, kind and the admissible range for decoded values.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    /// Lower bound applied when decoding (use `-inf` for unbounded).
    pub min: f64,
    /// Upper bound applied when decoding (use `inf` for unbounded).
    pub max: f64,
}

impl FieldSpec {
    pub fn numeric(name: &str, min: f64, max: f64) -> Self {
        FieldSpec { name: name.to_string(), kind: FieldKind::Numeric, min, max }
    }

    pub fn integer(name: &str, min: i64, max: i64) -> Self {
        FieldSpec {
            name: name.to_string(),
            kind: FieldKind::Integer,
            min: min as f64,
            max: max as f64,
        }
    }

    pub fn categorical(name: &str, classes: &[&str]) -> Self {
        assert!(classes.len() >= 2, "categorical fields need at least 2 classes");
        FieldSpec {
            name: name.to_string(),
            kind: FieldKind::Categorical(classes.iter().map(|s| s.to_string()).collect()),
            min: 0.0,
            max: (classes.len() - 1) as f64,
        }
    }
}

/// Ordered field list; the order fixes the encoded layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSchema {
    pub fields: Vec<FieldSpec>,
}

impl ParamSchema {
    pub fn new(fields: Vec<FieldSpec>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for f in &fields {
            if !seen.insert(f.name.clone()) {
                return Err(Error::validation(format!("duplicate field name '{}'", f.name)));
            }
            if let FieldKind::Categorical(classes) = &f.kind {
                if classes.len() < 2 {
                    return Err(Error::validation(format!(
                        "field '{}': categorical needs >= 2 classes",
                        f.name
                    )));
                }
            }
        }
        Ok(ParamSchema { fields })
    }

    /// Total encoded dimension P.
    pub fn encoded_dim(&self) -> usize {
        self.fields.iter().map(|f| f.kind.encoded_width()).sum()
    }

    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.name == name)
    }
}

/// A single field value in native form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamValue {
    Numeric(f64),
    Integer(i64),
    /// Class index into the field's class list.
    Categorical(usize),
}

impl ParamValue {
    pub fn as_f64(&self) -> f64 {
        match self {
            ParamValue::Numeric(v) => *v,
            ParamValue::Integer(v) => *v as f64,
            ParamValue::Categorical(v) => *v as f64,
        }
    }
}

/// Native parameter record keyed by field name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamRecord {
    pub values: BTreeMap<String, ParamValue>,
}

impl ParamRecord {
    pub fn set(&mut self, name: &str, value: ParamValue) {
        self.values.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.values.get(name)
    }

    fn expect(&self, name: &str) -> Result<&ParamValue> {
        self.get(name)
            .ok_or_else(|| Error::validation(format!("record missing field '{name}'")))
    }
}

/// Per-field first and second moments over the training set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Statistics for every numeric/integer field of a schema.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CodecStats {
    pub fields: BTreeMap<String, FieldStats>,
}

fn value_for_stats(spec: &FieldSpec, value: &ParamValue) -> Result<Option<f64>> {
    match (&spec.kind, value) {
        (FieldKind::Numeric, ParamValue::Numeric(v)) => {
            if !v.is_finite() {
                return Err(Error::validation(format!("field '{}': non-finite value", spec.name)));
            }
            Ok(Some(*v))
        }
        (FieldKind::Integer, ParamValue::Integer(v)) => Ok(Some(*v as f64)),
        (FieldKind::Categorical(classes), ParamValue::Categorical(c)) => {
            if *c >= classes.len() {
                return Err(Error::validation(format!(
                    "field '{}': category {} out of {} classes",
                    spec.name,
                    c,
                    classes.len()
                )));
            }
            Ok(None)
        }
        _ => Err(Error::validation(format!("field '{}': value kind mismatch", spec.name))),
    }
}

/// Fits per-field mean and population standard deviation (Welford), and
/// reports zero-variance numeric/integer fields for schema pruning.
pub fn fit_stats(schema: &ParamSchema, samples: &[ParamRecord]) -> Result<(CodecStats, Vec<String>)> {
    if samples.len() < 2 {
        return Err(Error::validation(format!(
            "need at least 2 samples to fit statistics, got {}",
            samples.len()
        )));
    }
    let mut stats = CodecStats::default();
    let mut constant = Vec::new();
    for spec in &schema.fields {
        let mut count = 0usize;
        let mut mean = 0.0f64;
        let mut m2 = 0.0f64;
        let mut numeric = false;
        for rec in samples {
            let value = rec.expect(&spec.name)?;
            if let Some(x) = value_for_stats(spec, value)? {
                numeric = true;
                count += 1;
                let delta = x - mean;
                mean += delta / count as f64;
                m2 += delta * (x - mean);
            }
        }
        if numeric {
            let var = m2 / count as f64;
            let std = var.max(0.0).sqrt();
            if std == 0.0 {
                constant.push(spec.name.clone());
            }
            stats.fields.insert(spec.name.clone(), FieldStats { mean, std });
        }
    }
    Ok((stats, constant))
}

/// Schema + statistics + pruned constants: everything needed to move
/// between native records and encoded vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Codec {
    /// Active fields only (constants removed).
    pub schema: ParamSchema,
    /// Stats for the active numeric/integer fields (std > 0 for all).
    pub stats: CodecStats,
    /// Zero-variance fields with their constant value, reinstated on decode.
    pub constants: Vec<(String, ParamValue)>,
}

impl Codec {
    /// Fits statistics on `samples` against the full schema, prunes
    /// zero-variance numeric/integer fields into constants, and returns a
    /// ready-to-use codec.
    pub fn fit(full_schema: &ParamSchema, samples: &[ParamRecord]) -> Result<Codec> {
        let (full_stats, constant_names) = fit_stats(full_schema, samples)?;
        let mut constants = Vec::new();
        let mut fields = Vec::new();
        let mut stats = CodecStats::default();
        for spec in &full_schema.fields {
            if constant_names.contains(&spec.name) {
                let value = *samples[0].expect(&spec.name)?;
                constants.push((spec.name.clone(), value));
            } else {
                if let Some(fs) = full_stats.fields.get(&spec.name) {
                    stats.fields.insert(spec.name.clone(), *fs);
                }
                fields.push(spec.clone());
            }
        }
        Ok(Codec { schema: ParamSchema { fields }, stats, constants })
    }

    pub fn encoded_dim(&self) -> usize {
        self.schema.encoded_dim()
    }

    fn stats_for(&self, name: &str) -> Result<FieldStats> {
        self.stats
            .fields
            .get(name)
            .copied()
            .ok_or_else(|| Error::validation(format!("no statistics for field '{name}'")))
    }

    /// Encodes a schema-valid native record into R^P.
    pub fn encode(&self, rec: &ParamRecord) -> Result<Array1<f64>> {
        let mut out = Vec::with_capacity(self.encoded_dim());
        for spec in &self.schema.fields {
            let value = rec.expect(&spec.name)?;
            value_for_stats(spec, value)?;
            match (&spec.kind, value) {
                (FieldKind::Numeric, ParamValue::Numeric(v)) => {
                    let s = self.stats_for(&spec.name)?;
                    out.push((v - s.mean) / s.std);
                }
                (FieldKind::Integer, ParamValue::Integer(v)) => {
                    let s = self.stats_for(&spec.name)?;
                    out.push((*v as f64 - s.mean) / s.std);
                }
                (FieldKind::Categorical(classes), ParamValue::Categorical(c)) => {
                    for k in 0..classes.len() {
                        out.push(if k == *c { 1.0 } else { 0.0 });
                    }
                }
                _ => unreachable!("kind mismatch caught above"),
            }
        }
        Ok(Array1::from_vec(out))
    }

    /// Decodes an encoded vector back to a native record. Numerics are
    /// unscaled and clamped to the declared range, integers additionally
    /// rounded half-away-from-zero, categoricals take the argmax of their
    /// one-hot block (lowest index wins ties). Pruned constants are filled
    /// back in.
    pub fn decode(&self, v: &ArrayView1<f64>) -> Result<ParamRecord> {
        if v.len() != self.encoded_dim() {
            return Err(Error::validation(format!(
                "encoded vector has dim {}, codec expects {}",
                v.len(),
                self.encoded_dim()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric("non-finite value in encoded vector".to_string()));
        }
        let mut rec = ParamRecord::default();
        let mut offset = 0usize;
        for spec in &self.schema.fields {
            match &spec.kind {
                FieldKind::Numeric => {
                    let s = self.stats_for(&spec.name)?;
                    let raw = v[offset] * s.std + s.mean;
                    rec.set(&spec.name, ParamValue::Numeric(raw.clamp(spec.min, spec.max)));
                    offset += 1;
                }
                FieldKind::Integer => {
                    let s = self.stats_for(&spec.name)?;
                    let raw = (v[offset] * s.std + s.mean).round();
                    let clamped = raw.clamp(spec.min, spec.max);
                    rec.set(&spec.name, ParamValue::Integer(clamped as i64));
                    offset += 1;
                }
                FieldKind::Categorical(classes) => {
                    let block = v.slice(ndarray::s![offset..offset + classes.len()]);
                    let mut best = 0usize;
                    for (k, x) in block.iter().enumerate() {
                        if *x > block[best] {
                            best = k;
                        }
                    }
                    rec.set(&spec.name, ParamValue::Categorical(best));
                    offset += classes.len();
                }
            }
        }
        for (name, value) in &self.constants {
            rec.set(name, *value);
        }
        Ok(rec)
    }

    /// Human-readable description of the active fields, their statistics
    /// and the pruned constants.
    pub fn manifest_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# parameter codec: {} active fields, encoded dim {}",
            self.schema.fields.len(), self.encoded_dim());
        for spec in &self.schema.fields {
            match &spec.kind {
                FieldKind::Numeric | FieldKind::Integer => {
                    let fs = self.stats.fields.get(&spec.name).expect("stats present");
                    let kind = if matches!(spec.kind, FieldKind::Integer) { "int" } else { "num" };
                    let _ = writeln!(
                        s,
                        "{}  {}  mean={} std={} range=[{}, {}]",
                        spec.name, kind, fs.mean, fs.std, spec.min, spec.max
                    );
                }
                FieldKind::Categorical(classes) => {
                    let _ = writeln!(s, "{}  cat({})  classes={}", spec.name, classes.len(),
                        classes.join(","));
                }
            }
        }
        if !self.constants.is_empty() {
            let _ = writeln!(s, "# constants (excluded from the encoded space)");
            for (name, value) in &self.constants {
                let _ = writeln!(s, "{}  const={:?}", name, value);
            }
        }
        s
    }
}
