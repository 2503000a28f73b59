//! Versioned binary containers.
//!
//! All integers and floats are little-endian; floats are 64-bit IEEE-754.
//! Strings are a u32 byte length followed by UTF-8. Matrices are row-major
//! f64 payloads preceded by u32 dimensions.
//!
//! Flow checkpoint (`SFCK`, version 1), field order:
//!   magic, version, generator kind (u8: 0 tree / 1 animal),
//!   dim_cond u32, dim_shape u32, n_layers u32, hidden u32, compressed u32,
//!   compression u8, mask strategy u8 (0 checkerboard / 1 dimwise / 2 learned),
//!   per layer: layer_index u32, [logits; D] when learned, scale net,
//!   translation net (per net: n_stages u8, per stage: weight matrix, bias
//!   vector), then the parameter codec (schema, statistics, constants), then
//!   for animal checkpoints the embedded animal model.
//!
//! Shape-space container (`SSPC`, version 1): magic, version, animal model
//! (template, basis, sigmas, skeleton, labeled betas).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use crate::animal::{AnimalModel, MeshTemplate, ShapeSpace, Skeleton};
use crate::codec::{Codec, CodecStats, FieldKind, FieldSpec, FieldStats, ParamSchema, ParamValue};
use crate::error::{Error, Result};
use crate::flow::{
    CouplingFlow, CouplingLayer, FlowConfig, Head, MaskSpec, MaskStrategy,
    ScaleTranslateNet,
};

const FLOW_MAGIC: &[u8; 4] = b"SFCK";
const SPACE_MAGIC: &[u8; 4] = b"SSPC";
const VERSION: u32 = 1;

/// Which generator a checkpoint drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    Tree,
    Animal,
}

impl GeneratorKind {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorKind::Tree => "tree",
            GeneratorKind::Animal => "animal",
        }
    }

    fn to_u8(self) -> u8 {
        match self {
            GeneratorKind::Tree => 0,
            GeneratorKind::Animal => 1,
        }
    }

    fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(GeneratorKind::Tree),
            1 => Ok(GeneratorKind::Animal),
            other => Err(Error::format(format!("unknown generator kind {other}"))),
        }
    }
}

/// A trained flow bundled with everything needed to generate shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: GeneratorKind,
    pub flow: CouplingFlow,
    pub codec: Codec,
    /// Present for animal checkpoints; carries the shape space + skeleton.
    pub animal: Option<AnimalModel>,
}

fn strategy_to_u8(s: MaskStrategy) -> u8 {
    match s {
        MaskStrategy::Checkerboard => 0,
        MaskStrategy::Dimwise => 1,
        MaskStrategy::Learned => 2,
    }
}

fn strategy_from_u8(v: u8) -> Result<MaskStrategy> {
    match v {
        0 => Ok(MaskStrategy::Checkerboard),
        1 => Ok(MaskStrategy::Dimwise),
        2 => Ok(MaskStrategy::Learned),
        other => Err(Error::format(format!("unknown mask strategy tag {other}"))),
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    if len > 1 << 24 {
        return Err(Error::format(format!("string length {len} is implausible")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::format(format!("bad UTF-8 string: {e}")))
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    let mut bytes = vec![0u8; values.len() * 8];
    LittleEndian::write_f64_into(values, &mut bytes);
    w.write_all(&bytes)?;
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    let mut values = vec![0f64; count];
    LittleEndian::read_f64_into(&bytes, &mut values);
    Ok(values)
}

fn write_vector<W: Write>(w: &mut W, v: &Array1<f64>) -> Result<()> {
    w.write_u32::<LittleEndian>(v.len() as u32)?;
    write_f64s(w, v.as_slice().expect("standard layout"))
}

fn read_vector<R: Read>(r: &mut R) -> Result<Array1<f64>> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    Ok(Array1::from_vec(read_f64s(r, len)?))
}

fn write_matrix<W: Write>(w: &mut W, m: &Array2<f64>) -> Result<()> {
    w.write_u32::<LittleEndian>(m.nrows() as u32)?;
    w.write_u32::<LittleEndian>(m.ncols() as u32)?;
    match m.as_slice() {
        Some(slice) => write_f64s(w, slice),
        None => {
            let owned: Vec<f64> = m.iter().copied().collect();
            write_f64s(w, &owned)
        }
    }
}

fn read_matrix<R: Read>(r: &mut R) -> Result<Array2<f64>> {
    let rows = r.read_u32::<LittleEndian>()? as usize;
    let cols = r.read_u32::<LittleEndian>()? as usize;
    let data = read_f64s(r, rows * cols)?;
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::format(format!("bad matrix shape: {e}")))
}

fn write_net<W: Write>(w: &mut W, net: &ScaleTranslateNet) -> Result<()> {
    w.write_u8(net.n_stages() as u8)?;
    for (weight, bias) in net.weights.iter().zip(net.biases.iter()) {
        write_matrix(w, weight)?;
        write_vector(w, bias)?;
    }
    Ok(())
}

fn read_net<R: Read>(r: &mut R, head: Head) -> Result<ScaleTranslateNet> {
    let n_stages = r.read_u8()? as usize;
    if !(2..=3).contains(&n_stages) {
        return Err(Error::format(format!("net stage count {n_stages} out of range")));
    }
    let mut weights = Vec::with_capacity(n_stages);
    let mut biases = Vec::with_capacity(n_stages);
    for _ in 0..n_stages {
        weights.push(read_matrix(r)?);
        biases.push(read_vector(r)?);
    }
    Ok(ScaleTranslateNet { weights, biases, head })
}

fn write_codec<W: Write>(w: &mut W, codec: &Codec) -> Result<()> {
    w.write_u32::<LittleEndian>(codec.schema.fields.len() as u32)?;
    for field in &codec.schema.fields {
        write_str(w, &field.name)?;
        match &field.kind {
            FieldKind::Numeric => w.write_u8(0)?,
            FieldKind::Integer => w.write_u8(1)?,
            FieldKind::Categorical(classes) => {
                w.write_u8(2)?;
                w.write_u32::<LittleEndian>(classes.len() as u32)?;
                for c in classes {
                    write_str(w, c)?;
                }
            }
        }
        w.write_f64::<LittleEndian>(field.min)?;
        w.write_f64::<LittleEndian>(field.max)?;
    }
    w.write_u32::<LittleEndian>(codec.stats.fields.len() as u32)?;
    for (name, fs) in &codec.stats.fields {
        write_str(w, name)?;
        w.write_f64::<LittleEndian>(fs.mean)?;
        w.write_f64::<LittleEndian>(fs.std)?;
    }
    w.write_u32::<LittleEndian>(codec.constants.len() as u32)?;
    for (name, value) in &codec.constants {
        write_str(w, name)?;
        match value {
            ParamValue::Numeric(v) => {
                w.write_u8(0)?;
                w.write_f64::<LittleEndian>(*v)?;
            }
            ParamValue::Integer(v) => {
                w.write_u8(1)?;
                w.write_i64::<LittleEndian>(*v)?;
            }
            ParamValue::Categorical(v) => {
                w.write_u8(2)?;
                w.write_u32::<LittleEndian>(*v as u32)?;
            }
        }
    }
    Ok(())
}

fn read_codec<R: Read>(r: &mut R) -> Result<Codec> {
    let n_fields = r.read_u32::<LittleEndian>()? as usize;
    let mut fields = Vec::with_capacity(n_fields);
    for _ in 0..n_fields {
        let name = read_str(r)?;
        let kind = match r.read_u8()? {
            0 => FieldKind::Numeric,
            1 => FieldKind::Integer,
            2 => {
                let n = r.read_u32::<LittleEndian>()? as usize;
                let mut classes = Vec::with_capacity(n);
                for _ in 0..n {
                    classes.push(read_str(r)?);
                }
                FieldKind::Categorical(classes)
            }
            other => return Err(Error::format(format!("unknown field kind tag {other}"))),
        };
        let min = r.read_f64::<LittleEndian>()?;
        let max = r.read_f64::<LittleEndian>()?;
        fields.push(FieldSpec { name, kind, min, max });
    }
    let schema = ParamSchema::new(fields)?;

    let mut stats = CodecStats::default();
    let n_stats = r.read_u32::<LittleEndian>()? as usize;
    for _ in 0..n_stats {
        let name = read_str(r)?;
        let mean = r.read_f64::<LittleEndian>()?;
        let std = r.read_f64::<LittleEndian>()?;
        stats.fields.insert(name, FieldStats { mean, std });
    }

    let n_const = r.read_u32::<LittleEndian>()? as usize;
    let mut constants = Vec::with_capacity(n_const);
    for _ in 0..n_const {
        let name = read_str(r)?;
        let value = match r.read_u8()? {
            0 => ParamValue::Numeric(r.read_f64::<LittleEndian>()?),
            1 => ParamValue::Integer(r.read_i64::<LittleEndian>()?),
            2 => ParamValue::Categorical(r.read_u32::<LittleEndian>()? as usize),
            other => return Err(Error::format(format!("unknown constant tag {other}"))),
        };
        constants.push((name, value));
    }
    Ok(Codec { schema, stats, constants })
}

fn write_animal<W: Write>(w: &mut W, model: &AnimalModel) -> Result<()> {
    write_matrix(w, &model.space.template.vertices)?;
    w.write_u32::<LittleEndian>(model.space.template.faces.len() as u32)?;
    for f in &model.space.template.faces {
        for &idx in f {
            w.write_u32::<LittleEndian>(idx as u32)?;
        }
    }
    write_matrix(w, &model.space.basis)?;
    write_vector(w, &model.space.sigmas)?;
    write_matrix(w, &model.skeleton.joint_regressor)?;
    w.write_u32::<LittleEndian>(model.skeleton.parents.len() as u32)?;
    for p in &model.skeleton.parents {
        w.write_i32::<LittleEndian>(p.map_or(-1, |v| v as i32))?;
    }
    write_matrix(w, &model.skeleton.skinning)?;
    w.write_u32::<LittleEndian>(model.labels.len() as u32)?;
    for (label, beta) in model.labels.iter().zip(model.betas.outer_iter()) {
        write_str(w, label)?;
        write_f64s(w, beta.as_slice().expect("standard layout"))?;
    }
    Ok(())
}

fn read_animal<R: Read>(r: &mut R) -> Result<AnimalModel> {
    let vertices = read_matrix(r)?;
    let n_f = r.read_u32::<LittleEndian>()? as usize;
    let mut faces = Vec::with_capacity(n_f);
    for _ in 0..n_f {
        let a = r.read_u32::<LittleEndian>()? as usize;
        let b = r.read_u32::<LittleEndian>()? as usize;
        let c = r.read_u32::<LittleEndian>()? as usize;
        faces.push([a, b, c]);
    }
    let basis = read_matrix(r)?;
    let sigmas = read_vector(r)?;
    let joint_regressor = read_matrix(r)?;
    let n_j = r.read_u32::<LittleEndian>()? as usize;
    let mut parents = Vec::with_capacity(n_j);
    for _ in 0..n_j {
        let p = r.read_i32::<LittleEndian>()?;
        parents.push(if p < 0 { None } else { Some(p as usize) });
    }
    let skinning = read_matrix(r)?;
    let n_labels = r.read_u32::<LittleEndian>()? as usize;
    let n_b = basis.ncols();
    let mut labels = Vec::with_capacity(n_labels);
    let mut betas = Array2::zeros((n_labels, n_b));
    for i in 0..n_labels {
        labels.push(read_str(r)?);
        let row = read_f64s(r, n_b)?;
        betas.row_mut(i).assign(&Array1::from_vec(row));
    }
    let model = AnimalModel {
        space: ShapeSpace { template: MeshTemplate { vertices, faces }, basis, sigmas },
        skeleton: Skeleton { joint_regressor, parents, skinning },
        labels,
        betas,
    };
    model.validate()?;
    Ok(model)
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(FLOW_MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u8(self.kind.to_u8())?;
        let cfg = &self.flow.config;
        w.write_u32::<LittleEndian>(cfg.dim_cond as u32)?;
        w.write_u32::<LittleEndian>(cfg.dim_shape as u32)?;
        w.write_u32::<LittleEndian>(cfg.n_layers as u32)?;
        w.write_u32::<LittleEndian>(cfg.hidden as u32)?;
        w.write_u32::<LittleEndian>(cfg.compressed as u32)?;
        w.write_u8(cfg.compression as u8)?;
        w.write_u8(strategy_to_u8(cfg.strategy()?))?;
        for layer in &self.flow.layers {
            w.write_u32::<LittleEndian>(layer.mask_spec.layer_index as u32)?;
            if let Some(logits) = &layer.mask_spec.logits {
                write_f64s(w, logits.as_slice().expect("standard layout"))?;
            }
            write_net(w, &layer.s_net)?;
            write_net(w, &layer.t_net)?;
        }
        write_codec(w, &self.codec)?;
        match (&self.kind, &self.animal) {
            (GeneratorKind::Animal, Some(model)) => write_animal(w, model)?,
            (GeneratorKind::Animal, None) => {
                return Err(Error::validation(
                    "animal checkpoint without an embedded animal model".to_string(),
                ))
            }
            (GeneratorKind::Tree, _) => {}
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let file = File::open(&path)?;
        let mut r = BufReader::new(file);
        Self::read(&mut r)
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Checkpoint> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != FLOW_MAGIC {
            return Err(Error::format(format!(
                "not a flow checkpoint (magic {magic:?}, expected {FLOW_MAGIC:?})"
            )));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::format(format!(
                "unsupported checkpoint version {version}, expected {VERSION}"
            )));
        }
        let kind = GeneratorKind::from_u8(r.read_u8()?)?;
        let dim_cond = r.read_u32::<LittleEndian>()? as usize;
        let dim_shape = r.read_u32::<LittleEndian>()? as usize;
        let n_layers = r.read_u32::<LittleEndian>()? as usize;
        let hidden = r.read_u32::<LittleEndian>()? as usize;
        let compressed = r.read_u32::<LittleEndian>()? as usize;
        let compression = r.read_u8()? != 0;
        let strategy = strategy_from_u8(r.read_u8()?)?;
        let config = FlowConfig {
            dim_cond,
            dim_shape,
            n_layers,
            hidden,
            compressed,
            compression,
            mask_strategy: strategy.name().to_string(),
        };
        let d = config.dim();
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let layer_index = r.read_u32::<LittleEndian>()? as usize;
            let logits = if strategy == MaskStrategy::Learned {
                Some(Array1::from_vec(read_f64s(r, d)?))
            } else {
                None
            };
            let mask_spec = MaskSpec { strategy, layer_index, dim: d, logits };
            let s_net = read_net(r, Head::BoundedScale)?;
            let t_net = read_net(r, Head::Translation)?;
            layers.push(CouplingLayer::new(mask_spec, s_net, t_net)?);
        }
        let codec = read_codec(r)?;
        let animal = match kind {
            GeneratorKind::Animal => Some(read_animal(r)?),
            GeneratorKind::Tree => None,
        };
        let ckpt = Checkpoint { kind, flow: CouplingFlow { layers, config }, codec, animal };
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.codec.encoded_dim() != self.flow.dim_shape() {
            return Err(Error::validation(format!(
                "codec encodes {} dims but the flow expects P = {}",
                self.codec.encoded_dim(),
                self.flow.dim_shape()
            )));
        }
        for layer in &self.flow.layers {
            if layer.dim() != self.flow.dim() {
                return Err(Error::validation("layer dim mismatch".to_string()));
            }
            layer.mask()?; // both mask values present
        }
        if let Some(model) = &self.animal {
            model.validate()?;
        }
        Ok(())
    }
}

/// Writes a standalone shape-space container.
pub fn save_animal_model(model: &AnimalModel, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(SPACE_MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    write_animal(&mut w, model)?;
    w.flush()?;
    Ok(())
}

/// Reads a standalone shape-space container.
pub fn load_animal_model(path: impl AsRef<Path>) -> Result<AnimalModel> {
    let file = File::open(&path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != SPACE_MAGIC {
        return Err(Error::format(format!(
            "not a shape-space container (magic {magic:?}, expected {SPACE_MAGIC:?})"
        )));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported container version {version}")));
    }
    read_animal(&mut r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::animal::fixture::build_animal_model;
    use crate::codec::ParamRecord;
    use crate::flow::MaskStrategy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tree_checkpoint(strategy: MaskStrategy) -> Checkpoint {
        let records: Vec<ParamRecord> = crate::tree::builtin_presets()
            .iter()
            .map(|(_, p)| p.to_record())
            .collect();
        let codec = Codec::fit(&crate::tree::tree_schema(), &records).unwrap();
        let config = FlowConfig {
            dim_cond: 16,
            dim_shape: codec.encoded_dim(),
            n_layers: 3,
            hidden: 24,
            compressed: 12,
            compression: true,
            mask_strategy: strategy.name().to_string(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let flow = CouplingFlow::new_random(config, 1.0, &mut rng).unwrap();
        Checkpoint { kind: GeneratorKind::Tree, flow, codec, animal: None }
    }

    #[test]
    fn tree_checkpoint_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        for strategy in [MaskStrategy::Checkerboard, MaskStrategy::Dimwise, MaskStrategy::Learned] {
            let ckpt = tree_checkpoint(strategy);
            let path = dir.path().join(format!("{}.sfc", strategy.name()));
            ckpt.save(&path).unwrap();
            let back = Checkpoint::load(&path).unwrap();
            assert_eq!(back, ckpt);
            // byte-stable re-save
            let path2 = dir.path().join("again.sfc");
            back.save(&path2).unwrap();
            assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
        }
    }

    #[test]
    fn animal_checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let model = build_animal_model(6, 5, 2).unwrap();
        let records: Vec<ParamRecord> = crate::animal::fixture::beta_records(&model)
            .into_iter()
            .map(|(_, r)| r)
            .collect();
        let codec =
            Codec::fit(&crate::animal::fixture::beta_schema(model.space.n_components()), &records)
                .unwrap();
        let config = FlowConfig {
            dim_cond: 16,
            dim_shape: codec.encoded_dim(),
            n_layers: 2,
            hidden: 24,
            compressed: 12,
            compression: true,
            mask_strategy: "learned".to_string(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let flow = CouplingFlow::new_random(config, 1.0, &mut rng).unwrap();
        let ckpt =
            Checkpoint { kind: GeneratorKind::Animal, flow, codec, animal: Some(model.clone()) };
        let path = dir.path().join("animal.sfc");
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ckpt);

        // row-stochastic invariants survive the round trip bit-exactly
        let sk = &back.animal.as_ref().unwrap().skeleton;
        assert_eq!(sk.joint_regressor, model.skeleton.joint_regressor);
        assert_eq!(sk.skinning, model.skeleton.skinning);
        sk.validate(model.space.template.n_vertices()).unwrap();
    }

    #[test]
    fn shape_space_container_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let model = build_animal_model(5, 4, 9).unwrap();
        let path = dir.path().join("space.ssc");
        save_animal_model(&model, &path).unwrap();
        let back = load_animal_model(&path).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.sfc");
        std::fs::write(&path, b"JUNKXXXX").unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Format(_))));
        assert!(load_animal_model(&path).is_err());
    }

    #[test]
    fn codec_flow_dim_mismatch_rejected() {
        let mut ckpt = tree_checkpoint(MaskStrategy::Learned);
        ckpt.flow.config.dim_shape += 1;
        assert!(ckpt.validate().is_err());
    }
}
