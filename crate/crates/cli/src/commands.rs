//! Subcommand implementations. Each command validates its inputs, is
//! deterministic under `--seed`, and reports failures through the shared
//! error type (mapped to exit codes in `main`).

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shapeflow_core::animal::fixture::{beta_from_record, beta_records, beta_schema};
use shapeflow_core::animal::AnimalModel;
use shapeflow_core::checkpoint::{load_animal_model, Checkpoint, GeneratorKind};
use shapeflow_core::codec::{Codec, ParamRecord};
use shapeflow_core::embedding::{
    classify_zero_shot, interpolate, mock_embed_dim, EmbeddingManifest, EmbeddingVector,
    Provenance,
};
use shapeflow_core::error::{Error, Result};
use shapeflow_core::flow::CouplingFlow;
use shapeflow_core::mesh::export_obj;
use shapeflow_core::train::{make_dataset, train, write_loss_history_csv};
use shapeflow_core::tree::{self, TreeParams};

use crate::config::TrainFileConfig;
use crate::vote::{binomial_test, vote_compare};

/// Parses `<manifest-path>:<label>`; the label follows the last colon.
fn parse_manifest_ref(spec: &str) -> Result<(PathBuf, String)> {
    match spec.rsplit_once(':') {
        Some((path, label)) if !path.is_empty() && !label.is_empty() => {
            Ok((PathBuf::from(path), label.to_string()))
        }
        _ => Err(Error::validation(format!(
            "expected <manifest>:<label>, got '{spec}'"
        ))),
    }
}

fn embedding_from_ref(spec: &str, expected_dim: usize) -> Result<EmbeddingVector> {
    let (path, label) = parse_manifest_ref(spec)?;
    let manifest = EmbeddingManifest::load(&path)?;
    let entry = manifest
        .first(&label)
        .ok_or_else(|| Error::validation(format!("label '{label}' not found in {}", path.display())))?;
    if entry.dim() != expected_dim {
        return Err(Error::validation(format!(
            "checkpoint/schema mismatch: embedding dim expected {expected_dim}, found {}",
            entry.dim()
        )));
    }
    Ok(entry.clone())
}

/// Loads the labeled parameter records for a generator kind from a
/// directory: tree presets (`*.txt`) or a shape-space container (`*.ssc`).
fn load_params_dir(kind: GeneratorKind, dir: &Path) -> Result<(Codec, Vec<(String, ParamRecord)>, Option<AnimalModel>)> {
    match kind {
        GeneratorKind::Tree => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "txt"))
                .collect();
            files.sort();
            if files.len() < 2 {
                return Err(Error::validation(format!(
                    "need at least 2 tree presets in {}, found {}",
                    dir.display(),
                    files.len()
                )));
            }
            let mut records = Vec::new();
            for path in &files {
                let params = tree::load_preset_file(path)?;
                let stem = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .ok_or_else(|| Error::validation(format!("bad preset path {}", path.display())))?;
                records.push((tree::display_name(stem), params.to_record()));
            }
            let samples: Vec<ParamRecord> = records.iter().map(|(_, r)| r.clone()).collect();
            let codec = Codec::fit(&tree::tree_schema(), &samples)?;
            Ok((codec, records, None))
        }
        GeneratorKind::Animal => {
            let mut containers: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "ssc"))
                .collect();
            containers.sort();
            let path = match containers.as_slice() {
                [one] => one.clone(),
                [] => {
                    return Err(Error::validation(format!(
                        "no shape-space container (*.ssc) in {}",
                        dir.display()
                    )))
                }
                _ => {
                    return Err(Error::validation(format!(
                        "multiple shape-space containers in {}",
                        dir.display()
                    )))
                }
            };
            let model = load_animal_model(&path)?;
            let records = beta_records(&model);
            let samples: Vec<ParamRecord> = records.iter().map(|(_, r)| r.clone()).collect();
            let codec = Codec::fit(&beta_schema(model.space.n_components()), &samples)?;
            Ok((codec, records, Some(model)))
        }
    }
}

pub fn run_train(
    kind_name: &str,
    params_dir: &Path,
    embeddings: &Path,
    config_path: &Path,
    out: &Path,
) -> Result<()> {
    let kind = match kind_name {
        "tree" => GeneratorKind::Tree,
        "animal" => GeneratorKind::Animal,
        other => return Err(Error::validation(format!("unknown kind '{other}'"))),
    };
    let file_config = TrainFileConfig::load(config_path)?;
    let manifest = EmbeddingManifest::load(embeddings)?;
    if manifest.dim != file_config.flow.embed_dim {
        return Err(Error::validation(format!(
            "embedding manifest dim {} does not match configured embed_dim {}",
            manifest.dim, file_config.flow.embed_dim
        )));
    }
    let (codec, records, animal) = load_params_dir(kind, params_dir)?;
    let dataset = make_dataset(&manifest, &records, &codec)?;
    if !dataset.unmatched_embedding_labels.is_empty() {
        eprintln!(
            "note: {} embedding labels have no parameters and were skipped: {}",
            dataset.unmatched_embedding_labels.len(),
            dataset.unmatched_embedding_labels.join(", ")
        );
    }

    let mut flow = match &file_config.resume_from {
        Some(path) => {
            let prev = Checkpoint::load(path)?;
            if prev.kind != kind {
                return Err(Error::validation(format!(
                    "resume checkpoint is a {} model, training {}",
                    prev.kind.name(),
                    kind.name()
                )));
            }
            if prev.flow.dim_shape() != codec.encoded_dim() {
                return Err(Error::validation(format!(
                    "checkpoint/schema mismatch: P expected {}, found {}",
                    codec.encoded_dim(),
                    prev.flow.dim_shape()
                )));
            }
            prev.flow
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(file_config.train.seed);
            CouplingFlow::new(file_config.flow.to_flow_config(codec.encoded_dim()), &mut rng)?
        }
    };

    let save = |flow: &CouplingFlow| -> Result<()> {
        let snapshot = Checkpoint {
            kind,
            flow: flow.clone(),
            codec: codec.clone(),
            animal: animal.clone(),
        };
        snapshot.save(out)
    };
    let history = train(&mut flow, &dataset, &file_config.train, &mut |flow, _| save(flow))?;

    write_loss_history_csv(&history, out.with_extension("loss.csv"))?;
    std::fs::write(out.with_extension("codec.txt"), codec.manifest_text())?;
    let final_loss = history.last().map_or(f64::NAN, |s| s.loss);
    println!(
        "trained {} flow on {} pairs for {} epochs, final loss {final_loss}",
        kind.name(),
        dataset.pairs.len(),
        history.len()
    );
    println!("checkpoint {}", out.display());
    Ok(())
}

/// Decodes a generated parameter vector and meshes it for the checkpoint's
/// generator.
fn synthesize(ckpt: &Checkpoint, encoded: &Array1<f64>, seed: u64, out: &Path) -> Result<()> {
    let record = ckpt.codec.decode(&encoded.view())?;
    let mesh = match ckpt.kind {
        GeneratorKind::Tree => {
            let params = TreeParams::from_record(&record)?;
            tree::generate_tree(&params, seed)?
        }
        GeneratorKind::Animal => {
            let model = ckpt
                .animal
                .as_ref()
                .ok_or_else(|| Error::validation("animal checkpoint lacks a shape space".to_string()))?;
            let beta = beta_from_record(&record, model.space.n_components())?;
            let vertices = model.space.shape_mesh(&beta)?;
            model.space.template.to_trimesh(&vertices)
        }
    };
    export_obj(&mesh, out)?;
    Ok(())
}

fn condition_for(ckpt: &Checkpoint, prompt: &str, embedding: Option<&str>) -> Result<Array1<f64>> {
    let c = ckpt.flow.dim_cond();
    match embedding {
        Some(spec) => Ok(embedding_from_ref(spec, c)?.data),
        None => Ok(mock_embed_dim(prompt, c)?.data),
    }
}

pub fn run_generate(
    ckpt_path: &Path,
    prompt: &str,
    embedding: Option<&str>,
    seed: u64,
    sample_latent: bool,
    out: &Path,
) -> Result<()> {
    let ckpt = Checkpoint::load(ckpt_path)?;
    let cond = condition_for(&ckpt, prompt, embedding)?;
    let latent = if sample_latent { Some(ckpt.flow.sample_shape_latent(seed)) } else { None };
    let encoded = ckpt.flow.generate_params(&cond, latent.as_ref())?;
    synthesize(&ckpt, &encoded, seed, out)?;
    println!("wrote {}", out.display());
    Ok(())
}

pub fn run_interpolate(
    ckpt_path: &Path,
    from: &str,
    to: &str,
    steps: usize,
    out_dir: &Path,
) -> Result<()> {
    if steps == 0 {
        return Err(Error::validation("steps must be >= 1".to_string()));
    }
    let ckpt = Checkpoint::load(ckpt_path)?;
    let c = ckpt.flow.dim_cond();
    let a = mock_embed_dim(from, c)?;
    let b = mock_embed_dim(to, c)?;
    std::fs::create_dir_all(out_dir)?;
    for j in 0..steps {
        let t = if steps == 1 { 0.0 } else { j as f64 / (steps - 1) as f64 };
        let blend = interpolate(&a, &b, t)?;
        let encoded = ckpt.flow.generate_params(&blend.data, None)?;
        let path = out_dir.join(format!("step_{j:02}.obj"));
        synthesize(&ckpt, &encoded, 0, &path)?;
        println!("step {j} t={t:.6} file={}", path.display());
    }
    Ok(())
}

pub fn run_ablate(
    ckpt_a: &Path,
    ckpt_b: &Path,
    labels_path: &Path,
    render_embeddings: &Path,
    out: &Path,
) -> Result<()> {
    // both checkpoints must load cleanly; the votes themselves come from
    // the externally produced render embeddings
    let a = Checkpoint::load(ckpt_a)?;
    let b = Checkpoint::load(ckpt_b)?;
    if a.kind != b.kind {
        return Err(Error::validation(format!(
            "checkpoints disagree on generator kind: {} vs {}",
            a.kind.name(),
            b.kind.name()
        )));
    }
    let text = std::fs::read_to_string(labels_path)?;
    let labels: Vec<String> =
        text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
    if labels.is_empty() {
        return Err(Error::validation(format!("no labels in {}", labels_path.display())));
    }
    let renders = EmbeddingManifest::load(render_embeddings)?;
    let table = vote_compare(&labels, &renders, None)?;
    std::fs::write(out, table.to_csv())?;
    let p_value = binomial_test(table.wins_a.max(table.wins_b) as u64, table.total() as u64)?;
    println!(
        "wins_a={} wins_b={} total={} p_value={}",
        table.wins_a,
        table.wins_b,
        table.total(),
        p_value
    );
    println!("votes {}", out.display());
    Ok(())
}

pub fn run_binom(wins: u64, total: u64) -> Result<()> {
    println!("{}", binomial_test(wins, total)?);
    Ok(())
}

pub fn run_preset_list() -> Result<()> {
    for name in tree::PRESET_NAMES {
        println!("{name}");
    }
    Ok(())
}

pub fn run_preset_show(name: &str) -> Result<()> {
    let params = tree::load_preset(name)?;
    print!("{}", tree::preset_text(&params));
    Ok(())
}

pub fn run_embed_mock(text: &str, label: Option<&str>, dim: usize, out: Option<&Path>) -> Result<()> {
    let mut vector = mock_embed_dim(text, dim)?;
    vector.provenance = Provenance::Mock;
    if let Some(label) = label {
        vector.label = label.to_string();
    }
    match out {
        Some(path) => {
            let mut manifest = EmbeddingManifest::new(dim, "mock embedder");
            manifest.push(vector)?;
            manifest.save(path)?;
            println!("wrote {}", path.display());
        }
        None => {
            println!("{}", shapeflow_core::embedding::record_line(&vector));
        }
    }
    Ok(())
}

pub fn run_classify(query: &str, candidates_path: &Path) -> Result<()> {
    let manifest = EmbeddingManifest::load(candidates_path)?;
    if manifest.entries.is_empty() {
        return Err(Error::validation("candidate manifest is empty".to_string()));
    }
    // a query of the form <manifest>:<label> pulls a stored embedding;
    // anything else is mock-embedded text
    let query_vec = match parse_manifest_ref(query) {
        Ok((path, label)) if path.exists() => {
            let m = EmbeddingManifest::load(&path)?;
            m.first(&label)
                .ok_or_else(|| {
                    Error::validation(format!("label '{label}' not found in {}", path.display()))
                })?
                .clone()
        }
        _ => mock_embed_dim(query, manifest.dim)?,
    };
    if query_vec.dim() != manifest.dim {
        return Err(Error::validation(format!(
            "query dim {} does not match candidates dim {}",
            query_vec.dim(),
            manifest.dim
        )));
    }
    let (best, scores) = classify_zero_shot(&query_vec, &manifest.entries)?;
    println!("best\t{best}");
    let mut out = std::io::stdout().lock();
    for (entry, score) in manifest.entries.iter().zip(scores.iter()) {
        writeln!(out, "score\t{}\t{}", entry.label, score)?;
    }
    Ok(())
}
