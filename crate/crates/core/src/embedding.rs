//! Embedding ingestion: prompt templates, a deterministic mock embedder,
//! manifest files, cosine-similarity zero-shot classification and
//! spherical interpolation.
//!
//! Real encoder inference is out of process: export vectors with any
//! external tool into the manifest format. The mock embedder keeps the
//! pipeline hermetic and produces correlated vectors for prompts sharing
//! tokens.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Default embedding width, matching common 512-d ViT-B/32 encoders.
pub const DEFAULT_EMBED_DIM: usize = 512;

/// Where a vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Text,
    Image,
    Mock,
}

impl Provenance {
    pub fn name(&self) -> &'static str {
        match self {
            Provenance::Text => "text",
            Provenance::Image => "image",
            Provenance::Mock => "mock",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "text" => Ok(Provenance::Text),
            "image" => Ok(Provenance::Image),
            "mock" => Ok(Provenance::Mock),
            other => Err(Error::format(format!("unknown provenance '{other}'"))),
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A labeled conditioning vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub data: Array1<f64>,
    pub provenance: Provenance,
    pub label: String,
}

impl EmbeddingVector {
    pub fn new(data: Array1<f64>, provenance: Provenance, label: impl Into<String>) -> Result<Self> {
        let v = EmbeddingVector { data, provenance, label: label.into() };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation(format!(
                "embedding '{}' contains non-finite values",
                self.label
            )));
        }
        if self.norm() == 0.0 {
            return Err(Error::validation(format!("embedding '{}' has zero norm", self.label)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cosine similarity of two vectors.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let dot: f64 = a.data.iter().zip(b.data.iter()).map(|(x, y)| x * y).sum();
    dot / (a.norm() * b.norm())
}

/// Prompt template family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    Animal,
    Tree,
    TreeAged,
}

/// Exact template substitution: `A photo of a <animal>`,
/// `A photo of a <species> tree`, `A photo of a <age> <species> tree`.
pub fn prompt_for(kind: PromptKind, name: &str, age: Option<&str>) -> Result<String> {
    match kind {
        PromptKind::Animal => Ok(format!("A photo of a {name}")),
        PromptKind::Tree => Ok(format!("A photo of a {name} tree")),
        PromptKind::TreeAged => {
            let age = age.ok_or_else(|| {
                Error::validation("aged tree prompt requires an age qualifier".to_string())
            })?;
            Ok(format!("A photo of a {age} {name} tree"))
        }
    }
}

/// FNV-1a, 64 bit. Fixed integer hashing keeps the mock embedder stable
/// across platforms and releases.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Deterministic stand-in for a real encoder: per whitespace token, a
/// counter-based generator seeded from the token hash produces a unit
/// Gaussian vector; token vectors are summed and L2-normalized. Prompts
/// sharing tokens come out correlated.
pub fn mock_embed_dim(text: &str, dim: usize) -> Result<EmbeddingVector> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(Error::validation("cannot embed empty text".to_string()));
    }
    let mut acc = Array1::<f64>::zeros(dim);
    for tok in tokens {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(tok.as_bytes()));
        for slot in acc.iter_mut() {
            let draw: f64 = StandardNormal.sample(&mut rng);
            *slot += draw;
        }
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::numeric("mock embedding collapsed to zero".to_string()));
    }
    acc.mapv_inplace(|v| v / norm);
    EmbeddingVector::new(acc, Provenance::Mock, text)
}

/// [`mock_embed_dim`] at the default width.
pub fn mock_embed(text: &str) -> Result<EmbeddingVector> {
    mock_embed_dim(text, DEFAULT_EMBED_DIM)
}

/// Argmax of cosine similarity over `candidates`; ties break to the lowest
/// index. Returns the winning label and the full score vector.
pub fn classify_zero_shot(
    query: &EmbeddingVector,
    candidates: &[EmbeddingVector],
) -> Result<(String, Vec<f64>)> {
    if candidates.is_empty() {
        return Err(Error::validation("empty candidate list".to_string()));
    }
    let scores: Vec<f64> = candidates.iter().map(|c| cosine(query, c)).collect();
    let mut best = 0usize;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok((candidates[best].label.clone(), scores))
}

/// Spherical linear interpolation on the unit sphere; `t = 0` gives `a`,
/// `t = 1` gives `b`. Antipodal inputs have no unique great circle and are
/// rejected.
pub fn interpolate(a: &EmbeddingVector, b: &EmbeddingVector, t: f64) -> Result<EmbeddingVector> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::validation(format!("interpolation parameter {t} outside [0, 1]")));
    }
    if a.dim() != b.dim() {
        return Err(Error::validation(format!(
            "embedding dims differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let an = &a.data / a.norm();
    let bn = &b.data / b.norm();
    let dot: f64 = an.iter().zip(bn.iter()).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0);
    if dot <= -1.0 + 1e-12 {
        return Err(Error::numeric(
            "antipodal embeddings: interpolation path is undefined".to_string(),
        ));
    }
    let omega = dot.acos();
    let data = if omega < 1e-9 {
        // nearly parallel: linear blend, renormalized
        let mut v = &an * (1.0 - t) + &bn * t;
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.mapv_inplace(|x| x / n);
        v
    } else {
        let sin_omega = omega.sin();
        &an * (((1.0 - t) * omega).sin() / sin_omega) + &bn * ((t * omega).sin() / sin_omega)
    };
    let label = format!("{}~{}@{t}", a.label, b.label);
    EmbeddingVector::new(data, a.provenance, label)
}

/// One manifest record: `label<TAB>provenance<TAB>base64(f32-LE vector)`.
pub fn record_line(entry: &EmbeddingVector) -> String {
    let mut bytes = Vec::with_capacity(4 * entry.dim());
    for v in entry.data.iter() {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    format!("{}\t{}\t{}", entry.label, entry.provenance, BASE64.encode(&bytes))
}

/// Manifest of labeled embeddings with a uniform dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingManifest {
    pub dim: usize,
    pub source: String,
    pub entries: Vec<EmbeddingVector>,
}

const MANIFEST_HEADER: &str = "embedding-manifest v1";

impl EmbeddingManifest {
    pub fn new(dim: usize, source: impl Into<String>) -> Self {
        EmbeddingManifest { dim, source: source.into(), entries: Vec::new() }
    }

    pub fn push(&mut self, entry: EmbeddingVector) -> Result<()> {
        if entry.dim() != self.dim {
            return Err(Error::validation(format!(
                "entry '{}' has dim {}, manifest expects {}",
                entry.label,
                entry.dim(),
                self.dim
            )));
        }
        entry.validate()?;
        self.entries.push(entry);
        Ok(())
    }

    /// All entries for a label, in file order.
    pub fn entries_for<'a>(&'a self, label: &str) -> Vec<&'a EmbeddingVector> {
        self.entries.iter().filter(|e| e.label == label).collect()
    }

    /// First entry carrying `label`, any provenance.
    pub fn first(&self, label: &str) -> Option<&EmbeddingVector> {
        self.entries.iter().find(|e| e.label == label)
    }

    /// First entry carrying `label` with the given provenance.
    pub fn first_of(&self, label: &str, provenance: Provenance) -> Option<&EmbeddingVector> {
        self.entries.iter().find(|e| e.label == label && e.provenance == provenance)
    }

    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = Vec::new();
        for e in &self.entries {
            if !labels.contains(&e.label) {
                labels.push(e.label.clone());
            }
        }
        labels
    }

    /// Writes the textual manifest: a fixed header (format tag, dimension,
    /// source note), then one tab-separated record per entry with the
    /// vector as base64 of 32-bit little-endian floats.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{MANIFEST_HEADER}")?;
        writeln!(w, "dim\t{}", self.dim)?;
        writeln!(w, "source\t{}", self.source)?;
        for e in &self.entries {
            writeln!(w, "{}", record_line(e))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(&path)?;
        let reader = BufReader::new(file);
        let mut lines = reader.lines();

        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::format("empty manifest file".to_string()))?;
        if header.trim() != MANIFEST_HEADER {
            return Err(Error::format(format!(
                "bad manifest header '{header}', expected '{MANIFEST_HEADER}'"
            )));
        }
        let dim_line = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::format("manifest missing dim line".to_string()))?;
        let dim: usize = dim_line
            .strip_prefix("dim\t")
            .ok_or_else(|| Error::format(format!("bad dim line '{dim_line}'")))?
            .trim()
            .parse()
            .map_err(|e| Error::format(format!("bad dim value: {e}")))?;
        let source_line = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::format("manifest missing source line".to_string()))?;
        let source = source_line
            .strip_prefix("source\t")
            .ok_or_else(|| Error::format(format!("bad source line '{source_line}'")))?
            .to_string();

        let mut manifest = EmbeddingManifest::new(dim, source);
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, '\t');
            let (label, prov, payload) = match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(p), Some(d)) => (l, p, d),
                _ => {
                    return Err(Error::format(format!(
                        "manifest row {row}: expected label<TAB>provenance<TAB>base64"
                    )))
                }
            };
            let provenance = Provenance::from_name(prov)
                .map_err(|e| Error::format(format!("manifest row {row}: {e}")))?;
            let bytes = BASE64
                .decode(payload.trim())
                .map_err(|e| Error::format(format!("manifest row {row}: bad base64: {e}")))?;
            if bytes.len() != 4 * dim {
                return Err(Error::format(format!(
                    "manifest row {row}: vector has {} floats, expected dim {dim}",
                    bytes.len() / 4
                )));
            }
            let data = Array1::from_iter(bytes.chunks_exact(4).map(|c| {
                f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64
            }));
            let entry = EmbeddingVector::new(data, provenance, label)
                .map_err(|e| Error::format(format!("manifest row {row}: {e}")))?;
            manifest.push(entry)?;
        }
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn prompt_templates_exact() {
        assert_eq!(prompt_for(PromptKind::Animal, "Llama", None).unwrap(), "A photo of a Llama");
        assert_eq!(
            prompt_for(PromptKind::Tree, "Gingko", None).unwrap(),
            "A photo of a Gingko tree"
        );
        assert_eq!(
            prompt_for(PromptKind::TreeAged, "Acer", Some("Old")).unwrap(),
            "A photo of a Old Acer tree"
        );
        assert!(prompt_for(PromptKind::TreeAged, "Acer", None).is_err());
    }

    #[test]
    fn mock_embed_is_deterministic_and_normalized() {
        let a = mock_embed("A photo of a cat").unwrap();
        let b = mock_embed("A photo of a cat").unwrap();
        assert_eq!(a.data, b.data);
        assert_abs_diff_eq!(a.norm(), 1.0, epsilon = 1e-12);
        assert!(mock_embed("   ").is_err());
    }

    #[test]
    fn shared_tokens_correlate_above_random_baseline() {
        // Monte-Carlo check: prompts sharing 4 of 5 tokens should be closer
        // than a random unit vector is, on average over 100 draws
        let cat = mock_embed("A photo of a cat").unwrap();
        let dog = mock_embed("A photo of a dog").unwrap();
        let related = cosine(&cat, &dog);

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut acc = 0.0;
        for _ in 0..100 {
            let data = Array1::from_shape_fn(DEFAULT_EMBED_DIM, |_| rng.gen_range(-1.0..1.0));
            let random = EmbeddingVector::new(data, Provenance::Mock, "random").unwrap();
            acc += cosine(&cat, &random);
        }
        let baseline = acc / 100.0;
        assert!(
            related > baseline + 0.1,
            "related {related} should exceed random baseline {baseline}"
        );
    }

    #[test]
    fn classify_returns_self_and_respects_epsilon_margin() {
        let a = mock_embed("alpha token").unwrap();
        let b = mock_embed("beta token").unwrap();
        let c = mock_embed("gamma token").unwrap();
        let (label, scores) = classify_zero_shot(&a, &[a.clone(), b, c]).unwrap();
        assert_eq!(label, "alpha token");
        assert_abs_diff_eq!(scores[0], 1.0, epsilon = 1e-12);

        // orthogonal candidates, query = cand0 + eps * cand1
        let e0 = EmbeddingVector::new(Array1::from_vec(vec![1.0, 0.0]), Provenance::Mock, "e0").unwrap();
        let e1 = EmbeddingVector::new(Array1::from_vec(vec![0.0, 1.0]), Provenance::Mock, "e1").unwrap();
        let q = EmbeddingVector::new(Array1::from_vec(vec![1.0, 1e-3]), Provenance::Mock, "q").unwrap();
        let (label, _) = classify_zero_shot(&q, &[e0, e1]).unwrap();
        assert_eq!(label, "e0");
    }

    #[test]
    fn classify_invariant_to_query_rescaling() {
        let cands: Vec<EmbeddingVector> =
            ["one", "two", "three"].iter().map(|t| mock_embed(t).unwrap()).collect();
        let q = mock_embed("two-ish two").unwrap();
        let (l1, s1) = classify_zero_shot(&q, &cands).unwrap();
        let scaled =
            EmbeddingVector::new(&q.data * 37.5, q.provenance, q.label.clone()).unwrap();
        let (l2, s2) = classify_zero_shot(&scaled, &cands).unwrap();
        assert_eq!(l1, l2);
        for (a, b) in s1.iter().zip(s2.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn classify_rejects_empty_candidates() {
        let q = mock_embed("query").unwrap();
        assert!(classify_zero_shot(&q, &[]).is_err());
    }

    #[test]
    fn slerp_endpoints_and_midpoint() {
        let a = EmbeddingVector::new(Array1::from_vec(vec![1.0, 0.0]), Provenance::Mock, "a").unwrap();
        let b = EmbeddingVector::new(Array1::from_vec(vec![0.0, 1.0]), Provenance::Mock, "b").unwrap();
        let at = interpolate(&a, &b, 0.0).unwrap();
        assert_abs_diff_eq!(at.data[0], 1.0, epsilon = 1e-12);
        let bt = interpolate(&a, &b, 1.0).unwrap();
        assert_abs_diff_eq!(bt.data[1], 1.0, epsilon = 1e-12);
        // closed form: halfway between orthogonal unit vectors is (a+b)/sqrt(2)
        let mid = interpolate(&a, &b, 0.5).unwrap();
        assert_abs_diff_eq!(mid.data[0], 1.0 / 2.0f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(mid.data[1], 1.0 / 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn slerp_rejects_antipodal() {
        let a = EmbeddingVector::new(Array1::from_vec(vec![1.0, 0.0]), Provenance::Mock, "a").unwrap();
        let b = EmbeddingVector::new(Array1::from_vec(vec![-1.0, 0.0]), Provenance::Mock, "b").unwrap();
        assert!(interpolate(&a, &b, 0.5).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        let mut m = EmbeddingManifest::new(8, "unit test");
        for (label, prov) in
            [("Quaking Aspen", Provenance::Text), ("Quaking Aspen", Provenance::Image), ("Palm", Provenance::Mock)]
        {
            let mut v = mock_embed_dim(label, 8).unwrap();
            v.provenance = prov;
            v.label = label.to_string();
            m.push(v).unwrap();
        }
        m.save(&path).unwrap();
        let back = EmbeddingManifest::load(&path).unwrap();
        assert_eq!(back.dim, 8);
        assert_eq!(back.source, "unit test");
        assert_eq!(back.entries.len(), 3);
        assert_eq!(back.entries[1].provenance, Provenance::Image);
        // f32 payload: values agree to single precision
        for (a, b) in back.entries[0].data.iter().zip(m.entries[0].data.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
        // second save is byte-identical
        let path2 = dir.path().join("m2.tsv");
        back.save(&path2).unwrap();
        let bytes1 = std::fs::read(&path).unwrap();
        // re-encode of f32-quantized data differs from the original save only
        // if precision was lost twice; saving the loaded manifest again must
        // be stable
        back.save(&path).unwrap();
        let bytes1b = std::fs::read(&path).unwrap();
        assert_eq!(std::fs::read(&path2).unwrap(), bytes1b);
        let _ = bytes1;
    }

    #[test]
    fn manifest_rejects_dim_mismatch_with_row_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tsv");
        let mut text = String::new();
        text.push_str("embedding-manifest v1\ndim\t4\nsource\tx\n");
        let bytes: Vec<u8> = [1.0f32, 2.0].iter().flat_map(|v| v.to_le_bytes()).collect();
        text.push_str(&format!("short\tmock\t{}\n", BASE64.encode(&bytes)));
        std::fs::write(&path, text).unwrap();
        match EmbeddingManifest::load(&path) {
            Err(Error::Format(msg)) => assert!(msg.contains("row 0"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn empty_manifest_loads_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.tsv");
        EmbeddingManifest::new(16, "nothing").save(&path).unwrap();
        let back = EmbeddingManifest::load(&path).unwrap();
        assert!(back.entries.is_empty());
        assert_eq!(back.dim, 16);
    }
}
