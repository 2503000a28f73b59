//! Paired-comparison scaffolding: per-label preference votes between two
//! models' render embeddings, and the exact binomial significance test.

use shapeflow_core::embedding::{cosine, mock_embed_dim, prompt_for, EmbeddingManifest, EmbeddingVector, PromptKind, Provenance};
use shapeflow_core::error::{Error, Result};

/// Which model an individual vote prefers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Winner {
    A,
    B,
}

impl Winner {
    pub fn name(&self) -> &'static str {
        match self {
            Winner::A => "A",
            Winner::B => "B",
        }
    }
}

/// One paired comparison: cosine similarity of each model's render
/// embedding to the label's text embedding. Ties break to A.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteRecord {
    pub label: String,
    pub score_a: f64,
    pub score_b: f64,
    pub winner: Winner,
}

/// Complete vote run.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteTable {
    pub records: Vec<VoteRecord>,
    pub wins_a: usize,
    pub wins_b: usize,
}

impl VoteTable {
    pub fn total(&self) -> usize {
        self.records.len()
    }

    /// `label,score_a,score_b,winner` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,score_a,score_b,winner\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{},{}\n", r.label, r.score_a, r.score_b, r.winner.name()));
        }
        out
    }
}

/// Render embeddings for one label: the first two image/mock entries in
/// manifest order are model A and model B respectively.
fn render_pair<'m>(
    manifest: &'m EmbeddingManifest,
    label: &str,
) -> Result<(&'m EmbeddingVector, &'m EmbeddingVector)> {
    let renders: Vec<&EmbeddingVector> = manifest
        .entries_for(label)
        .into_iter()
        .filter(|e| e.provenance != Provenance::Text)
        .collect();
    match renders.as_slice() {
        [] => Err(Error::validation(format!(
            "missing render embeddings for (label '{label}', model A) and (label '{label}', model B)"
        ))),
        [_] => Err(Error::validation(format!(
            "missing render embedding for (label '{label}', model B)"
        ))),
        [a, b, ..] => Ok((a, b)),
    }
}

/// Runs the paired comparison for every label: the model whose render
/// embedding is closest (cosine) to the label's text embedding takes the
/// vote. The text embedding comes from `text_embeddings` (or the render
/// manifest's text entries) and falls back to the deterministic mock
/// embedding of the animal prompt when absent.
pub fn vote_compare(
    labels: &[String],
    render_embeddings: &EmbeddingManifest,
    text_embeddings: Option<&EmbeddingManifest>,
) -> Result<VoteTable> {
    let mut records = Vec::with_capacity(labels.len());
    let mut wins_a = 0;
    let mut wins_b = 0;
    for label in labels {
        let (render_a, render_b) = render_pair(render_embeddings, label)?;
        let text_owned;
        let text = match text_embeddings
            .and_then(|m| m.first_of(label, Provenance::Text))
            .or_else(|| render_embeddings.first_of(label, Provenance::Text))
        {
            Some(e) => e,
            None => {
                let prompt = prompt_for(PromptKind::Animal, label, None)?;
                text_owned = mock_embed_dim(&prompt, render_embeddings.dim)?;
                &text_owned
            }
        };
        if text.dim() != render_a.dim() {
            return Err(Error::validation(format!(
                "text embedding for '{label}' has dim {}, renders have {}",
                text.dim(),
                render_a.dim()
            )));
        }
        let score_a = cosine(text, render_a);
        let score_b = cosine(text, render_b);
        let winner = if score_b > score_a { Winner::B } else { Winner::A };
        match winner {
            Winner::A => wins_a += 1,
            Winner::B => wins_b += 1,
        }
        records.push(VoteRecord { label: label.clone(), score_a, score_b, winner });
    }
    Ok(VoteTable { records, wins_a, wins_b })
}

/// Largest total for which the exact summation is attempted.
pub const BINOMIAL_MAX_TOTAL: u64 = 1_000_000;

/// One-sided binomial test: `P(X >= wins)` for `X ~ Binomial(total, 1/2)`,
/// computed by exact log-space summation (no normal approximation).
pub fn binomial_test(wins: u64, total: u64) -> Result<f64> {
    if total == 0 {
        return Err(Error::validation("binomial total must be >= 1".to_string()));
    }
    if wins > total {
        return Err(Error::validation(format!("wins {wins} exceeds total {total}")));
    }
    if total > BINOMIAL_MAX_TOTAL {
        return Err(Error::validation(format!(
            "total {total} exceeds the exact-summation bound {BINOMIAL_MAX_TOTAL}"
        )));
    }
    if wins == 0 {
        return Ok(1.0);
    }
    let n = total as f64;
    // ln C(n, wins) built incrementally, then the ratio recurrence
    // C(n, k+1) = C(n, k) * (n - k) / (k + 1)
    let mut log_c = 0.0f64;
    for j in 1..=wins {
        log_c += ((n - wins as f64 + j as f64).ln()) - (j as f64).ln();
    }
    let mut log_terms = Vec::with_capacity((total - wins + 1) as usize);
    let mut cur = log_c;
    for k in wins..=total {
        log_terms.push(cur);
        if k < total {
            cur += (n - k as f64).ln() - ((k + 1) as f64).ln();
        }
    }
    let max = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = log_terms.iter().map(|t| (t - max).exp()).sum();
    let log_p = max + sum.ln() - n * std::f64::consts::LN_2;
    Ok(log_p.exp().min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use shapeflow_core::embedding::mock_embed_dim;

    #[test]
    fn three_of_three_is_exactly_one_eighth() {
        assert!((binomial_test(3, 3).unwrap() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn zero_wins_is_certain() {
        assert_eq!(binomial_test(0, 10).unwrap(), 1.0);
    }

    #[test]
    fn published_vote_counts_reproduce() {
        // 971 of 1855 -> p ~ 0.02; 850 of 1680 -> p ~ 0.3
        let p1 = binomial_test(971, 1855).unwrap();
        assert!((0.01..=0.03).contains(&p1), "p = {p1}");
        let p2 = binomial_test(850, 1680).unwrap();
        assert!((0.25..=0.35).contains(&p2), "p = {p2}");
    }

    /// Exact identity P(X >= w) + P(X <= w - 1) = 1: by the symmetry of
    /// the fair binomial, P(X <= w - 1) = P(X >= n - w + 1).
    #[test]
    fn upper_and_lower_tails_partition() {
        for (w, n) in [(1u64, 2u64), (5, 9), (13, 20), (971, 1855), (400, 1000)] {
            let upper = binomial_test(w, n).unwrap();
            let lower = binomial_test(n - w + 1, n).unwrap();
            assert!(
                (upper + lower - 1.0).abs() < 1e-12,
                "partition failed for ({w}, {n}): {upper} + {lower}"
            );
        }
    }

    #[test]
    fn binomial_rejects_bad_counts() {
        assert!(binomial_test(5, 4).is_err());
        assert!(binomial_test(0, 0).is_err());
        assert!(binomial_test(1, BINOMIAL_MAX_TOTAL + 1).is_err());
    }

    fn mock_render_manifest(labels: &[String], identical: bool) -> EmbeddingManifest {
        let mut m = EmbeddingManifest::new(32, "mock renders");
        for label in labels {
            let mut a = mock_embed_dim(&format!("render {label} alpha"), 32).unwrap();
            a.label = label.clone();
            let mut b = if identical {
                a.clone()
            } else {
                let mut b = mock_embed_dim(&format!("render {label} beta"), 32).unwrap();
                b.label = label.clone();
                b
            };
            b.label = label.clone();
            m.push(a).unwrap();
            m.push(b).unwrap();
        }
        m
    }

    #[test]
    fn identical_renders_tie_to_a() {
        let labels: Vec<String> = (0..7).map(|i| format!("species{i}")).collect();
        let renders = mock_render_manifest(&labels, true);
        let table = vote_compare(&labels, &renders, None).unwrap();
        assert_eq!(table.wins_a, 7);
        assert_eq!(table.wins_b, 0);
        assert!(table.records.iter().all(|r| r.winner == Winner::A));
    }

    #[test]
    fn votes_sum_to_label_count_at_122() {
        let labels: Vec<String> = (0..122).map(|i| format!("animal {i:03}")).collect();
        let renders = mock_render_manifest(&labels, false);
        let table = vote_compare(&labels, &renders, None).unwrap();
        assert_eq!(table.total(), 122);
        assert_eq!(table.wins_a + table.wins_b, 122);
    }

    #[test]
    fn swapping_models_swaps_counts_up_to_ties() {
        let labels: Vec<String> = (0..40).map(|i| format!("case {i}")).collect();
        let renders = mock_render_manifest(&labels, false);
        let table = vote_compare(&labels, &renders, None).unwrap();

        // swap the two render entries of every label
        let mut swapped = EmbeddingManifest::new(renders.dim, renders.source.clone());
        for pair in renders.entries.chunks(2) {
            swapped.push(pair[1].clone()).unwrap();
            swapped.push(pair[0].clone()).unwrap();
        }
        let table2 = vote_compare(&labels, &swapped, None).unwrap();
        let ties = table
            .records
            .iter()
            .filter(|r| r.score_a == r.score_b)
            .count();
        assert_eq!(table2.wins_b + ties, table.wins_a);
        assert_eq!(table2.wins_a, table.wins_b + ties);
    }

    #[test]
    fn missing_render_is_an_error_naming_the_pair() {
        let labels = vec!["solo".to_string()];
        let mut m = EmbeddingManifest::new(16, "incomplete");
        let mut a = mock_embed_dim("solo render", 16).unwrap();
        a.label = "solo".to_string();
        m.push(a).unwrap();
        match vote_compare(&labels, &m, None) {
            Err(Error::Validation(msg)) => assert!(msg.contains("model B"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn csv_shape() {
        let labels = vec!["x".to_string()];
        let renders = mock_render_manifest(&labels, true);
        let table = vote_compare(&labels, &renders, None).unwrap();
        let csv = table.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("label,score_a,score_b,winner"));
        assert!(lines.next().unwrap().starts_with("x,"));
    }
}
