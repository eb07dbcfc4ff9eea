//! Similarity scorers: the deterministic default and an HTTP embedding adapter.

use std::collections::HashMap;
use std::sync::Mutex;

use serde_json::json;

use crate::error::{Error, Result};
use crate::ingest::HttpClient;

/// Similarity in [0,1] between a normalized term and candidate n-grams.
/// Implementations must be symmetric and give 1 for identical non-empty
/// strings.
pub trait SimilarityScorer: Send + Sync {
    /// Recorded alongside match results.
    fn id(&self) -> String;

    fn scores(&self, term: &str, candidates: &[&str]) -> Result<Vec<f64>>;

    fn score(&self, a: &str, b: &str) -> Result<f64> {
        Ok(self.scores(a, &[b])?[0])
    }
}

/// Cosine over character-trigram count vectors; Jaccard over character sets
/// when either string is shorter than three characters.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrigramCosine;

impl SimilarityScorer for TrigramCosine {
    fn id(&self) -> String {
        "trigram-cosine/1".into()
    }

    fn scores(&self, term: &str, candidates: &[&str]) -> Result<Vec<f64>> {
        let tv = TrigramVector::new(term);
        Ok(candidates
            .iter()
            .map(|c| {
                if *c == term && !term.is_empty() {
                    1.0
                } else if tv.short || c.chars().count() < 3 {
                    char_jaccard(term, c)
                } else {
                    tv.cosine(&TrigramVector::new(c))
                }
            })
            .collect())
    }
}

pub fn trigram_cosine(a: &str, b: &str) -> f64 {
    TrigramCosine.score(a, b).unwrap_or(0.0)
}

struct TrigramVector {
    counts: HashMap<[char; 3], u32>,
    norm: f64,
    short: bool,
}

impl TrigramVector {
    fn new(s: &str) -> Self {
        let chars: Vec<char> = s.chars().collect();
        let mut counts = HashMap::new();
        for w in chars.windows(3) {
            *counts.entry([w[0], w[1], w[2]]).or_insert(0u32) += 1;
        }
        let norm = counts.values().map(|&c| (c as f64).powi(2)).sum::<f64>().sqrt();
        Self { counts, norm, short: chars.len() < 3 }
    }

    fn cosine(&self, other: &Self) -> f64 {
        if self.norm == 0.0 || other.norm == 0.0 {
            return 0.0;
        }
        let (small, large) = if self.counts.len() <= other.counts.len() {
            (self, other)
        } else {
            (other, self)
        };
        let dot: f64 = small
            .counts
            .iter()
            .filter_map(|(k, &a)| large.counts.get(k).map(|&b| a as f64 * b as f64))
            .fold(0.0, |s, x| s + x); // not `sum`: an empty f64 sum is -0.0
        (dot / (self.norm * other.norm)).clamp(0.0, 1.0)
    }
}

fn char_jaccard(a: &str, b: &str) -> f64 {
    let sa: std::collections::BTreeSet<char> = a.chars().collect();
    let sb: std::collections::BTreeSet<char> = b.chars().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 0.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

/// Scores with vectors from an external service:
/// `POST {endpoint}/embed {"texts": [...]}` -> `{"vectors": [[...], ...]}`.
/// Cosine is computed locally and clamped to [0,1]; vectors are memoized.
pub struct EmbeddingScorer {
    endpoint: String,
    client: HttpClient,
    memo: Mutex<HashMap<String, Vec<f64>>>,
}

impl EmbeddingScorer {
    pub fn new(endpoint: impl Into<String>, client: HttpClient) -> Self {
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            client,
            memo: Mutex::new(HashMap::new()),
        }
    }

    fn ensure(&self, texts: &[&str]) -> Result<()> {
        let missing: Vec<&str> = {
            let memo = self.memo.lock().expect("memo lock");
            let mut seen = std::collections::HashSet::new();
            texts
                .iter()
                .copied()
                .filter(|t| !memo.contains_key(*t) && seen.insert(*t))
                .collect()
        };
        if missing.is_empty() {
            return Ok(());
        }
        let url = format!("{}/embed", self.endpoint);
        let resp = self.client.post_json(&url, &json!({ "texts": missing }), None)?;
        if !resp.is_success() {
            return Err(Error::HttpStatus { url, status: resp.status, body: resp.text() });
        }
        let body = resp.json()?;
        let vectors = body
            .get("vectors")
            .and_then(|v| v.as_array())
            .ok_or_else(|| Error::Malformed("embedding response lacks `vectors`".into()))?;
        if vectors.len() != missing.len() {
            return Err(Error::LengthMismatch(missing.len(), vectors.len()));
        }
        let mut memo = self.memo.lock().expect("memo lock");
        for (text, v) in missing.iter().zip(vectors) {
            let v: Vec<f64> = v
                .as_array()
                .ok_or_else(|| Error::Malformed("embedding is not an array".into()))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| Error::Malformed("non-numeric embedding".into())))
                .collect::<Result<_>>()?;
            memo.insert(text.to_string(), v);
        }
        Ok(())
    }
}

impl SimilarityScorer for EmbeddingScorer {
    fn id(&self) -> String {
        format!("embedding:{}", self.endpoint)
    }

    fn scores(&self, term: &str, candidates: &[&str]) -> Result<Vec<f64>> {
        let mut all = Vec::with_capacity(candidates.len() + 1);
        all.push(term);
        all.extend_from_slice(candidates);
        self.ensure(&all)?;
        let memo = self.memo.lock().expect("memo lock");
        let t = &memo[term];
        Ok(candidates
            .iter()
            .map(|c| {
                if *c == term && !term.is_empty() {
                    1.0
                } else {
                    dense_cosine(t, &memo[*c])
                }
            })
            .collect())
    }
}

fn dense_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).fold(0.0, |s, x| s + x);
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}
