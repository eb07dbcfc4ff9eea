//! Keep only the code facts the linked article talks about.
//!
//! Terms derived from a chain (dataset name, operation names) are normalized
//! and compared with every uni-, bi- and trigram of the article's
//! stop-word-filtered text. A term is accepted when its best score reaches
//! the threshold; a chain is scholarly when its dataset term or at least one
//! operation term is accepted.

mod index;
mod normalize;
mod scorer;

use serde::{Deserialize, Serialize};

use crate::dataflow::ProvenanceChain;
use crate::doi::Doi;
use crate::error::{Error, Result};

pub use index::{
    build_article_index, normalize_text, ArticleIndex, CharSpan, NGram, StopwordList,
    DEFAULT_STOPWORD_LIST,
};
pub use normalize::{dataset_stem, split_identifier, Normalizer, SynonymTable};
pub use scorer::{trigram_cosine, EmbeddingScorer, SimilarityScorer, TrigramCosine};

pub const DEFAULT_THRESHOLD: f64 = 0.82;

/// Name of the chain-level aggregation rule, recorded with each verdict.
pub const SCHOLARLY_RULE: &str = "dataset_or_any_operation";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermOrigin {
    LoaderArgument,
    OperationName,
    DatasetStem,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateTerm {
    pub raw: String,
    pub normalized: String,
    pub origin: TermOrigin,
    pub chain_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub term: CandidateTerm,
    pub article_doi: Doi,
    /// Best n-gram; absent only when the index is empty.
    pub matched_ngram: Option<String>,
    pub span: Option<CharSpan>,
    pub score: f64,
    pub accepted: bool,
}

/// Dataset-stem term for the chain's literal source argument (if any), then
/// one term per distinct operation name in chain order.
pub fn extract_terms(chain: &ProvenanceChain, normalizer: &Normalizer) -> Vec<CandidateTerm> {
    let mut terms = Vec::new();
    if let Some(arg) = chain.source.argument.literal() {
        let normalized = normalizer.dataset(arg);
        if !normalized.is_empty() {
            terms.push(CandidateTerm {
                raw: arg.to_string(),
                normalized,
                origin: TermOrigin::DatasetStem,
                chain_ref: chain.id.clone(),
            });
        }
    }
    let mut seen = std::collections::HashSet::new();
    for op in &chain.operations {
        if !seen.insert(op.name.as_str()) {
            continue;
        }
        let normalized = normalizer.term(&op.name);
        if normalized.is_empty() {
            continue;
        }
        terms.push(CandidateTerm {
            raw: op.name.clone(),
            normalized,
            origin: TermOrigin::OperationName,
            chain_ref: chain.id.clone(),
        });
    }
    terms
}

/// Best n-gram for every term. Ties go to the earliest span.
pub fn match_terms(
    terms: &[CandidateTerm],
    index: &ArticleIndex,
    scorer: &dyn SimilarityScorer,
    threshold: f64,
) -> Result<Vec<MatchResult>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!("threshold {threshold} outside (0, 1]")));
    }
    // Distinct n-gram texts, each with its earliest span.
    let mut distinct: Vec<&NGram> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for g in index.ngrams() {
        if seen.insert(g.text.as_str()) {
            distinct.push(g);
        }
    }
    let candidates: Vec<&str> = distinct.iter().map(|g| g.text.as_str()).collect();
    let mut out = Vec::with_capacity(terms.len());
    for term in terms {
        let scores = if candidates.is_empty() {
            Vec::new()
        } else {
            scorer.scores(&term.normalized, &candidates)?
        };
        let mut best: Option<(usize, f64)> = None;
        for (i, &s) in scores.iter().enumerate() {
            if best.map_or(true, |(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        let (matched_ngram, span, score) = match best {
            Some((i, s)) => (Some(distinct[i].text.clone()), Some(distinct[i].span), s.clamp(0.0, 1.0)),
            None => (None, None, 0.0),
        };
        out.push(MatchResult {
            term: term.clone(),
            article_doi: index.doi.clone(),
            matched_ngram,
            span,
            score,
            accepted: score >= threshold,
        });
    }
    Ok(out)
}

/// Chain-level gate: the dataset term or any operation term accepted.
pub fn is_scholarly(results: &[MatchResult]) -> bool {
    results.iter().any(|r| r.accepted)
}

/// The stricter reading: every term accepted.
pub fn is_scholarly_strict(results: &[MatchResult]) -> bool {
    !results.is_empty() && results.iter().all(|r| r.accepted)
}

/// One chain matched against one article, as written to the match artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMatch {
    pub chain_id: String,
    pub package_doi: Option<Doi>,
    pub article_doi: Doi,
    pub scorer: String,
    pub threshold: f64,
    pub stopword_list_id: String,
    pub rule: String,
    pub scholarly: bool,
    pub scholarly_strict: bool,
    pub results: Vec<MatchResult>,
}

/// Extract, match and judge one chain against one article index.
pub fn match_chain(
    chain: &ProvenanceChain,
    index: &ArticleIndex,
    normalizer: &Normalizer,
    scorer: &dyn SimilarityScorer,
    threshold: f64,
) -> Result<ChainMatch> {
    let terms = extract_terms(chain, normalizer);
    let results = match_terms(&terms, index, scorer, threshold)?;
    Ok(ChainMatch {
        chain_id: chain.id.clone(),
        package_doi: chain.package_doi.clone(),
        article_doi: index.doi.clone(),
        scorer: scorer.id(),
        threshold,
        stopword_list_id: index.stopword_list_id.clone(),
        rule: SCHOLARLY_RULE.to_string(),
        scholarly: is_scholarly(&results),
        scholarly_strict: is_scholarly_strict(&results),
        results,
    })
}
