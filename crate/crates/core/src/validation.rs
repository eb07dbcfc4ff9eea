//! Agreement between extraction and hand annotation (Willmott's index).
//!
//! Every annotated or extracted item becomes one coordinate labelled
//! `facet:name` (facets `dataset`, `operation`, `output`); the observed
//! vector marks annotated items and the predicted vector extracted ones.
//! Scripts are pooled by concatenating their vectors before one index is
//! computed.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataflow::{LoaderSet, ProvenanceChain};
use crate::doi::Doi;
use crate::error::{Error, Result};
use crate::ingest::{FileKind, LocalPackage};
use crate::matcher::Normalizer;
use crate::recompute::OutputConfirmation;

pub const TRUTH_SCHEMA: &str = "provex.truth/1";

/// Willmott's index of agreement
/// `d = 1 - Σ(Pᵢ-Oᵢ)² / Σ(|Pᵢ-Ō| + |Oᵢ-Ō|)²`. A zero denominator means
/// perfect agreement and yields 1.
pub fn index_of_agreement(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    if observed.len() != predicted.len() {
        return Err(Error::LengthMismatch(observed.len(), predicted.len()));
    }
    if observed.is_empty() {
        return Err(Error::EmptyVectors);
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (&o, &p) in observed.iter().zip(predicted) {
        num += (p - o).powi(2);
        den += ((p - mean).abs() + (o - mean).abs()).powi(2);
    }
    if den == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - num / den)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthAnnotation {
    pub package_doi: Doi,
    pub script_path: String,
    #[serde(default)]
    pub input_datasets: Vec<String>,
    #[serde(default)]
    pub operations: Vec<String>,
    #[serde(default)]
    pub outputs: Vec<String>,
    #[serde(default)]
    pub scholarly: bool,
}

impl GroundTruthAnnotation {
    /// Normalize and deduplicate every list.
    pub fn normalized(mut self, n: &Normalizer) -> Self {
        self.input_datasets = dedup(self.input_datasets.iter().map(|d| n.dataset(d)));
        self.operations = dedup(self.operations.iter().map(|o| n.term(o)));
        self.outputs = dedup(self.outputs.iter().map(|o| o.trim().to_string()));
        self
    }

    pub fn script_id(&self) -> String {
        format!("{}:{}", self.package_doi, self.script_path)
    }
}

fn dedup(items: impl Iterator<Item = String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for i in items.filter(|s| !s.is_empty()) {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct TruthLine {
    schema: String,
    #[serde(flatten)]
    annotation: GroundTruthAnnotation,
}

/// Read `provex.truth/1` JSON Lines, normalizing each annotation.
pub fn load_truth(path: &Path, normalizer: &Normalizer) -> Result<Vec<GroundTruthAnnotation>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let l: TruthLine = serde_json::from_str(line)
            .map_err(|e| Error::Malformed(format!("{}:{}: {e}", path.display(), no + 1)))?;
        if l.schema != TRUTH_SCHEMA {
            return Err(Error::SchemaMismatch {
                path: path.to_path_buf(),
                expected: TRUTH_SCHEMA.into(),
                found: l.schema,
            });
        }
        out.push(l.annotation.normalized(normalizer));
    }
    Ok(out)
}

/// What the pipeline extracted for one script, already normalized.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedItems {
    pub datasets: BTreeSet<String>,
    pub operations: BTreeSet<String>,
    pub outputs: BTreeSet<String>,
}

impl ExtractedItems {
    /// Literal dataset names and operation names of the script's chains, and
    /// its confirmed output values.
    pub fn from_results(
        chains: &[&ProvenanceChain],
        confirmations: &[OutputConfirmation],
        normalizer: &Normalizer,
    ) -> Self {
        let mut items = Self::default();
        for c in chains {
            if let Some(arg) = c.source.argument.literal() {
                items.datasets.insert(normalizer.dataset(arg));
            }
            for op in &c.operations {
                items.operations.insert(normalizer.term(&op.name));
            }
        }
        items.outputs = confirmations.iter().filter(|c| c.confirmed).map(|c| c.value.clone()).collect();
        items.datasets.remove("");
        items.operations.remove("");
        items
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    pub labels: Vec<String>,
    pub observed: Vec<f64>,
    pub predicted: Vec<f64>,
}

impl Encoding {
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Binary vectors over the sorted union of annotated and extracted labels.
pub fn encode_vectors(truth: &GroundTruthAnnotation, extracted: &ExtractedItems) -> Encoding {
    let label = |facet: &str, v: &str| format!("{facet}:{v}");
    let observed: BTreeSet<String> = truth
        .input_datasets
        .iter()
        .map(|d| label("dataset", d))
        .chain(truth.operations.iter().map(|o| label("operation", o)))
        .chain(truth.outputs.iter().map(|o| label("output", o)))
        .collect();
    let predicted: BTreeSet<String> = extracted
        .datasets
        .iter()
        .map(|d| label("dataset", d))
        .chain(extracted.operations.iter().map(|o| label("operation", o)))
        .chain(extracted.outputs.iter().map(|o| label("output", o)))
        .collect();
    let labels: Vec<String> = observed.union(&predicted).cloned().collect();
    let bit = |set: &BTreeSet<String>, l: &String| if set.contains(l) { 1.0 } else { 0.0 };
    Encoding {
        observed: labels.iter().map(|l| bit(&observed, l)).collect(),
        predicted: labels.iter().map(|l| bit(&predicted, l)).collect(),
        labels,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptAgreement {
    pub script_id: String,
    pub labels: Vec<String>,
    pub observed: Vec<f64>,
    pub predicted: Vec<f64>,
    /// `None` for scripts with empty vectors (skipped in pooling).
    pub ia: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub per_script: Vec<ScriptAgreement>,
    /// Index over the concatenation of all non-empty script vectors.
    pub ia: f64,
    pub n_packages: usize,
    pub n_scripts: usize,
}

/// Pool `(script id, package, encoding)` triples into one report.
pub fn report(scripts: Vec<(String, Doi, Encoding)>) -> Result<AgreementReport> {
    let mut pooled_o = Vec::new();
    let mut pooled_p = Vec::new();
    let mut packages = BTreeSet::new();
    let mut per_script = Vec::new();
    for (script_id, package, enc) in scripts {
        packages.insert(package);
        let ia = if enc.is_empty() {
            None
        } else {
            pooled_o.extend_from_slice(&enc.observed);
            pooled_p.extend_from_slice(&enc.predicted);
            Some(index_of_agreement(&enc.observed, &enc.predicted)?)
        };
        per_script.push(ScriptAgreement {
            script_id,
            labels: enc.labels,
            observed: enc.observed,
            predicted: enc.predicted,
            ia,
        });
    }
    per_script.sort_by(|a, b| a.script_id.cmp(&b.script_id));
    Ok(AgreementReport {
        ia: index_of_agreement(&pooled_o, &pooled_p)?,
        n_packages: packages.len(),
        n_scripts: per_script.len(),
        per_script,
    })
}

/// Plain-text table: one row per script, then the pooled index.
pub fn render_table(r: &AgreementReport) -> String {
    let width = r.per_script.iter().map(|s| s.script_id.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:<width$}  {:>5}  {:>5}  {:>6}\n", "script", "items", "hits", "IA");
    for s in &r.per_script {
        let hits = s.observed.iter().zip(&s.predicted).filter(|(o, p)| o == p).count();
        let ia = s.ia.map_or("-".to_string(), |v| format!("{v:.4}"));
        out.push_str(&format!("{:<width$}  {:>5}  {:>5}  {:>6}\n", s.script_id, s.labels.len(), hits, ia));
    }
    out.push_str(&format!(
        "pooled IA over {} scripts in {} packages: {:.4}\n",
        r.n_scripts, r.n_packages, r.ia
    ));
    out
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScriptRef {
    pub package_doi: Doi,
    pub script_path: String,
}

/// Scripts and notebooks whose text mentions a loader name as a whole
/// identifier anywhere, comments included. Deliberately looser than AST
/// detection: this is the pool offered for annotation.
pub fn scan_candidates(corpus: &[LocalPackage], loaders: &LoaderSet) -> Vec<ScriptRef> {
    let mut out = Vec::new();
    for pkg in corpus {
        for e in &pkg.files.entries {
            if !matches!(e.kind, FileKind::Script | FileKind::Notebook) {
                continue;
            }
            let Ok(bytes) = std::fs::read(pkg.root_path.join(&e.relative_path)) else {
                log::warn!("cannot read {}", e.relative_path);
                continue;
            };
            let text = String::from_utf8_lossy(&bytes);
            if loaders.iter().any(|l| mentions(&text, l)) {
                out.push(ScriptRef { package_doi: pkg.doi().clone(), script_path: e.relative_path.clone() });
            }
        }
    }
    out.sort();
    out
}

fn mentions(text: &str, name: &str) -> bool {
    let ident = |c: char| c.is_alphanumeric() || c == '_';
    text.match_indices(name).any(|(i, _)| {
        let before = text[..i].chars().next_back();
        let after = text[i + name.len()..].chars().next();
        !before.is_some_and(ident) && !after.is_some_and(ident)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doi() -> Doi {
        Doi::parse("10.5281/zenodo.1").unwrap()
    }

    fn truth(ds: &[&str], ops: &[&str], outs: &[&str]) -> GroundTruthAnnotation {
        GroundTruthAnnotation {
            package_doi: doi(),
            script_path: "a.py".into(),
            input_datasets: ds.iter().map(|s| s.to_string()).collect(),
            operations: ops.iter().map(|s| s.to_string()).collect(),
            outputs: outs.iter().map(|s| s.to_string()).collect(),
            scholarly: true,
        }
        .normalized(&Normalizer::default())
    }

    fn extracted(ds: &[&str], ops: &[&str]) -> ExtractedItems {
        ExtractedItems {
            datasets: ds.iter().map(|s| s.to_string()).collect(),
            operations: ops.iter().map(|s| s.to_string()).collect(),
            outputs: BTreeSet::new(),
        }
    }

    #[test]
    fn hand_computed_values() {
        assert!((index_of_agreement(&[1., 1., 0.], &[1., 0., 0.]).unwrap() - 20.0 / 29.0).abs() < 1e-12);
        assert_eq!(index_of_agreement(&[0., 1.], &[0., 1.]).unwrap(), 1.0);
        assert_eq!(index_of_agreement(&[1., 1.], &[1., 1.]).unwrap(), 1.0);
        assert!(matches!(index_of_agreement(&[1.], &[1., 0.]), Err(Error::LengthMismatch(1, 2))));
        assert!(matches!(index_of_agreement(&[], &[]), Err(Error::EmptyVectors)));
    }

    #[test]
    fn encoding_missing_operation() {
        let t = truth(&["fmri_behavioural_new.csv"], &["dropna", "head", "groupby", "ttest_ind"], &[]);
        let e = extracted(&["fmri behavioural new"], &["dropna", "head", "t test"]);
        let enc = encode_vectors(&t, &e);
        assert_eq!(enc.labels.len(), 5);
        let i = enc.labels.iter().position(|l| l == "operation:groupby").unwrap();
        assert_eq!((enc.observed[i], enc.predicted[i]), (1.0, 0.0));
        assert_eq!(enc.observed.iter().sum::<f64>(), 5.0);
        assert_eq!(enc.predicted.iter().sum::<f64>(), 4.0);
    }

    #[test]
    fn empty_encodings_are_skipped_when_pooling() {
        let full = encode_vectors(&truth(&["x.csv"], &["mean"], &[]), &extracted(&["x"], &["mean"]));
        let empty = encode_vectors(&truth(&[], &[], &[]), &ExtractedItems::default());
        assert!(empty.is_empty());
        let r = report(vec![("a".into(), doi(), full.clone()), ("b".into(), doi(), empty), ("c".into(), doi(), full)]).unwrap();
        assert_eq!(r.ia, 1.0);
        assert_eq!(r.per_script[1].ia, None);
        assert_eq!((r.n_scripts, r.n_packages), (3, 1));
        assert!(render_table(&r).contains("pooled IA over 3 scripts in 1 packages: 1.0000"));
    }

    #[test]
    fn pooled_differs_from_mean_of_scripts() {
        // Script 1: O=[1,1,0] P=[1,0,0] (20/29); script 2: O=P=[1] (1).
        let enc1 = Encoding { labels: vec!["a".into(), "b".into(), "c".into()], observed: vec![1., 1., 0.], predicted: vec![1., 0., 0.] };
        let enc2 = Encoding { labels: vec!["d".into()], observed: vec![1.], predicted: vec![1.] };
        let r = report(vec![("s1".into(), doi(), enc1), ("s2".into(), doi(), enc2)]).unwrap();
        // Pooled O=[1,1,0,1], P=[1,0,0,1]: mean 3/4, numerator 1,
        // denominator (1/4+1/4)²+(3/4+1/4)²+(3/4+3/4)²+(1/4+1/4)² = 15/4.
        assert!((r.ia - (1.0 - 4.0 / 15.0)).abs() < 1e-12);
        assert!((r.per_script[0].ia.unwrap() - 20.0 / 29.0).abs() < 1e-12);
    }

    #[test]
    fn identifier_boundaries() {
        assert!(mentions("df = pd.read_csv('a')", "read_csv"));
        assert!(mentions("# read_csv later", "read_csv"));
        assert!(!mentions("my_read_csv_wrapper()", "read_csv"));
        assert!(!mentions("reopen()", "open"));
    }

    proptest! {
        #[test]
        fn bounded_and_reflexive(bits in prop::collection::vec((0u8..2, 0u8..2), 1..40)) {
            let o: Vec<f64> = bits.iter().map(|b| b.0 as f64).collect();
            let p: Vec<f64> = bits.iter().map(|b| b.1 as f64).collect();
            let d = index_of_agreement(&o, &p).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert!((index_of_agreement(&o, &o).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
