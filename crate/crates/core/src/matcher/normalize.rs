//! Term normalization shared by the matcher, the KG builder and validation.

use crate::error::{Error, Result};

const DEFAULT_SYNONYMS: &str = include_str!("../../data/synonyms.tsv");

/// Compression suffixes removed before the real extension of a dataset name.
const COMPRESSION_EXTS: &[&str] = &["gz", "bz2", "xz", "zip", "zst"];

/// Phrase-level replacements applied after identifier splitting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynonymTable {
    /// Sorted longest phrase first so greedy matching prefers it.
    entries: Vec<(Vec<String>, Vec<String>)>,
}

impl SynonymTable {
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    /// Parse `phrase<TAB>replacement` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (from, to) = line
                .split_once('\t')
                .ok_or_else(|| Error::Config(format!("synonym line {}: expected a tab", no + 1)))?;
            let from = split_identifier(from);
            if from.is_empty() {
                return Err(Error::Config(format!("synonym line {}: empty phrase", no + 1)));
            }
            let to = to.split_whitespace().map(str::to_lowercase).collect();
            entries.push((from, to));
        }
        entries.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        Ok(Self { entries })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn fold(&self, tokens: Vec<String>) -> Vec<String> {
        let mut out = Vec::with_capacity(tokens.len());
        let mut i = 0;
        'outer: while i < tokens.len() {
            for (from, to) in &self.entries {
                if tokens[i..].starts_with(from) {
                    out.extend(to.iter().cloned());
                    i += from.len();
                    continue 'outer;
                }
            }
            out.push(tokens[i].clone());
            i += 1;
        }
        out
    }
}

impl Default for SynonymTable {
    fn default() -> Self {
        Self::parse(DEFAULT_SYNONYMS).expect("bundled synonym table is valid")
    }
}

/// Normalizes identifiers and file names into space-separated lowercase words.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Normalizer {
    pub synonyms: SynonymTable,
}

impl Normalizer {
    pub fn new(synonyms: SynonymTable) -> Self {
        Self { synonyms }
    }

    /// `ttest_ind` -> `t test`, `readCSV2` -> `read csv 2`.
    pub fn term(&self, raw: &str) -> String {
        self.synonyms.fold(split_identifier(raw)).join(" ")
    }

    /// Normalize the file name of a path or URL with its extension removed:
    /// `data/fmri_behavioural_new.csv` -> `fmri behavioural new`.
    pub fn dataset(&self, raw: &str) -> String {
        self.term(dataset_stem(raw))
    }
}

/// Last path segment without query, fragment or extension(s).
pub fn dataset_stem(raw: &str) -> &str {
    let no_query = raw.split(['?', '#']).next().unwrap_or(raw);
    let trimmed = no_query.trim_end_matches(['/', '\\']);
    let name = trimmed.rsplit(['/', '\\']).next().unwrap_or(trimmed);
    let mut stem = name;
    if let Some((base, ext)) = split_ext(stem) {
        if COMPRESSION_EXTS.contains(&ext.to_ascii_lowercase().as_str()) {
            stem = base;
        }
    }
    split_ext(stem).map_or(stem, |(base, _)| base)
}

fn split_ext(name: &str) -> Option<(&str, &str)> {
    let dot = name.rfind('.')?;
    let ext = &name[dot + 1..];
    (dot > 0 && !ext.is_empty() && ext.chars().all(|c| c.is_ascii_alphanumeric()))
        .then(|| (&name[..dot], ext))
}

/// Split on separators, camel-case humps and letter/digit boundaries;
/// lowercase every piece.
pub fn split_identifier(raw: &str) -> Vec<String> {
    let chars: Vec<char> = raw.chars().collect();
    let mut words = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if !c.is_alphanumeric() {
            flush(&mut current, &mut words);
            continue;
        }
        if let Some(&prev) = i.checked_sub(1).and_then(|p| chars.get(p)) {
            let next = chars.get(i + 1).copied();
            let boundary = (prev.is_alphabetic() && c.is_numeric())
                || (prev.is_numeric() && c.is_alphabetic())
                || (prev.is_lowercase() && c.is_uppercase())
                || (prev.is_uppercase()
                    && c.is_uppercase()
                    && next.is_some_and(|n| n.is_lowercase()));
            if boundary && prev.is_alphanumeric() {
                flush(&mut current, &mut words);
            }
        }
        current.extend(c.to_lowercase());
    }
    flush(&mut current, &mut words);
    words
}

fn flush(current: &mut String, words: &mut Vec<String>) {
    if !current.is_empty() {
        words.push(std::mem::take(current));
    }
}
