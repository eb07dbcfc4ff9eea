//! Stop-word filtered n-gram index over article text.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::doi::Doi;
use crate::error::{Error, Result};

pub const DEFAULT_STOPWORD_LIST: &str = "en-basic/1";

const BUNDLED: &[(&str, &str)] = &[(
    DEFAULT_STOPWORD_LIST,
    include_str!("../../data/stopwords/en-basic-1.txt"),
)];

/// A versioned stop-word list; the id is recorded in every index built with it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordList {
    pub id: String,
    words: HashSet<String>,
}

impl StopwordList {
    /// One word per line, `#` comments.
    pub fn parse(id: impl Into<String>, text: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Self { id: id.into(), words }
    }

    pub fn bundled(id: &str) -> Result<Self> {
        BUNDLED
            .iter()
            .find(|(k, _)| *k == id)
            .map(|(k, text)| Self::parse(*k, text))
            .ok_or_else(|| Error::Config(format!("unknown stop-word list `{id}`")))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

impl Default for StopwordList {
    fn default() -> Self {
        Self::bundled(DEFAULT_STOPWORD_LIST).expect("bundled list")
    }
}

/// Half-open range of Unicode scalar values (not bytes) in the article text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        let mut idx = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
        let start = idx.nth(self.start).unwrap_or(text.len());
        let end = if self.end > self.start {
            idx.nth(self.end - self.start - 1).unwrap_or(text.len())
        } else {
            start
        };
        &text[start..end]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NGram {
    pub text: String,
    pub span: CharSpan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleIndex {
    pub doi: Doi,
    pub unigrams: Vec<NGram>,
    pub bigrams: Vec<NGram>,
    pub trigrams: Vec<NGram>,
    pub stopword_list_id: String,
}

impl ArticleIndex {
    pub fn is_empty(&self) -> bool {
        self.unigrams.is_empty()
    }

    /// All n-grams ordered by span (start, then end).
    pub fn ngrams(&self) -> Vec<&NGram> {
        let mut all: Vec<&NGram> = self
            .unigrams
            .iter()
            .chain(&self.bigrams)
            .chain(&self.trigrams)
            .collect();
        all.sort_by_key(|g| g.span);
        all
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Token {
    pub text: String,
    pub span: CharSpan,
    pub sentence: usize,
}

/// Lowercased word tokens with stop words removed, tagged with sentence
/// numbers. Words are split further at `_` and at a `.` between letters so
/// that `data_file.csv` yields three tokens while `0.001` stays whole.
pub(crate) fn tokenize(text: &str, stopwords: &StopwordList) -> Vec<Token> {
    let sentence_ends = sentence_ends(text);
    let mut char_pos = CharCounter::new(text);
    let mut out = Vec::new();
    for (offset, word) in text.unicode_word_indices() {
        for (sub_off, piece) in split_word(word) {
            let lower = piece.to_lowercase();
            if stopwords.contains(&lower) {
                continue;
            }
            let byte = offset + sub_off;
            let start = char_pos.at(byte);
            let end = start + piece.chars().count();
            let sentence = sentence_ends.partition_point(|&e| e <= byte);
            out.push(Token { text: lower, span: CharSpan { start, end }, sentence });
        }
    }
    out
}

fn split_word(word: &str) -> Vec<(usize, &str)> {
    let chars: Vec<(usize, char)> = word.char_indices().collect();
    let mut pieces = Vec::new();
    let mut start = 0;
    for (i, &(b, c)) in chars.iter().enumerate() {
        let cut = c == '_'
            || (c == '.'
                && i > 0
                && chars[i - 1].1.is_alphabetic()
                && chars.get(i + 1).is_some_and(|n| n.1.is_alphabetic()));
        if cut {
            if b > start {
                pieces.push((start, &word[start..b]));
            }
            start = b + c.len_utf8();
        }
    }
    if word.len() > start {
        pieces.push((start, &word[start..]));
    }
    pieces
}

/// Byte offsets just past each sentence terminator (`.?!` followed by
/// whitespace).
fn sentence_ends(text: &str) -> Vec<usize> {
    let mut ends = Vec::new();
    let mut it = text.char_indices().peekable();
    while let Some((i, c)) = it.next() {
        if matches!(c, '.' | '?' | '!') && it.peek().is_some_and(|(_, n)| n.is_whitespace()) {
            ends.push(i + 1);
        }
    }
    ends
}

/// Monotone byte -> char offset conversion.
struct CharCounter<'a> {
    text: &'a str,
    byte: usize,
    chars: usize,
}

impl<'a> CharCounter<'a> {
    fn new(text: &'a str) -> Self {
        Self { text, byte: 0, chars: 0 }
    }

    fn at(&mut self, byte: usize) -> usize {
        if byte < self.byte {
            self.byte = 0;
            self.chars = 0;
        }
        self.chars += self.text[self.byte..byte].chars().count();
        self.byte = byte;
        self.chars
    }
}

/// The normalized form an index gives to a piece of text: its surviving
/// tokens joined by single spaces.
pub fn normalize_text(text: &str, stopwords: &StopwordList) -> String {
    tokenize(text, stopwords)
        .into_iter()
        .map(|t| t.text)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn build_article_index(text: &str, doi: &Doi, stopwords: &StopwordList) -> ArticleIndex {
    let tokens = tokenize(text, stopwords);
    let mut grams: [Vec<NGram>; 3] = Default::default();
    for (i, first) in tokens.iter().enumerate() {
        for n in 1..=3 {
            let Some(window) = tokens.get(i..i + n) else { break };
            if window.iter().any(|t| t.sentence != first.sentence) {
                break;
            }
            let text = window.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ");
            let span = CharSpan { start: first.span.start, end: window[n - 1].span.end };
            grams[n - 1].push(NGram { text, span });
        }
    }
    let [unigrams, bigrams, trigrams] = grams;
    ArticleIndex {
        doi: doi.clone(),
        unigrams,
        bigrams,
        trigrams,
        stopword_list_id: stopwords.id.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doi() -> Doi {
        Doi::parse("10.1234/x").unwrap()
    }

    fn index(text: &str) -> ArticleIndex {
        build_article_index(text, &doi(), &StopwordList::default())
    }

    fn texts(g: &[NGram]) -> Vec<&str> {
        g.iter().map(|n| n.text.as_str()).collect()
    }

    #[test]
    fn t_test_on_fmri() {
        let idx = index("We ran a t test on fMRI data.");
        assert!(texts(&idx.bigrams).contains(&"t test"));
        assert!(texts(&idx.unigrams).contains(&"fmri"));
        assert_eq!(idx.stopword_list_id, "en-basic/1");
    }

    #[test]
    fn empty_text() {
        assert!(index("").is_empty());
        assert!(index("the of and").is_empty());
    }

    #[test]
    fn p_value_tokens_and_span() {
        let text = "Groups differed (p < 0.001).";
        let idx = index(text);
        let uni = texts(&idx.unigrams);
        assert!(uni.contains(&"p") && uni.contains(&"0.001"));
        let bi = idx.bigrams.iter().find(|g| g.text == "p 0.001").unwrap();
        assert_eq!(bi.span.slice(text), "p < 0.001");
    }

    #[test]
    fn ngrams_stay_within_sentences() {
        let idx = index("alpha beta. gamma delta");
        assert_eq!(texts(&idx.bigrams), ["alpha beta", "gamma delta"]);
        assert!(idx.trigrams.is_empty());
    }

    #[test]
    fn file_names_split() {
        let idx = index("see fmri_behavioural_new.csv for data");
        assert!(texts(&idx.trigrams).contains(&"fmri behavioural new"));
    }

    #[test]
    fn char_offsets_not_bytes() {
        let text = "Größe über t-test";
        let idx = index(text);
        let g = idx.bigrams.iter().find(|g| g.text == "t test").unwrap();
        assert_eq!(g.span, CharSpan { start: 11, end: 17 });
        assert_eq!(g.span.slice(text), "t-test");
    }

    proptest! {
        #[test]
        fn spans_round_trip(text in "[a-zA-Z0-9 ._,;!?<>é-]{0,120}") {
            let sw = StopwordList::default();
            let idx = build_article_index(&text, &doi(), &sw);
            for g in idx.ngrams() {
                prop_assert_eq!(normalize_text(g.span.slice(&text), &sw), g.text.clone());
            }
        }
    }
}
