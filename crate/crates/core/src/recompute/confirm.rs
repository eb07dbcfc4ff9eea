//! Confirming printed numbers against the numbers an article reports.

use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};

use crate::matcher::CharSpan;

use super::exec::{ExecutionResult, ExecutionStatus};

static NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[-+]?(?:\d+(?:\.\d+)?|\.\d+)(?:[eE][-+]?\d+)?").expect("regex"));

static P_CLAIM: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bp\s*(<=|>=|<|>|≤|≥)\s*([-+]?(?:\d+(?:\.\d+)?|\.\d+)(?:[eE][-+]?\d+)?)").expect("regex")
});

static TRACEBACK_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"File ".*", line \d+"#).expect("regex"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimKind {
    Exact,
    Rounded,
    Inequality,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputConfirmation {
    /// The number exactly as printed.
    pub value: String,
    pub claim_span: Option<CharSpan>,
    pub claim_text: Option<String>,
    pub claim_kind: Option<ClaimKind>,
    pub confirmed: bool,
}

/// Numbers printed on stdout, in order of first appearance, deduplicated.
/// Literals with fewer than two digits and line numbers inside traceback
/// frames are skipped.
pub fn harvest_values(stdout: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for line in stdout.lines() {
        if TRACEBACK_LINE.is_match(line) {
            continue;
        }
        for (_, _, text) in numbers(line) {
            if text.chars().filter(char::is_ascii_digit).count() >= 2 && !out.iter().any(|v| v == text) {
                out.push(text.to_string());
            }
        }
    }
    out
}

/// Free-standing numeric literals: not glued to a preceding identifier
/// (`x1`, `sub-01`) or a following letter (`3rd`).
fn numbers(text: &str) -> Vec<(usize, usize, &str)> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    for m in NUMBER.find_iter(text) {
        let (mut start, end) = (m.start(), m.end());
        let word = |b: u8| b.is_ascii_alphanumeric() || b == b'_' || b == b'.';
        if start > 0 && word(bytes[start - 1]) {
            continue;
        }
        if matches!(bytes[start], b'-' | b'+') && start > 0 && bytes[start - 1].is_ascii_alphanumeric() {
            start += 1;
        }
        if start > 0 && matches!(bytes[start - 1], b'-' | b'+') && start > 1 && bytes[start - 2].is_ascii_alphanumeric() {
            continue;
        }
        if end < bytes.len() && (bytes[end].is_ascii_alphabetic() || bytes[end] == b'_') {
            continue;
        }
        out.push((start, end, &text[start..end]));
    }
    out
}

pub(crate) fn parse_decimal(s: &str) -> Option<Decimal> {
    let s = s.trim_start_matches('+');
    if s.contains(['e', 'E']) {
        Decimal::from_scientific(s).ok()
    } else {
        Decimal::from_str(s).ok()
    }
}

fn decimals(s: &str) -> u32 {
    if s.contains(['e', 'E']) {
        return 0;
    }
    s.split_once('.').map_or(0, |(_, f)| f.len() as u32)
}

/// The predicate behind each claim kind, evaluated on the claim text alone.
pub fn check_claim(value: &str, claim_text: &str, kind: ClaimKind) -> bool {
    let Some(v) = parse_decimal(value) else { return false };
    match kind {
        ClaimKind::Exact => value == claim_text,
        ClaimKind::Rounded => {
            let places = decimals(claim_text);
            places >= 1
                && decimals(value) > places
                && parse_decimal(claim_text).is_some_and(|a| {
                    v.round_dp_with_strategy(places, RoundingStrategy::MidpointNearestEven) == a
                })
        }
        ClaimKind::Inequality => {
            let Some(c) = P_CLAIM.captures(claim_text) else { return false };
            if c.get(0).map(|m| m.as_str()) != Some(claim_text) {
                return false;
            }
            let Some(bound) = parse_decimal(&c[2]) else { return false };
            match &c[1] {
                "<" => v < bound,
                ">" => v > bound,
                "<=" | "≤" => v <= bound,
                ">=" | "≥" => v >= bound,
                _ => false,
            }
        }
    }
}

struct Claim {
    start: usize,
    end: usize,
    text: String,
}

/// Numeric claims in an article: `p <op> x` inequalities, and every other
/// free-standing number.
struct ArticleClaims {
    numbers: Vec<Claim>,
    inequalities: Vec<Claim>,
}

impl ArticleClaims {
    fn new(text: &str) -> Self {
        let inequalities: Vec<Claim> = P_CLAIM
            .find_iter(text)
            .map(|m| Claim { start: m.start(), end: m.end(), text: m.as_str().to_string() })
            .collect();
        let numbers = numbers(text)
            .into_iter()
            .filter(|(s, _, _)| !inequalities.iter().any(|q| q.start <= *s && *s < q.end))
            .map(|(start, end, t)| Claim { start, end, text: t.to_string() })
            .collect();
        Self { numbers, inequalities }
    }
}

fn char_span(text: &str, start: usize, end: usize) -> CharSpan {
    let s = text[..start].chars().count();
    CharSpan { start: s, end: s + text[start..end].chars().count() }
}

/// Check one printed value against the article: exact string match first,
/// then round-half-even to the article's precision, then `p <op> x`.
pub fn confirm_value(value: &str, article_text: &str) -> OutputConfirmation {
    confirm_with(value, article_text, &ArticleClaims::new(article_text))
}

fn confirm_with(value: &str, article_text: &str, claims: &ArticleClaims) -> OutputConfirmation {
    let kinds = [
        (ClaimKind::Exact, &claims.numbers),
        (ClaimKind::Rounded, &claims.numbers),
        (ClaimKind::Inequality, &claims.inequalities),
    ];
    for (kind, pool) in kinds {
        if let Some(c) = pool.iter().find(|c| check_claim(value, &c.text, kind)) {
            return OutputConfirmation {
                value: value.to_string(),
                claim_span: Some(char_span(article_text, c.start, c.end)),
                claim_text: Some(c.text.clone()),
                claim_kind: Some(kind),
                confirmed: true,
            };
        }
    }
    OutputConfirmation {
        value: value.to_string(),
        claim_span: None,
        claim_text: None,
        claim_kind: None,
        confirmed: false,
    }
}

/// One confirmation per harvested stdout value. Runs that did not finish
/// with status `ok` yield nothing.
pub fn confirm_outputs(result: &ExecutionResult, article_text: &str) -> Vec<OutputConfirmation> {
    if result.status != ExecutionStatus::Ok {
        return Vec::new();
    }
    let claims = ArticleClaims::new(article_text);
    harvest_values(&result.stdout)
        .iter()
        .map(|v| confirm_with(v, article_text, &claims))
        .collect()
}
