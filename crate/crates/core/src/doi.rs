//! DOI newtype and the mining rules used on metadata, README and citation text.

use std::fmt;
use std::sync::LazyLock;

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static DOI_SHAPE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^10\.\d{4,9}/\S+$").unwrap());
static DOI_PREFIX: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"10\.\d{4,9}/").unwrap());

/// Characters kept literal when a DOI becomes a file or directory name.
const FILE_SAFE: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~');

/// A syntactically valid DOI, kept exactly as written.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Doi(String);

impl Doi {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if DOI_SHAPE.is_match(s) {
            Ok(Doi(s.to_string()))
        } else {
            Err(Error::InvalidDoi(s.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Registrant prefix, e.g. `10.1101`.
    pub fn prefix(&self) -> &str {
        self.0.split('/').next().unwrap_or_default()
    }

    /// Case-insensitive identity used for deduplication.
    pub fn key(&self) -> String {
        self.0.to_lowercase()
    }

    /// Percent-encoded form, usable as a single path component.
    pub fn file_stem(&self) -> String {
        utf8_percent_encode(&self.0, FILE_SAFE).to_string()
    }
}

impl fmt::Display for Doi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for Doi {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Doi::parse(&value)
    }
}

impl From<Doi> for String {
    fn from(value: Doi) -> Self {
        value.0
    }
}

/// How a DOI was written where it was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DoiForm {
    Bare,
    Url,
    Badge,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DoiMention {
    pub doi: Doi,
    pub form: DoiForm,
    /// Byte offset of the DOI within the scanned text.
    pub offset: usize,
}

/// Find every DOI in `text`, in order of appearance.
///
/// Covers bare DOIs, `doi.org` URLs and DOI badge image URLs. A mention is cut
/// at whitespace, `"`, `<`, `>` and at a markdown link join `](`; trailing
/// punctuation and unbalanced closing brackets are trimmed.
pub fn find_dois(text: &str) -> Vec<DoiMention> {
    let mut out = Vec::new();
    let mut consumed = 0usize;
    for m in DOI_PREFIX.find_iter(text) {
        let start = m.start();
        if start < consumed {
            continue;
        }
        if let Some(prev) = text[..start].chars().next_back() {
            if prev.is_ascii_alphanumeric() || prev == '.' {
                continue;
            }
        }
        let rest = &text[m.end()..];
        let mut body_len = rest
            .find(|c: char| c.is_whitespace() || matches!(c, '"' | '<' | '>' | '`'))
            .unwrap_or(rest.len());
        if let Some(cut) = rest[..body_len].find("](") {
            body_len = cut;
        }
        let before = text[..start].to_ascii_lowercase();
        let form = if before.ends_with("badge/doi/") {
            DoiForm::Badge
        } else if before.ends_with("doi.org/") {
            DoiForm::Url
        } else {
            DoiForm::Bare
        };
        let mut candidate = &text[start..m.end() + body_len];
        candidate = trim_trailing(candidate);
        if form == DoiForm::Badge {
            if let Some(stripped) = candidate.strip_suffix(".svg") {
                candidate = trim_trailing(stripped);
            }
        }
        consumed = start + candidate.len();
        if let Ok(doi) = Doi::parse(candidate) {
            out.push(DoiMention {
                doi,
                form,
                offset: start,
            });
        }
    }
    out
}

fn trim_trailing(mut s: &str) -> &str {
    loop {
        let Some(last) = s.chars().next_back() else {
            return s;
        };
        let unbalanced = |open: char, close: char| {
            s.matches(close).count() > s.matches(open).count()
        };
        let trim = match last {
            '.' | ',' | ';' | ':' | '!' | '?' | '\'' | '*' | '_' => true,
            ')' => unbalanced('(', ')'),
            ']' => unbalanced('[', ']'),
            '}' => unbalanced('{', '}'),
            _ => false,
        };
        if !trim {
            return s;
        }
        s = &s[..s.len() - last.len_utf8()];
    }
}
