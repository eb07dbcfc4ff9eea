//! Package-level metadata: description, languages, referenced DOIs and the
//! open-access status of linked articles.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::doi::{find_dois, Doi};
use crate::error::{Error, Result};
use crate::ingest::{Cache, FileKind, HttpClient, LocalPackage};

/// Where a referenced DOI was found. Declaration order is preference order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoiProvenance {
    RepoMetadata,
    CitationFile,
    Readme,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceDoi {
    pub doi: Doi,
    pub provenance: DoiProvenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageMetadata {
    pub description: String,
    pub languages: Vec<String>,
    pub reference_dois: Vec<ReferenceDoi>,
    pub primary_article_doi: Option<Doi>,
    /// Other candidate article DOIs (foreign registrant prefix), sorted.
    #[serde(default)]
    pub other_article_dois: Vec<Doi>,
}

impl PackageMetadata {
    /// Primary article first, then the remaining candidates.
    pub fn article_dois(&self) -> Vec<Doi> {
        self.primary_article_doi
            .iter()
            .chain(self.other_article_dois.iter())
            .cloned()
            .collect()
    }
}

static HTML_TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<[^>]*>").unwrap());

/// Mine metadata from the repository record and the package's files.
pub fn extract_metadata(pkg: &LocalPackage) -> PackageMetadata {
    let own = &pkg.record.record_doi;
    let mut refs: Vec<ReferenceDoi> = Vec::new();
    let push = |doi: Doi, provenance: DoiProvenance, refs: &mut Vec<ReferenceDoi>| {
        if doi.key() == own.key() || refs.iter().any(|r| r.doi.key() == doi.key()) {
            return;
        }
        refs.push(ReferenceDoi { doi, provenance });
    };

    let repo_description = repo_description(&pkg.record.raw_metadata);
    for doi in &pkg.record.declared_article_dois {
        push(doi.clone(), DoiProvenance::RepoMetadata, &mut refs);
    }
    for m in find_dois(&repo_description) {
        push(m.doi, DoiProvenance::RepoMetadata, &mut refs);
    }
    for entry in pkg.files.of_kind(FileKind::CitationFile) {
        let text = read_lossy(&pkg.root_path.join(&entry.relative_path));
        for m in find_dois(&text) {
            push(m.doi, DoiProvenance::CitationFile, &mut refs);
        }
    }
    let mut readme_text = String::new();
    for entry in pkg.files.of_kind(FileKind::Readme) {
        let text = read_lossy(&pkg.root_path.join(&entry.relative_path));
        for m in find_dois(&text) {
            push(m.doi, DoiProvenance::Readme, &mut refs);
        }
        if readme_text.is_empty() {
            readme_text = text;
        }
    }

    let description = if repo_description.trim().is_empty() {
        readme_summary(&readme_text)
    } else {
        HTML_TAG.replace_all(&repo_description, " ").split_whitespace().collect::<Vec<_>>().join(" ")
    };

    let (primary_article_doi, other_article_dois) = choose_primary(own, &refs);
    PackageMetadata {
        description,
        languages: languages(pkg),
        reference_dois: refs,
        primary_article_doi,
        other_article_dois,
    }
}

/// Best provenance tier holding a foreign-prefix DOI wins; ties inside the
/// tier go to the lexicographically smallest DOI.
fn choose_primary(own: &Doi, refs: &[ReferenceDoi]) -> (Option<Doi>, Vec<Doi>) {
    let foreign: Vec<&ReferenceDoi> = refs.iter().filter(|r| r.doi.prefix() != own.prefix()).collect();
    let Some(best_tier) = foreign.iter().map(|r| r.provenance).min() else {
        return (None, Vec::new());
    };
    let primary = foreign
        .iter()
        .filter(|r| r.provenance == best_tier)
        .map(|r| r.doi.clone())
        .min();
    let mut rest: Vec<Doi> = foreign
        .iter()
        .map(|r| r.doi.clone())
        .filter(|d| Some(d) != primary.as_ref())
        .collect();
    rest.sort();
    (primary, rest)
}

fn repo_description(raw: &Value) -> String {
    raw.pointer("/metadata/description")
        .or_else(|| raw.get("description"))
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string()
}

fn readme_summary(text: &str) -> String {
    text.split("\n\n")
        .map(str::trim)
        .find(|p| !p.is_empty() && !p.starts_with('#') && !p.starts_with("[!") && !p.starts_with('='))
        .map(|p| p.split_whitespace().collect::<Vec<_>>().join(" "))
        .unwrap_or_default()
}

fn read_lossy(path: &Path) -> String {
    match fs::read(path) {
        Ok(bytes) => match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("{}: not valid UTF-8, decoding lossily", path.display());
                String::from_utf8_lossy(e.as_bytes()).into_owned()
            }
        },
        Err(e) => {
            log::warn!("{}: unreadable ({e})", path.display());
            String::new()
        }
    }
}

fn language_of(ext: &str) -> Option<&'static str> {
    Some(match ext {
        "py" | "ipynb" => "python",
        "r" | "rmd" => "r",
        "jl" => "julia",
        "m" => "matlab",
        "c" | "h" => "c",
        "cc" | "cpp" | "cxx" | "hpp" => "c++",
        "java" => "java",
        "js" => "javascript",
        "ts" => "typescript",
        "rs" => "rust",
        "go" => "go",
        "sh" => "shell",
        "f" | "f90" | "f95" => "fortran",
        _ => return None,
    })
}

fn languages(pkg: &LocalPackage) -> Vec<String> {
    let set: BTreeSet<&str> = pkg
        .files
        .entries
        .iter()
        .filter_map(|e| {
            let name = e.relative_path.rsplit('/').next()?;
            let (_, ext) = name.rsplit_once('.')?;
            language_of(&ext.to_ascii_lowercase())
        })
        .collect();
    set.into_iter().map(str::to_string).collect()
}

/// Unpaywall-compatible resolver settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolverConfig {
    pub base_url: String,
    pub email: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleRecord {
    pub doi: Doi,
    pub open_access: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pdf_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_path: Option<PathBuf>,
    pub text_available: bool,
    /// The resolver did not know the DOI.
    #[serde(default)]
    pub unresolved: bool,
}

impl ArticleRecord {
    pub fn read_text(&self) -> Option<String> {
        if !self.text_available {
            return None;
        }
        self.text_path.as_deref().map(read_lossy)
    }
}

/// Sidecar file holding the plain text of an article.
pub fn sidecar_path(dir: &Path, doi: &Doi) -> PathBuf {
    dir.join(format!("{}.txt", doi.file_stem()))
}

/// Look up a DOI's open-access status and attach its text sidecar, if any.
pub fn resolve_article(
    doi: &Doi,
    resolver: &ResolverConfig,
    text_sidecar_dir: &Path,
    client: &HttpClient,
    cache: &Cache,
) -> Result<ArticleRecord> {
    let url = format!(
        "{}/v2/{}?email={}",
        resolver.base_url.trim_end_matches('/'),
        doi,
        resolver.email
    );
    let resp = cache.get(client, &url)?;
    let (open_access, pdf_url, unresolved) = match resp.status {
        404 => (false, None, true),
        s if (200..300).contains(&s) => {
            let body = resp.json()?;
            let is_oa = body.get("is_oa").and_then(Value::as_bool).unwrap_or(false);
            let pdf = body
                .pointer("/best_oa_location/url_for_pdf")
                .and_then(Value::as_str)
                .map(str::to_string);
            (is_oa, if is_oa { pdf } else { None }, false)
        }
        status => {
            return Err(Error::HttpStatus {
                url,
                status,
                body: resp.text(),
            })
        }
    };
    let sidecar = sidecar_path(text_sidecar_dir, doi);
    let text_available = fs::metadata(&sidecar).map(|m| m.is_file() && m.len() > 0).unwrap_or(false);
    Ok(ArticleRecord {
        doi: doi.clone(),
        open_access,
        pdf_url,
        text_path: text_available.then_some(sidecar),
        text_available,
        unresolved,
    })
}
