use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::cache::Cache;
use super::http::HttpClient;
use super::{PackageRecord, RepositoryId};
use crate::doi::{find_dois, Doi};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ARCHIVE_BYTES: u64 = 2 * 1024 * 1024 * 1024;

/// Where records come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Source {
    /// Zenodo-style `/api/records?type=software&page=N`.
    Zenodo { base_url: String },
    /// figshare-style `/v2/articles?page=N`.
    Figshare { base_url: String },
    /// A directory with one sub-directory per package, each holding a
    /// `record.json`.
    Local { root: PathBuf },
}

impl Source {
    pub fn repository_id(&self) -> RepositoryId {
        match self {
            Source::Zenodo { .. } => RepositoryId::Zenodo,
            Source::Figshare { .. } => RepositoryId::Figshare,
            Source::Local { .. } => RepositoryId::Local,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarvestFilter {
    pub max_archive_bytes: u64,
    /// Resource-type values counted as software. figshare's item types are
    /// ambiguous, so this is configuration rather than a fixed query.
    pub software_types: Vec<String>,
    pub page_size: usize,
}

impl Default for HarvestFilter {
    fn default() -> Self {
        Self {
            max_archive_bytes: DEFAULT_MAX_ARCHIVE_BYTES,
            software_types: vec!["software".to_string()],
            page_size: 100,
        }
    }
}

/// Opaque pagination token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageCursor(pub String);

#[derive(Debug, Clone, Default)]
pub struct HarvestPage {
    pub records: Vec<PackageRecord>,
    /// Software records dropped by the size cap.
    pub excluded: Vec<Doi>,
    /// Identifiers of payload entries that could not be read.
    pub skipped: Vec<String>,
    pub next_cursor: Option<PageCursor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Admit,
    /// Size unknown: admitted, cap checked after download.
    AdmitUnknownSize,
    NotSoftware,
    OverCap,
}

pub fn admit(resource_type: &str, size: Option<u64>, filter: &HarvestFilter) -> Admission {
    if !filter
        .software_types
        .iter()
        .any(|t| t.eq_ignore_ascii_case(resource_type))
    {
        return Admission::NotSoftware;
    }
    match size {
        None => Admission::AdmitUnknownSize,
        Some(s) if s <= filter.max_archive_bytes => Admission::Admit,
        Some(_) => Admission::OverCap,
    }
}

/// Keep software records within the size cap, preserving order.
pub fn filter_records(candidates: Vec<(String, PackageRecord)>, filter: &HarvestFilter) -> Vec<PackageRecord> {
    candidates
        .into_iter()
        .filter(|(ty, r)| {
            matches!(
                admit(ty, r.archive_size, filter),
                Admission::Admit | Admission::AdmitUnknownSize
            )
        })
        .map(|(_, r)| r)
        .collect()
}

/// Fetch one page of records. Every admitted record is written to the cache.
pub fn harvest_records(
    source: &Source,
    filter: &HarvestFilter,
    cursor: Option<&PageCursor>,
    client: &HttpClient,
    cache: &Cache,
) -> Result<HarvestPage> {
    let page_no: u64 = match cursor {
        Some(c) => c
            .0
            .parse()
            .map_err(|_| Error::Malformed(format!("bad page cursor `{}`", c.0)))?,
        None => 1,
    };
    let (candidates, skipped, has_more) = match source {
        Source::Zenodo { base_url } => zenodo_page(base_url, page_no, filter, client, cache)?,
        Source::Figshare { base_url } => figshare_page(base_url, page_no, filter, client, cache)?,
        Source::Local { root } => {
            let (c, s) = local_records(root)?;
            (c, s, false)
        }
    };

    let mut page = HarvestPage {
        skipped,
        ..Default::default()
    };
    for (ty, record) in candidates {
        match admit(&ty, record.archive_size, filter) {
            Admission::Admit | Admission::AdmitUnknownSize => {
                cache.store_record(&record)?;
                page.records.push(record);
            }
            Admission::OverCap => page.excluded.push(record.record_doi),
            Admission::NotSoftware => {}
        }
    }
    if has_more {
        page.next_cursor = Some(PageCursor((page_no + 1).to_string()));
    }
    Ok(page)
}

type Candidates = (Vec<(String, PackageRecord)>, Vec<String>, bool);

fn zenodo_page(base: &str, page: u64, filter: &HarvestFilter, client: &HttpClient, cache: &Cache) -> Result<Candidates> {
    let url = format!(
        "{}/api/records?type=software&page={page}&size={}",
        base.trim_end_matches('/'),
        filter.page_size
    );
    let resp = cache.get(client, &url)?;
    if !resp.is_success() {
        return Err(Error::HttpStatus {
            url,
            status: resp.status,
            body: resp.text(),
        });
    }
    let payload = resp.json()?;
    let hits = payload
        .pointer("/hits/hits")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Malformed(format!("{url}: no hits.hits array")))?;
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for (i, hit) in hits.iter().enumerate() {
        match zenodo_record(hit) {
            Some(pair) => out.push(pair),
            None => {
                let id = identify(hit).unwrap_or_else(|| format!("{url}#{i}"));
                log::warn!("skipping malformed Zenodo record {id}");
                skipped.push(id);
            }
        }
    }
    let has_more = payload.pointer("/links/next").is_some_and(|v| !v.is_null());
    Ok((out, skipped, has_more))
}

fn zenodo_record(hit: &Value) -> Option<(String, PackageRecord)> {
    let meta = hit.get("metadata")?;
    let doi = hit
        .get("doi")
        .or_else(|| meta.get("doi"))
        .and_then(Value::as_str)
        .and_then(|s| Doi::parse(s).ok())?;
    let title = meta.get("title").and_then(Value::as_str)?.to_string();
    let resource_type = meta
        .pointer("/resource_type/type")
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string();
    let files = hit.get("files").and_then(Value::as_array).cloned().unwrap_or_default();
    let chosen = files
        .iter()
        .find(|f| f.get("key").and_then(Value::as_str).is_some_and(looks_like_archive))
        .or_else(|| files.first());
    let archive_url = chosen.and_then(|f| {
        f.pointer("/links/self")
            .or_else(|| f.pointer("/links/download"))
            .and_then(Value::as_str)
            .map(str::to_string)
    });
    let archive_size = chosen.and_then(|f| f.get("size")).and_then(Value::as_u64);
    let mut declared = Vec::new();
    for rel in meta
        .get("related_identifiers")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
    {
        let relation = rel.get("relation").and_then(Value::as_str).unwrap_or("");
        if relation.to_ascii_lowercase().contains("version") {
            continue;
        }
        if let Some(id) = rel.get("identifier").and_then(Value::as_str) {
            push_dois(&mut declared, id);
        }
    }
    Some((
        resource_type,
        PackageRecord {
            repository_id: RepositoryId::Zenodo,
            record_doi: doi,
            title,
            archive_url,
            archive_size,
            declared_article_dois: declared,
            raw_metadata: hit.clone(),
        },
    ))
}

fn figshare_page(base: &str, page: u64, filter: &HarvestFilter, client: &HttpClient, cache: &Cache) -> Result<Candidates> {
    let base = base.trim_end_matches('/');
    let url = format!("{base}/v2/articles?page={page}&page_size={}", filter.page_size);
    let resp = cache.get(client, &url)?;
    if !resp.is_success() {
        return Err(Error::HttpStatus {
            url,
            status: resp.status,
            body: resp.text(),
        });
    }
    let payload = resp.json()?;
    let items = payload
        .as_array()
        .ok_or_else(|| Error::Malformed(format!("{url}: expected a JSON array")))?;
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let mut item = item.clone();
        if item.get("files").is_none() {
            if let Some(id) = item.get("id").and_then(Value::as_u64) {
                let detail_url = format!("{base}/v2/articles/{id}");
                let detail = cache.get(client, &detail_url)?;
                if detail.is_success() {
                    if let Ok(v) = detail.json() {
                        item = v;
                    }
                }
            }
        }
        match figshare_record(&item) {
            Some(pair) => out.push(pair),
            None => {
                let id = identify(&item).unwrap_or_else(|| format!("{url}#{i}"));
                log::warn!("skipping malformed figshare item {id}");
                skipped.push(id);
            }
        }
    }
    Ok((out, skipped, items.len() >= filter.page_size && !items.is_empty()))
}

fn figshare_record(item: &Value) -> Option<(String, PackageRecord)> {
    let doi = item.get("doi").and_then(Value::as_str).and_then(|s| Doi::parse(s).ok())?;
    let title = item.get("title").and_then(Value::as_str)?.to_string();
    let resource_type = item
        .get("defined_type_name")
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string();
    let files = item.get("files").and_then(Value::as_array).cloned().unwrap_or_default();
    let chosen = files
        .iter()
        .find(|f| f.get("name").and_then(Value::as_str).is_some_and(looks_like_archive))
        .or_else(|| files.first());
    let archive_url = chosen
        .and_then(|f| f.get("download_url"))
        .and_then(Value::as_str)
        .map(str::to_string);
    let archive_size = chosen.and_then(|f| f.get("size")).and_then(Value::as_u64);
    let mut declared = Vec::new();
    if let Some(s) = item.get("resource_doi").and_then(Value::as_str) {
        push_dois(&mut declared, s);
    }
    for r in item.get("references").and_then(Value::as_array).into_iter().flatten() {
        if let Some(s) = r.as_str() {
            push_dois(&mut declared, s);
        }
    }
    Some((
        resource_type,
        PackageRecord {
            repository_id: RepositoryId::Figshare,
            record_doi: doi,
            title,
            archive_url,
            archive_size,
            declared_article_dois: declared,
            raw_metadata: item.clone(),
        },
    ))
}

/// One package per sub-directory of `root`, described by `record.json`.
///
/// Recognised fields: `doi`, `title`, `resource_type` (default `software`),
/// `related_dois`. The whole document is kept as raw metadata.
fn local_records(root: &std::path::Path) -> Result<(Vec<(String, PackageRecord)>, Vec<String>)> {
    let mut dirs: Vec<_> = fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for dir in dirs {
        let id = dir.display().to_string();
        let meta: Option<Value> = fs::read(dir.join("record.json"))
            .ok()
            .and_then(|b| serde_json::from_slice(&b).ok());
        let parsed = meta.and_then(|meta| {
            let doi = meta.get("doi").and_then(Value::as_str).and_then(|s| Doi::parse(s).ok())?;
            let title = meta.get("title").and_then(Value::as_str).unwrap_or_default().to_string();
            let ty = meta
                .get("resource_type")
                .and_then(Value::as_str)
                .unwrap_or("software")
                .to_string();
            let mut declared = Vec::new();
            for s in meta.get("related_dois").and_then(Value::as_array).into_iter().flatten() {
                if let Some(s) = s.as_str() {
                    push_dois(&mut declared, s);
                }
            }
            let abs = fs::canonicalize(&dir).ok()?;
            let size = super::FileInventory::scan(&abs).ok()?.total_bytes();
            Some((
                ty,
                PackageRecord {
                    repository_id: RepositoryId::Local,
                    record_doi: doi,
                    title,
                    archive_url: Some(format!("file://{}", abs.display())),
                    archive_size: Some(size),
                    declared_article_dois: declared,
                    raw_metadata: meta,
                },
            ))
        });
        match parsed {
            Some(pair) => out.push(pair),
            None => {
                log::warn!("skipping local package {id}: missing or invalid record.json");
                skipped.push(id);
            }
        }
    }
    Ok((out, skipped))
}

fn push_dois(into: &mut Vec<Doi>, text: &str) {
    for m in find_dois(text) {
        if !into.iter().any(|d| d.key() == m.doi.key()) {
            into.push(m.doi);
        }
    }
}

fn identify(v: &Value) -> Option<String> {
    v.get("doi")
        .and_then(Value::as_str)
        .map(str::to_string)
        .or_else(|| v.get("id").map(|id| id.to_string()))
}

pub(crate) fn looks_like_archive(name: &str) -> bool {
    let lower = name.to_ascii_lowercase();
    lower.ends_with(".zip") || lower.ends_with(".tar") || lower.ends_with(".tar.gz") || lower.ends_with(".tgz")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(n: u64, size: Option<u64>) -> PackageRecord {
        PackageRecord {
            repository_id: RepositoryId::Zenodo,
            record_doi: Doi::parse(&format!("10.5281/zenodo.{n}")).unwrap(),
            title: format!("pkg {n}"),
            archive_url: None,
            archive_size: size,
            declared_article_dois: vec![],
            raw_metadata: Value::Null,
        }
    }

    #[test]
    fn admission_rules() {
        let f = HarvestFilter::default();
        let gib = 1024 * 1024 * 1024;
        assert_eq!(admit("software", Some(gib), &f), Admission::Admit);
        assert_eq!(admit("software", Some(2 * gib), &f), Admission::Admit);
        assert_eq!(admit("software", Some(3 * gib), &f), Admission::OverCap);
        assert_eq!(admit("Software", None, &f), Admission::AdmitUnknownSize);
        assert_eq!(admit("dataset", Some(1), &f), Admission::NotSoftware);
    }

    #[test]
    fn zenodo_hit_parsing() {
        let hit = serde_json::json!({
            "id": 6997897,
            "doi": "10.5281/zenodo.6997897",
            "metadata": {
                "title": "analysis code",
                "resource_type": {"type": "software"},
                "related_identifiers": [
                    {"identifier": "https://doi.org/10.1101/2021.10.21.465270", "relation": "isSupplementTo", "scheme": "doi"},
                    {"identifier": "10.5281/zenodo.1", "relation": "isVersionOf", "scheme": "doi"}
                ]
            },
            "files": [
                {"key": "notes.pdf", "size": 10, "links": {"self": "http://x/notes.pdf"}},
                {"key": "code.zip", "size": 2048, "links": {"self": "http://x/code.zip"}}
            ]
        });
        let (ty, r) = zenodo_record(&hit).unwrap();
        assert_eq!(ty, "software");
        assert_eq!(r.archive_url.as_deref(), Some("http://x/code.zip"));
        assert_eq!(r.archive_size, Some(2048));
        assert_eq!(r.declared_article_dois.len(), 1);
        assert_eq!(r.declared_article_dois[0].as_str(), "10.1101/2021.10.21.465270");
    }

    #[test]
    fn zenodo_hit_without_doi_is_malformed() {
        let hit = serde_json::json!({"id": 1, "metadata": {"title": "x"}});
        assert!(zenodo_record(&hit).is_none());
    }

    proptest! {
        #[test]
        fn filter_is_an_order_preserving_predicate(
            entries in prop::collection::vec((any::<bool>(), prop::option::of(0u64..5_000_000_000u64)), 0..40)
        ) {
            let filter = HarvestFilter::default();
            let input: Vec<_> = entries
                .iter()
                .enumerate()
                .map(|(i, (sw, size))| {
                    let ty = if *sw { "software" } else { "dataset" };
                    (ty.to_string(), record(i as u64, *size))
                })
                .collect();
            let out = filter_records(input.clone(), &filter);
            let expected: Vec<_> = input
                .into_iter()
                .filter(|(ty, r)| ty == "software" && r.archive_size.map_or(true, |s| s <= filter.max_archive_bytes))
                .map(|(_, r)| r)
                .collect();
            prop_assert_eq!(out, expected);
        }
    }
}
