//! Harvesting software-package records from repository APIs (or a local
//! directory), fetching and unpacking their archives, and building file
//! inventories.

mod archive;
mod cache;
mod harvest;
mod http;
mod inventory;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::doi::Doi;

pub use archive::{fetch_archive, FetchOptions};
pub use cache::Cache;
pub use harvest::{admit, filter_records, harvest_records, Admission, HarvestFilter, HarvestPage, PageCursor, Source};
pub use http::{HttpClient, HttpOptions, HttpResponse};
pub use inventory::{classify, FileInventory, FileKind, InventoryEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepositoryId {
    Zenodo,
    Figshare,
    Local,
}

/// A harvested software package, as described by its repository.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackageRecord {
    pub repository_id: RepositoryId,
    pub record_doi: Doi,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub archive_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub archive_size: Option<u64>,
    #[serde(default)]
    pub declared_article_dois: Vec<Doi>,
    #[serde(default)]
    pub raw_metadata: serde_json::Value,
}

impl PackageRecord {
    /// Records whose API payload carried no size are admitted but flagged;
    /// the cap is enforced after download.
    pub fn size_unknown(&self) -> bool {
        self.archive_size.is_none()
    }
}

/// A package unpacked on disk together with its inventory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalPackage {
    pub record: PackageRecord,
    pub root_path: PathBuf,
    pub files: FileInventory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub archive_sha256: Option<String>,
}

impl LocalPackage {
    pub fn doi(&self) -> &Doi {
        &self.record.record_doi
    }
}
