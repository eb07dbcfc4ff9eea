//! On-disk cache layout.
//!
//! ```text
//! <root>/records/<pct-doi>/record.json      harvested record
//! <root>/records/<pct-doi>/archive.<ext>    downloaded archive
//! <root>/records/<pct-doi>/archive.sha256   digest recorded on first download
//! <root>/records/<pct-doi>/files/           extracted package
//! <root>/records/<pct-doi>/QUARANTINED      present when extraction was refused
//! <root>/http/<sha256(url)>.{status,body}   cached GET responses
//! <root>/envs/<pct-doi>/                    per-package execution environment
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::http::{HttpClient, HttpResponse};
use super::PackageRecord;
use crate::doi::Doi;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn record_dir(&self, doi: &Doi) -> PathBuf {
        self.root.join("records").join(doi.file_stem())
    }

    pub fn env_dir(&self, doi: &Doi) -> PathBuf {
        self.root.join("envs").join(doi.file_stem())
    }

    pub fn store_record(&self, record: &PackageRecord) -> Result<()> {
        let dir = self.record_dir(&record.record_doi);
        fs::create_dir_all(&dir)?;
        let bytes = serde_json::to_vec_pretty(record)?;
        write_if_changed(&dir.join("record.json"), &bytes)
    }

    pub fn load_record(&self, doi: &Doi) -> Result<Option<PackageRecord>> {
        let path = self.record_dir(doi).join("record.json");
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_slice(&fs::read(path)?)?))
    }

    /// GET through the cache. Successful and 404 responses are stored; a
    /// cache hit never touches the network.
    pub fn get(&self, client: &HttpClient, url: &str) -> Result<HttpResponse> {
        let key = hex::encode(Sha256::digest(url.as_bytes()));
        let dir = self.root.join("http");
        let status_path = dir.join(format!("{key}.status"));
        let body_path = dir.join(format!("{key}.body"));
        if let (Ok(status), Ok(body)) = (fs::read_to_string(&status_path), fs::read(&body_path)) {
            if let Ok(status) = status.trim().parse() {
                return Ok(HttpResponse { status, body });
            }
        }
        let resp = client.get(url)?;
        if resp.is_success() || resp.status == 404 {
            fs::create_dir_all(&dir)?;
            fs::write(&body_path, &resp.body)?;
            fs::write(&status_path, resp.status.to_string())?;
        }
        Ok(resp)
    }
}

pub(crate) fn write_if_changed(path: &Path, bytes: &[u8]) -> Result<()> {
    if fs::read(path).map(|old| old == bytes).unwrap_or(false) {
        return Ok(());
    }
    fs::write(path, bytes)?;
    Ok(())
}
