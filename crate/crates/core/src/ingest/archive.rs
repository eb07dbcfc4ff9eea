use std::fs::{self, File};
use std::io::{self, BufReader, Read};
use std::path::{Component, Path, PathBuf};

use flate2::read::GzDecoder;
use sha2::{Digest, Sha256};

use super::cache::write_if_changed;
use super::http::HttpClient;
use super::inventory::FileInventory;
use super::{LocalPackage, PackageRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub max_archive_bytes: u64,
}

impl Default for FetchOptions {
    fn default() -> Self {
        Self {
            max_archive_bytes: super::harvest::DEFAULT_MAX_ARCHIVE_BYTES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ArchiveFormat {
    Zip,
    Tar,
    TarGz,
}

const ARCHIVE_FILE: &str = "archive";
const DIGEST_FILE: &str = "archive.sha256";
const FILES_DIR: &str = "files";
const EXTRACTED_MARKER: &str = ".extracted";
const QUARANTINE_MARKER: &str = "QUARANTINED";

/// Download, verify and unpack a record's archive into `dest`.
///
/// Local records (a `file://` archive URL, or none at all) are wrapped in
/// place. A second call with an intact cached archive does not touch the
/// network.
pub fn fetch_archive(
    record: &PackageRecord,
    dest: &Path,
    client: &HttpClient,
    options: &FetchOptions,
) -> Result<LocalPackage> {
    let doi = record.record_doi.to_string();
    let url = match record.archive_url.as_deref() {
        Some(url) => url,
        None if record.repository_id == super::RepositoryId::Local => {
            return wrap(record, dest.to_path_buf(), None);
        }
        None => return Err(Error::MissingArchiveUrl(doi)),
    };
    if let Some(path) = url.strip_prefix("file://") {
        return wrap(record, PathBuf::from(path), None);
    }

    fs::create_dir_all(dest)?;
    let quarantine = dest.join(QUARANTINE_MARKER);
    if quarantine.exists() {
        let entry = fs::read_to_string(&quarantine).unwrap_or_default();
        return Err(Error::PathEscape { doi, entry });
    }

    let archive = dest.join(ARCHIVE_FILE);
    let digest_path = dest.join(DIGEST_FILE);
    let recorded = fs::read_to_string(&digest_path).ok().map(|s| s.trim().to_string());
    let cached = match (&recorded, archive.exists()) {
        (Some(rec), true) => sha256_file(&archive)? == *rec,
        _ => false,
    };

    let digest = if cached {
        recorded.clone().unwrap()
    } else {
        let part = dest.join("archive.part");
        let (size, digest) = client.download(url, &part)?;
        if let Some(rec) = &recorded {
            if *rec != digest {
                let _ = fs::remove_file(&part);
                return Err(Error::ChecksumMismatch {
                    path: archive,
                    recorded: rec.clone(),
                    downloaded: digest,
                });
            }
        }
        if size > options.max_archive_bytes {
            let _ = fs::remove_file(&part);
            return Err(Error::OverSizeCap {
                doi,
                size,
                cap: options.max_archive_bytes,
            });
        }
        fs::rename(&part, &archive)?;
        write_if_changed(&digest_path, digest.as_bytes())?;
        let _ = fs::remove_file(dest.join(EXTRACTED_MARKER));
        digest
    };

    let files = dest.join(FILES_DIR);
    if !dest.join(EXTRACTED_MARKER).exists() {
        if files.exists() {
            fs::remove_dir_all(&files)?;
        }
        fs::create_dir_all(&files)?;
        let format = sniff(&archive, url)?;
        if let Err(e) = extract(&archive, format, &files, &doi) {
            let _ = fs::remove_dir_all(&files);
            if let Error::PathEscape { entry, .. } = &e {
                fs::write(&quarantine, entry)?;
            }
            return Err(e);
        }
        fs::write(dest.join(EXTRACTED_MARKER), &digest)?;
    }
    wrap(record, package_root(&files)?, Some(digest))
}

fn wrap(record: &PackageRecord, root: PathBuf, digest: Option<String>) -> Result<LocalPackage> {
    if !root.is_dir() {
        return Err(Error::Io(io::Error::new(
            io::ErrorKind::NotFound,
            format!("package root {} does not exist", root.display()),
        )));
    }
    let files = FileInventory::scan(&root)?;
    Ok(LocalPackage {
        record: record.clone(),
        root_path: root,
        files,
        archive_sha256: digest,
    })
}

/// Archives that wrap everything in one top-level directory are rooted there.
fn package_root(files: &Path) -> Result<PathBuf> {
    let children: Vec<_> = fs::read_dir(files)?.filter_map(|e| e.ok()).collect();
    if children.len() == 1 && children[0].file_type()?.is_dir() {
        Ok(children[0].path())
    } else {
        Ok(files.to_path_buf())
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut file = File::open(path)?;
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn sniff(path: &Path, url: &str) -> Result<ArchiveFormat> {
    let mut head = [0u8; 512];
    let mut file = File::open(path)?;
    let mut n = 0;
    while n < head.len() {
        let read = file.read(&mut head[n..])?;
        if read == 0 {
            break;
        }
        n += read;
    }
    let head = &head[..n];
    if head.starts_with(b"PK\x03\x04") || head.starts_with(b"PK\x05\x06") {
        return Ok(ArchiveFormat::Zip);
    }
    if head.starts_with(&[0x1f, 0x8b]) {
        return Ok(ArchiveFormat::TarGz);
    }
    if head.len() >= 262 && &head[257..262] == b"ustar" {
        return Ok(ArchiveFormat::Tar);
    }
    let name = url.split(['?', '#']).next().unwrap_or(url);
    if name.to_ascii_lowercase().ends_with(".tar") && head.iter().all(|b| *b == 0) {
        return Ok(ArchiveFormat::Tar);
    }
    Err(Error::UnsupportedArchive {
        name: name.rsplit('/').next().unwrap_or(name).to_string(),
    })
}

fn extract(archive: &Path, format: ArchiveFormat, into: &Path, doi: &str) -> Result<()> {
    match format {
        ArchiveFormat::Zip => extract_zip(archive, into, doi),
        ArchiveFormat::Tar => extract_tar(BufReader::new(File::open(archive)?), into, doi),
        ArchiveFormat::TarGz => extract_tar(GzDecoder::new(BufReader::new(File::open(archive)?)), into, doi),
    }
}

fn escape(doi: &str, entry: impl Into<String>) -> Error {
    Error::PathEscape {
        doi: doi.to_string(),
        entry: entry.into(),
    }
}

fn extract_zip(archive: &Path, into: &Path, doi: &str) -> Result<()> {
    let mut zip = zip::ZipArchive::new(File::open(archive)?)
        .map_err(|e| Error::Malformed(format!("{}: {e}", archive.display())))?;
    for i in 0..zip.len() {
        let mut entry = zip
            .by_index(i)
            .map_err(|e| Error::Malformed(format!("{}: {e}", archive.display())))?;
        let name = entry.name().map(|n| n.into_owned()).unwrap_or_default();
        let Some(rel) = entry.enclosed_name() else {
            return Err(escape(doi, name));
        };
        if !is_contained(&rel) {
            return Err(escape(doi, name));
        }
        if entry.is_symlink() {
            log::warn!("{doi}: skipping symlink {name}");
            continue;
        }
        let out = into.join(&rel);
        if entry.is_dir() {
            fs::create_dir_all(&out)?;
            continue;
        }
        if let Some(parent) = out.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut file = File::create(&out)?;
        io::copy(&mut entry, &mut file)?;
    }
    Ok(())
}

fn extract_tar<R: Read>(reader: R, into: &Path, doi: &str) -> Result<()> {
    let mut tar = tar::Archive::new(reader);
    for entry in tar.entries()? {
        let mut entry = entry?;
        let rel = entry.path()?.into_owned();
        if !is_contained(&rel) {
            return Err(escape(doi, rel.display().to_string()));
        }
        let kind = entry.header().entry_type();
        let out = into.join(&rel);
        if kind.is_dir() {
            fs::create_dir_all(&out)?;
        } else if kind.is_file() {
            if let Some(parent) = out.parent() {
                fs::create_dir_all(parent)?;
            }
            entry.unpack(&out)?;
        } else {
            log::warn!("{doi}: skipping non-regular tar entry {}", rel.display());
        }
    }
    Ok(())
}

fn is_contained(rel: &Path) -> bool {
    rel.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}
