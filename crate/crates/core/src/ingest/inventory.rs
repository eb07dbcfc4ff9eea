use std::path::Path;

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileKind {
    Script,
    Notebook,
    Readme,
    CitationFile,
    Data,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventoryEntry {
    /// `/`-separated path relative to the package root.
    pub relative_path: String,
    pub byte_size: u64,
    pub kind: FileKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileInventory {
    pub entries: Vec<InventoryEntry>,
}

const DATA_EXTENSIONS: &[&str] = &["csv", "tsv", "json", "txt", "dat", "npy", "mat", "h5"];

/// Classify a file by name alone.
pub fn classify(relative_path: &str) -> FileKind {
    let name = relative_path.rsplit('/').next().unwrap_or(relative_path);
    let lower = name.to_lowercase();
    let ext = lower.rsplit_once('.').map(|(_, e)| e).unwrap_or("");
    if ext == "py" {
        FileKind::Script
    } else if ext == "ipynb" {
        FileKind::Notebook
    } else if lower.starts_with("readme") {
        FileKind::Readme
    } else if lower == "citation.cff" || ext == "bib" {
        FileKind::CitationFile
    } else if DATA_EXTENSIONS.contains(&ext) {
        FileKind::Data
    } else {
        FileKind::Other
    }
}

impl FileInventory {
    /// Walk `root` and list every regular file beneath it. Symlinks are not
    /// followed, so no entry can resolve outside `root`.
    pub fn scan(root: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for entry in WalkDir::new(root).follow_links(false) {
            let entry = entry.map_err(|e| std::io::Error::other(e.to_string()))?;
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry
                .path()
                .strip_prefix(root)
                .expect("walkdir yields paths under its root");
            let relative_path = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            entries.push(InventoryEntry {
                kind: classify(&relative_path),
                byte_size: entry.metadata().map(|m| m.len()).unwrap_or(0),
                relative_path,
            });
        }
        entries.sort_by(|a, b| a.relative_path.cmp(&b.relative_path));
        Ok(FileInventory { entries })
    }

    pub fn of_kind(&self, kind: FileKind) -> impl Iterator<Item = &InventoryEntry> {
        self.entries.iter().filter(move |e| e.kind == kind)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_bytes(&self) -> u64 {
        self.entries.iter().map(|e| e.byte_size).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_table() {
        assert_eq!(classify("analysis.py"), FileKind::Script);
        assert_eq!(classify("nb/Explore.ipynb"), FileKind::Notebook);
        assert_eq!(classify("README.md"), FileKind::Readme);
        assert_eq!(classify("readme"), FileKind::Readme);
        assert_eq!(classify("CITATION.cff"), FileKind::CitationFile);
        assert_eq!(classify("refs.bib"), FileKind::CitationFile);
        assert_eq!(classify("data.csv"), FileKind::Data);
        assert_eq!(classify("weights.H5"), FileKind::Data);
        assert_eq!(classify("notes.txt"), FileKind::Data);
        assert_eq!(classify("Makefile"), FileKind::Other);
        assert_eq!(classify("run.sh"), FileKind::Other);
    }

    #[test]
    fn scan_is_sorted_and_repeatable() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("b")).unwrap();
        std::fs::write(dir.path().join("b/z.py"), "x = 1\n").unwrap();
        std::fs::write(dir.path().join("a.csv"), "a,b\n").unwrap();
        std::fs::write(dir.path().join("README.md"), "# hi\n").unwrap();
        let first = FileInventory::scan(dir.path()).unwrap();
        let paths: Vec<_> = first.entries.iter().map(|e| e.relative_path.as_str()).collect();
        assert_eq!(paths, ["README.md", "a.csv", "b/z.py"]);
        let second = FileInventory::scan(dir.path()).unwrap();
        assert_eq!(
            serde_json::to_vec(&first).unwrap(),
            serde_json::to_vec(&second).unwrap()
        );
    }
}
