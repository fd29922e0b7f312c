//! Datasets: a directory of `.wvls` scans plus `manifest.txt` naming them,
//! one file name per line.

use std::path::{Path, PathBuf};

use super::scan::{read_scan, write_scan, LidarScan};
use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.txt";

#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    entries: Vec<String>,
}

impl Dataset {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let manifest = root.join(MANIFEST_NAME);
        let text = std::fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        let entries = parse_manifest(&text)?;
        Ok(Self { root, entries })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn path(&self, index: usize) -> PathBuf {
        self.root.join(&self.entries[index])
    }

    pub fn load(&self, index: usize) -> Result<LidarScan> {
        read_scan(self.path(index))
    }

    pub fn load_all(&self) -> Result<Vec<LidarScan>> {
        (0..self.len()).map(|i| self.load(i)).collect()
    }

    /// Like [`Dataset::open`] but rejects a dataset without scans.
    pub fn open_non_empty(root: impl AsRef<Path>) -> Result<Self> {
        let ds = Self::open(root)?;
        if ds.is_empty() {
            return Err(Error::EmptyDataset(ds.root.clone()));
        }
        Ok(ds)
    }
}

pub fn parse_manifest(text: &str) -> Result<Vec<String>> {
    let mut entries = Vec::new();
    for line in text.split('\n') {
        if line.is_empty() {
            continue;
        }
        if line.contains('/') || line.contains('\\') || line == "." || line == ".." {
            return Err(Error::Malformed(format!("manifest entry {line:?} is not a bare file name")));
        }
        entries.push(line.to_string());
    }
    Ok(entries)
}

pub fn render_manifest(entries: &[String]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(e);
        out.push('\n');
    }
    out
}

/// File name of the `index`-th generated scan.
pub fn scan_file_name(index: usize) -> String {
    format!("scan_{index:05}.wvls")
}

/// Writes scans into `root` and the manifest last.
pub fn write_dataset<'a>(root: impl AsRef<Path>, scans: impl IntoIterator<Item = &'a LidarScan>) -> Result<Dataset> {
    let root = root.as_ref();
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut entries = Vec::new();
    for (i, scan) in scans.into_iter().enumerate() {
        let name = scan_file_name(i);
        write_scan(scan, root.join(&name))?;
        entries.push(name);
    }
    let manifest = root.join(MANIFEST_NAME);
    std::fs::write(&manifest, render_manifest(&entries)).map_err(|e| Error::io(&manifest, e))?;
    Ok(Dataset {
        root: root.to_path_buf(),
        entries,
    })
}
