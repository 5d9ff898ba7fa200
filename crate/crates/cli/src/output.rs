//! Output directory writer and its manifest.

use std::fs;
use std::path::{Path, PathBuf};

use coco_core::Error;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "outputs.json";

#[derive(Debug, Serialize)]
struct FileEntry {
    path: String,
    bytes: u64,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    files: Vec<FileEntry>,
}

/// Collects every file a command writes so the manifest can list them.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
    files: Vec<PathBuf>,
}

fn io(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Keep category names usable as file names.
pub fn sanitize(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, Error> {
        fs::create_dir_all(root).map_err(|e| io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> Result<(), Error> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| io(&path, e))?;
        self.files.push(PathBuf::from(rel));
        Ok(())
    }

    /// Register a file some other routine already wrote under the root.
    pub fn record(&mut self, rel: impl Into<PathBuf>) {
        self.files.push(rel.into());
    }

    /// Write `outputs.json`: relative path, size and SHA-256 of each file,
    /// sorted by path.
    pub fn finish(self, command: &str) -> Result<(), Error> {
        let mut entries = Vec::with_capacity(self.files.len());
        for rel in &self.files {
            let path = self.root.join(rel);
            let data = fs::read(&path).map_err(|e| io(&path, e))?;
            entries.push(FileEntry {
                path: rel.iter().map(|c| c.to_string_lossy()).collect::<Vec<_>>().join("/"),
                bytes: data.len() as u64,
                sha256: hex::encode(Sha256::digest(&data)),
            });
        }
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        entries.dedup_by(|a, b| a.path == b.path);
        let mut json = serde_json::to_string_pretty(&Manifest { command, files: entries }).expect("manifest serialises");
        json.push('\n');
        let path = self.path(MANIFEST);
        fs::write(&path, json).map_err(|e| io(&path, e))
    }
}
