//! Writing result files and the content-hash manifest that lists them.

use std::path::{Path, PathBuf};

use modelzoo::tasks::SourceFile;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the artifact directory.
    pub path: String,
    pub sha256: String,
}

/// Collects files written into one output directory.
#[derive(Debug)]
pub struct ArtifactWriter {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl ArtifactWriter {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.record(rel)?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).map_err(modelzoo::Error::from)?;
        text.push('\n');
        self.write(rel, text)
    }

    /// Records a file some other routine already wrote.
    pub fn record(&mut self, rel: &str) -> CliResult<()> {
        let hashed = SourceFile::hash(&self.root.join(rel))?;
        self.files.retain(|f| f.path != rel);
        self.files.push(FileEntry {
            path: rel.to_string(),
            sha256: hashed.sha256,
        });
        Ok(())
    }

    /// Writes the manifest, listing every recorded file, with `extra` merged
    /// into its top level.
    pub fn finish(self, extra: serde_json::Value) -> CliResult<PathBuf> {
        let mut doc = match extra {
            serde_json::Value::Object(map) => map,
            other => {
                let mut map = serde_json::Map::new();
                map.insert("info".into(), other);
                map
            }
        };
        doc.insert("files".into(), serde_json::to_value(&self.files).map_err(modelzoo::Error::from)?);
        let path = self.root.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(&doc).map_err(modelzoo::Error::from)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

/// Files listed in a manifest, checked against their recorded hashes.
pub fn verify_manifest(dir: &Path) -> CliResult<Vec<FileEntry>> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Artifact {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let files: Vec<FileEntry> = serde_json::from_value(doc.get("files").cloned().unwrap_or_default()).map_err(|e| {
        CliError::Artifact {
            path: path.clone(),
            message: format!("files: {e}"),
        }
    })?;
    for f in &files {
        let full = dir.join(&f.path);
        if !full.is_file() {
            return Err(CliError::Artifact {
                path: full,
                message: "listed in the manifest but missing".into(),
            });
        }
        if SourceFile::hash(&full)?.sha256 != f.sha256 {
            return Err(CliError::Artifact {
                path: full,
                message: "content hash differs from the manifest".into(),
            });
        }
    }
    Ok(files)
}
