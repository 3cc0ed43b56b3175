use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Provenance, TaskStream};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub path: String,
    pub sha256: String,
}

impl SourceFile {
    pub fn hash(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub id: usize,
    pub name: String,
    pub num_classes: usize,
    pub train: usize,
    pub val: usize,
    pub replay: usize,
    pub replay_fraction: f64,
}

/// JSON description of a task stream: generator, seeds, sizes and input hashes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamManifest {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub tasks: Vec<TaskSummary>,
}

impl StreamManifest {
    pub fn from_stream(stream: &TaskStream) -> Self {
        Self {
            provenance: stream.provenance.clone(),
            tasks: stream
                .tasks
                .iter()
                .map(|t| TaskSummary {
                    id: t.id,
                    name: t.name.clone(),
                    num_classes: t.num_classes,
                    train: t.train.len(),
                    val: t.val.len(),
                    replay: t.replay_indices().len(),
                    replay_fraction: t.replay_fraction(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
