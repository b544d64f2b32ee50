use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use boed_core::agents::{load_policy, Actor, AgentError};
use boed_core::autodiff::{read_checkpoint_meta, CheckpointMeta};
use boed_core::models::ModelId;

use crate::error::ApiError;

pub const CHECKPOINT_EXTENSION: &str = "ckpt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    /// File name inside the catalog directory; sessions refer to checkpoints by this id.
    pub id: String,
    /// `ok` or `invalid`.
    pub status: String,
    pub model: Option<String>,
    pub seed: Option<u64>,
    pub iteration: Option<u64>,
    pub config_digest: Option<String>,
    pub metadata: Option<serde_json::Value>,
    pub error: Option<String>,
}

/// Read-mostly view of a checkpoint directory.
#[derive(Debug, Clone)]
pub struct Catalog {
    dir: PathBuf,
}

impl Catalog {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Every `*.ckpt` file, sorted by id. Unreadable files are listed as invalid.
    pub fn list(&self) -> Vec<CheckpointEntry> {
        let Ok(read) = std::fs::read_dir(&self.dir) else {
            return Vec::new();
        };
        let mut ids: Vec<String> = read
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == CHECKPOINT_EXTENSION))
            .filter_map(|p| p.file_name().and_then(|n| n.to_str()).map(String::from))
            .collect();
        ids.sort();
        ids.into_iter()
            .map(|id| match read_checkpoint_meta(&self.dir.join(&id)) {
                Ok(meta) => entry_ok(id, meta),
                Err(e) => CheckpointEntry {
                    id,
                    status: "invalid".into(),
                    model: None,
                    seed: None,
                    iteration: None,
                    config_digest: None,
                    metadata: None,
                    error: Some(e.to_string()),
                },
            })
            .collect()
    }

    fn path_of(&self, id: &str) -> Result<PathBuf, ApiError> {
        let plain = !id.is_empty() && !id.contains(['/', '\\']) && id != "." && id != "..";
        let path = self.dir.join(id);
        if !plain || !path.is_file() {
            return Err(ApiError::checkpoint_not_found(id));
        }
        Ok(path)
    }

    /// Loads a policy, insisting it was trained for `model`.
    pub fn load(&self, id: &str, model: ModelId) -> Result<(Actor, CheckpointMeta), ApiError> {
        let path = self.path_of(id)?;
        load_policy(&path, Some(model)).map_err(|e| match e {
            AgentError::ModelMismatch { checkpoint, requested } => ApiError::model_mismatch(&checkpoint, &requested),
            other => ApiError::invalid_checkpoint(id, other.to_string()),
        })
    }
}

fn entry_ok(id: String, meta: CheckpointMeta) -> CheckpointEntry {
    CheckpointEntry {
        id,
        status: "ok".into(),
        model: Some(meta.model.clone()),
        seed: Some(meta.seed),
        iteration: Some(meta.iteration),
        config_digest: Some(meta.config_digest.clone()),
        metadata: Some(serde_json::to_value(&meta.extra).expect("metadata serialises")),
        error: None,
    }
}
