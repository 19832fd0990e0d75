use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::GenerationRequest;
use crate::error::BackendError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CacheMode {
    /// Serve hits from disk and store misses.
    #[default]
    ReadWrite,
    /// Always go to the network, but record every response.
    Refresh,
}

/// Content hash of everything that determines a completion. The problem id is
/// deliberately absent: edited prompts must miss.
pub fn cache_key(request: &GenerationRequest) -> String {
    let canonical = serde_json::json!([
        request.model_name,
        request.system_prompt,
        request.user_prompt,
        request.temperature,
    ]);
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    model: String,
    response: String,
}

/// One JSON file per key under a directory.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
    mode: CacheMode,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>, mode: CacheMode) -> Result<Self, BackendError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| BackendError::Cache(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir, mode })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, request: &GenerationRequest) -> Option<String> {
        if self.mode == CacheMode::Refresh {
            return None;
        }
        let key = cache_key(request);
        let text = fs::read_to_string(self.path(&key)).ok()?;
        match serde_json::from_str::<CacheEntry>(&text) {
            Ok(entry) if entry.key == key => Some(entry.response),
            _ => {
                log::warn!("ignoring corrupt cache entry {key}");
                None
            }
        }
    }

    /// Writes through a temp file and a rename so concurrent readers never
    /// see a partial entry.
    pub fn put(&self, request: &GenerationRequest, response: &str) -> Result<(), BackendError> {
        let key = cache_key(request);
        let entry = CacheEntry {
            key: key.clone(),
            model: request.model_name.clone(),
            response: response.to_string(),
        };
        let err = |e: &dyn std::fmt::Display| BackendError::Cache(format!("{key}: {e}"));
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| err(&e))?;
        serde_json::to_writer(&mut tmp, &entry).map_err(|e| err(&e))?;
        tmp.write_all(b"\n").map_err(|e| err(&e))?;
        tmp.persist(self.path(&key)).map_err(|e| err(&e.error))?;
        Ok(())
    }
}
