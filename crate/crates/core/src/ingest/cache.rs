use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

use super::IngestError;

/// Content-addressed payload cache on disk. Entries are written once through
/// a temporary file and an atomic rename; concurrent misses on one key are
/// serialized so the source is fetched a single time.
#[derive(Debug)]
pub struct DiskCache {
    root: PathBuf,
    writers: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl DiskCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DiskCache { root: root.into(), writers: Mutex::new(HashMap::new()) }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Hex sha256 over the source id and the request description.
    pub fn key(source: &str, request: &str) -> String {
        let mut h = Sha256::new();
        h.update(source.as_bytes());
        h.update([0u8]);
        h.update(request.as_bytes());
        hex::encode(h.finalize())
    }

    pub fn entry_path(&self, source: &str, key: &str) -> PathBuf {
        self.root.join(source).join(&key[..2]).join(format!("{key}.bin"))
    }

    fn io_error(path: &Path, e: std::io::Error) -> IngestError {
        IngestError::Cache(format!("{}: {e}", path.display()))
    }

    pub fn get_or_fetch(
        &self,
        source: &str,
        request: &str,
        fetch: impl FnOnce() -> Result<Vec<u8>, IngestError>,
    ) -> Result<Vec<u8>, IngestError> {
        let key = Self::key(source, request);
        let path = self.entry_path(source, &key);
        if let Ok(bytes) = std::fs::read(&path) {
            return Ok(bytes);
        }
        let lock = self.writers.lock().expect("cache lock poisoned").entry(key.clone()).or_default().clone();
        let _guard = lock.lock().expect("cache entry lock poisoned");
        if let Ok(bytes) = std::fs::read(&path) {
            return Ok(bytes);
        }
        let bytes = fetch()?;
        let dir = path.parent().expect("entry has a parent");
        std::fs::create_dir_all(dir).map_err(|e| Self::io_error(dir, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Self::io_error(dir, e))?;
        tmp.write_all(&bytes).map_err(|e| Self::io_error(tmp.path(), e))?;
        tmp.persist(&path).map_err(|e| Self::io_error(&path, e.error))?;
        Ok(bytes)
    }
}
