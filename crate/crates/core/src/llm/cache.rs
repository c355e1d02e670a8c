use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::{LlmBackend, LlmError};
use crate::util::sha256_hex;

/// On-disk replay cache keyed by a digest of (backend id, prompt).
///
/// Entries are written to a temporary file and renamed into place, so readers
/// never see partial content. Writes are serialized.
pub struct CachedBackend<B> {
    inner: B,
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl<B: LlmBackend> CachedBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| LlmError::Cache(format!("{}: {e}", dir.display())))?;
        Ok(CachedBackend { inner, dir, write_lock: Mutex::new(()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, prompt: &str) -> PathBuf {
        let key = sha256_hex(format!("{}\n{prompt}", self.inner.id()));
        self.dir.join(format!("{key}.txt"))
    }
}

impl<B: LlmBackend> LlmBackend for CachedBackend<B> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let path = self.path_for(prompt);
        if let Ok(text) = std::fs::read_to_string(&path) {
            return Ok(text);
        }
        let text = self.inner.complete(prompt)?;
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        std::fs::write(&tmp, &text).map_err(|e| LlmError::Cache(format!("{}: {e}", tmp.display())))?;
        std::fs::rename(&tmp, &path).map_err(|e| LlmError::Cache(format!("{}: {e}", path.display())))?;
        Ok(text)
    }
}
