use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Remembers the paths a command creates and deletes them unless the command
/// commits, so a failed run leaves no partial outputs behind.
#[derive(Debug, Default)]
pub struct OutputGuard {
    created: Vec<PathBuf>,
    committed: bool,
}

impl OutputGuard {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register `path` for cleanup if it does not exist yet.
    pub fn track(&mut self, path: &Path) {
        if !path.exists() {
            self.created.push(path.to_path_buf());
        }
    }

    pub fn create_dir(&mut self, dir: &Path) -> Result<()> {
        // Track the topmost missing ancestor so cleanup removes it too.
        let mut top = None;
        let mut cur = Some(dir);
        while let Some(p) = cur.filter(|p| !p.as_os_str().is_empty() && !p.exists()) {
            top = Some(p);
            cur = p.parent();
        }
        if let Some(t) = top {
            self.track(t);
        }
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(parent) = path.parent() {
            self.create_dir(parent)?;
        }
        self.track(path);
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in self.created.iter().rev() {
            if p.is_dir() {
                let _ = std::fs::remove_dir_all(p);
            } else {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}
