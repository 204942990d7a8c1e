//! Output directory with failure cleanup: every file written during a run
//! is tracked, and a failed run removes its partial outputs.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)
            .with_context(|| format!("cannot create output directory {}", root.display()))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn written_names(&self) -> Vec<String> {
        self.written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect()
    }

    /// Removes everything written so far (failure path).
    pub fn remove_partial_outputs(&self) {
        for path in &self.written {
            let _ = std::fs::remove_file(path);
        }
    }
}

/// Runs `body`; on error removes the partial outputs and prefixes the
/// stage context so failures are attributable.
pub fn with_cleanup<T>(
    out: &mut OutputDir,
    body: impl FnOnce(&mut OutputDir) -> Result<T>,
) -> Result<T> {
    match body(out) {
        Ok(v) => Ok(v),
        Err(e) => {
            out.remove_partial_outputs();
            Err(e)
        }
    }
}
