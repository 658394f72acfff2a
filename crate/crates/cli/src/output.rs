//! Output files that disappear again if the command fails.

use std::path::{Path, PathBuf};

use cuneilid::persist::write_atomic;
use cuneilid::{Error, Result};

/// Tracks files written by a command. Unless [`Outputs::commit`] is called,
/// every tracked file is removed on drop.
#[derive(Debug, Default)]
pub struct Outputs {
    written: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(path, bytes)?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    pub fn create_dir(&mut self, dir: &Path) -> Result<()> {
        if !dir.exists() {
            std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                path: dir.to_path_buf(),
                source: e,
            })?;
        }
        Ok(())
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for path in &self.written {
                let _ = std::fs::remove_file(path);
            }
        }
    }
}

/// Refuses to overwrite any of `inputs` with an output.
pub fn ensure_distinct(outputs: &[&Path], inputs: &[&Path]) -> Result<()> {
    for out in outputs {
        let Ok(out_c) = out.canonicalize() else { continue };
        for input in inputs {
            if input.canonicalize().is_ok_and(|i| i == out_c) {
                return Err(Error::InvalidInput(format!(
                    "output {} would overwrite input {}",
                    out.display(),
                    input.display()
                )));
            }
        }
    }
    Ok(())
}
