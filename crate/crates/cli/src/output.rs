use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// Output files held in memory until every one of them is ready.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, path: &Path, bytes: Vec<u8>) {
        self.files.push((path.to_path_buf(), bytes));
    }

    /// Writes each file to a sibling temporary and renames them into place
    /// only after all writes succeeded.
    pub fn commit(self) -> Result<(), CliError> {
        let mut seen = HashSet::new();
        for (path, _) in &self.files {
            if !seen.insert(path) {
                return Err(CliError::Usage(format!(
                    "{} named as two outputs",
                    path.display()
                )));
            }
        }
        let mut staged = Vec::new();
        for (path, bytes) in &self.files {
            let tmp = temp_path(path);
            if let Err(e) = std::fs::write(&tmp, bytes) {
                let _ = std::fs::remove_file(&tmp);
                for (t, _) in &staged {
                    let _ = std::fs::remove_file(t);
                }
                return Err(CliError::Runtime(format!(
                    "cannot write {}: {e}",
                    path.display()
                )));
            }
            staged.push((tmp, path));
        }
        for (tmp, path) in staged {
            std::fs::rename(&tmp, path)
                .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(())
    }
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.{}.partial", std::process::id()))
}
