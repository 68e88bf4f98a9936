//! Outputs are staged in memory and committed only after every computation of
//! a command has succeeded.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Default)]
pub struct Staged {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Staged {
    pub fn add(&mut self, rel: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((rel.into(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, rel: impl Into<PathBuf>, value: &T) -> Result<()> {
        self.add(rel, flexcompute::report::to_json_bytes(value)?);
        Ok(())
    }

    pub fn add_with(
        &mut self,
        rel: impl Into<PathBuf>,
        write: impl FnOnce(&mut Vec<u8>) -> flexcompute::Result<()>,
    ) -> Result<()> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.add(rel, buf);
        Ok(())
    }

    /// Writes every file under `dir`: all temporaries first, then renames.
    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::with_capacity(self.files.len());
        let mut temps = Vec::with_capacity(self.files.len());
        let result = (|| -> Result<()> {
            for (rel, bytes) in &self.files {
                let path = dir.join(rel);
                if let Some(parent) = path.parent() {
                    fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
                }
                let mut tmp = path.clone().into_os_string();
                tmp.push(".tmp");
                let tmp = PathBuf::from(tmp);
                fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
                temps.push((tmp, path));
            }
            Ok(())
        })();
        if let Err(e) = result {
            for (tmp, _) in &temps {
                let _ = fs::remove_file(tmp);
            }
            return Err(e);
        }
        for (tmp, path) in temps {
            fs::rename(&tmp, &path).with_context(|| format!("renaming {}", tmp.display()))?;
            written.push(path);
        }
        Ok(written)
    }
}
