use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};

pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const LOCK_FILE: &str = ".lock";

/// One line of the append-only experiment ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub run_id: String,
    pub command: String,
    pub config_hash: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Artifact name to path relative to the output directory.
    pub artifacts: BTreeMap<String, String>,
    pub config: RunConfig,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn append(out: &Path, entry: &LedgerEntry) -> Result<()> {
    let line = serde_json::to_string(entry).map_err(|e| Error::Data(format!("cannot encode ledger entry: {e}")))?;
    let mut f = OpenOptions::new().create(true).append(true).open(out.join(LEDGER_FILE))?;
    writeln!(f, "{line}")?;
    Ok(())
}

pub fn read(out: &Path) -> Result<Vec<LedgerEntry>> {
    let path = out.join(LEDGER_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Data(format!("corrupt ledger line: {e}"))))
        .collect()
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
    _file: File,
}

impl DirLock {
    pub fn acquire(out: &Path) -> Result<Self> {
        std::fs::create_dir_all(out)?;
        let path = out.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path, _file: f })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Config(format!(
                "output directory {} is in use by another process (remove {} if it is stale)",
                out.display(),
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let a = DirLock::acquire(dir.path()).unwrap();
        assert!(DirLock::acquire(dir.path()).is_err());
        drop(a);
        assert!(DirLock::acquire(dir.path()).is_ok());
    }

    #[test]
    fn ledger_appends() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        let e = LedgerEntry {
            run_id: cfg.run_id(),
            command: "synth".into(),
            config_hash: cfg.hash(),
            started_unix: 1,
            finished_unix: 2,
            artifacts: [("manifest".to_string(), "source/manifest.csv".to_string())].into(),
            config: cfg,
        };
        append(dir.path(), &e).unwrap();
        append(dir.path(), &e).unwrap();
        assert_eq!(read(dir.path()).unwrap(), vec![e.clone(), e]);
    }
}
