//! Append-only results store: one small CSV file per finished trial.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use super::TrialResult;

pub const TRIAL_HEADER: &str =
    "l1_name,seed,test_ppl,l1_valid_ppl,l2_valid_ppl,pretrain_epochs,finetune_epochs,started_unix,finished_unix";

/// Directory of per-trial result files.
#[derive(Debug, Clone)]
pub struct ResultsStore {
    dir: PathBuf,
}

fn bad(path: &Path, msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, format!("{}: {msg}", path.display()))
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl ResultsStore {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn trial_path(&self, l1_name: &str, seed: u64) -> PathBuf {
        self.dir.join(format!("trial_{l1_name}_{seed}.csv"))
    }

    pub fn failure_path(&self, l1_name: &str, seed: u64) -> PathBuf {
        self.dir.join(format!("trial_{l1_name}_{seed}.failed"))
    }

    /// Atomically records a finished trial and clears any earlier failure note.
    pub fn save(&self, r: &TrialResult, started: u64, finished: u64) -> io::Result<()> {
        let path = self.trial_path(&r.l1_name, r.seed);
        let body = format!("{TRIAL_HEADER}\n{},{started},{finished}\n", r.csv_fields());
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, body)?;
        fs::rename(&tmp, &path)?;
        let f = self.failure_path(&r.l1_name, r.seed);
        if f.exists() {
            fs::remove_file(f)?;
        }
        Ok(())
    }

    pub fn save_failure(&self, l1_name: &str, seed: u64, error: &str) -> io::Result<()> {
        fs::write(self.failure_path(l1_name, seed), format!("{error}\n"))
    }

    /// The stored result for `(l1_name, seed)`, if that trial finished.
    pub fn load(&self, l1_name: &str, seed: u64) -> io::Result<Option<TrialResult>> {
        let path = self.trial_path(l1_name, seed);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e),
        };
        let mut lines = text.lines();
        if lines.next() != Some(TRIAL_HEADER) {
            return Err(bad(&path, "bad header"));
        }
        let row = lines.next().ok_or_else(|| bad(&path, "missing row"))?;
        let r = TrialResult::parse_fields(row).ok_or_else(|| bad(&path, "malformed row"))?;
        if r.l1_name != l1_name || r.seed != seed {
            return Err(bad(&path, "row does not match file name"));
        }
        Ok(Some(r))
    }
}
