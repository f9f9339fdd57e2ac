//! Output directories and worker pools shared by the commands.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::io;

/// Root directory of one command invocation.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
    comment: String,
}

impl RunDir {
    /// Creates `root`. The comment heading every CSV names the command and
    /// seed and carries the only timestamp in the output.
    pub fn create(root: &Path, command: &str, seed: u64) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| LabError::io(root, e))?;
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Ok(Self { root: root.to_path_buf(), comment: format!("snot-lab {command} seed={seed}\nwritten_at={secs}") })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn comment(&self) -> Option<&str> {
        Some(&self.comment)
    }

    /// `root/rel`, creating parent directories.
    pub fn path(&self, rel: impl AsRef<Path>) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
        }
        Ok(p)
    }

    pub fn json<T: Serialize>(&self, rel: impl AsRef<Path>, value: &T) -> Result<()> {
        io::write_json(&self.path(rel)?, value)
    }
}

/// A pool with `threads` workers, or rayon's default when `None`.
pub fn pool(threads: Option<usize>) -> rayon::ThreadPool {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        b = b.num_threads(t.max(1));
    }
    b.build().expect("thread pool")
}

/// Milliseconds since construction, or always zero when disabled.
pub fn clock(enabled: bool) -> impl FnMut() -> u64 {
    let start = Instant::now();
    move || if enabled { start.elapsed().as_millis() as u64 } else { 0 }
}

/// Sample mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let mean = snot_core::math::mean(values);
    let se = if values.len() > 1 { (snot_core::math::sample_variance(values) / values.len() as f64).sqrt() } else { 0.0 };
    (mean, se)
}
