//! Output directory handling: atomic file writes and the run manifest.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Everything needed to re-run a command and check its input.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Resolved options, defaults included.
    pub config: serde_json::Value,
    pub input: String,
    pub input_sha256: String,
    pub tool_version: String,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    pub exit_code: i32,
}

pub struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
    started: Instant,
}

impl OutDir {
    pub fn create(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            started: Instant::now(),
        })
    }

    /// Writes via a temporary file in the same directory, then renames.
    pub fn write(&mut self, name: &str, contents: &str) -> std::io::Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(contents.as_bytes())?;
        tmp.flush()?;
        tmp.persist(self.dir.join(name)).map_err(|e| e.error)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn finish(mut self, command: &str, config: serde_json::Value, input: &Path, exit_code: i32) -> std::io::Result<()> {
        let bytes = std::fs::read(input)?;
        let manifest = RunManifest {
            command: command.to_string(),
            config,
            input: input.display().to_string(),
            input_sha256: hex::encode(Sha256::digest(&bytes)),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
            outputs: self.written.clone(),
            exit_code,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        self.write("manifest.json", &text)
    }
}
