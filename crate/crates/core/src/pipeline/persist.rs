use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::PipelineError;

fn io_err(path: &Path, e: impl ToString) -> PipelineError {
    PipelineError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    for it in items {
        let line = serde_json::to_string(it).map_err(|e| io_err(path, e))?;
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| io_err(path, format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

/// Layout of a run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(RunDir {
            root: root.to_path_buf(),
        })
    }

    pub fn open(root: &Path) -> Self {
        RunDir {
            root: root.to_path_buf(),
        }
    }

    pub fn config_snapshot(&self) -> PathBuf {
        self.root.join("config.snapshot")
    }
    pub fn instances(&self) -> PathBuf {
        self.root.join("instances.jsonl")
    }
    /// Expert demonstrations as replayable action lists.
    pub fn demos(&self) -> PathBuf {
        self.root.join("demos.jsonl")
    }
    /// Annotated windows.
    pub fn feedback(&self) -> PathBuf {
        self.root.join("feedback.jsonl")
    }
    /// Per-step feedback examples unrolled from the windows.
    pub fn feedback_examples(&self) -> PathBuf {
        self.root.join("feedback_examples.jsonl")
    }
    pub fn fmodel(&self) -> PathBuf {
        self.root.join("fmodel.json")
    }
    /// Imitation data of a round; round 0 holds the demonstrations.
    pub fn dataset(&self, round: u32) -> PathBuf {
        self.root.join(format!("dk_{round}.jsonl"))
    }
    pub fn model(&self, round: u32) -> PathBuf {
        self.root.join(format!("model_{round}"))
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }
    pub fn ledger(&self) -> PathBuf {
        self.root.join("ledger.json")
    }

    pub fn write_text(&self, path: &Path, text: &str) -> Result<(), PipelineError> {
        std::fs::write(path, text).map_err(|e| io_err(path, e))
    }

    /// Highest round with a saved policy.
    pub fn last_model_round(&self) -> Option<u32> {
        (0..1000).take_while(|r| self.model(*r).exists()).last()
    }
}
