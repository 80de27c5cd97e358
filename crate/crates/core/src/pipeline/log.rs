use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogStage {
    Pretrain,
    Finetune,
}

/// One optimizer step. `batch` is `None` on the per-epoch summary record, whose
/// loss is the mean over the epoch's batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub stage: LogStage,
    pub epoch: usize,
    pub batch: Option<usize>,
    pub loss: LossReport,
    pub wall_ms: f64,
}

/// Collects training records in memory and optionally mirrors them to a
/// JSON-lines file.
pub struct TrainingLog {
    records: Vec<LogRecord>,
    sink: Option<(PathBuf, Box<dyn Write>)>,
    started: Instant,
}

impl Default for TrainingLog {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl std::fmt::Debug for TrainingLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrainingLog")
            .field("records", &self.records.len())
            .field("path", &self.sink.as_ref().map(|(p, _)| p))
            .finish()
    }
}

impl TrainingLog {
    pub fn in_memory() -> Self {
        Self {
            records: Vec::new(),
            sink: None,
            started: Instant::now(),
        }
    }

    pub fn to_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut log = Self::in_memory();
        log.sink = Some((path.to_path_buf(), Box::new(std::io::BufWriter::new(file))));
        Ok(log)
    }

    pub fn elapsed_ms(&self) -> f64 {
        self.started.elapsed().as_secs_f64() * 1e3
    }

    pub fn push(
        &mut self,
        stage: LogStage,
        epoch: usize,
        batch: Option<usize>,
        loss: LossReport,
    ) -> Result<()> {
        let record = LogRecord {
            stage,
            epoch,
            batch,
            loss,
            wall_ms: self.elapsed_ms(),
        };
        if let Some((path, w)) = &mut self.sink {
            let line = serde_json::to_string(&record).expect("record serializes");
            writeln!(w, "{line}").map_err(|e| Error::io(path.as_path(), e))?;
        }
        self.records.push(record);
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        if let Some((path, w)) = &mut self.sink {
            w.flush().map_err(|e| Error::io(path.as_path(), e))?;
        }
        Ok(())
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    /// Per-epoch mean total loss of a stage, in epoch order.
    pub fn epoch_totals(&self, stage: LogStage) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.stage == stage && r.batch.is_none())
            .map(|r| r.loss.total)
            .collect()
    }
}

impl Drop for TrainingLog {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

/// Parses a JSON-lines training log.
pub fn parse_log(text: &str) -> Result<Vec<LogRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::parse("training log", i + 1, e.to_string()))
        })
        .collect()
}
