//! Run artifacts shared by the command line and the service: naive and
//! normalized inference over one table, the report schema, the stats-line
//! schema and crash-safe file writes.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::{EmbeddingTable, EpochStats, ModelKind};
use crate::eval::{evaluate, EvalReport};
use crate::inference::{infer_alignment, Alignment, Diagnostics, InferenceOptions, SparseSimilarity};
use crate::kg::AlignmentTask;
use crate::{Error, Result};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const STATS_FILE: &str = "stats.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const DEFAULT_HITS: [usize; 2] = [1, 10];

/// Aggregate metrics of one ranking, without the per-entity ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub pairs: usize,
    pub hits: BTreeMap<usize, f64>,
    pub mrr: f64,
    pub missing_rows: usize,
}

impl From<&EvalReport> for MetricSummary {
    fn from(r: &EvalReport) -> Self {
        Self {
            pairs: r.pairs,
            hits: r.hits.clone(),
            mrr: r.mrr,
            missing_rows: r.missing_rows.len(),
        }
    }
}

/// Naive and normalized rankings of one direction with their evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionResults {
    pub naive: SparseSimilarity,
    pub naive_eval: EvalReport,
    pub normalized: Alignment,
    pub normalized_eval: EvalReport,
}

impl DirectionResults {
    pub fn ranking(&self, normalized: bool) -> &SparseSimilarity {
        if normalized {
            &self.normalized.similarity
        } else {
            &self.naive
        }
    }

    pub fn eval(&self, normalized: bool) -> &EvalReport {
        if normalized {
            &self.normalized_eval
        } else {
            &self.naive_eval
        }
    }
}

/// Runs both inference modes over `table` and evaluates them on the test
/// pairs (the train pairs when the task has no test pairs).
pub fn infer_both(
    table: &EmbeddingTable,
    task: &AlignmentTask,
    options: &InferenceOptions,
    ks: &[usize],
) -> Result<DirectionResults> {
    let pairs = if task.test_pairs.is_empty() {
        &task.train_pairs
    } else {
        &task.test_pairs
    };
    let naive_opts = InferenceOptions {
        normalize: false,
        ..options.clone()
    };
    let norm_opts = InferenceOptions {
        normalize: true,
        ..options.clone()
    };
    let naive = infer_alignment(table, task, &naive_opts)?.similarity;
    let normalized = infer_alignment(table, task, &norm_opts)?;
    Ok(DirectionResults {
        naive_eval: evaluate(&naive, pairs, ks)?,
        normalized_eval: evaluate(&normalized.similarity, pairs, ks)?,
        naive,
        normalized,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub source_entities: usize,
    pub target_entities: usize,
    pub source_triples: usize,
    pub target_triples: usize,
    pub train_pairs: usize,
    pub test_pairs: usize,
}

impl From<&AlignmentTask> for TaskSummary {
    fn from(t: &AlignmentTask) -> Self {
        Self {
            source_entities: t.source_count(),
            target_entities: t.target_count(),
            source_triples: t.source.triples().len(),
            target_triples: t.target.triples().len(),
            train_pairs: t.train_pairs.len(),
            test_pairs: t.test_pairs.len(),
        }
    }
}

/// Contents of `report.json`: source-to-target metrics of both modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model: ModelKind,
    pub task: TaskSummary,
    pub inference: InferenceOptions,
    pub naive: MetricSummary,
    pub normalized: MetricSummary,
    pub diagnostics: Diagnostics,
}

impl RunReport {
    pub fn new(model: ModelKind, task: &AlignmentTask, options: &InferenceOptions, results: &DirectionResults) -> Self {
        Self {
            model,
            task: task.into(),
            inference: options.clone(),
            naive: (&results.naive_eval).into(),
            normalized: (&results.normalized_eval).into(),
            diagnostics: results.normalized.diagnostics.clone(),
        }
    }

    /// The metrics of the mode the options select.
    pub fn selected(&self) -> &MetricSummary {
        if self.inference.normalize {
            &self.normalized
        } else {
            &self.naive
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// One line of `stats.jsonl`. Wall time is left out so that identical runs
/// produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hits1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hits10: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mrr: Option<f64>,
}

impl From<&EpochStats> for EpochRecord {
    fn from(e: &EpochStats) -> Self {
        Self {
            epoch: e.epoch,
            loss: e.loss,
            hits1: e.eval.map(|v| v.hits1),
            hits10: e.eval.map(|v| v.hits10),
            mrr: e.eval.map(|v| v.mrr),
        }
    }
}

/// Appends one JSON line per epoch, flushed immediately so the file can be
/// tailed while training runs.
pub struct StatsWriter {
    path: PathBuf,
    file: File,
}

impl StatsWriter {
    /// Creates or truncates the file.
    pub fn create(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_owned(),
            file,
        })
    }

    pub fn append(&mut self, epoch: &EpochStats) -> Result<()> {
        let mut line = serde_json::to_string(&EpochRecord::from(epoch)).expect("record serializes");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|()| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// Writes `bytes` to a temporary sibling and renames it over `path`, so
/// readers see either the old file or the complete new one.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let write = || -> std::io::Result<()> {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EvalSnapshot;

    #[test]
    fn stats_lines_omit_wall_time() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(STATS_FILE);
        let mut w = StatsWriter::create(&path).unwrap();
        let mut e = EpochStats {
            epoch: 1,
            loss: 0.5,
            eval: None,
            wall_ms: 12.0,
        };
        w.append(&e).unwrap();
        e.epoch = 2;
        e.eval = Some(EvalSnapshot {
            hits1: 1.0,
            hits10: 1.0,
            mrr: 1.0,
        });
        w.append(&e).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "{\"epoch\":1,\"loss\":0.5}\n{\"epoch\":2,\"loss\":0.5,\"hits1\":1.0,\"hits10\":1.0,\"mrr\":1.0}\n"
        );
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(REPORT_FILE);
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
