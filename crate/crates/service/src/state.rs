//! Run registry and the background training job.
//!
//! Each run owns a mutex-guarded status that the job updates once per epoch
//! and that request handlers copy out; results are published once, through a
//! `OnceLock`, after inference has finished. Handlers therefore never wait on
//! training work.

use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock, RwLock};
use std::thread::JoinHandle;

use serde::Serialize;
use sea_core::config::{DatasetSource, RunConfig};
use sea_core::encoder::{checkpoint, embed_all, train_with, EmbeddingTable, EpochStats, Model};
use sea_core::kg::AlignmentTask;
use sea_core::run::{
    ensure_dir, infer_both, write_atomic, DirectionResults, RunReport, StatsWriter, CHECKPOINT_FILE,
    DEFAULT_HITS, REPORT_FILE, STATS_FILE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RunState {
    Pending,
    Training,
    Inferring,
    Done,
    Failed,
}

impl RunState {
    pub fn is_active(self) -> bool {
        !matches!(self, RunState::Done | RunState::Failed)
    }
}

/// One point of the loss/accuracy series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochPoint {
    pub epoch: usize,
    pub loss: f64,
    pub hits1: Option<f64>,
    pub hits10: Option<f64>,
    pub mrr: Option<f64>,
    pub wall_ms: f64,
}

impl From<&EpochStats> for EpochPoint {
    fn from(e: &EpochStats) -> Self {
        Self {
            epoch: e.epoch,
            loss: e.loss,
            hits1: e.eval.map(|v| v.hits1),
            hits10: e.eval.map(|v| v.hits10),
            mrr: e.eval.map(|v| v.mrr),
            wall_ms: e.wall_ms,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunHandle {
    pub id: String,
    pub state: RunState,
    pub epochs_completed: usize,
    pub epochs_total: usize,
    pub latest: Option<EpochPoint>,
    pub error: Option<String>,
}

#[derive(Debug)]
struct RunStatus {
    state: RunState,
    epochs_total: usize,
    series: Vec<EpochPoint>,
    error: Option<String>,
}

/// Everything the result endpoints read; immutable once published.
#[derive(Debug)]
pub struct RunResults {
    pub task: AlignmentTask,
    pub reversed_task: AlignmentTask,
    pub embeddings: EmbeddingTable,
    pub s2t: DirectionResults,
    pub t2s: DirectionResults,
    pub report: RunReport,
}

impl RunResults {
    pub fn compute(config: &RunConfig, task: AlignmentTask, model: &Model) -> sea_core::Result<Self> {
        let embeddings = embed_all(&task, model)?;
        let reversed_task = task.reversed();
        let s2t = infer_both(&embeddings, &task, &config.inference, &DEFAULT_HITS)?;
        let t2s = infer_both(&embeddings.reversed(), &reversed_task, &config.inference, &DEFAULT_HITS)?;
        let report = RunReport::new(config.encoder.model, &task, &config.inference, &s2t);
        Ok(Self {
            task,
            reversed_task,
            embeddings,
            s2t,
            t2s,
            report,
        })
    }
}

#[derive(Debug)]
pub struct Run {
    pub id: String,
    pub config: RunConfig,
    cancel: AtomicBool,
    status: Mutex<RunStatus>,
    results: OnceLock<Arc<RunResults>>,
}

impl Run {
    fn new(id: String, config: RunConfig) -> Self {
        let epochs_total = config.encoder.epochs;
        Self {
            id,
            config,
            cancel: AtomicBool::new(false),
            status: Mutex::new(RunStatus {
                state: RunState::Pending,
                epochs_total,
                series: Vec::new(),
                error: None,
            }),
            results: OnceLock::new(),
        }
    }

    fn status(&self) -> std::sync::MutexGuard<'_, RunStatus> {
        self.status.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn state(&self) -> RunState {
        self.status().state
    }

    pub fn handle(&self) -> RunHandle {
        self.snapshot().0
    }

    /// The handle and a copy of the series, taken under one lock.
    pub fn snapshot(&self) -> (RunHandle, Vec<EpochPoint>) {
        let s = self.status();
        let handle = RunHandle {
            id: self.id.clone(),
            state: s.state,
            epochs_completed: s.series.len(),
            epochs_total: s.epochs_total,
            latest: s.series.last().cloned(),
            error: s.error.clone(),
        };
        (handle, s.series.clone())
    }

    pub fn results(&self) -> Option<&Arc<RunResults>> {
        self.results.get()
    }

    pub fn cancel(&self) {
        self.cancel.store(true, Ordering::Relaxed);
    }

    /// Moves forward only; `Failed` is reachable from any active state.
    fn advance(&self, to: RunState) {
        let mut s = self.status();
        let allowed = s.state.is_active() && (to == RunState::Failed || to > s.state);
        debug_assert!(allowed, "{:?} -> {to:?}", s.state);
        if allowed {
            s.state = to;
        }
    }

    fn fail(&self, message: String) {
        self.advance(RunState::Failed);
        self.status().error = Some(message);
    }

    fn push(&self, epoch: &EpochStats) {
        self.status().series.push(epoch.into());
    }
}

#[derive(Debug, Clone, Default)]
pub struct ServiceOptions {
    /// Origins allowed by CORS; empty allows any origin.
    pub allowed_origins: Vec<String>,
}

#[derive(Debug, Default)]
struct Inner {
    options: ServiceOptions,
    /// In creation order.
    runs: RwLock<Vec<Arc<Run>>>,
    next_id: AtomicU64,
    jobs: Mutex<Vec<JoinHandle<()>>>,
}

/// Shared service state; cheap to clone.
#[derive(Debug, Clone, Default)]
pub struct AppState {
    inner: Arc<Inner>,
}

#[derive(Debug)]
pub enum LaunchError {
    Busy(String),
}

impl AppState {
    pub fn new(options: ServiceOptions) -> Self {
        Self {
            inner: Arc::new(Inner {
                options,
                ..Inner::default()
            }),
        }
    }

    pub fn options(&self) -> &ServiceOptions {
        &self.inner.options
    }

    fn next_id(&self) -> String {
        format!("run-{}", self.inner.next_id.fetch_add(1, Ordering::Relaxed) + 1)
    }

    pub fn run(&self, id: &str) -> Option<Arc<Run>> {
        self.inner.runs.read().unwrap_or_else(|e| e.into_inner()).iter().find(|r| r.id == id).cloned()
    }

    pub fn runs(&self) -> Vec<Arc<Run>> {
        self.inner.runs.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Registers a run and starts its job, unless another run is active.
    /// `config` must already be validated.
    pub fn launch(&self, config: RunConfig) -> Result<Arc<Run>, LaunchError> {
        let run = {
            let mut runs = self.inner.runs.write().unwrap_or_else(|e| e.into_inner());
            if let Some(active) = runs.iter().find(|r| r.state().is_active()) {
                return Err(LaunchError::Busy(active.id.clone()));
            }
            let run = Arc::new(Run::new(self.next_id(), config));
            runs.push(run.clone());
            run
        };
        let job = run.clone();
        let handle = std::thread::Builder::new()
            .name(format!("train-{}", run.id))
            .spawn(move || execute(&job))
            .expect("spawn training thread");
        let mut jobs = self.inner.jobs.lock().unwrap_or_else(|e| e.into_inner());
        jobs.retain(|h| !h.is_finished());
        jobs.push(handle);
        Ok(run)
    }

    /// Registers an already trained model as a completed run.
    pub fn add_finished_run(
        &self,
        config: RunConfig,
        task: AlignmentTask,
        model: &Model,
        history: &[EpochStats],
    ) -> sea_core::Result<Arc<Run>> {
        let results = RunResults::compute(&config, task, model)?;
        let run = Arc::new(Run::new(self.next_id(), config));
        {
            let mut s = run.status();
            s.series = history.iter().map(EpochPoint::from).collect();
            s.epochs_total = s.series.len();
            s.state = RunState::Done;
        }
        run.results.set(Arc::new(results)).expect("fresh run");
        self.inner
            .runs
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .push(run.clone());
        Ok(run)
    }

    /// Signals every active run to stop at its next batch.
    pub fn cancel_all(&self) {
        for run in self.runs() {
            if run.state().is_active() {
                run.cancel();
            }
        }
    }

    /// Cancels active runs and waits for their jobs to finish writing.
    pub fn shutdown(&self) {
        self.cancel_all();
        let jobs = std::mem::take(&mut *self.inner.jobs.lock().unwrap_or_else(|e| e.into_inner()));
        for j in jobs {
            let _ = j.join();
        }
    }
}

fn execute(run: &Run) {
    match train_and_infer(run) {
        Ok(()) => tracing::info!(run = %run.id, "run finished"),
        Err(e) => {
            tracing::warn!(run = %run.id, error = %e, "run failed");
            run.fail(e.to_string());
        }
    }
}

fn train_and_infer(run: &Run) -> sea_core::Result<()> {
    let cfg = &run.config;
    run.advance(RunState::Training);
    let task = cfg.dataset.load()?;
    let out_dir = cfg.output_dir.as_deref();
    let mut stats_file = match out_dir {
        Some(dir) => {
            ensure_dir(dir)?;
            Some(StatsWriter::create(&dir.join(STATS_FILE))?)
        }
        None => None,
    };
    let mut write_error = None;
    let (model, _) = train_with(&task, &cfg.encoder, Some(&run.cancel), |epoch| {
        run.push(epoch);
        if let (Some(w), None) = (stats_file.as_mut(), &write_error) {
            write_error = w.append(epoch).err();
        }
    })?;
    if let Some(e) = write_error {
        return Err(e);
    }

    run.advance(RunState::Inferring);
    let results = RunResults::compute(cfg, task, &model)?;
    if let Some(dir) = out_dir {
        write_outputs(dir, &model, &results.report)?;
    }
    run.results.set(Arc::new(results)).expect("results are published once");
    run.advance(RunState::Done);
    Ok(())
}

fn write_outputs(dir: &Path, model: &Model, report: &RunReport) -> sea_core::Result<()> {
    write_atomic(&dir.join(CHECKPOINT_FILE), &checkpoint::to_bytes(model))?;
    write_atomic(&dir.join(REPORT_FILE), report.to_json().as_bytes())
}

/// Problems that only show up against the filesystem.
pub fn dataset_problems(config: &RunConfig) -> Vec<sea_core::config::FieldProblem> {
    match &config.dataset {
        DatasetSource::Directory(d) if !d.path.is_dir() => vec![sea_core::config::FieldProblem {
            field: "dataset.path".into(),
            message: format!("{} is not a directory", d.path.display()),
        }],
        _ => Vec::new(),
    }
}
