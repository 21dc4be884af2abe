use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use sea_core::config::{DatasetSource, RunConfig};
use sea_core::encoder::{checkpoint, embed_all, train_with, Model};
use sea_core::kg::load::write_dataset;
use sea_core::kg::synth::generate_synthetic_pair;
use sea_core::kg::{AlignmentTask, SynthConfig};
use sea_core::run::{
    ensure_dir, infer_both, write_atomic, MetricSummary, RunReport, StatsWriter, CHECKPOINT_FILE, REPORT_FILE,
    STATS_FILE,
};
use sea_service::{AppState, ServiceOptions};

use crate::args::{ConfigArgs, EvalArgs, GenerateArgs, InferenceArgs, ServeArgs, TrainArgs};

/// Output directory when neither `--out` nor the config names one.
pub const DEFAULT_OUT: &str = "sea-out";

fn load_task(cfg: &RunConfig) -> Result<AlignmentTask> {
    let task = cfg.dataset.load().with_context(|| match &cfg.dataset {
        DatasetSource::Directory(d) => format!("cannot load dataset {}", d.path.display()),
        DatasetSource::Synthetic(_) => "cannot generate synthetic task".to_owned(),
    })?;
    tracing::info!(
        source = task.source_count(),
        target = task.target_count(),
        train = task.train_pairs.len(),
        test = task.test_pairs.len(),
        "task loaded"
    );
    Ok(task)
}

fn hit_cutoffs(inf: &InferenceArgs) -> Result<Vec<usize>> {
    if inf.hits.is_empty() || inf.hits.contains(&0) {
        bail!("--hits needs positive cutoffs");
    }
    let mut ks = inf.hits.clone();
    ks.sort_unstable();
    ks.dedup();
    Ok(ks)
}

fn align(cfg: &RunConfig, task: &AlignmentTask, model: &Model, ks: &[usize]) -> Result<RunReport> {
    let embeddings = embed_all(task, model).context("cannot embed the task with this model")?;
    let results = infer_both(&embeddings, task, &cfg.inference, ks)?;
    Ok(RunReport::new(model.arch.model, task, &cfg.inference, &results))
}

fn print_table(report: &RunReport) -> Result<()> {
    let mut out = std::io::stdout().lock();
    let ks: Vec<usize> = report.naive.hits.keys().copied().collect();
    write!(out, "{:<12}", "mode")?;
    for k in &ks {
        write!(out, "{:>9}", format!("Hits@{k}"))?;
    }
    writeln!(out, "{:>9}", "MRR")?;
    let row = |out: &mut std::io::StdoutLock, name: &str, m: &MetricSummary| -> std::io::Result<()> {
        write!(out, "{name:<12}")?;
        for k in &ks {
            write!(out, "{:>9.4}", m.hits[k])?;
        }
        writeln!(out, "{:>9.4}", m.mrr)
    };
    row(&mut out, "naive", &report.naive)?;
    row(&mut out, "normalized", &report.normalized)?;
    writeln!(out, "({} pairs; ranking uses {})", report.naive.pairs, if report.inference.normalize { "normalized" } else { "naive" })?;
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let cfg = args.flags.resolve()?;
    let ks = hit_cutoffs(&args.flags.inference)?;
    let out: PathBuf = args.out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| DEFAULT_OUT.into());
    let task = load_task(&cfg)?;
    ensure_dir(&out)?;
    let mut stats = StatsWriter::create(&out.join(STATS_FILE))?;
    let mut write_error = None;
    let (model, _) = train_with(&task, &cfg.encoder, None, |epoch| {
        if write_error.is_none() {
            write_error = stats.append(epoch).err();
        }
        match epoch.eval {
            Some(e) => tracing::info!(epoch = epoch.epoch, loss = epoch.loss, hits1 = e.hits1, mrr = e.mrr, "epoch"),
            None => tracing::debug!(epoch = epoch.epoch, loss = epoch.loss, "epoch"),
        }
    })?;
    if let Some(e) = write_error {
        return Err(e.into());
    }
    write_atomic(&out.join(CHECKPOINT_FILE), &checkpoint::to_bytes(&model))?;
    let report = align(&cfg, &task, &model, &ks)?;
    write_atomic(&out.join(REPORT_FILE), report.to_json().as_bytes())?;
    tracing::info!(dir = %out.display(), "outputs written");
    print_table(&report)
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let cfg = args.flags.resolve()?;
    let ks = hit_cutoffs(&args.flags.inference)?;
    let model = checkpoint::load(&args.checkpoint)?;
    let task = load_task(&cfg)?;
    let report = align(&cfg, &task, &model, &ks)?;
    if let Some(out) = &args.out {
        ensure_dir(out)?;
        write_atomic(&out.join(REPORT_FILE), report.to_json().as_bytes())?;
    }
    print_table(&report)
}

async fn shutdown_signal() {
    let interrupt = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        () = interrupt => {}
        () = terminate => {}
    }
}

pub fn serve(args: ServeArgs) -> Result<()> {
    let state = AppState::new(ServiceOptions {
        allowed_origins: args.allow_origins.clone(),
    });
    if let Some(path) = &args.checkpoint {
        let cfg = args.flags.resolve()?;
        let model = checkpoint::load(path)?;
        let task = load_task(&cfg)?;
        let run = state.add_finished_run(cfg, task, &model, &[])?;
        tracing::info!(run = %run.id, checkpoint = %path.display(), "preloaded run");
    }
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .with_context(|| format!("invalid listen address {}:{}", args.host, args.port))?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("cannot listen on {addr}"))?;
        tracing::info!("listening on http://{}", listener.local_addr()?);
        sea_service::serve(listener, state, shutdown_signal()).await?;
        tracing::info!("stopped");
        Ok(())
    })
}

pub fn generate(args: GenerateArgs) -> Result<()> {
    if args.dataset.dataset.is_some() {
        bail!("generate writes a synthetic task; --dataset is not accepted");
    }
    let mut source = DatasetSource::Synthetic(SynthConfig::default());
    args.dataset.apply(&mut source)?;
    let DatasetSource::Synthetic(synth) = source else { unreachable!() };
    let problems = synth.problems();
    if !problems.is_empty() {
        let lines: Vec<String> = problems.iter().map(|(f, m)| format!("{f}: {m}")).collect();
        bail!("invalid generator settings:\n  {}", lines.join("\n  "));
    }
    let task = generate_synthetic_pair(&synth)?;
    write_dataset(&task, &args.out)?;
    println!(
        "wrote {} ({} + {} entities, {} train / {} test pairs)",
        args.out.display(),
        task.source_count(),
        task.target_count(),
        task.train_pairs.len(),
        task.test_pairs.len()
    );
    Ok(())
}

pub fn config(args: ConfigArgs) -> Result<()> {
    print!("{}", args.flags.resolve()?.to_toml());
    Ok(())
}

