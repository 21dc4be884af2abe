use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    apply_update, backward, batch_loss, forward, AdamConfig, AdamState, Architecture,
    BatchEmbeddings, EmbeddingTable, EncoderConfig, LossParams, ModelKind, Params, RowGradients,
    Side,
};
use crate::kg::{AlignedPair, AlignmentTask};
use crate::rng::SeaRng;
use crate::sampler::{attach_negatives, sample_khop, MiniBatch, SampledBlockList};
use crate::{eval, inference, rng, Error, Result};

/// Adam state for every trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub table: AdamState,
    pub attention: AdamState,
}

/// Everything a checkpoint stores.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub params: Params,
    pub optimizer: OptimizerState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSnapshot {
    pub hits1: f64,
    pub hits10: f64,
    pub mrr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean batch loss.
    pub loss: f64,
    pub eval: Option<EvalSnapshot>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub epochs: Vec<EpochStats>,
}

fn check_config(task: &AlignmentTask, cfg: &EncoderConfig) -> Result<()> {
    if let Some((field, msg)) = cfg.problems().into_iter().next() {
        return Err(Error::InvalidArgument(format!("{field}: {msg}")));
    }
    if task.train_pairs.is_empty() {
        return Err(Error::InvalidTask("no training pairs".into()));
    }
    Ok(())
}

/// Seeded initial model: table entries N(0,1)/√D, attention vectors
/// N(0,1)/√(2D), zero optimizer state.
pub fn initialize(task: &AlignmentTask, cfg: &EncoderConfig) -> Result<Model> {
    check_config(task, cfg)?;
    let mut r = rng::seeded(cfg.rng_seed);
    let table = EmbeddingTable::random(task.source_count(), task.target_count(), cfg.dim, &mut r);
    let width = 2 * cfg.dim;
    let attention_rows = match cfg.model {
        ModelKind::GcnAlignLite => 0,
        ModelKind::AttentionLite => cfg.layers,
    };
    let scale = 1.0 / (width as f64).sqrt();
    let attention = Array2::from_shape_simple_fn((attention_rows, width), || {
        let z: f64 = StandardNormal.sample(&mut r);
        z * scale
    });
    let optimizer = OptimizerState {
        table: AdamState::new(table.rows(), cfg.dim),
        attention: AdamState::new(attention_rows, width),
    };
    Ok(Model {
        arch: cfg.architecture(),
        params: Params { table, attention },
        optimizer,
    })
}

/// Encoder outputs for every entity of both graphs, over the full graphs.
pub fn embed_all(task: &AlignmentTask, model: &Model) -> Result<EmbeddingTable> {
    let layers = model.arch.layers;
    let src = forward(
        &SampledBlockList::full_graph(&task.source, layers),
        &model.params,
        Side::Source,
        &model.arch,
    )?;
    let tgt = forward(
        &SampledBlockList::full_graph(&task.target, layers),
        &model.params,
        Side::Target,
        &model.arch,
    )?;
    EmbeddingTable::from_sides(src.output.view(), tgt.output.view())
}

fn snapshot(task: &AlignmentTask, model: &Model, topk: usize) -> Result<EvalSnapshot> {
    let emb = embed_all(task, model)?;
    let sim = inference::raw_alignment(&emb, topk);
    let report = eval::evaluate(&sim, &task.test_pairs, &[1, 10])?;
    Ok(EvalSnapshot {
        hits1: report.hits_at(1),
        hits10: report.hits_at(10),
        mrr: report.mrr,
    })
}

/// Splits `n` items into `ceil(n / size)` consecutive chunks whose lengths
/// differ by at most one.
fn chunk_bounds(n: usize, size: usize) -> Vec<(usize, usize)> {
    let count = n.div_ceil(size).max(1);
    let (base, extra) = (n / count, n % count);
    let mut out = Vec::with_capacity(count);
    let mut start = 0;
    for i in 0..count {
        let len = base + usize::from(i < extra);
        out.push((start, start + len));
        start += len;
    }
    out
}

/// A mini-batch together with the sampled blocks of both graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledBatch {
    pub batch: MiniBatch,
    pub source_blocks: SampledBlockList,
    pub target_blocks: SampledBlockList,
}

/// Attaches negatives to `positives` and samples both neighborhoods.
pub fn sample_batch(
    task: &AlignmentTask,
    cfg: &EncoderConfig,
    positives: &[AlignedPair],
    rng: &mut SeaRng,
) -> Result<SampledBatch> {
    let batch = attach_negatives(task, positives.to_vec(), cfg.negative_count, rng)?;
    let source_blocks = sample_khop(&task.source, &batch.source_targets(), &cfg.fanouts, rng)?;
    let target_blocks = sample_khop(&task.target, &batch.target_targets(), &cfg.fanouts, rng)?;
    Ok(SampledBatch {
        batch,
        source_blocks,
        target_blocks,
    })
}

/// Loss of one batch and its gradient with respect to the trainable rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradients {
    pub loss: f64,
    /// Rows of the embedding table, by global row index.
    pub table: RowGradients,
    /// Every attention row; empty for gcn-align-lite.
    pub attention: RowGradients,
}

/// Forward pass, loss and backward pass for one sampled batch.
pub fn batch_gradients(model: &Model, sampled: &SampledBatch, loss: &LossParams) -> Result<BatchGradients> {
    let src = forward(&sampled.source_blocks, &model.params, Side::Source, &model.arch)?;
    let tgt = forward(&sampled.target_blocks, &model.params, Side::Target, &model.arch)?;

    let batch = &sampled.batch;
    let n = batch.positive_pairs.len();
    let pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    let src_neg: Vec<usize> = (n..n + batch.negatives_source.len()).collect();
    let tgt_neg: Vec<usize> = (n..n + batch.negatives_target.len()).collect();
    let emb = BatchEmbeddings {
        source: src.output.view(),
        target: tgt.output.view(),
        pairs: &pairs,
        source_negatives: &src_neg,
        target_negatives: &tgt_neg,
    };
    let out = batch_loss(&emb, loss)?;

    let gs = backward(&src, &sampled.source_blocks, &model.params, &model.arch, out.grad_source.view())?;
    let gt = backward(&tgt, &sampled.target_blocks, &model.params, &model.arch, out.grad_target.view())?;
    let offset = model.params.table.offset(Side::Target);
    let rows: Vec<usize> = gs
        .nodes
        .iter()
        .copied()
        .chain(gt.nodes.iter().map(|&v| v + offset))
        .collect();
    let values = concatenate(Axis(0), &[gs.rows.view(), gt.rows.view()]).expect("equal widths");
    Ok(BatchGradients {
        loss: out.loss,
        table: RowGradients { rows, values },
        attention: RowGradients {
            rows: (0..model.params.attention.nrows()).collect(),
            values: gs.attention + gt.attention,
        },
    })
}

/// Runs one optimization step; returns the batch loss.
fn train_batch(
    task: &AlignmentTask,
    cfg: &EncoderConfig,
    model: &mut Model,
    positives: &[AlignedPair],
    seed_stream: u64,
    epoch: usize,
) -> Result<f64> {
    let mut r = rng::stream(cfg.rng_seed, seed_stream);
    let sampled = sample_batch(task, cfg, positives, &mut r)?;
    let grads = batch_gradients(model, &sampled, &cfg.loss_params())?;
    let finite = |g: &RowGradients| g.values.iter().all(|x| x.is_finite());
    if !grads.loss.is_finite() || !finite(&grads.table) || !finite(&grads.attention) {
        return Err(Error::Diverged { epoch });
    }
    let adam = AdamConfig::new(cfg.learning_rate);
    apply_update(
        model.params.table.matrix_mut().view_mut(),
        &grads.table,
        &mut model.optimizer.table,
        &adam,
    )?;
    apply_update(
        model.params.attention.view_mut(),
        &grads.attention,
        &mut model.optimizer.attention,
        &adam,
    )?;
    Ok(grads.loss)
}

/// Trains from the seeded initialization.
pub fn train(task: &AlignmentTask, cfg: &EncoderConfig) -> Result<(Model, TrainStats)> {
    train_with(task, cfg, None, |_| {})
}

/// Trains from the seeded initialization, reporting each finished epoch to
/// `observer` and stopping with `Error::Cancelled` once `cancel` is set.
///
/// Batch `b` of epoch `e` draws from its own RNG stream, so results depend
/// only on the config.
pub fn train_with(
    task: &AlignmentTask,
    cfg: &EncoderConfig,
    cancel: Option<&AtomicBool>,
    mut observer: impl FnMut(&EpochStats),
) -> Result<(Model, TrainStats)> {
    let mut model = initialize(task, cfg)?;
    let mut stats = TrainStats::default();
    let mut order = task.train_pairs.clone();
    let bounds = chunk_bounds(order.len(), cfg.batch_size);
    let needs_pairs = match cfg.loss {
        super::LossKind::HardSampleMining => 2,
        super::LossKind::Triplet => 1,
    };

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut shuffle = rng::stream(cfg.rng_seed, rng::batch_stream_id(epoch, u32::MAX as usize));
        order.shuffle(&mut shuffle);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, &(lo, hi)) in bounds.iter().enumerate() {
            if cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
                return Err(Error::Cancelled);
            }
            if hi - lo < needs_pairs {
                continue;
            }
            let stream = rng::batch_stream_id(epoch, b);
            loss_sum += train_batch(task, cfg, &mut model, &order[lo..hi], stream, epoch + 1)?;
            batches += 1;
        }
        let loss = if batches == 0 { 0.0 } else { loss_sum / batches as f64 };
        let eval = if cfg.eval_every > 0 && ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs)
            && !task.test_pairs.is_empty()
        {
            Some(snapshot(task, &model, cfg.eval_topk)?)
        } else {
            None
        };
        let entry = EpochStats {
            epoch: epoch + 1,
            loss,
            eval,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        observer(&entry);
        stats.epochs.push(entry);
    }
    Ok((model, stats))
}
