//! Alignment resolution from trained embeddings.
//!
//! The naive mode returns each source entity's nearest targets. The
//! normalized mode partitions both graphs into groups, Sinkhorn-normalizes
//! the dense similarity block of each group, applies CSLS to the global
//! top-k lists and fuses the two.

mod fuse;
mod local;
mod normalize;
mod partition;
mod sparse;
mod topk;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use fuse::{canonical, fuse};
pub use local::{local_similarity, LocalSimBlock};
pub use normalize::{csls_adjust, sinkhorn_dense, sinkhorn_normalize, CslsOutput, SinkhornOutput};
pub use partition::{partition_entities, Group, Partition, KMEANS_ITERATIONS};
pub use sparse::{candidate_order, SparseSimilarity};
pub use topk::{select_top, topk_directed, topk_global, topk_global_with, ExactTopK, TopKBackend};

use crate::encoder::EmbeddingTable;
use crate::kg::AlignmentTask;
use crate::{rng, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceOptions {
    /// Candidates kept per source entity.
    pub k: usize,
    pub num_groups: usize,
    pub normalize: bool,
    /// Share of the local score in the fused score.
    pub weight: f64,
    pub sinkhorn_iterations: usize,
    pub sinkhorn_temperature: f64,
    pub csls_neighborhood: usize,
    /// Seeds the k-means partition.
    pub seed: u64,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        Self {
            k: 50,
            num_groups: 1,
            normalize: true,
            weight: 0.5,
            sinkhorn_iterations: 10,
            sinkhorn_temperature: 0.05,
            csls_neighborhood: 10,
            seed: 42,
        }
    }
}

impl InferenceOptions {
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.k == 0 {
            out.push(("k", "must be positive".to_owned()));
        }
        if self.num_groups == 0 {
            out.push(("num_groups", "must be positive".to_owned()));
        }
        if !(0.0..=1.0).contains(&self.weight) {
            out.push(("weight", "must be in [0, 1]".to_owned()));
        }
        if self.sinkhorn_iterations == 0 {
            out.push(("sinkhorn_iterations", "must be positive".to_owned()));
        }
        if !(self.sinkhorn_temperature > 0.0 && self.sinkhorn_temperature.is_finite()) {
            out.push(("sinkhorn_temperature", "must be positive".to_owned()));
        }
        if self.csls_neighborhood == 0 {
            out.push(("csls_neighborhood", "must be positive".to_owned()));
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupDiagnostics {
    pub sources: usize,
    pub targets: usize,
    /// Fraction of the task's test pairs rooted in this group whose target
    /// shares the group.
    pub equivalence_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Inner products computed by the global top-k search (both directions).
    pub global_evaluations: u64,
    /// Inner products computed for the local blocks.
    pub local_evaluations: u64,
    pub groups: Vec<GroupDiagnostics>,
    pub degenerate_partition: bool,
    pub empty_side_groups: usize,
    pub csls_empty_rows: usize,
    pub sinkhorn_clamped_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// Source-to-target candidate lists.
    pub similarity: SparseSimilarity,
    pub diagnostics: Diagnostics,
}

/// Top-`k` targets per source by inner product.
pub fn raw_alignment(table: &EmbeddingTable, k: usize) -> SparseSimilarity {
    topk_directed(&ExactTopK, table.source(), table.target(), k)
}

/// Runs the naive or the normalized pipeline over final embeddings.
pub fn infer_alignment(
    table: &EmbeddingTable,
    task: &AlignmentTask,
    options: &InferenceOptions,
) -> Result<Alignment> {
    infer_alignment_with(&ExactTopK, table, task, options)
}

pub fn infer_alignment_with(
    backend: &dyn TopKBackend,
    table: &EmbeddingTable,
    task: &AlignmentTask,
    options: &InferenceOptions,
) -> Result<Alignment> {
    if let Some((field, msg)) = options.problems().into_iter().next() {
        return Err(crate::Error::InvalidArgument(format!("{field}: {msg}")));
    }
    let (s, t) = (table.source_rows(), table.target_rows());
    if !options.normalize {
        return Ok(Alignment {
            similarity: topk_directed(backend, table.source(), table.target(), options.k),
            diagnostics: Diagnostics {
                global_evaluations: backend.evaluations(s, t),
                ..Diagnostics::default()
            },
        });
    }

    let mut diag = Diagnostics::default();
    let partition = partition_entities(table, task, options.num_groups, &mut rng::seeded(options.seed))?;
    diag.degenerate_partition = partition.degenerate;
    diag.groups = partition
        .groups
        .iter()
        .zip(partition.equivalence_rates(&task.test_pairs))
        .map(|(g, rate)| GroupDiagnostics {
            sources: g.source.len(),
            targets: g.target.len(),
            equivalence_rate: rate,
        })
        .collect();

    let mut blocks = local_similarity(table, &partition);
    diag.local_evaluations = blocks.iter().map(LocalSimBlock::evaluations).sum();
    diag.empty_side_groups = blocks.iter().filter(|b| b.is_degenerate()).count();
    let clamped = blocks
        .par_iter_mut()
        .map(|b| sinkhorn_dense(&mut b.scores, options.sinkhorn_iterations, options.sinkhorn_temperature))
        .collect::<Result<Vec<usize>>>()?;
    diag.sinkhorn_clamped_rows = clamped.iter().sum();

    let forward = topk_directed(backend, table.source(), table.target(), options.k);
    let reverse = topk_directed(backend, table.target(), table.source(), options.k);
    diag.global_evaluations = backend.evaluations(s, t) + backend.evaluations(t, s);
    let csls = csls_adjust(&forward, &reverse, options.csls_neighborhood)?;
    diag.csls_empty_rows = csls.empty_rows;

    let similarity = fuse(&blocks, &csls.similarity, options.weight, options.k.min(t))?;
    Ok(Alignment {
        similarity,
        diagnostics: diag,
    })
}
