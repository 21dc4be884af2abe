use ndarray::{Array2, Axis};
use rayon::prelude::*;

use super::partition::Partition;
use crate::encoder::EmbeddingTable;
use crate::kg::EntityId;

/// Dense scores between the source and target members of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSimBlock {
    pub group: usize,
    pub source_ids: Vec<EntityId>,
    pub target_ids: Vec<EntityId>,
    /// `|source_ids| × |target_ids|`.
    pub scores: Array2<f64>,
}

impl LocalSimBlock {
    /// True when either side of the group is empty.
    pub fn is_degenerate(&self) -> bool {
        self.source_ids.is_empty() || self.target_ids.is_empty()
    }

    pub fn evaluations(&self) -> u64 {
        self.source_ids.len() as u64 * self.target_ids.len() as u64
    }
}

/// Per group, inner products between its source rows and target rows.
pub fn local_similarity(table: &EmbeddingTable, partition: &Partition) -> Vec<LocalSimBlock> {
    partition
        .groups
        .par_iter()
        .enumerate()
        .map(|(g, group)| {
            let src = table.source().select(Axis(0), &group.source);
            let tgt = table.target().select(Axis(0), &group.target);
            LocalSimBlock {
                group: g,
                source_ids: group.source.clone(),
                target_ids: group.target.clone(),
                scores: src.dot(&tgt.t()),
            }
        })
        .collect()
}
