//! Seed-anchored mini-batches and k-hop fan-out neighborhood sampling.

use std::collections::{HashMap, HashSet};

use rand::seq::index;
use rand::Rng;

use crate::kg::{AlignedPair, AlignmentTask, EdgeDirection, EntityId, KnowledgeGraph, RelationId};
use crate::rng::SeaRng;
use crate::{Error, Result};

/// Positive seed pairs plus sampled negatives for each graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiniBatch {
    pub positive_pairs: Vec<AlignedPair>,
    pub negatives_source: Vec<EntityId>,
    pub negatives_target: Vec<EntityId>,
}

impl MiniBatch {
    /// Positive sources followed by source negatives.
    pub fn source_targets(&self) -> Vec<EntityId> {
        self.positive_pairs
            .iter()
            .map(|p| p.0)
            .chain(self.negatives_source.iter().copied())
            .collect()
    }

    /// Positive targets followed by target negatives.
    pub fn target_targets(&self) -> Vec<EntityId> {
        self.positive_pairs
            .iter()
            .map(|p| p.1)
            .chain(self.negatives_target.iter().copied())
            .collect()
    }
}

/// Draws `count` distinct ids from `0..universe` outside `excluded`.
fn sample_excluding(
    universe: usize,
    excluded: &HashSet<EntityId>,
    count: usize,
    rng: &mut SeaRng,
) -> Result<Vec<EntityId>> {
    let available = universe - excluded.len();
    if count > available {
        return Err(Error::InvalidArgument(format!(
            "negative_count {count} exceeds the {available} entities outside the batch"
        )));
    }
    if count * 2 > available {
        let pool: Vec<EntityId> = (0..universe).filter(|v| !excluded.contains(v)).collect();
        return Ok(index::sample(rng, pool.len(), count)
            .into_iter()
            .map(|i| pool[i])
            .collect());
    }
    let mut chosen = Vec::with_capacity(count);
    let mut taken = HashSet::with_capacity(count);
    while chosen.len() < count {
        let v = rng.random_range(0..universe);
        if !excluded.contains(&v) && taken.insert(v) {
            chosen.push(v);
        }
    }
    Ok(chosen)
}

/// Attaches `negative_count` negatives per side to the given positives.
pub fn attach_negatives(
    task: &AlignmentTask,
    positive_pairs: Vec<AlignedPair>,
    negative_count: usize,
    rng: &mut SeaRng,
) -> Result<MiniBatch> {
    let pos_s: HashSet<_> = positive_pairs.iter().map(|p| p.0).collect();
    let pos_t: HashSet<_> = positive_pairs.iter().map(|p| p.1).collect();
    let negatives_source = sample_excluding(task.source_count(), &pos_s, negative_count, rng)?;
    let negatives_target = sample_excluding(task.target_count(), &pos_t, negative_count, rng)?;
    Ok(MiniBatch {
        positive_pairs,
        negatives_source,
        negatives_target,
    })
}

/// `batch_size` train pairs without replacement plus `negative_count`
/// uniformly drawn non-positive entities per graph.
pub fn construct_minibatch(
    task: &AlignmentTask,
    batch_size: usize,
    negative_count: usize,
    rng: &mut SeaRng,
) -> Result<MiniBatch> {
    if batch_size == 0 || batch_size > task.train_pairs.len() {
        return Err(Error::InvalidArgument(format!(
            "batch_size {batch_size} must be in 1..={}",
            task.train_pairs.len()
        )));
    }
    let positives = index::sample(rng, task.train_pairs.len(), batch_size)
        .into_iter()
        .map(|i| task.train_pairs[i])
        .collect();
    attach_negatives(task, positives, negative_count, rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockEdge {
    /// Position in `src_nodes`.
    pub src: usize,
    /// Position in `dst_nodes`.
    pub dst: usize,
    pub weight: f64,
    /// `None` for self-loops.
    pub relation: Option<RelationId>,
    pub direction: EdgeDirection,
}

/// One hop of sampled message passing: `src_nodes` → `dst_nodes`.
///
/// `src_nodes` always starts with `dst_nodes` in the same order, so the
/// destination at position `i` is also the source at position `i`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Block {
    pub src_nodes: Vec<EntityId>,
    pub dst_nodes: Vec<EntityId>,
    pub edges: Vec<BlockEdge>,
}

impl Block {
    /// A single block over all nodes of `kg` with every adjacency entry.
    pub fn full(kg: &KnowledgeGraph) -> Self {
        let adj = kg.adjacency();
        let nodes: Vec<EntityId> = (0..kg.entity_count()).collect();
        let mut edges = Vec::with_capacity(adj.entry_count());
        for v in 0..kg.entity_count() {
            edges.extend(adj.in_edges(v).iter().map(|e| BlockEdge {
                src: e.neighbor,
                dst: v,
                weight: e.weight,
                relation: e.relation,
                direction: e.direction,
            }));
        }
        Self {
            src_nodes: nodes.clone(),
            dst_nodes: nodes,
            edges,
        }
    }
}

/// Blocks ordered outermost hop first; the last block's `dst_nodes` are the
/// (deduplicated) sampling targets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampledBlockList {
    pub blocks: Vec<Block>,
}

impl SampledBlockList {
    /// Nodes whose input embeddings the first layer reads.
    pub fn input_nodes(&self) -> &[EntityId] {
        self.blocks.first().map(|b| b.src_nodes.as_slice()).unwrap_or(&[])
    }

    /// Nodes whose embeddings the last layer produces.
    pub fn output_nodes(&self) -> &[EntityId] {
        self.blocks.last().map(|b| b.dst_nodes.as_slice()).unwrap_or(&[])
    }

    /// `layers` copies of the full-graph block: exact k-hop propagation.
    pub fn full_graph(kg: &KnowledgeGraph, layers: usize) -> Self {
        let block = Block::full(kg);
        Self {
            blocks: vec![block; layers],
        }
    }
}

/// Samples a k-hop neighborhood around `targets`.
///
/// `fanouts[i]` caps the sampled in-neighbors per node at hop `i + 1`
/// (hop 1 is adjacent to the targets and becomes the last block). Neighbors
/// are drawn without replacement; the self-loop is always kept in addition.
/// A node expanded at an earlier hop draws again only from the neighbors it
/// sampled then, so hop `h` reaches new nodes only through nodes first seen
/// at hop `h − 1`.
pub fn sample_khop(
    kg: &KnowledgeGraph,
    targets: &[EntityId],
    fanouts: &[usize],
    rng: &mut SeaRng,
) -> Result<SampledBlockList> {
    if fanouts.is_empty() {
        return Err(Error::InvalidArgument("fanout list is empty".into()));
    }
    if let Some(i) = fanouts.iter().position(|&f| f == 0) {
        return Err(Error::InvalidArgument(format!("fanout at hop {} is 0", i + 1)));
    }
    if targets.is_empty() {
        return Err(Error::InvalidArgument("no sampling targets".into()));
    }
    let n = kg.entity_count();
    if let Some(&bad) = targets.iter().find(|&&t| t >= n) {
        return Err(Error::InvalidArgument(format!(
            "target {bad} out of range for {n} entities"
        )));
    }

    let adj = kg.adjacency();
    let mut frontier = Vec::with_capacity(targets.len());
    let mut seen = HashSet::with_capacity(targets.len());
    for &t in targets {
        if seen.insert(t) {
            frontier.push(t);
        }
    }

    // Sampled candidate indices of every node expanded so far.
    let mut sampled: HashMap<EntityId, Vec<usize>> = HashMap::new();
    let mut blocks = Vec::with_capacity(fanouts.len());
    for &fanout in fanouts {
        let mut src_nodes = frontier.clone();
        let mut position: HashMap<EntityId, usize> =
            frontier.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut edges = Vec::new();
        for (dst, &v) in frontier.iter().enumerate() {
            let entries = adj.in_edges(v);
            let mut own_loop = None;
            let mut candidates = Vec::with_capacity(entries.len());
            for e in entries {
                if e.direction == EdgeDirection::SelfLoop && own_loop.is_none() {
                    own_loop = Some(e);
                } else {
                    candidates.push(e);
                }
            }
            let own_loop = own_loop.expect("adjacency always stores a self-loop");
            edges.push(BlockEdge {
                src: dst,
                dst,
                weight: own_loop.weight,
                relation: None,
                direction: EdgeDirection::SelfLoop,
            });
            let pool = sampled
                .entry(v)
                .or_insert_with(|| (0..candidates.len()).collect());
            let picked: Vec<usize> = if pool.len() <= fanout {
                pool.clone()
            } else {
                let mut idx: Vec<usize> = index::sample(rng, pool.len(), fanout)
                    .into_iter()
                    .map(|i| pool[i])
                    .collect();
                idx.sort_unstable();
                idx
            };
            *pool = picked.clone();
            for i in picked {
                let e = candidates[i];
                let src = *position.entry(e.neighbor).or_insert_with(|| {
                    src_nodes.push(e.neighbor);
                    src_nodes.len() - 1
                });
                edges.push(BlockEdge {
                    src,
                    dst,
                    weight: e.weight,
                    relation: e.relation,
                    direction: e.direction,
                });
            }
        }
        blocks.push(Block {
            src_nodes: src_nodes.clone(),
            dst_nodes: frontier,
            edges,
        });
        frontier = src_nodes;
    }
    blocks.reverse();
    Ok(SampledBlockList { blocks })
}

/// Bytes per input scalar in the memory estimate.
pub const SCALAR_BYTES: usize = 8;
/// Bytes per stored block edge: two positions and a weight.
pub const EDGE_BYTES: usize = 24;

/// Working-set estimate of a block list: one `dim`-wide row per source node
/// per block plus edge storage.
pub fn block_memory_estimate(blocks: &SampledBlockList, dim: usize) -> usize {
    blocks
        .blocks
        .iter()
        .map(|b| b.src_nodes.len() * dim * SCALAR_BYTES + b.edges.len() * EDGE_BYTES)
        .sum()
}

/// Closed-form upper bound of [`block_memory_estimate`] for `targets` seeds
/// sampled with `fanouts`, independent of the graph.
///
/// Hop `h` adds at most `targets · ∏_{i<h} fanouts[i]` new nodes, so the block
/// for hop `h` has at most `targets · Σ_{j≤h} ∏_{i<j} fanouts[i]` source nodes
/// and each of its destinations at most `fanouts[h-1] + 1` in-edges.
pub fn block_memory_bound(targets: usize, fanouts: &[usize], dim: usize) -> usize {
    let mut reach = 1usize; // nodes per target reachable within the current hop
    let mut layer = 1usize; // nodes per target first reached at the current hop
    let mut total = 0;
    for &f in fanouts {
        let dst = targets * reach;
        layer *= f;
        reach += layer;
        let src = targets * reach;
        total += src * dim * SCALAR_BYTES + dst * (f + 1) * EDGE_BYTES;
    }
    total
}
