//! Payloads built from completed runs: candidate lists, ego-graphs and the
//! embedding projection. All are pure functions of the run's results.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{concatenate, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sea_core::eval::rank_of;
use sea_core::kg::{AlignedPair, AlignmentTask, EdgeDirection, EntityId, KnowledgeGraph};
use sea_core::projection::pca_2d;
use sea_core::rng;
use sea_core::sampler::sample_khop;

use crate::state::RunResults;

/// Candidates shown per entity.
pub const SHOWN_CANDIDATES: usize = 10;
/// Per-hop fan-out of the ego-graph sample.
pub const EGO_FANOUTS: [usize; 2] = [25, 25];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    S2t,
    T2s,
}

impl RunResults {
    /// Task as seen from `direction`: its source graph holds the listed
    /// entities.
    pub fn oriented(&self, direction: Direction) -> &AlignmentTask {
        match direction {
            Direction::S2t => &self.task,
            Direction::T2s => &self.reversed_task,
        }
    }

    pub fn direction(&self, direction: Direction) -> &sea_core::run::DirectionResults {
        match direction {
            Direction::S2t => &self.s2t,
            Direction::T2s => &self.t2s,
        }
    }

    /// Pairs the result list and the metrics are computed over.
    pub fn evaluation_pairs(&self, direction: Direction) -> &[AlignedPair] {
        let t = self.oriented(direction);
        if t.test_pairs.is_empty() {
            &t.train_pairs
        } else {
            &t.test_pairs
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    // Declaration order is the errors-first order.
    Miss,
    InTop10,
    Correct,
}

impl Classification {
    pub fn from_rank(rank: Option<usize>) -> Self {
        match rank {
            Some(1) => Classification::Correct,
            Some(r) if r <= SHOWN_CANDIDATES => Classification::InTop10,
            _ => Classification::Miss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedEntity {
    pub id: EntityId,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub id: EntityId,
    pub name: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateList {
    pub source: NamedEntity,
    /// Best first, in the order the rank is computed with.
    pub candidates: Vec<Candidate>,
    /// `None` when the entity has no known counterpart.
    pub truth: Option<NamedEntity>,
    /// Rank of the truth among all stored candidates.
    pub rank: Option<usize>,
    /// `None` exactly when `truth` is.
    pub classification: Option<Classification>,
}

pub fn candidate_list(
    results: &RunResults,
    direction: Direction,
    normalized: bool,
    entity: EntityId,
    truth: Option<EntityId>,
) -> CandidateList {
    let task = results.oriented(direction);
    let row = results.direction(direction).ranking(normalized).row(entity);
    let rank = truth.and_then(|t| rank_of(row, t));
    CandidateList {
        source: NamedEntity {
            id: entity,
            name: task.source.entity_name(entity).to_owned(),
        },
        candidates: row
            .iter()
            .take(SHOWN_CANDIDATES)
            .map(|&(id, score)| Candidate {
                id,
                name: task.target.entity_name(id).to_owned(),
                score,
            })
            .collect(),
        truth: truth.map(|t| NamedEntity {
            id: t,
            name: task.target.entity_name(t).to_owned(),
        }),
        rank,
        classification: truth.map(|_| Classification::from_rank(rank)),
    }
}

/// Known counterpart of every linked source entity, train and test.
pub fn truth_map(task: &AlignmentTask) -> BTreeMap<EntityId, EntityId> {
    task.train_pairs.iter().chain(&task.test_pairs).copied().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SortOrder {
    #[default]
    Id,
    ErrorsFirst,
}

/// Candidate lists of every evaluation entity, sorted and paged.
pub fn result_page(
    results: &RunResults,
    direction: Direction,
    normalized: bool,
    sort: SortOrder,
    offset: usize,
    limit: usize,
) -> (usize, Vec<CandidateList>) {
    let mut pairs = results.evaluation_pairs(direction).to_vec();
    pairs.sort_unstable();
    let mut lists: Vec<CandidateList> = pairs
        .iter()
        .map(|&(s, t)| candidate_list(results, direction, normalized, s, Some(t)))
        .collect();
    if sort == SortOrder::ErrorsFirst {
        // Stable, so ties stay in id order.
        lists.sort_by_key(|c| c.classification);
    }
    let total = lists.len();
    (total, lists.into_iter().skip(offset).take(limit).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EgoNode {
    pub id: EntityId,
    pub name: String,
    /// Hops from the center.
    pub hop: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct EgoEdge {
    pub head: EntityId,
    pub tail: EntityId,
    pub relation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EgoGraph {
    pub center: EntityId,
    pub nodes: Vec<EgoNode>,
    pub edges: Vec<EgoEdge>,
}

/// Sampled two-hop neighborhood of `center`, seeded by `seed` and the entity
/// so that repeated requests agree.
pub fn ego_graph(kg: &KnowledgeGraph, center: EntityId, seed: u64) -> EgoGraph {
    let mut r = rng::stream(seed, center as u64);
    let blocks = sample_khop(kg, &[center], &EGO_FANOUTS, &mut r).expect("center is in range");
    let mut hop: BTreeMap<EntityId, usize> = BTreeMap::from([(center, 0)]);
    let mut edges = BTreeSet::new();
    // Innermost block first: its sources are one hop out.
    for (depth, block) in blocks.blocks.iter().rev().enumerate() {
        for &v in &block.src_nodes {
            hop.entry(v).or_insert(depth + 1);
        }
        for e in &block.edges {
            let (Some(rel), src, dst) = (e.relation, block.src_nodes[e.src], block.dst_nodes[e.dst]) else {
                continue;
            };
            let (head, tail) = match e.direction {
                EdgeDirection::Forward => (src, dst),
                EdgeDirection::Reverse => (dst, src),
                EdgeDirection::SelfLoop => continue,
            };
            edges.insert(EgoEdge {
                head,
                tail,
                relation: kg.relation_name(rel).to_owned(),
            });
        }
    }
    EgoGraph {
        center,
        nodes: hop
            .into_iter()
            .map(|(id, hop)| EgoNode {
                id,
                name: kg.entity_name(id).to_owned(),
                hop,
            })
            .collect(),
        edges: edges.into_iter().collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairSet {
    Train,
    #[default]
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectedPoint {
    pub entity: EntityId,
    pub side: Side,
    /// Index of the pair within the returned sample.
    pub pair: usize,
    pub x: f64,
    pub y: f64,
}

/// PCA of the final embeddings of up to `sample` pairs of `set`, both sides
/// projected together. A sample smaller than the set is a seeded subset.
pub fn projection(results: &RunResults, set: PairSet, sample: Option<usize>, seed: u64) -> Vec<ProjectedPoint> {
    let mut pairs = match set {
        PairSet::Train => results.task.train_pairs.clone(),
        PairSet::Test => results.task.test_pairs.clone(),
    };
    pairs.sort_unstable();
    if let Some(n) = sample.filter(|&n| n < pairs.len()) {
        pairs.shuffle(&mut rng::seeded(seed));
        pairs.truncate(n);
        pairs.sort_unstable();
    }
    if pairs.is_empty() {
        return Vec::new();
    }
    let src_ids: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let tgt_ids: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let emb = &results.embeddings;
    let stacked = concatenate(
        Axis(0),
        &[emb.source().select(Axis(0), &src_ids).view(), emb.target().select(Axis(0), &tgt_ids).view()],
    )
    .expect("equal widths");
    let xy = pca_2d(stacked.view()).expect("finite embeddings");
    let n = pairs.len();
    (0..2 * n)
        .map(|i| {
            let (entity, side) = if i < n {
                (src_ids[i], Side::Source)
            } else {
                (tgt_ids[i - n], Side::Target)
            };
            ProjectedPoint {
                entity,
                side,
                pair: i % n,
                x: xy[[i, 0]],
                y: xy[[i, 1]],
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_follows_rank() {
        assert_eq!(Classification::from_rank(Some(1)), Classification::Correct);
        assert_eq!(Classification::from_rank(Some(2)), Classification::InTop10);
        assert_eq!(Classification::from_rank(Some(10)), Classification::InTop10);
        assert_eq!(Classification::from_rank(Some(11)), Classification::Miss);
        assert_eq!(Classification::from_rank(None), Classification::Miss);
        assert!(Classification::Miss < Classification::InTop10);
        assert!(Classification::InTop10 < Classification::Correct);
    }

    #[test]
    fn ego_graph_of_a_path() {
        let kg = KnowledgeGraph::from_edges(5, &[(0, 1), (2, 1), (2, 3), (3, 4)]).unwrap();
        let g = ego_graph(&kg, 1, 0);
        let ids: Vec<(usize, usize)> = g.nodes.iter().map(|n| (n.id, n.hop)).collect();
        assert_eq!(ids, [(0, 1), (1, 0), (2, 1), (3, 2)]);
        let edges: Vec<(usize, usize)> = g.edges.iter().map(|e| (e.head, e.tail)).collect();
        assert_eq!(edges, [(0, 1), (2, 1), (2, 3)]);
        assert!(g.edges.iter().all(|e| e.relation == "r0"));
    }
}
