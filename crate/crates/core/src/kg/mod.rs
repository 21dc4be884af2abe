//! Knowledge graphs, alignment tasks and their adjacency structure.

mod adjacency;
pub mod load;
pub mod synth;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use adjacency::{build_adjacency, AdjEntry, Adjacency, EdgeDirection};
pub use load::{load_dataset, write_dataset, Split};
pub use synth::{generate_synthetic_pair, SynthConfig};

pub type EntityId = usize;
pub type RelationId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

/// `G = (E, R, T)` plus the symmetric-normalized adjacency derived from `T`.
///
/// A graph is immutable once built; the adjacency always matches the triples.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    entity_names: Vec<String>,
    relation_names: Vec<String>,
    triples: Vec<Triple>,
    adjacency: Adjacency,
}

impl KnowledgeGraph {
    pub fn new(
        entity_names: Vec<String>,
        relation_names: Vec<String>,
        triples: Vec<Triple>,
    ) -> Result<Self> {
        let n = entity_names.len();
        let r = relation_names.len();
        for (i, t) in triples.iter().enumerate() {
            if t.head >= n || t.tail >= n || t.relation >= r {
                return Err(Error::InvalidTask(format!(
                    "triple #{i} ({}, {}, {}) out of range for |E|={n}, |R|={r}",
                    t.head, t.relation, t.tail
                )));
            }
        }
        let adjacency = build_adjacency(n, &triples);
        Ok(Self {
            entity_names,
            relation_names,
            triples,
            adjacency,
        })
    }

    /// A graph with entities named `e0..e{n-1}` and relations `r0..`.
    pub fn from_edges(entity_count: usize, edges: &[(EntityId, EntityId)]) -> Result<Self> {
        let triples: Vec<Triple> = edges.iter().map(|&(h, t)| Triple::new(h, 0, t)).collect();
        Self::new(
            (0..entity_count).map(|i| format!("e{i}")).collect(),
            vec!["r0".to_owned()],
            triples,
        )
    }

    pub fn entity_count(&self) -> usize {
        self.entity_names.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relation_names.len()
    }

    pub fn entity_names(&self) -> &[String] {
        &self.entity_names
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        &self.entity_names[id]
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relation_names
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        &self.relation_names[id]
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }
}

pub type AlignedPair = (EntityId, EntityId);

/// Source and target graphs with the seed (train) and held-out (test) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentTask {
    pub source: KnowledgeGraph,
    pub target: KnowledgeGraph,
    pub train_pairs: Vec<AlignedPair>,
    pub test_pairs: Vec<AlignedPair>,
}

impl AlignmentTask {
    /// Checks ranges and that the union of both pair lists is 1-to-1.
    pub fn new(
        source: KnowledgeGraph,
        target: KnowledgeGraph,
        train_pairs: Vec<AlignedPair>,
        test_pairs: Vec<AlignedPair>,
    ) -> Result<Self> {
        let (ns, nt) = (source.entity_count(), target.entity_count());
        let mut seen_s = HashSet::new();
        let mut seen_t = HashSet::new();
        for &(s, t) in train_pairs.iter().chain(&test_pairs) {
            if s >= ns || t >= nt {
                return Err(Error::InvalidTask(format!(
                    "pair ({s}, {t}) out of range for |E_s|={ns}, |E_t|={nt}"
                )));
            }
            if !seen_s.insert(s) {
                return Err(Error::InvalidTask(format!(
                    "source entity {s} appears in more than one pair"
                )));
            }
            if !seen_t.insert(t) {
                return Err(Error::InvalidTask(format!(
                    "target entity {t} appears in more than one pair"
                )));
            }
        }
        Ok(Self {
            source,
            target,
            train_pairs,
            test_pairs,
        })
    }

    pub fn source_count(&self) -> usize {
        self.source.entity_count()
    }

    pub fn target_count(&self) -> usize {
        self.target.entity_count()
    }

    /// `|E_s| + |E_t|`, the number of rows of an embedding table.
    pub fn total_entities(&self) -> usize {
        self.source_count() + self.target_count()
    }

    /// The mirrored task: target becomes source and every pair is swapped.
    pub fn reversed(&self) -> AlignmentTask {
        let swap = |pairs: &[AlignedPair]| pairs.iter().map(|&(s, t)| (t, s)).collect();
        AlignmentTask {
            source: self.target.clone(),
            target: self.source.clone(),
            train_pairs: swap(&self.train_pairs),
            test_pairs: swap(&self.test_pairs),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph(n: usize) -> KnowledgeGraph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        KnowledgeGraph::from_edges(n, &edges).unwrap()
    }

    #[test]
    fn rejects_out_of_range_triple() {
        let err = KnowledgeGraph::new(vec!["a".into()], vec!["r".into()], vec![Triple::new(0, 0, 1)]);
        assert!(matches!(err, Err(Error::InvalidTask(_))));
    }

    #[test]
    fn task_rejects_non_injective_pairs() {
        let g = path_graph(3);
        let err = AlignmentTask::new(g.clone(), g.clone(), vec![(0, 0)], vec![(1, 0)]);
        assert!(matches!(err, Err(Error::InvalidTask(_))));
        let err = AlignmentTask::new(g.clone(), g.clone(), vec![(0, 0)], vec![(0, 1)]);
        assert!(matches!(err, Err(Error::InvalidTask(_))));
        assert!(AlignmentTask::new(g.clone(), g, vec![(0, 0)], vec![(1, 1)]).is_ok());
    }

    #[test]
    fn reversed_swaps_roles() {
        let task = AlignmentTask::new(path_graph(3), path_graph(4), vec![(0, 3)], vec![(2, 1)]).unwrap();
        let rev = task.reversed();
        assert_eq!(rev.source_count(), 4);
        assert_eq!(rev.train_pairs, vec![(3, 0)]);
        assert_eq!(rev.test_pairs, vec![(1, 2)]);
        assert_eq!(rev.reversed(), task);
    }
}
