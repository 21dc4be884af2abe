use super::{EntityId, RelationId, Triple};

/// Orientation of a stored in-edge relative to the triple that induced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeDirection {
    /// Message flows head → tail; the neighbor is the triple's head.
    Forward,
    /// Message flows tail → head; the neighbor is the triple's tail.
    Reverse,
    SelfLoop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjEntry {
    pub neighbor: EntityId,
    pub weight: f64,
    /// `None` for the self-loop.
    pub relation: Option<RelationId>,
    pub direction: EdgeDirection,
}

/// Compressed per-node in-neighbor lists.
///
/// Every node's list holds one entry per incident triple plus a self-loop,
/// sorted by neighbor id. Weights are `1/sqrt(d(u) d(v))` with `d` the total
/// degree counting the self-loop.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Adjacency {
    offsets: Vec<usize>,
    entries: Vec<AdjEntry>,
    degrees: Vec<usize>,
}

impl Adjacency {
    pub fn node_count(&self) -> usize {
        self.degrees.len()
    }

    /// All in-edges of `v`, self-loop included.
    pub fn in_edges(&self, v: EntityId) -> &[AdjEntry] {
        &self.entries[self.offsets[v]..self.offsets[v + 1]]
    }

    /// Degree of `v` including its self-loop.
    pub fn degree(&self, v: EntityId) -> usize {
        self.degrees[v]
    }

    pub fn max_degree(&self) -> usize {
        self.degrees.iter().copied().max().unwrap_or(0)
    }

    /// Total stored entries, self-loops included.
    pub fn entry_count(&self) -> usize {
        self.entries.len()
    }
}

/// Builds the symmetric-normalized adjacency of an undirected view of
/// `triples` with a self-loop on every node.
pub fn build_adjacency(entity_count: usize, triples: &[Triple]) -> Adjacency {
    let mut degrees = vec![1usize; entity_count];
    for t in triples {
        degrees[t.head] += 1;
        degrees[t.tail] += 1;
    }

    let mut offsets = Vec::with_capacity(entity_count + 1);
    offsets.push(0);
    for d in &degrees {
        offsets.push(offsets.last().unwrap() + d);
    }

    let weight = |u: EntityId, v: EntityId| 1.0 / ((degrees[u] * degrees[v]) as f64).sqrt();
    let placeholder = AdjEntry {
        neighbor: 0,
        weight: 0.0,
        relation: None,
        direction: EdgeDirection::SelfLoop,
    };
    let mut entries = vec![placeholder; offsets[entity_count]];
    let mut cursor: Vec<usize> = offsets[..entity_count].to_vec();
    let mut push = |at: EntityId, entry: AdjEntry| {
        entries[cursor[at]] = entry;
        cursor[at] += 1;
    };
    for v in 0..entity_count {
        push(
            v,
            AdjEntry {
                neighbor: v,
                weight: weight(v, v),
                relation: None,
                direction: EdgeDirection::SelfLoop,
            },
        );
    }
    for t in triples {
        push(
            t.tail,
            AdjEntry {
                neighbor: t.head,
                weight: weight(t.head, t.tail),
                relation: Some(t.relation),
                direction: EdgeDirection::Forward,
            },
        );
        push(
            t.head,
            AdjEntry {
                neighbor: t.tail,
                weight: weight(t.head, t.tail),
                relation: Some(t.relation),
                direction: EdgeDirection::Reverse,
            },
        );
    }
    for v in 0..entity_count {
        entries[offsets[v]..offsets[v + 1]]
            .sort_by_key(|e| (e.neighbor, e.direction, e.relation));
    }

    Adjacency {
        offsets,
        entries,
        degrees,
    }
}
