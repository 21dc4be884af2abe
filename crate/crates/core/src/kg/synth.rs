//! Synthetic aligned graph pairs.
//!
//! A random source graph is copied onto a permuted target, optionally with a
//! fraction of target edges rewired and a few target entities turned into
//! hubs. The ground truth is the permutation. Entity and relation ids are
//! canonicalized to first-seen order over the triple lists so that a written
//! task reloads with identical ids.

use std::collections::HashSet;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AlignedPair, AlignmentTask, EntityId, KnowledgeGraph, Triple};
use crate::rng::{self, SeaRng};
use crate::{Error, Result};

/// Extra edges given to each hub, as a multiple of `avg_degree`.
pub const HUB_DEGREE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub entity_count: usize,
    /// Triples per entity; the mean total degree is twice this.
    pub avg_degree: f64,
    pub relation_count: usize,
    pub seed_ratio: f64,
    /// Fraction of target triples with one endpoint rewired.
    pub edge_noise: f64,
    pub hub_count: usize,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            entity_count: 200,
            avg_degree: 5.0,
            relation_count: 10,
            seed_ratio: 0.3,
            edge_noise: 0.0,
            hub_count: 0,
            rng_seed: 42,
        }
    }
}

impl SynthConfig {
    /// Field-level problems, empty when the config is usable.
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.entity_count < 2 {
            out.push(("entity_count", "must be at least 2".to_owned()));
        }
        if !(self.avg_degree > 0.0 && self.avg_degree.is_finite()) {
            out.push(("avg_degree", "must be positive".to_owned()));
        } else if (self.avg_degree * self.entity_count as f64).round() < 1.0 {
            out.push(("avg_degree", "implies zero edges".to_owned()));
        }
        if self.relation_count == 0 {
            out.push(("relation_count", "must be positive".to_owned()));
        }
        if !(self.seed_ratio > 0.0 && self.seed_ratio < 1.0) {
            out.push(("seed_ratio", "must be in (0, 1)".to_owned()));
        }
        if !(0.0..1.0).contains(&self.edge_noise) {
            out.push(("edge_noise", "must be in [0, 1)".to_owned()));
        }
        if self.hub_count > self.entity_count {
            out.push(("hub_count", "exceeds entity_count".to_owned()));
        }
        out
    }
}

/// Undirected simple graph under construction: triples plus a pair set.
struct EdgeSet {
    triples: Vec<Triple>,
    pairs: HashSet<(EntityId, EntityId)>,
    degree: Vec<usize>,
}

impl EdgeSet {
    fn new(n: usize) -> Self {
        Self {
            triples: Vec::new(),
            pairs: HashSet::new(),
            degree: vec![0; n],
        }
    }

    fn key(a: EntityId, b: EntityId) -> (EntityId, EntityId) {
        (a.min(b), a.max(b))
    }

    fn contains(&self, a: EntityId, b: EntityId) -> bool {
        self.pairs.contains(&Self::key(a, b))
    }

    fn try_add(&mut self, t: Triple) -> bool {
        if t.head == t.tail || !self.pairs.insert(Self::key(t.head, t.tail)) {
            return false;
        }
        self.degree[t.head] += 1;
        self.degree[t.tail] += 1;
        self.triples.push(t);
        true
    }

    fn random_triple(rng: &mut SeaRng, a: EntityId, b: EntityId, relations: usize) -> Triple {
        let r = rng.random_range(0..relations);
        if rng.random::<bool>() {
            Triple::new(a, r, b)
        } else {
            Triple::new(b, r, a)
        }
    }
}

fn random_source(cfg: &SynthConfig, rng: &mut SeaRng) -> Result<EdgeSet> {
    let n = cfg.entity_count;
    let m = (cfg.avg_degree * n as f64).round() as usize;
    let max_edges = n * (n - 1) / 2;
    if m > max_edges {
        return Err(Error::InvalidArgument(format!(
            "avg_degree {} needs {m} edges but a simple graph on {n} entities has at most {max_edges}",
            cfg.avg_degree
        )));
    }
    let mut g = EdgeSet::new(n);
    while g.triples.len() < m {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let t = EdgeSet::random_triple(rng, a, b, cfg.relation_count);
        g.try_add(t);
    }
    // Entities without triples could not be written to (or loaded from) the
    // dataset layout, so attach each one to a random partner.
    for v in 0..n {
        while g.degree[v] == 0 {
            let u = rng.random_range(0..n);
            let t = EdgeSet::random_triple(rng, v, u, cfg.relation_count);
            g.try_add(t);
        }
    }
    Ok(g)
}

/// Rewires one endpoint of `count` random triples, never isolating an entity.
fn rewire(g: &mut EdgeSet, count: usize, rng: &mut SeaRng) {
    let n = g.degree.len();
    let chosen = index::sample(rng, g.triples.len(), count);
    for i in chosen {
        let t = g.triples[i];
        let keep_head = match (g.degree[t.head] > 1, g.degree[t.tail] > 1) {
            (false, false) => continue,
            (true, false) => false,
            (false, true) => true,
            (true, true) => rng.random::<bool>(),
        };
        let (fixed, dropped) = if keep_head { (t.head, t.tail) } else { (t.tail, t.head) };
        let mut replacement = None;
        for _ in 0..64 {
            let c = rng.random_range(0..n);
            if c != fixed && !g.contains(fixed, c) {
                replacement = Some(c);
                break;
            }
        }
        let Some(c) = replacement else { continue };
        g.pairs.remove(&EdgeSet::key(t.head, t.tail));
        g.pairs.insert(EdgeSet::key(fixed, c));
        g.degree[dropped] -= 1;
        g.degree[c] += 1;
        g.triples[i] = if keep_head {
            Triple::new(fixed, t.relation, c)
        } else {
            Triple::new(c, t.relation, fixed)
        };
    }
}

fn add_hubs(g: &mut EdgeSet, cfg: &SynthConfig, rng: &mut SeaRng) {
    let n = g.degree.len();
    let extra = ((HUB_DEGREE_FACTOR * cfg.avg_degree).ceil() as usize).min(n - 1);
    let hubs = index::sample(rng, n, cfg.hub_count);
    for h in hubs {
        let mut added = 0;
        let mut attempts = 0;
        while added < extra && attempts < extra * 64 {
            attempts += 1;
            let u = rng.random_range(0..n);
            let t = EdgeSet::random_triple(rng, h, u, cfg.relation_count);
            if g.try_add(t) {
                added += 1;
            }
        }
    }
}

/// Relabels entities and relations by first appearance in `triples`.
/// Returns the graph and the old→new entity map.
fn canonical_graph(
    triples: &[Triple],
    n: usize,
    relation_count: usize,
    prefix: &str,
) -> Result<(KnowledgeGraph, Vec<EntityId>)> {
    const UNSET: usize = usize::MAX;
    let mut entity_map = vec![UNSET; n];
    let mut entity_names = Vec::with_capacity(n);
    let mut relation_map = vec![UNSET; relation_count];
    let mut relation_names = Vec::new();
    let mut out = Vec::with_capacity(triples.len());
    let mut entity = |old: EntityId, names: &mut Vec<String>| {
        if entity_map[old] == UNSET {
            entity_map[old] = names.len();
            names.push(format!("{prefix}/entity/{old}"));
        }
        entity_map[old]
    };
    for t in triples {
        let head = entity(t.head, &mut entity_names);
        if relation_map[t.relation] == UNSET {
            relation_map[t.relation] = relation_names.len();
            relation_names.push(format!("{prefix}/relation/{}", t.relation));
        }
        let tail = entity(t.tail, &mut entity_names);
        out.push(Triple::new(head, relation_map[t.relation], tail));
    }
    debug_assert!(entity_map.iter().all(|&e| e != UNSET));
    let graph = KnowledgeGraph::new(entity_names, relation_names, out)?;
    Ok((graph, entity_map))
}

pub fn generate_synthetic_pair(cfg: &SynthConfig) -> Result<AlignmentTask> {
    if let Some((field, msg)) = cfg.problems().into_iter().next() {
        return Err(Error::InvalidArgument(format!("{field}: {msg}")));
    }
    let n = cfg.entity_count;
    let mut rng = rng::seeded(cfg.rng_seed);

    let source = random_source(cfg, &mut rng)?;

    // Target entity `perm[v]` is the counterpart of source entity `v`.
    let mut perm: Vec<EntityId> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut target = EdgeSet::new(n);
    for t in &source.triples {
        target.try_add(Triple::new(perm[t.head], t.relation, perm[t.tail]));
    }
    target.triples.shuffle(&mut rng);

    let noisy = (cfg.edge_noise * target.triples.len() as f64).round() as usize;
    rewire(&mut target, noisy, &mut rng);
    add_hubs(&mut target, cfg, &mut rng);

    let (source_kg, source_map) = canonical_graph(&source.triples, n, cfg.relation_count, "source")?;
    let (target_kg, target_map) = canonical_graph(&target.triples, n, cfg.relation_count, "target")?;
    // Target names carry the source index they mirror, not the target index.
    let mut target_names = target_kg.entity_names().to_vec();
    for v in 0..n {
        target_names[target_map[perm[v]]] = format!("target/entity/{v}");
    }
    let target_kg = KnowledgeGraph::new(
        target_names,
        target_kg.relation_names().to_vec(),
        target_kg.triples().to_vec(),
    )?;

    let mut pairs: Vec<AlignedPair> = (0..n)
        .map(|v| (source_map[v], target_map[perm[v]]))
        .collect();
    pairs.shuffle(&mut rng);
    let n_train = ((cfg.seed_ratio * n as f64).round() as usize).clamp(1, n - 1);
    let test = pairs.split_off(n_train);
    AlignmentTask::new(source_kg, target_kg, pairs, test)
}
