//! Hits@k and mean reciprocal rank over candidate lists.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::inference::SparseSimilarity;
use crate::kg::{AlignedPair, EntityId};
use crate::{Error, Result};

/// Rank of `truth` in `row`: one plus the number of candidates with a higher
/// score or an equal score and a lower id. `None` when `truth` is absent.
pub fn rank_of(row: &[(usize, f64)], truth: usize) -> Option<usize> {
    let score = row.iter().find(|&&(c, _)| c == truth)?.1;
    let ahead = row
        .iter()
        .filter(|&&(c, s)| s > score || (s == score && c < truth))
        .count();
    Some(ahead + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pairs: usize,
    /// Fraction of pairs ranked within k, keyed by k.
    pub hits: BTreeMap<usize, f64>,
    pub mrr: f64,
    /// Rank per source entity; `None` when the truth is not a candidate.
    pub ranks: BTreeMap<EntityId, Option<usize>>,
    /// Sources of `pairs` that have no row in the similarity matrix.
    pub missing_rows: Vec<EntityId>,
}

impl EvalReport {
    /// Hits@k for a k that was requested; 0 otherwise.
    pub fn hits_at(&self, k: usize) -> f64 {
        self.hits.get(&k).copied().unwrap_or(0.0)
    }
}

pub fn evaluate(sim: &SparseSimilarity, pairs: &[AlignedPair], ks: &[usize]) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("evaluation needs at least one pair".into()));
    }
    if ks.contains(&0) {
        return Err(Error::InvalidArgument("hits@k needs k ≥ 1".into()));
    }
    let mut ranks = BTreeMap::new();
    let mut missing_rows = Vec::new();
    let mut reciprocal = 0.0;
    let mut hits: BTreeMap<usize, usize> = ks.iter().map(|&k| (k, 0)).collect();
    for &(s, t) in pairs {
        let rank = match sim.get_row(s) {
            Some(row) => rank_of(row, t),
            None => {
                missing_rows.push(s);
                None
            }
        };
        if let Some(r) = rank {
            reciprocal += 1.0 / r as f64;
            for (&k, count) in hits.iter_mut() {
                if r <= k {
                    *count += 1;
                }
            }
        }
        ranks.insert(s, rank);
    }
    missing_rows.sort_unstable();
    let n = pairs.len() as f64;
    Ok(EvalReport {
        pairs: pairs.len(),
        hits: hits.into_iter().map(|(k, c)| (k, c as f64 / n)).collect(),
        mrr: reciprocal / n,
        ranks,
        missing_rows,
    })
}
