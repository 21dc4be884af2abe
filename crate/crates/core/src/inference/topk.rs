use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;

use super::sparse::{candidate_order, SparseSimilarity};
use crate::encoder::EmbeddingTable;

/// Query rows per matrix product in the exact search.
const QUERY_CHUNK: usize = 256;

/// Nearest-neighbour search by inner product.
///
/// Implementations return, for every query row, at most `k` corpus rows with
/// their scores, ordered by [`candidate_order`]. The exact backend is the
/// reference for any approximate one.
pub trait TopKBackend: Send + Sync {
    fn name(&self) -> &'static str;

    fn search(&self, queries: ArrayView2<f64>, corpus: ArrayView2<f64>, k: usize) -> Vec<Vec<(usize, f64)>>;

    /// Number of query·corpus inner products `search` evaluates.
    fn evaluations(&self, queries: usize, corpus: usize) -> u64 {
        queries as u64 * corpus as u64
    }
}

/// Exhaustive search; output is identical for any thread count.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactTopK;

/// The `k` best entries of `scores` (index, score) by [`candidate_order`].
pub fn select_top(scores: impl Iterator<Item = f64>, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = scores.enumerate().collect();
    let k = k.min(all.len());
    if k == 0 {
        return Vec::new();
    }
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, candidate_order);
        all.truncate(k);
    }
    all.sort_by(candidate_order);
    all
}

impl TopKBackend for ExactTopK {
    fn name(&self) -> &'static str {
        "exact"
    }

    fn search(&self, queries: ArrayView2<f64>, corpus: ArrayView2<f64>, k: usize) -> Vec<Vec<(usize, f64)>> {
        let starts: Vec<usize> = (0..queries.nrows()).step_by(QUERY_CHUNK).collect();
        starts
            .par_iter()
            .flat_map_iter(|&lo| {
                let hi = (lo + QUERY_CHUNK).min(queries.nrows());
                let scores = queries.slice_axis(Axis(0), (lo..hi).into()).dot(&corpus.t());
                scores
                    .outer_iter()
                    .map(|row| select_top(row.iter().copied(), k))
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

/// Top-`k` targets per source and top-`k` sources per target, with `k`
/// clamped to the size of the searched side.
pub fn topk_global(table: &EmbeddingTable, k: usize) -> (SparseSimilarity, SparseSimilarity) {
    topk_global_with(&ExactTopK, table, k)
}

pub fn topk_global_with(
    backend: &dyn TopKBackend,
    table: &EmbeddingTable,
    k: usize,
) -> (SparseSimilarity, SparseSimilarity) {
    (
        topk_directed(backend, table.source(), table.target(), k),
        topk_directed(backend, table.target(), table.source(), k),
    )
}

pub fn topk_directed(
    backend: &dyn TopKBackend,
    queries: ArrayView2<f64>,
    corpus: ArrayView2<f64>,
    k: usize,
) -> SparseSimilarity {
    let rows = backend.search(queries, corpus, k.min(corpus.nrows()));
    SparseSimilarity::from_sorted(corpus.nrows(), rows).expect("backend output is well formed")
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;

    #[test]
    fn ties_prefer_lower_id() {
        let top = select_top([0.5, 0.9, 0.5, 0.5].into_iter(), 3);
        assert_eq!(top, vec![(1, 0.9), (0, 0.5), (2, 0.5)]);
    }

    #[test]
    fn exhaustive_k_gives_sorted_dense_rows() {
        let t = EmbeddingTable::from_sides(
            array![[1.0, 0.0], [0.0, 1.0]].view(),
            array![[0.6, 0.8], [1.0, 0.0], [0.0, 1.0]].view(),
        )
        .unwrap();
        let (s2t, t2s) = topk_global(&t, 99);
        assert_eq!(s2t.row(0), &[(1, 1.0), (0, 0.6), (2, 0.0)]);
        assert_eq!(s2t.row(1), &[(2, 1.0), (0, 0.8), (1, 0.0)]);
        assert_eq!(t2s.row(0), &[(1, 0.8), (0, 0.6)]);
    }

    #[test]
    fn identical_sides_match_themselves() {
        let m = array![[1.0, 0.0, 0.0], [0.0, 0.6, 0.8], [0.0, 0.8, -0.6]];
        let t = EmbeddingTable::from_sides(m.view(), m.view()).unwrap();
        let (s2t, _) = topk_global(&t, 1);
        for r in 0..3 {
            assert_eq!(s2t.row(r)[0].0, r);
            assert!((s2t.row(r)[0].1 - 1.0).abs() < 1e-12);
        }
    }
}
