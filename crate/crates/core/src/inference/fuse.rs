use std::cmp::Ordering;

use super::local::LocalSimBlock;
use super::sparse::{candidate_order, SparseSimilarity};
use super::topk::select_top;
use crate::{Error, Result};

/// Maps `x` from `[min, max]` to `[0, 1]`; a constant row maps to 1.
fn min_max(x: f64, min: f64, max: f64) -> f64 {
    if max > min {
        (x - min) / (max - min)
    } else {
        1.0
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Where each entity sits inside the local blocks: `(block, position)`.
fn positions(blocks: &[LocalSimBlock], count: usize, ids: impl Fn(&LocalSimBlock) -> &[usize]) -> Result<Vec<Option<(usize, usize)>>> {
    let mut pos = vec![None; count];
    for (b, block) in blocks.iter().enumerate() {
        for (i, &e) in ids(block).iter().enumerate() {
            let slot = pos
                .get_mut(e)
                .ok_or_else(|| Error::InvalidArgument(format!("block entity {e} out of range")))?;
            if slot.is_some() {
                return Err(Error::InvalidArgument(format!("entity {e} appears in two blocks")));
            }
            *slot = Some((b, i));
        }
    }
    Ok(pos)
}

/// Merges normalized local blocks with the global candidate lists.
///
/// Per source row, local values are min-max scaled over the row of its block
/// and global values over its global candidates. A candidate outside the
/// source's block, or missing from the global row, contributes 0 for that
/// operand. The candidates are the global row plus the row's `k` best local
/// entries; the fused score is `weight·local + (1−weight)·global`, and the
/// best `k` are kept. Equal fused scores fall back to the raw global score
/// (missing ranks last), then to the lower id.
pub fn fuse(
    local: &[LocalSimBlock],
    global: &SparseSimilarity,
    weight: f64,
    k: usize,
) -> Result<SparseSimilarity> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::InvalidArgument(format!("fuse weight {weight} outside [0, 1]")));
    }
    for block in local {
        if block.scores.dim() != (block.source_ids.len(), block.target_ids.len()) {
            return Err(Error::DimensionMismatch {
                expected: block.source_ids.len() * block.target_ids.len(),
                found: block.scores.len(),
            });
        }
    }
    let src_pos = positions(local, global.row_count(), |b| &b.source_ids)?;
    let tgt_pos = positions(local, global.col_count(), |b| &b.target_ids)?;

    let mut rows = Vec::with_capacity(global.row_count());
    for (s, grow) in global.rows().iter().enumerate() {
        let (gmin, gmax) = bounds(grow.iter().map(|e| e.1));
        // (target, fused, raw global)
        let mut cands: Vec<(usize, f64, Option<f64>)> = grow
            .iter()
            .map(|&(t, g)| (t, (1.0 - weight) * min_max(g, gmin, gmax), Some(g)))
            .collect();

        if let Some((b, i)) = src_pos[s] {
            let block = &local[b];
            let lrow = block.scores.row(i);
            let (lmin, lmax) = bounds(lrow.iter().copied());
            let local_of = |t: usize| match tgt_pos[t] {
                Some((tb, j)) if tb == b => min_max(lrow[j], lmin, lmax),
                _ => 0.0,
            };
            for c in &mut cands {
                c.1 += weight * local_of(c.0);
            }
            for (j, _) in select_top(lrow.iter().copied(), k) {
                let t = block.target_ids[j];
                if !grow.iter().any(|&(g, _)| g == t) {
                    cands.push((t, weight * min_max(lrow[j], lmin, lmax), None));
                }
            }
        }

        cands.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| match (a.2, b.2) {
                    (Some(x), Some(y)) => y.total_cmp(&x),
                    (Some(_), None) => Ordering::Less,
                    (None, Some(_)) => Ordering::Greater,
                    (None, None) => Ordering::Equal,
                })
                .then(a.0.cmp(&b.0))
        });
        cands.truncate(k);
        rows.push(cands.into_iter().map(|(t, f, _)| (t, f)).collect());
    }
    SparseSimilarity::from_sorted(global.col_count(), rows)
}

/// Re-sorts a row into plain [`candidate_order`].
pub fn canonical(row: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let mut r = row.to_vec();
    r.sort_by(candidate_order);
    r
}
