//! Hubness corrections: CSLS on sparse candidate lists, Sinkhorn on sparse
//! lists and on dense blocks.

use ndarray::{Array2, Axis};

use super::sparse::SparseSimilarity;
use crate::{Error, Result};

/// Mean of the first `n` scores of a sorted row; `None` for an empty row.
fn top_mean(row: &[(usize, f64)], n: usize) -> Option<f64> {
    let n = n.min(row.len());
    (n > 0).then(|| row[..n].iter().map(|&(_, s)| s).sum::<f64>() / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CslsOutput {
    pub similarity: SparseSimilarity,
    /// Rows of `sparse` with no candidates, passed through unchanged.
    pub empty_rows: usize,
}

/// `score′(s,t) = 2·score(s,t) − r_s(s) − r_t(t)`, where `r_s` averages the
/// first `neighborhood` scores of `s` in `sparse` and `r_t` those of `t` in
/// `reverse`. Shorter rows average what they have; a target with an empty
/// reverse row has `r_t = 0`.
pub fn csls_adjust(
    sparse: &SparseSimilarity,
    reverse: &SparseSimilarity,
    neighborhood: usize,
) -> Result<CslsOutput> {
    if neighborhood == 0 {
        return Err(Error::InvalidArgument("csls neighborhood must be positive".into()));
    }
    if reverse.row_count() != sparse.col_count() {
        return Err(Error::DimensionMismatch {
            expected: sparse.col_count(),
            found: reverse.row_count(),
        });
    }
    let r_t: Vec<f64> = reverse
        .rows()
        .iter()
        .map(|row| top_mean(row, neighborhood).unwrap_or(0.0))
        .collect();
    let mut empty_rows = 0;
    let rows = sparse
        .rows()
        .iter()
        .map(|row| match top_mean(row, neighborhood) {
            None => {
                empty_rows += 1;
                Vec::new()
            }
            Some(r_s) => row.iter().map(|&(t, s)| (t, 2.0 * s - r_s - r_t[t])).collect(),
        })
        .collect();
    Ok(CslsOutput {
        similarity: SparseSimilarity::new(sparse.col_count(), rows)?,
        empty_rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornOutput {
    pub similarity: SparseSimilarity,
    /// Rows whose mass vanished and were reset to uniform.
    pub clamped_rows: usize,
}

fn check_sinkhorn_args(iterations: usize, temperature: f64) -> Result<()> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("sinkhorn iterations must be positive".into()));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidArgument("sinkhorn temperature must be positive".into()));
    }
    Ok(())
}

/// Divides each value by its row sum; a row without positive mass becomes
/// uniform. Returns the number of such rows.
fn normalize_rows<'a>(rows: impl Iterator<Item = &'a mut [f64]>) -> usize {
    let mut clamped = 0;
    for row in rows {
        if row.is_empty() {
            continue;
        }
        let sum: f64 = row.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            row.iter_mut().for_each(|x| *x /= sum);
        } else {
            let u = 1.0 / row.len() as f64;
            row.iter_mut().for_each(|x| *x = u);
            clamped += 1;
        }
    }
    clamped
}

/// Sinkhorn over the stored entries only: values become
/// `exp(score / temperature)`, then each iteration divides every row by its
/// sum and then every column by the sum of its stored entries.
pub fn sinkhorn_normalize(
    sparse: &SparseSimilarity,
    iterations: usize,
    temperature: f64,
) -> Result<SinkhornOutput> {
    check_sinkhorn_args(iterations, temperature)?;
    let ids: Vec<Vec<usize>> = sparse.rows().iter().map(|r| r.iter().map(|e| e.0).collect()).collect();
    // Shifting a row by its maximum cancels in the first row normalization.
    let mut vals: Vec<Vec<f64>> = sparse
        .rows()
        .iter()
        .map(|r| {
            let max = r.first().map_or(0.0, |e| e.1);
            r.iter().map(|&(_, s)| ((s - max) / temperature).exp()).collect()
        })
        .collect();
    let mut clamped = 0;
    let mut col_sum = vec![0.0; sparse.col_count()];
    for _ in 0..iterations {
        clamped += normalize_rows(vals.iter_mut().map(Vec::as_mut_slice));
        col_sum.iter_mut().for_each(|c| *c = 0.0);
        for (r, row) in vals.iter().enumerate() {
            for (&c, &v) in ids[r].iter().zip(row) {
                col_sum[c] += v;
            }
        }
        for (r, row) in vals.iter_mut().enumerate() {
            for (&c, v) in ids[r].iter().zip(row.iter_mut()) {
                if col_sum[c] > 0.0 {
                    *v /= col_sum[c];
                }
            }
        }
    }
    let rows = ids
        .into_iter()
        .zip(vals)
        .map(|(i, v)| i.into_iter().zip(v).collect())
        .collect();
    Ok(SinkhornOutput {
        similarity: SparseSimilarity::new(sparse.col_count(), rows)?,
        clamped_rows: clamped,
    })
}

/// Dense counterpart of [`sinkhorn_normalize`], in place. Returns the number
/// of clamped rows.
pub fn sinkhorn_dense(scores: &mut Array2<f64>, iterations: usize, temperature: f64) -> Result<usize> {
    check_sinkhorn_args(iterations, temperature)?;
    if scores.is_empty() {
        return Ok(0);
    }
    for mut row in scores.outer_iter_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| ((x - max) / temperature).exp());
    }
    let mut clamped = 0;
    for _ in 0..iterations {
        for mut row in scores.outer_iter_mut() {
            clamped += normalize_rows(std::iter::once(row.as_slice_mut().expect("standard layout")));
        }
        let sums = scores.sum_axis(Axis(0));
        for mut row in scores.outer_iter_mut() {
            for (v, &s) in row.iter_mut().zip(&sums) {
                if s > 0.0 {
                    *v /= s;
                }
            }
        }
    }
    Ok(clamped)
}
