//! Two-dimensional PCA for embedding scatter plots.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2};

use crate::{Error, Result};

/// Projects the rows of `points` onto their first two principal components.
///
/// Each component's sign is fixed so that its largest-magnitude entry is
/// positive (lower index on ties). With fewer than two non-degenerate
/// directions the missing coordinates are 0.
pub fn pca_2d(points: ArrayView2<f64>) -> Result<Array2<f64>> {
    let (n, d) = points.dim();
    if n == 0 {
        return Ok(Array2::zeros((0, 2)));
    }
    if !points.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("projection input"));
    }
    let mean = points.mean_axis(ndarray::Axis(0)).expect("n > 0");
    let centered = &points - &mean;
    let cov = centered.t().dot(&centered) / n as f64;
    let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[[i, j]]));

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = Array2::zeros((n, 2));
    for (axis, &c) in order.iter().take(2).enumerate() {
        if eig.eigenvalues[c] <= scale * 1e-12 || eig.eigenvalues[c] <= 0.0 {
            continue;
        }
        let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
        let lead = (0..d)
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a)))
            .expect("d > 0");
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for (i, row) in centered.outer_iter().enumerate() {
            out[[i, axis]] = row.iter().zip(&v).map(|(a, b)| a * b).sum();
        }
    }
    Ok(out)
}
