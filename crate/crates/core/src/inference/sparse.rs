use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Ranking order for candidates: higher score first, then lower id.
pub fn candidate_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Row-indexed candidate lists, each sorted by descending score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseSimilarity {
    cols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseSimilarity {
    /// Builds from unsorted rows; rows are sorted with [`candidate_order`].
    pub fn new(cols: usize, mut rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        for row in &mut rows {
            row.sort_by(candidate_order);
        }
        Self::from_sorted(cols, rows)
    }

    /// Builds from rows already in their final order; checks the invariants
    /// that do not depend on order.
    pub fn from_sorted(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        for (r, row) in rows.iter().enumerate() {
            if let Some(&(c, _)) = row.iter().find(|&&(c, _)| c >= cols) {
                return Err(Error::InvalidArgument(format!(
                    "row {r}: column {c} out of range ({cols} columns)"
                )));
            }
            if row.iter().any(|&(_, s)| !s.is_finite()) {
                return Err(Error::NonFinite("similarity score"));
            }
            let mut ids: Vec<usize> = row.iter().map(|&(c, _)| c).collect();
            ids.sort_unstable();
            if ids.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidArgument(format!("row {r}: duplicate candidate")));
            }
        }
        Ok(Self { cols, rows })
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn col_count(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[(usize, f64)] {
        &self.rows[r]
    }

    pub fn get_row(&self, r: usize) -> Option<&[(usize, f64)]> {
        self.rows.get(r).map(Vec::as_slice)
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Vec<(usize, f64)>> {
        self.rows
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Score of `(r, c)` if stored.
    pub fn score(&self, r: usize, c: usize) -> Option<f64> {
        self.rows
            .get(r)?
            .iter()
            .find(|&&(col, _)| col == c)
            .map(|&(_, s)| s)
    }

    /// Column ids of each row, in rank order.
    pub fn top_ids(&self, r: usize, n: usize) -> Vec<usize> {
        self.rows[r].iter().take(n).map(|&(c, _)| c).collect()
    }
}
