use ndarray::{s, Array2, ArrayView1, ArrayView2};
use rand_distr::{Distribution, StandardNormal};

use crate::kg::EntityId;
use crate::rng::SeaRng;
use crate::{Error, Result};

/// Which graph of a task an entity id belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Source,
    Target,
}

/// `(|E_s| + |E_t|) × D` matrix: source rows first, then target rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    matrix: Array2<f64>,
    source_rows: usize,
}

impl EmbeddingTable {
    pub fn new(matrix: Array2<f64>, source_rows: usize) -> Result<Self> {
        if source_rows > matrix.nrows() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: source_rows,
            });
        }
        Ok(Self {
            matrix,
            source_rows,
        })
    }

    /// Entries drawn from N(0, 1) / sqrt(dim).
    pub fn random(source_rows: usize, target_rows: usize, dim: usize, rng: &mut SeaRng) -> Self {
        let scale = 1.0 / (dim as f64).sqrt();
        let matrix = Array2::from_shape_simple_fn((source_rows + target_rows, dim), || {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        });
        Self {
            matrix,
            source_rows,
        }
    }

    /// Stacks separate source and target matrices.
    pub fn from_sides(source: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<Self> {
        if source.ncols() != target.ncols() {
            return Err(Error::DimensionMismatch {
                expected: source.ncols(),
                found: target.ncols(),
            });
        }
        let matrix = ndarray::concatenate(ndarray::Axis(0), &[source, target])
            .expect("column counts checked");
        Ok(Self {
            matrix,
            source_rows: source.nrows(),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn source_rows(&self) -> usize {
        self.source_rows
    }

    pub fn target_rows(&self) -> usize {
        self.matrix.nrows() - self.source_rows
    }

    pub fn offset(&self, side: Side) -> usize {
        match side {
            Side::Source => 0,
            Side::Target => self.source_rows,
        }
    }

    pub fn global_row(&self, side: Side, id: EntityId) -> usize {
        self.offset(side) + id
    }

    pub fn row(&self, side: Side, id: EntityId) -> ArrayView1<'_, f64> {
        self.matrix.row(self.global_row(side, id))
    }

    pub fn source(&self) -> ArrayView2<'_, f64> {
        self.matrix.slice(s![..self.source_rows, ..])
    }

    pub fn target(&self) -> ArrayView2<'_, f64> {
        self.matrix.slice(s![self.source_rows.., ..])
    }

    pub fn side(&self, side: Side) -> ArrayView2<'_, f64> {
        match side {
            Side::Source => self.source(),
            Side::Target => self.target(),
        }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn matrix_mut(&mut self) -> &mut Array2<f64> {
        &mut self.matrix
    }

    /// The same embeddings laid out for the mirrored task.
    pub fn reversed(&self) -> EmbeddingTable {
        Self::from_sides(self.target(), self.source()).expect("same width")
    }

    pub fn is_finite(&self) -> bool {
        self.matrix.iter().all(|x| x.is_finite())
    }
}
