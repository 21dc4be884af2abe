use ndarray::{Array2, ArrayViewMut2};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moments plus a step counter, all per row.
///
/// Per-row counters make updates to disjoint row sets commute.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Array2<f64>,
    pub v: Array2<f64>,
    pub steps: Vec<u64>,
}

impl AdamState {
    pub fn new(rows: usize, dim: usize) -> Self {
        Self {
            m: Array2::zeros((rows, dim)),
            v: Array2::zeros((rows, dim)),
            steps: vec![0; rows],
        }
    }

    pub fn rows(&self) -> usize {
        self.m.nrows()
    }

    pub fn dim(&self) -> usize {
        self.m.ncols()
    }
}

/// Gradient rows for a set of distinct parameter rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RowGradients {
    pub rows: Vec<usize>,
    /// `rows.len() × dim`.
    pub values: Array2<f64>,
}

/// One Adam step on the rows named in `grads`; every other row of `params`
/// and `state` is left untouched.
///
/// Nothing is modified when the gradient is rejected.
pub fn apply_update(
    mut params: ArrayViewMut2<f64>,
    grads: &RowGradients,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.dim() != state.m.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.rows(),
            found: params.nrows(),
        });
    }
    if grads.values.nrows() != grads.rows.len() {
        return Err(Error::DimensionMismatch {
            expected: grads.rows.len(),
            found: grads.values.nrows(),
        });
    }
    if grads.values.ncols() != params.ncols() {
        return Err(Error::DimensionMismatch {
            expected: params.ncols(),
            found: grads.values.ncols(),
        });
    }
    if !grads.values.iter().all(|g| g.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    let mut sorted = grads.rows.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("duplicate row in gradient".into()));
    }
    if sorted.last().is_some_and(|&r| r >= params.nrows()) {
        return Err(Error::InvalidArgument("gradient row out of range".into()));
    }

    let AdamConfig {
        learning_rate: lr,
        beta1: b1,
        beta2: b2,
        epsilon: eps,
    } = *cfg;
    for (&r, g) in grads.rows.iter().zip(grads.values.outer_iter()) {
        state.steps[r] += 1;
        let t = state.steps[r] as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let mut p = params.row_mut(r);
        let mut m = state.m.row_mut(r);
        let mut v = state.v.row_mut(r);
        for j in 0..g.len() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            p[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = array![[1.0, 2.0]];
        let mut st = AdamState::new(1, 2);
        let g = RowGradients {
            rows: vec![0],
            values: array![[1.0, 1.0]],
        };
        apply_update(p.view_mut(), &g, &mut st, &AdamConfig::new(0.1)).unwrap();
        let expected = 0.1 * (1.0 / (1.0 + 1e-8));
        assert!((1.0 - p[[0, 0]] - expected).abs() < 1e-15);
        assert!((2.0 - p[[0, 1]] - expected).abs() < 1e-15);
        assert_eq!(st.steps, vec![1]);
    }

    #[test]
    fn zero_gradient_only_advances_counter() {
        let mut p = array![[0.5, -0.5], [1.0, 1.0]];
        let before = p.clone();
        let mut st = AdamState::new(2, 2);
        let g = RowGradients {
            rows: vec![1],
            values: array![[0.0, 0.0]],
        };
        apply_update(p.view_mut(), &g, &mut st, &AdamConfig::new(0.1)).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.steps, vec![0, 1]);
    }

    #[test]
    fn disjoint_updates_commute() {
        let start = array![[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]];
        let a = RowGradients {
            rows: vec![0, 2],
            values: array![[1.0, -2.0], [0.5, 0.25]],
        };
        let b = RowGradients {
            rows: vec![1],
            values: array![[-3.0, 4.0]],
        };
        let cfg = AdamConfig::new(0.05);
        let run = |first: &RowGradients, second: &RowGradients| {
            let mut p = start.clone();
            let mut st = AdamState::new(3, 2);
            apply_update(p.view_mut(), first, &mut st, &cfg).unwrap();
            apply_update(p.view_mut(), second, &mut st, &cfg).unwrap();
            (p, st)
        };
        assert_eq!(run(&a, &b), run(&b, &a));
    }

    #[test]
    fn rejected_gradient_leaves_state_alone() {
        let mut p = array![[1.0], [2.0]];
        let mut st = AdamState::new(2, 1);
        let cfg = AdamConfig::new(0.1);
        let bad = RowGradients {
            rows: vec![0, 1],
            values: array![[1.0], [f64::NAN]],
        };
        assert!(matches!(
            apply_update(p.view_mut(), &bad, &mut st, &cfg),
            Err(Error::NonFinite(_))
        ));
        let dup = RowGradients {
            rows: vec![1, 1],
            values: array![[1.0], [1.0]],
        };
        assert!(apply_update(p.view_mut(), &dup, &mut st, &cfg).is_err());
        let out = RowGradients {
            rows: vec![2],
            values: array![[1.0]],
        };
        assert!(apply_update(p.view_mut(), &out, &mut st, &cfg).is_err());
        assert_eq!(p, array![[1.0], [2.0]]);
        assert_eq!(st, AdamState::new(2, 1));
    }
}
