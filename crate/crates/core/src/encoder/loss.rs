//! Alignment losses over one mini-batch of encoder outputs.
//!
//! Both functions return the loss together with its exact gradient with
//! respect to every row of the source and target output matrices.

use ndarray::{Array2, ArrayView2};

use super::LossKind;
use crate::{Error, Result};

/// Encoder outputs of one batch. `pairs` index rows of `source` and `target`;
/// the negative lists index rows that belong to no pair.
#[derive(Debug, Clone, Copy)]
pub struct BatchEmbeddings<'a> {
    pub source: ArrayView2<'a, f64>,
    pub target: ArrayView2<'a, f64>,
    pub pairs: &'a [(usize, usize)],
    pub source_negatives: &'a [usize],
    pub target_negatives: &'a [usize],
}

impl BatchEmbeddings<'_> {
    fn check(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::InvalidArgument("loss needs at least one positive pair".into()));
        }
        if self.source.ncols() != self.target.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.source.ncols(),
                found: self.target.ncols(),
            });
        }
        let src_ok = self
            .pairs
            .iter()
            .map(|p| p.0)
            .chain(self.source_negatives.iter().copied())
            .all(|r| r < self.source.nrows());
        let tgt_ok = self
            .pairs
            .iter()
            .map(|p| p.1)
            .chain(self.target_negatives.iter().copied())
            .all(|r| r < self.target.nrows());
        if !(src_ok && tgt_ok) {
            return Err(Error::InvalidArgument("batch row index out of range".into()));
        }
        Ok(())
    }

    /// Sides swapped; `pairs` still reads `(old source row, old target row)`.
    fn mirrored(&self) -> Self {
        Self {
            source: self.target,
            target: self.source,
            pairs: self.pairs,
            source_negatives: self.target_negatives,
            target_negatives: self.source_negatives,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grad_source: Array2<f64>,
    pub grad_target: Array2<f64>,
}

impl LossOutput {
    fn zeros(emb: &BatchEmbeddings) -> Self {
        Self {
            loss: 0.0,
            grad_source: Array2::zeros(emb.source.dim()),
            grad_target: Array2::zeros(emb.target.dim()),
        }
    }
}

/// Source-to-target margin loss:
/// `Σ_(s,t) Σ_t′ max(0, ‖s−t‖² − ‖s−t′‖² + γ) / (|pos|·|neg|)`,
/// where `t′` ranges over the sampled target negatives and the targets of the
/// other pairs in the batch.
pub fn triplet_loss(emb: &BatchEmbeddings, margin: f64) -> Result<LossOutput> {
    emb.check()?;
    triplet_directed(emb, |p| p, margin)
}

fn triplet_directed(
    emb: &BatchEmbeddings,
    orient: impl Fn((usize, usize)) -> (usize, usize),
    margin: f64,
) -> Result<LossOutput> {
    let mut out = LossOutput::zeros(emb);
    let pairs: Vec<(usize, usize)> = emb.pairs.iter().map(|&p| orient(p)).collect();
    let neg_count = emb.target_negatives.len() + pairs.len() - 1;
    if neg_count == 0 {
        return Ok(out);
    }
    let norm = (pairs.len() * neg_count) as f64;
    let dist = |a: usize, b: usize| {
        let d = &emb.source.row(a) - &emb.target.row(b);
        d.dot(&d)
    };
    let mut total = 0.0;
    for (i, &(s, t)) in pairs.iter().enumerate() {
        let pos = dist(s, t);
        let negatives = emb
            .target_negatives
            .iter()
            .copied()
            .chain(pairs.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, p)| p.1));
        for n in negatives {
            let term = pos - dist(s, n) + margin;
            if term <= 0.0 {
                continue;
            }
            total += term;
            // d/ds = 2(s−t) − 2(s−n) = 2(n−t); d/dt = −2(s−t); d/dn = 2(s−n)
            let c = 2.0 / norm;
            let (sr, tr, nr) = (emb.source.row(s), emb.target.row(t), emb.target.row(n));
            out.grad_source.row_mut(s).scaled_add(c, &(&nr - &tr));
            out.grad_target.row_mut(t).scaled_add(-c, &(&sr - &tr));
            out.grad_target.row_mut(n).scaled_add(c, &(&sr - &nr));
        }
    }
    out.loss = total / norm;
    Ok(out)
}

/// Bidirectional hard-sample mining loss over in-batch candidates.
///
/// For anchor `s` with truth `t`:
/// `L_s = log(1 + Σ_{t′≠t} exp(λ·(sim(s,t′) − sim(s,t) + γ)/τ))`, and the same
/// for every target anchor against the other sources. The result is the mean
/// over all `2·|pairs|` anchors. Sampled negatives are not candidates.
pub fn hard_sample_mining_loss(
    emb: &BatchEmbeddings,
    margin: f64,
    lambda: f64,
    tau: f64,
) -> Result<LossOutput> {
    emb.check()?;
    let n = emb.pairs.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "hard-sample mining needs at least two positive pairs".into(),
        ));
    }
    let scale = lambda / tau;
    let src_rows: Vec<usize> = emb.pairs.iter().map(|p| p.0).collect();
    let tgt_rows: Vec<usize> = emb.pairs.iter().map(|p| p.1).collect();
    let src = emb.source.select(ndarray::Axis(0), &src_rows);
    let tgt = emb.target.select(ndarray::Axis(0), &tgt_rows);
    let sim = src.dot(&tgt.t());

    // d_sim[i][j] accumulates ∂L/∂sim(i, j) for source i, target j.
    let mut d_sim = Array2::<f64>::zeros((n, n));
    let mut total = 0.0;
    let mut exps = vec![0.0; n];
    for direction in 0..2 {
        for a in 0..n {
            let at = |j: usize| if direction == 0 { (a, j) } else { (j, a) };
            let truth = sim[at(a)];
            // logsumexp over {0} ∪ {x_j : j ≠ a}
            let mut max = 0.0f64;
            for j in (0..n).filter(|&j| j != a) {
                let x = scale * (sim[at(j)] - truth + margin);
                exps[j] = x;
                max = max.max(x);
            }
            let mut z = (-max).exp();
            for j in (0..n).filter(|&j| j != a) {
                exps[j] = (exps[j] - max).exp();
                z += exps[j];
            }
            total += max + z.ln();
            let mut mass = 0.0;
            for j in (0..n).filter(|&j| j != a) {
                let p = exps[j] / z;
                d_sim[at(j)] += scale * p;
                mass += p;
            }
            d_sim[at(a)] -= scale * mass;
        }
    }
    let anchors = (2 * n) as f64;
    d_sim /= anchors;

    let mut out = LossOutput::zeros(emb);
    out.loss = total / anchors;
    let g_src = d_sim.dot(&tgt);
    let g_tgt = d_sim.t().dot(&src);
    for (i, &r) in src_rows.iter().enumerate() {
        out.grad_source.row_mut(r).assign(&g_src.row(i));
    }
    for (j, &r) in tgt_rows.iter().enumerate() {
        out.grad_target.row_mut(r).assign(&g_tgt.row(j));
    }
    Ok(out)
}

/// Loss parameters shared by both kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    pub kind: LossKind,
    pub margin: f64,
    pub lambda: f64,
    pub tau: f64,
}

/// The training objective: hard-sample mining as defined above, or the mean of
/// the source-to-target and target-to-source triplet losses.
pub fn batch_loss(emb: &BatchEmbeddings, params: &LossParams) -> Result<LossOutput> {
    match params.kind {
        LossKind::HardSampleMining => {
            hard_sample_mining_loss(emb, params.margin, params.lambda, params.tau)
        }
        LossKind::Triplet => {
            emb.check()?;
            let forward = triplet_directed(emb, |p| p, params.margin)?;
            let mirrored = emb.mirrored();
            let backward = triplet_directed(&mirrored, |(s, t)| (t, s), params.margin)?;
            Ok(LossOutput {
                loss: 0.5 * (forward.loss + backward.loss),
                grad_source: 0.5 * (forward.grad_source + backward.grad_target),
                grad_target: 0.5 * (forward.grad_target + backward.grad_source),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;

    fn batch<'a>(
        source: &'a Array2<f64>,
        target: &'a Array2<f64>,
        pairs: &'a [(usize, usize)],
        target_negatives: &'a [usize],
    ) -> BatchEmbeddings<'a> {
        BatchEmbeddings {
            source: source.view(),
            target: target.view(),
            pairs,
            source_negatives: &[],
            target_negatives,
        }
    }

    #[test]
    fn triplet_one_dimensional_term() {
        let s = array![[0.0]];
        let t = array![[0.2], [0.9]];
        let out = triplet_loss(&batch(&s, &t, &[(0, 0)], &[1]), 1.0).unwrap();
        assert!((out.loss - 0.23).abs() < 1e-12);
    }

    #[test]
    fn triplet_inactive_hinge_is_flat() {
        let s = array![[1.0, 0.0]];
        let t = array![[1.0, 0.0], [0.0, 1.0]];
        let out = triplet_loss(&batch(&s, &t, &[(0, 0)], &[1]), 1.0).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grad_source.iter().chain(out.grad_target.iter()).all(|&g| g == 0.0));
    }

    #[test]
    fn hsm_zero_gap_gives_log_n() {
        // sim(s,t′) − sim(s,t) + γ = 0 for every candidate.
        let n = 4;
        let s = Array2::from_elem((n, 2), 0.5);
        let t = Array2::from_elem((n, 2), 0.5);
        let pairs: Vec<_> = (0..n).map(|i| (i, i)).collect();
        let out = hard_sample_mining_loss(&batch(&s, &t, &pairs, &[]), 0.0, 30.0, 1.0).unwrap();
        assert!((out.loss - (n as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn hsm_separated_truth() {
        // Truth similarity 1, others −1: per anchor log(1 + (n−1)e^{−2}).
        let s = array![[1.0, 0.0], [-1.0, 0.0]];
        let t = array![[1.0, 0.0], [-1.0, 0.0]];
        let pairs = [(0, 0), (1, 1)];
        let out = hard_sample_mining_loss(&batch(&s, &t, &pairs, &[]), 0.0, 1.0, 1.0).unwrap();
        assert!((out.loss - (1.0 + (-2.0f64).exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn hsm_large_scale_is_stable() {
        let s = array![[1.0, 0.0], [0.0, 1.0]];
        let t = array![[0.0, 1.0], [1.0, 0.0]];
        let pairs = [(0, 0), (1, 1)];
        let out = hard_sample_mining_loss(&batch(&s, &t, &pairs, &[]), 0.1, 1e4, 1.0).unwrap();
        assert!(out.loss.is_finite());
        assert!((out.loss - 1e4 * 1.1).abs() < 1e-6);
    }

    #[test]
    fn errors() {
        let s = array![[1.0]];
        let t = array![[1.0]];
        assert!(triplet_loss(&batch(&s, &t, &[], &[]), 1.0).is_err());
        assert!(hard_sample_mining_loss(&batch(&s, &t, &[(0, 0)], &[]), 0.1, 30.0, 1.0).is_err());
        assert!(triplet_loss(&batch(&s, &t, &[(0, 3)], &[]), 1.0).is_err());
    }

    #[test]
    fn single_pair_without_negatives_is_zero() {
        let s = array![[1.0]];
        let t = array![[-1.0]];
        let out = triplet_loss(&batch(&s, &t, &[(0, 0)], &[]), 1.0).unwrap();
        assert_eq!(out.loss, 0.0);
    }
}
