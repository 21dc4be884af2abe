use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis, Zip};

use super::{Activation, Architecture, EmbeddingTable, ModelKind, Side};
use crate::kg::EntityId;
use crate::sampler::{Block, SampledBlockList};
use crate::{Error, Result};

/// Trainable state: input embeddings and, for attention-lite, one scoring
/// vector of length `2·dim` per layer (row `l` of `attention`).
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub table: EmbeddingTable,
    /// `layers × 2·dim` for attention-lite, `0 × 2·dim` for gcn-align-lite.
    pub attention: Array2<f64>,
}

struct LayerTrace {
    input: Array2<f64>,
    output: Array2<f64>,
    /// Attention logits before the leaky ReLU; empty for gcn-align-lite.
    logits: Vec<f64>,
    /// Per-edge aggregation coefficient.
    alpha: Vec<f64>,
}

/// Output embeddings of one forward pass plus what the backward pass needs.
pub struct ForwardPass {
    side: Side,
    layers: Vec<LayerTrace>,
    norms: Vec<f64>,
    /// `|output nodes| × dim`, rows L2-normalized.
    pub output: Array2<f64>,
}

/// Gradients with respect to the inputs of a forward pass.
#[derive(Debug, Clone)]
pub struct InputGradients {
    pub side: Side,
    /// Entity ids of the rows of `rows`, in the order of the first block's
    /// source nodes.
    pub nodes: Vec<EntityId>,
    pub rows: Array2<f64>,
    /// Same shape as `Params::attention`.
    pub attention: Array2<f64>,
}

fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn attention_split(a: ArrayView1<'_, f64>, dim: usize) -> (ArrayView1<'_, f64>, ArrayView1<'_, f64>) {
    a.split_at(Axis(0), dim)
}

/// Softmax over each destination's in-edges of `leaky_relu(a·[h_u ‖ h_v])`.
fn attention_coefficients(
    block: &Block,
    h: &Array2<f64>,
    a: ArrayView1<f64>,
    slope: f64,
) -> (Vec<f64>, Vec<f64>) {
    let (a_src, a_dst) = attention_split(a, h.ncols());
    let src_score: Vec<f64> = h.outer_iter().map(|row| row.dot(&a_src)).collect();
    let dst_score: Vec<f64> = (0..block.dst_nodes.len())
        .map(|j| h.row(j).dot(&a_dst))
        .collect();
    let logits: Vec<f64> = block
        .edges
        .iter()
        .map(|e| src_score[e.src] + dst_score[e.dst])
        .collect();

    let mut max = vec![f64::NEG_INFINITY; block.dst_nodes.len()];
    for (e, &x) in block.edges.iter().zip(&logits) {
        let y = leaky_relu(x, slope);
        if y > max[e.dst] {
            max[e.dst] = y;
        }
    }
    let mut alpha: Vec<f64> = block
        .edges
        .iter()
        .zip(&logits)
        .map(|(e, &x)| (leaky_relu(x, slope) - max[e.dst]).exp())
        .collect();
    let mut sum = vec![0.0; block.dst_nodes.len()];
    for (e, &w) in block.edges.iter().zip(&alpha) {
        sum[e.dst] += w;
    }
    for (e, w) in block.edges.iter().zip(alpha.iter_mut()) {
        *w /= sum[e.dst];
    }
    (alpha, logits)
}

fn check_shapes(blocks: &SampledBlockList, params: &Params, arch: &Architecture) -> Result<()> {
    if blocks.blocks.len() != arch.layers {
        return Err(Error::InvalidArgument(format!(
            "{} blocks for a {}-layer model",
            blocks.blocks.len(),
            arch.layers
        )));
    }
    for pair in blocks.blocks.windows(2) {
        if pair[0].dst_nodes.len() != pair[1].src_nodes.len() {
            return Err(Error::DimensionMismatch {
                expected: pair[1].src_nodes.len(),
                found: pair[0].dst_nodes.len(),
            });
        }
    }
    if arch.model == ModelKind::AttentionLite {
        if params.attention.nrows() != arch.layers {
            return Err(Error::DimensionMismatch {
                expected: arch.layers,
                found: params.attention.nrows(),
            });
        }
        if params.attention.ncols() != 2 * params.table.dim() {
            return Err(Error::DimensionMismatch {
                expected: 2 * params.table.dim(),
                found: params.attention.ncols(),
            });
        }
    }
    Ok(())
}

/// Runs the encoder over sampled blocks of one graph.
///
/// The output row `i` is the embedding of `blocks.output_nodes()[i]`.
pub fn forward(
    blocks: &SampledBlockList,
    params: &Params,
    side: Side,
    arch: &Architecture,
) -> Result<ForwardPass> {
    check_shapes(blocks, params, arch)?;
    let dim = params.table.dim();
    let side_rows = params.table.side(side).nrows();
    let inputs = blocks.input_nodes();
    let mut h = Array2::zeros((inputs.len(), dim));
    for (i, &v) in inputs.iter().enumerate() {
        if v >= side_rows {
            return Err(Error::DimensionMismatch {
                expected: side_rows,
                found: v + 1,
            });
        }
        h.row_mut(i).assign(&params.table.row(side, v));
    }

    let mut layers = Vec::with_capacity(blocks.blocks.len());
    for (l, block) in blocks.blocks.iter().enumerate() {
        let (alpha, logits) = match arch.model {
            ModelKind::GcnAlignLite => (block.edges.iter().map(|e| e.weight).collect(), Vec::new()),
            ModelKind::AttentionLite => {
                attention_coefficients(block, &h, params.attention.row(l), arch.leaky_slope)
            }
        };
        let mut out = Array2::zeros((block.dst_nodes.len(), dim));
        for (e, &a) in block.edges.iter().zip(&alpha) {
            out.row_mut(e.dst).scaled_add(a, &h.row(e.src));
        }
        if arch.activation == Activation::Tanh {
            out.mapv_inplace(f64::tanh);
        }
        if !out.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("encoder layer output"));
        }
        layers.push(LayerTrace {
            input: h,
            output: out.clone(),
            logits,
            alpha,
        });
        h = out;
    }

    let mut norms = Vec::with_capacity(h.nrows());
    for mut row in h.outer_iter_mut() {
        let norm = row.dot(&row).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::NonFinite("encoder output norm"));
        }
        row /= norm;
        norms.push(norm);
    }
    Ok(ForwardPass {
        side,
        layers,
        norms,
        output: h,
    })
}

/// Back-propagates `grad_output` (gradient w.r.t. `pass.output`) to the input
/// embedding rows and attention vectors.
pub fn backward(
    pass: &ForwardPass,
    blocks: &SampledBlockList,
    params: &Params,
    arch: &Architecture,
    grad_output: ArrayView2<f64>,
) -> Result<InputGradients> {
    if grad_output.dim() != pass.output.dim() {
        return Err(Error::DimensionMismatch {
            expected: pass.output.nrows(),
            found: grad_output.nrows(),
        });
    }
    let dim = pass.output.ncols();

    // Through the row normalization y = h / |h|.
    let mut grad = grad_output.to_owned();
    for ((mut g, y), &norm) in grad.outer_iter_mut().zip(pass.output.outer_iter()).zip(&pass.norms) {
        let proj = y.dot(&g);
        g.scaled_add(-proj, &y);
        g /= norm;
    }

    let mut attention_grads = Array2::zeros(params.attention.dim());

    for (l, (trace, block)) in pass.layers.iter().zip(&blocks.blocks).enumerate().rev() {
        let mut dz = grad;
        if arch.activation == Activation::Tanh {
            Zip::from(&mut dz)
                .and(&trace.output)
                .for_each(|d, &y| *d *= 1.0 - y * y);
        }
        let mut dh = Array2::zeros(trace.input.dim());
        for (e, &a) in block.edges.iter().zip(&trace.alpha) {
            dh.row_mut(e.src).scaled_add(a, &dz.row(e.dst));
        }

        if arch.model == ModelKind::AttentionLite {
            let slope = arch.leaky_slope;
            let d_alpha: Vec<f64> = block
                .edges
                .iter()
                .map(|e| dz.row(e.dst).dot(&trace.input.row(e.src)))
                .collect();
            let mut weighted = vec![0.0; block.dst_nodes.len()];
            for ((e, &a), &da) in block.edges.iter().zip(&trace.alpha).zip(&d_alpha) {
                weighted[e.dst] += a * da;
            }
            let mut d_src_score = vec![0.0; trace.input.nrows()];
            let mut d_dst_score = vec![0.0; block.dst_nodes.len()];
            for (((e, &a), &da), &x) in block
                .edges
                .iter()
                .zip(&trace.alpha)
                .zip(&d_alpha)
                .zip(&trace.logits)
            {
                let d_logit = a * (da - weighted[e.dst]) * if x > 0.0 { 1.0 } else { slope };
                d_src_score[e.src] += d_logit;
                d_dst_score[e.dst] += d_logit;
            }

            let (a_src, a_dst) = attention_split(params.attention.row(l), dim);
            let mut ga = attention_grads.row_mut(l);
            for (i, &ds) in d_src_score.iter().enumerate() {
                if ds != 0.0 {
                    ga.slice_mut(s![..dim]).scaled_add(ds, &trace.input.row(i));
                    dh.row_mut(i).scaled_add(ds, &a_src);
                }
            }
            for (j, &ds) in d_dst_score.iter().enumerate() {
                if ds != 0.0 {
                    ga.slice_mut(s![dim..]).scaled_add(ds, &trace.input.row(j));
                    dh.row_mut(j).scaled_add(ds, &a_dst);
                }
            }
        }
        grad = dh;
    }

    if !grad.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("input gradient"));
    }
    Ok(InputGradients {
        side: pass.side,
        nodes: blocks.input_nodes().to_vec(),
        rows: grad,
        attention: attention_grads,
    })
}
