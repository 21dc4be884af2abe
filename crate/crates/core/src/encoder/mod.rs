//! Learnable entity embeddings and the GNN encoders trained over them.
//!
//! Two message-passing models are provided, both without per-layer weight
//! matrices so that the only parameters are the input embedding rows (and,
//! for attention, one scoring vector per layer):
//!
//! * `gcn-align-lite`: `h_v' = act(Σ_u w_uv · h_u)` with the symmetric
//!   normalized adjacency weights, self-loop included.
//! * `attention-lite`: the same sum with `w_uv` replaced by a softmax over
//!   `leaky_relu(a · [h_u ‖ h_v])` across each node's in-edges.
//!
//! Outputs are L2-normalized. Backward passes are written by hand and checked
//! against finite differences in the tests.

pub mod checkpoint;
mod forward;
pub mod gradcheck;
pub mod loss;
pub mod optim;
mod table;
mod train;

use serde::{Deserialize, Serialize};

pub use forward::{backward, forward, ForwardPass, InputGradients, Params};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use loss::{
    batch_loss, hard_sample_mining_loss, triplet_loss, BatchEmbeddings, LossOutput, LossParams,
};
pub use optim::{apply_update, AdamConfig, AdamState, RowGradients};
pub use table::{EmbeddingTable, Side};
pub use train::{
    batch_gradients, embed_all, initialize, sample_batch, train, train_with, BatchGradients,
    EpochStats, EvalSnapshot, Model, OptimizerState, SampledBatch, TrainStats,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    GcnAlignLite,
    AttentionLite,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::GcnAlignLite, ModelKind::AttentionLite];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::GcnAlignLite => "gcn-align-lite",
            ModelKind::AttentionLite => "attention-lite",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Triplet,
    HardSampleMining,
}

/// What the forward pass needs to know; stored in checkpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Architecture {
    pub model: ModelKind,
    pub layers: usize,
    pub activation: Activation,
    /// Negative-side slope of the attention logits' leaky ReLU.
    pub leaky_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub model: ModelKind,
    pub layers: usize,
    pub dim: usize,
    pub activation: Activation,
    pub loss: LossKind,
    /// γ: hinge margin for triplet, similarity offset for hard-sample mining.
    pub margin: f64,
    pub hsm_lambda: f64,
    pub hsm_tau: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub negative_count: usize,
    /// Per-hop fan-out, hop 1 first; one entry per layer.
    pub fanouts: Vec<usize>,
    pub rng_seed: u64,
    /// Evaluate on the test pairs every this many epochs (0 disables).
    pub eval_every: usize,
    /// Candidate list length for the in-training evaluation.
    pub eval_topk: usize,
    pub leaky_slope: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::GcnAlignLite,
            layers: 2,
            dim: 64,
            activation: Activation::Tanh,
            loss: LossKind::HardSampleMining,
            margin: 0.1,
            hsm_lambda: 30.0,
            hsm_tau: 1.0,
            learning_rate: 0.02,
            epochs: 300,
            batch_size: 512,
            negative_count: 0,
            fanouts: vec![10, 10],
            rng_seed: 42,
            eval_every: 5,
            eval_topk: 50,
            leaky_slope: 0.2,
        }
    }
}

impl EncoderConfig {
    pub fn loss_params(&self) -> LossParams {
        LossParams {
            kind: self.loss,
            margin: self.margin,
            lambda: self.hsm_lambda,
            tau: self.hsm_tau,
        }
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            model: self.model,
            layers: self.layers,
            activation: self.activation,
            leaky_slope: self.leaky_slope,
        }
    }

    /// Default margin for a loss: 1.0 for triplet, 0.1 for hard-sample mining.
    pub fn default_margin(loss: LossKind) -> f64 {
        match loss {
            LossKind::Triplet => 1.0,
            LossKind::HardSampleMining => 0.1,
        }
    }

    /// Field-level problems, empty when the config is usable.
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if self.layers == 0 {
            out.push(("layers", "must be positive".to_owned()));
        }
        if self.dim == 0 {
            out.push(("dim", "must be positive".to_owned()));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            out.push(("margin", "must be non-negative".to_owned()));
        }
        if !positive(self.hsm_lambda) {
            out.push(("hsm_lambda", "must be positive".to_owned()));
        }
        if !positive(self.hsm_tau) {
            out.push(("hsm_tau", "must be positive".to_owned()));
        }
        if !positive(self.learning_rate) {
            out.push(("learning_rate", "must be positive".to_owned()));
        }
        if self.batch_size == 0 {
            out.push(("batch_size", "must be positive".to_owned()));
        }
        if self.loss == LossKind::HardSampleMining && self.batch_size < 2 {
            out.push(("batch_size", "hard-sample mining needs at least 2 pairs".to_owned()));
        }
        if self.fanouts.len() != self.layers {
            out.push((
                "fanouts",
                format!("has {} entries but layers is {}", self.fanouts.len(), self.layers),
            ));
        }
        if self.fanouts.contains(&0) {
            out.push(("fanouts", "entries must be positive".to_owned()));
        }
        if self.eval_topk == 0 {
            out.push(("eval_topk", "must be positive".to_owned()));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope.is_finite()) {
            out.push(("leaky_slope", "must be non-negative".to_owned()));
        }
        out
    }
}
