//! Entity alignment between two knowledge graphs.
//!
//! The crate covers the whole batch pipeline:
//!
//! * [`kg`]: knowledge-graph and alignment-task data model, OpenEA-style
//!   dataset loading and a synthetic benchmark generator.
//! * [`sampler`]: seed-anchored mini-batches and k-hop fan-out sampling.
//! * [`encoder`]: learnable entity embeddings, two GNN encoders with
//!   hand-written backward passes, the losses, Adam and the training loop.
//! * [`inference`]: grouping, local similarity, sparse global top-k,
//!   CSLS/Sinkhorn normalization and fusion.
//! * [`eval`]: Hits@k and MRR over sparse rankings.
//! * [`projection`]: 2-D PCA of embeddings for inspection.
//! * [`config`]: run configuration and the shipped hyperparameter profiles.
//! * [`run`]: report and stats schemas and artifact writing.

pub mod config;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod inference;
pub mod kg;
pub mod projection;
pub mod rng;
pub mod run;
pub mod sampler;

pub use error::{Error, Result};
