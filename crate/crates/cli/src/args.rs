//! Command-line flags and how they override a base [`RunConfig`].

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sea_core::config::{profile, DatasetSource, DirectoryDataset, RunConfig};
use sea_core::encoder::{EncoderConfig, LossKind, ModelKind};
use sea_core::kg::SynthConfig;

#[derive(Debug, Parser)]
#[command(name = "sea", version, about = "Entity alignment between two knowledge graphs")]
#[command(after_help = "Log verbosity is read from SEA_LOG (e.g. SEA_LOG=debug). \
RAYON_NUM_THREADS caps the worker threads.")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an encoder, then align and evaluate; writes checkpoint, stats and report.
    Train(TrainArgs),
    /// Align and evaluate with a saved checkpoint.
    Eval(EvalArgs),
    /// Serve the JSON API.
    Serve(ServeArgs),
    /// Write a synthetic task in the dataset directory layout.
    Generate(GenerateArgs),
    /// Print the effective configuration as TOML.
    Config(ConfigArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    GcnAlignLite,
    AttentionLite,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::GcnAlignLite => ModelKind::GcnAlignLite,
            ModelArg::AttentionLite => ModelKind::AttentionLite,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Triplet,
    HardSampleMining,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Triplet => LossKind::Triplet,
            LossArg::HardSampleMining => LossKind::HardSampleMining,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Synthetic,
    HubSynthetic,
}

impl ProfileArg {
    fn name(self) -> &'static str {
        match self {
            ProfileArg::Synthetic => "synthetic",
            ProfileArg::HubSynthetic => "hub-synthetic",
        }
    }
}

/// Where the task comes from. Without any of these flags the config file's
/// dataset, or the profile's, is used.
#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    /// Dataset directory (rel_triples_1, rel_triples_2, ent_links, optional train_links/test_links)
    #[arg(long, value_name = "DIR", conflicts_with = "synth")]
    pub dataset: Option<PathBuf>,
    /// Force a random train/test split with this train fraction
    #[arg(long, value_name = "RATIO", requires = "dataset")]
    pub train_ratio: Option<f64>,
    /// Generate a synthetic task
    #[arg(long)]
    pub synth: bool,
    /// Synthetic: number of entities per graph
    #[arg(long, value_name = "N")]
    pub entities: Option<usize>,
    /// Synthetic: triples per entity
    #[arg(long, value_name = "D")]
    pub avg_degree: Option<f64>,
    /// Synthetic: fraction of pairs used as seeds
    #[arg(long, value_name = "RATIO")]
    pub seed_ratio: Option<f64>,
    /// Synthetic: fraction of target triples rewired
    #[arg(long, value_name = "P")]
    pub edge_noise: Option<f64>,
    /// Synthetic: number of injected hub entities
    #[arg(long, value_name = "N")]
    pub hubs: Option<usize>,
    /// Synthetic: generator seed
    #[arg(long, value_name = "SEED")]
    pub synth_seed: Option<u64>,
}

impl DatasetArgs {
    fn synth_overrides(&self) -> bool {
        self.entities.is_some()
            || self.avg_degree.is_some()
            || self.seed_ratio.is_some()
            || self.edge_noise.is_some()
            || self.hubs.is_some()
            || self.synth_seed.is_some()
    }

    pub fn apply(&self, source: &mut DatasetSource) -> Result<()> {
        if let Some(path) = &self.dataset {
            if self.synth_overrides() {
                bail!("synthetic generator flags cannot be combined with --dataset");
            }
            *source = DatasetSource::Directory(DirectoryDataset {
                path: path.clone(),
                train_ratio: self.train_ratio,
            });
            return Ok(());
        }
        if self.synth && !matches!(source, DatasetSource::Synthetic(_)) {
            *source = DatasetSource::Synthetic(SynthConfig::default());
        }
        if self.synth_overrides() {
            let DatasetSource::Synthetic(s) = source else {
                bail!("synthetic generator flags need --synth when the config names a directory");
            };
            set(&mut s.entity_count, self.entities);
            set(&mut s.avg_degree, self.avg_degree);
            set(&mut s.seed_ratio, self.seed_ratio);
            set(&mut s.edge_noise, self.edge_noise);
            set(&mut s.hub_count, self.hubs);
            set(&mut s.rng_seed, self.synth_seed);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Args)]
pub struct InferenceArgs {
    /// Number of entity groups aligned independently
    #[arg(long, value_name = "G")]
    pub groups: Option<usize>,
    /// Candidates kept per entity
    #[arg(long, value_name = "K")]
    pub topk: Option<usize>,
    /// Rank by raw cosine similarity instead of the normalized pipeline
    #[arg(long)]
    pub no_normalize: bool,
    /// Hits@k cutoffs reported
    #[arg(long, value_name = "K,..", value_delimiter = ',', default_value = "1,10")]
    pub hits: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ConfigFlags {
    /// TOML run configuration; flags override its values
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Start from the suggested settings of this dataset profile
    #[arg(long, value_enum, conflicts_with = "config")]
    pub profile: Option<ProfileArg>,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// GNN layers; also the number of sampling hops
    #[arg(long, value_name = "L")]
    pub layers: Option<usize>,
    /// Embedding dimension
    #[arg(long, value_name = "D")]
    pub dim: Option<usize>,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    /// Loss margin; defaults to the chosen loss's suggested value
    #[arg(long, value_name = "GAMMA")]
    pub margin: Option<f64>,
    /// Adam learning rate
    #[arg(long, value_name = "LR")]
    pub lr: Option<f64>,
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,
    /// Seed pairs per mini-batch
    #[arg(long, value_name = "N")]
    pub batch_size: Option<usize>,
    /// Sampled negatives per positive (0 uses the other in-batch entities)
    #[arg(long, value_name = "N")]
    pub negatives: Option<usize>,
    /// Per-hop neighbor fan-out, hop 1 first
    #[arg(long, value_name = "A,B", value_delimiter = ',')]
    pub fanouts: Option<Vec<usize>>,
    /// Seed for training and inference
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Evaluate every N epochs during training (0 disables)
    #[arg(long, value_name = "N")]
    pub eval_every: Option<usize>,
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    pub inference: InferenceArgs,
}

fn set<T>(field: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *field = v;
    }
}

impl ConfigFlags {
    /// The base config (file or profile) with every given flag applied.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => read_config(path)?,
            None => {
                let model = self.model.map_or(ModelKind::GcnAlignLite, Into::into);
                let name = self.profile.map_or("synthetic", ProfileArg::name);
                profile(model, name).expect("built-in profile")
            }
        };
        self.dataset.apply(&mut cfg.dataset)?;
        self.apply_encoder(&mut cfg.encoder);
        let inf = &mut cfg.inference;
        set(&mut inf.num_groups, self.inference.groups);
        set(&mut inf.k, self.inference.topk);
        set(&mut inf.seed, self.seed);
        if self.inference.no_normalize {
            inf.normalize = false;
        }
        check(&cfg)?;
        Ok(cfg)
    }

    fn apply_encoder(&self, enc: &mut EncoderConfig) {
        set(&mut enc.model, self.model.map(Into::into));
        if let Some(layers) = self.layers {
            if self.fanouts.is_none() {
                let last = enc.fanouts.last().copied().unwrap_or(10);
                enc.fanouts.resize(layers, last);
            }
            enc.layers = layers;
        }
        set(&mut enc.dim, self.dim);
        if let Some(loss) = self.loss {
            enc.loss = loss.into();
            enc.margin = EncoderConfig::default_margin(enc.loss);
        }
        set(&mut enc.margin, self.margin);
        set(&mut enc.learning_rate, self.lr);
        set(&mut enc.epochs, self.epochs);
        set(&mut enc.batch_size, self.batch_size);
        set(&mut enc.negative_count, self.negatives);
        set(&mut enc.fanouts, self.fanouts.clone());
        set(&mut enc.rng_seed, self.seed);
        set(&mut enc.eval_every, self.eval_every);
    }
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    RunConfig::from_toml(&text).with_context(|| format!("invalid config {}", path.display()))
}

/// Field problems plus a missing dataset directory, reported together.
pub fn check(cfg: &RunConfig) -> Result<()> {
    let mut problems: Vec<String> = cfg.problems().iter().map(ToString::to_string).collect();
    if let DatasetSource::Directory(d) = &cfg.dataset {
        if !d.path.is_dir() {
            problems.push(format!("dataset directory {} does not exist", d.path.display()));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        bail!("invalid configuration:\n  {}", problems.join("\n  "))
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub flags: ConfigFlags,
    /// Output directory for checkpoint.bin, stats.jsonl and report.json
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint written by `sea train`
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub flags: ConfigFlags,
    /// Directory to write report.json to
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Origin allowed by CORS (repeatable); any origin when omitted
    #[arg(long = "allow-origin", value_name = "ORIGIN")]
    pub allow_origins: Vec<String>,
    /// Preload a finished run from this checkpoint, aligned on the task the flags describe
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub flags: ConfigFlags,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    /// Directory to write the task to
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[command(flatten)]
    pub flags: ConfigFlags,
}
