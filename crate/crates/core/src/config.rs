//! Run configuration shared by the command line and the service, plus the
//! shipped hyperparameter profiles.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, LossKind, ModelKind};
use crate::inference::InferenceOptions;
use crate::kg::load::{load_dataset, Split};
use crate::kg::synth::{generate_synthetic_pair, SynthConfig};
use crate::kg::AlignmentTask;
use crate::Result;

/// Where the alignment task comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSource {
    Synthetic(SynthConfig),
    Directory(DirectoryDataset),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectoryDataset {
    pub path: PathBuf,
    /// Forces a ratio split; otherwise split files are used when present and
    /// a 0.3 ratio when not.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_ratio: Option<f64>,
}

impl DatasetSource {
    pub fn load(&self) -> Result<AlignmentTask> {
        match self {
            DatasetSource::Synthetic(cfg) => generate_synthetic_pair(cfg),
            DatasetSource::Directory(d) => {
                let split = match d.train_ratio {
                    Some(r) => Split::Ratio(r),
                    None => Split::default(),
                };
                load_dataset(&d.path, split)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldProblem {
    /// Dotted path of the offending field, e.g. `encoder.learning_rate`.
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for FieldProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub encoder: EncoderConfig,
    pub inference: InferenceOptions,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        profile(ModelKind::GcnAlignLite, "synthetic").expect("built-in profile")
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Field-level problems, empty when the config is usable.
    pub fn problems(&self) -> Vec<FieldProblem> {
        let scoped = |scope: &str, list: Vec<(&'static str, String)>| {
            list.into_iter()
                .map(|(f, m)| FieldProblem {
                    field: format!("{scope}.{f}"),
                    message: m,
                })
                .collect::<Vec<_>>()
        };
        let mut out = Vec::new();
        match &self.dataset {
            DatasetSource::Synthetic(s) => {
                out.extend(scoped("dataset", s.problems()));
                if s.problems().is_empty() {
                    let train = synthetic_train_count(s);
                    if self.inference.num_groups > train {
                        out.push(FieldProblem {
                            field: "inference.num_groups".into(),
                            message: format!("exceeds the {train} train pairs"),
                        });
                    }
                }
            }
            DatasetSource::Directory(d) => {
                if d.path.as_os_str().is_empty() {
                    out.push(FieldProblem {
                        field: "dataset.path".into(),
                        message: "must not be empty".into(),
                    });
                }
                if let Some(r) = d.train_ratio {
                    if !(r > 0.0 && r < 1.0) {
                        out.push(FieldProblem {
                            field: "dataset.train_ratio".into(),
                            message: "must be in (0, 1)".into(),
                        });
                    }
                }
            }
        }
        out.extend(scoped("encoder", self.encoder.problems()));
        out.extend(scoped("inference", self.inference.problems()));
        out
    }
}

/// Train pairs the generator will produce for `cfg`.
pub fn synthetic_train_count(cfg: &SynthConfig) -> usize {
    let n = cfg.entity_count;
    ((cfg.seed_ratio * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// Dataset profiles shipped with the tool.
pub const DATASET_PROFILES: [&str; 3] = ["synthetic", "hub-synthetic", "directory"];

/// Suggested configuration for a model on a dataset profile.
pub fn profile(model: ModelKind, dataset: &str) -> Option<RunConfig> {
    let source = match dataset {
        "synthetic" => DatasetSource::Synthetic(SynthConfig::default()),
        "hub-synthetic" => DatasetSource::Synthetic(SynthConfig {
            entity_count: 1000,
            edge_noise: 0.1,
            hub_count: 30,
            ..SynthConfig::default()
        }),
        "directory" => DatasetSource::Directory(DirectoryDataset {
            path: PathBuf::from("data"),
            train_ratio: None,
        }),
        _ => return None,
    };
    let mut encoder = EncoderConfig {
        model,
        ..EncoderConfig::default()
    };
    if model == ModelKind::AttentionLite {
        encoder.learning_rate = 0.02;
    }
    if dataset != "synthetic" {
        encoder.batch_size = 256;
        encoder.epochs = 200;
    }
    encoder.margin = EncoderConfig::default_margin(encoder.loss);
    debug_assert_eq!(encoder.loss, LossKind::HardSampleMining);
    Some(RunConfig {
        dataset: source,
        encoder,
        inference: InferenceOptions::default(),
        output_dir: None,
    })
}
