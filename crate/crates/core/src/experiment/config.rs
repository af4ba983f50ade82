use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{Split, SyntheticSpec};
use crate::encoders::Pooling;
use crate::error::{Error, Result};
use crate::losses::{ContrastiveConfig, TripletConfig};
use crate::metrics::MetricConfig;
use crate::optim::{Architecture, LossKind, SelectionMetric, TrainConfig, TrainMode};
use crate::retrieval::Strategy;

/// Environment variable that replaces `output_dir` (command-line overrides still win).
pub const OUTPUT_DIR_ENV: &str = "TRIMODAL_OUTPUT_DIR";

/// Full experiment description. Every field has a default; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Root of every derived random stream.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Dataset directory; defaults to `<output_dir>/data`.
    pub dir: Option<PathBuf>,
    /// Generator settings for `gen-data`; `max_caption_len` also applies when loading.
    pub synthetic: SyntheticSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub word_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub pooling: Pooling,
    pub mode: TrainMode,
    pub loss: LossKind,
    pub tau: f64,
    pub alpha: f64,
    pub margin: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let arch = Architecture::default();
        let c = ContrastiveConfig::default();
        Self {
            word_dim: arch.word_dim,
            hidden_dim: arch.hidden_dim,
            embed_dim: arch.embed_dim,
            pooling: arch.pooling,
            mode: TrainMode::Trimodal,
            loss: LossKind::Ntxent,
            tau: c.tau,
            alpha: c.alpha,
            margin: TripletConfig::default().margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub base_lr: f64,
    pub base_batch: usize,
    pub epochs: usize,
    pub selection: SelectionMetric,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            batch_size: t.batch_size,
            base_lr: t.base_lr,
            base_batch: t.base_batch,
            epochs: t.epochs,
            selection: t.selection,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub split: Split,
    pub strategies: Vec<Strategy>,
    /// Sum unit-normalized image and voxel embeddings for I+V instead of raw ones.
    pub prenormalize: bool,
    /// Label for the model column; defaults to `<mode>-<loss>`.
    pub model_name: Option<String>,
    /// Directory of `<object_id>.obj` meshes; enables the geometry columns.
    pub mesh_dir: Option<PathBuf>,
    pub metrics: MetricConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            split: Split::Test,
            strategies: Strategy::ALL.to_vec(),
            prenormalize: false,
            model_name: None,
            mesh_dir: None,
            metrics: MetricConfig::default(),
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            training: TrainingConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Parses an override value as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("bad override key {path:?}")));
    }
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {path:?}: {k} is not a section")))?;
    }
    cur.insert(keys[keys.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl ExperimentConfig {
    /// Builds a config from optional file text, the output-dir environment
    /// value, and `section.key=value` overrides, in increasing precedence.
    pub fn from_sources(file_text: Option<&str>, env_output_dir: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut table = match file_text {
            Some(text) => text
                .parse::<toml::Table>()
                .map_err(|e| Error::Config(format!("config file: {e}")))?,
            None => toml::Table::new(),
        };
        if let Some(dir) = env_output_dir.filter(|d| !d.is_empty()) {
            table.insert("output_dir".into(), toml::Value::String(dir.to_string()));
        }
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ExperimentConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads the file (if any) and the environment, then applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => Some(
                std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?,
            ),
            None => None,
        };
        let env = std::env::var(OUTPUT_DIR_ENV).ok();
        Self::from_sources(text.as_deref(), env.as_deref(), overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.synthetic.validate()?;
        self.train_config().validate()?;
        self.eval.metrics.validate()?;
        if self.eval.strategies.is_empty() {
            return Err(Error::Config("eval.strategies must not be empty".into()));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::Config("output_dir must not be empty".into()));
        }
        Ok(())
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data.dir.clone().unwrap_or_else(|| self.output_dir.join("data"))
    }

    pub fn train_config(&self) -> TrainConfig {
        let m = &self.model;
        let t = &self.training;
        TrainConfig {
            architecture: Architecture {
                word_dim: m.word_dim,
                hidden_dim: m.hidden_dim,
                embed_dim: m.embed_dim,
                pooling: m.pooling,
            },
            mode: m.mode,
            loss: m.loss,
            contrastive: ContrastiveConfig {
                tau: m.tau,
                alpha: m.alpha,
            },
            triplet: TripletConfig { margin: m.margin },
            batch_size: t.batch_size,
            base_lr: t.base_lr,
            base_batch: t.base_batch,
            epochs: t.epochs,
            seed: self.seed,
            selection: t.selection,
        }
    }

    pub fn model_name(&self) -> String {
        self.eval.model_name.clone().unwrap_or_else(|| {
            let loss = match self.model.loss {
                LossKind::Ntxent => "ntxent",
                LossKind::Triplet => "triplet",
            };
            format!("{}-{loss}", self.model.mode)
        })
    }

    /// Serialized form with every default filled in.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::from_sources(None, None, &[]).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let back = ExperimentConfig::from_sources(Some(&cfg.to_toml()), None, &[]).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn precedence_flag_over_env_over_file() {
        let file = "output_dir = \"from-file\"\n[training]\nbatch_size = 64\n";
        let cfg = ExperimentConfig::from_sources(Some(file), None, &[]).unwrap();
        assert_eq!(
            (cfg.output_dir.to_str().unwrap(), cfg.training.batch_size),
            ("from-file", 64)
        );
        let cfg = ExperimentConfig::from_sources(Some(file), Some("from-env"), &[]).unwrap();
        assert_eq!(cfg.output_dir.to_str().unwrap(), "from-env");
        let sets = vec![
            "output_dir=flag".to_string(),
            "training.batch_size=256".into(),
            "model.mode=bimodal-it".into(),
        ];
        let cfg = ExperimentConfig::from_sources(Some(file), Some("from-env"), &sets).unwrap();
        assert_eq!(cfg.output_dir.to_str().unwrap(), "flag");
        assert_eq!(cfg.training.batch_size, 256);
        assert_eq!(cfg.model.mode, TrainMode::BimodalIT);
        assert_eq!(cfg.training.epochs, 20);
    }

    #[test]
    fn nested_and_list_overrides() {
        let sets = vec![
            "data.synthetic.noise=0.25".to_string(),
            "eval.strategies=[\"I\", \"I+V\"]".into(),
            "eval.metrics.tau_geo=[0.2]".into(),
        ];
        let cfg = ExperimentConfig::from_sources(None, None, &sets).unwrap();
        assert_eq!(cfg.data.synthetic.noise, 0.25);
        assert_eq!(cfg.eval.strategies, vec![Strategy::Image, Strategy::Fused]);
        assert_eq!(cfg.eval.metrics.tau_geo, vec![0.2]);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        for bad in [
            "training.bogus=1",
            "nosuch.key=1",
            "model.tau=0",
            "model.alpha=1.5",
            "data.synthetic.split_fractions=[0.5, 0.2, 0.2]",
            "training.batch_size=notanumber",
            "novalue",
            "training=3",
        ] {
            let e = ExperimentConfig::from_sources(None, None, &[bad.to_string()]).unwrap_err();
            assert!(e.is_validation(), "{bad}: {e}");
        }
        let e = ExperimentConfig::from_sources(Some("[model]\nfoo = 1\n"), None, &[]).unwrap_err();
        assert!(e.is_validation());
        let e = ExperimentConfig::from_sources(Some("not toml ["), None, &[]).unwrap_err();
        assert!(e.is_validation());
    }

    #[test]
    fn model_name_default() {
        let cfg = ExperimentConfig::from_sources(None, None, &["model.loss=triplet".into()]).unwrap();
        assert_eq!(cfg.model_name(), "trimodal-triplet");
    }
}
