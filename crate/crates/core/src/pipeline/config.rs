//! The single JSON document every subcommand reads.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distill::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{FfnKind, ModelConfig};
use crate::synthvid::SceneConfig;
use crate::teachers::TeacherSpec;

/// Output layout below `root`. Relative entries are resolved against `root`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub root: PathBuf,
    pub data: PathBuf,
    pub checkpoints: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            root: PathBuf::from("run"),
            data: PathBuf::from("data"),
            checkpoints: PathBuf::from("checkpoints"),
            reports: PathBuf::from("reports"),
        }
    }
}

impl Paths {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.resolve(&self.data)
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.resolve(&self.checkpoints)
    }

    pub fn report_dir(&self) -> PathBuf {
        self.resolve(&self.reports)
    }
}

/// What `eval` scores.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scorer {
    /// The distilled student checkpoint.
    #[default]
    Student,
    /// The pre-trained autoencoder, by reconstruction error.
    Autoencoder,
    /// One configured teacher, by name.
    Teacher { name: String },
    /// Ground-truth masks; the ceiling of the protocol.
    GroundTruth,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub scorer: Scorer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchVariant {
    pub ffn_kind: FfnKind,
    pub m: usize,
    pub s: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Empty means the pointwise/dense pair plus the m sweep 3..=7.
    pub variants: Vec<BenchVariant>,
    pub warmup_frames: usize,
    pub measured_frames: usize,
    pub repetitions: usize,
    pub batch_size: usize,
    /// Worker threads sharing one frozen model.
    pub replicas: usize,
    /// Load weights from the student checkpoint instead of random init
    /// (only used for variants matching the model config).
    pub use_checkpoint: bool,
}

impl Default for BenchVariant {
    fn default() -> Self {
        Self {
            ffn_kind: FfnKind::Pointwise,
            m: 5,
            s: 5,
        }
    }
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            variants: Vec::new(),
            warmup_frames: 100,
            measured_frames: 2000,
            repetitions: 5,
            batch_size: 1,
            replicas: 1,
            use_checkpoint: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub axes: Vec<String>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self {
            axes: vec!["losses".into()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub scene: SceneConfig,
    pub teachers: Vec<TeacherSpec>,
    pub paths: Paths,
    pub eval: EvalConfig,
    pub bench: BenchConfig,
    pub ablate: AblateConfig,
}

fn oracle(name: &str, seed: u64) -> TeacherSpec {
    TeacherSpec::Oracle {
        name: name.into(),
        noise_std: 0.1,
        blur_radius: 1,
        miss_rate: 0.1,
        seed,
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            scene: SceneConfig::default(),
            teachers: vec![oracle("t1", 1), oracle("t2", 2)],
            paths: Paths::default(),
            eval: EvalConfig::default(),
            bench: BenchConfig::default(),
            ablate: AblateConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.model.down_layers()?;
        self.train.validate()?;
        self.scene.validate()?;
        if self.teachers.is_empty() {
            return Err(Error::Config("at least one teacher is required".into()));
        }
        let mut names: Vec<&str> = self.teachers.iter().map(|t| t.name()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("teacher names must be unique".into()));
        }
        self.train.lambda_for(self.teachers.len())?;
        if self.scene.resolution != self.model.input_resolution {
            return Err(Error::Config(format!(
                "scene resolution {:?} differs from model input {:?}",
                self.scene.resolution, self.model.input_resolution
            )));
        }
        if self.model.frame_channels != 1 {
            return Err(Error::Config("synthetic frames are single-channel; set frame_channels to 1".into()));
        }
        let b = &self.bench;
        if b.repetitions == 0 || b.measured_frames == 0 || b.batch_size == 0 || b.replicas == 0 {
            return Err(Error::Config("bench repetitions, frames, batch size and replicas must be positive".into()));
        }
        if let Scorer::Teacher { name } = &self.eval.scorer {
            if !self.teachers.iter().any(|t| t.name() == name) {
                return Err(Error::Config(format!("eval scorer names unknown teacher {name}")));
            }
        }
        Ok(())
    }

    /// Applies `--seed` and `--out`.
    pub fn with_overrides(mut self, seed: Option<u64>, out: Option<&Path>) -> Self {
        if let Some(seed) = seed {
            self.train.seed = seed;
        }
        if let Some(out) = out {
            self.paths.root = out.to_path_buf();
        }
        self
    }
}
