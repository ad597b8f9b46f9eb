use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{BlindMode, Preprocessing};
use crate::error::{Error, Result};
use crate::eval::ReportOptions;
use crate::model::ModelConfig;
use crate::optim::{AdamConfig, TrainSchedule};
use crate::tensor::Rng;

/// Where the corpora live and how they are preprocessed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Pair schema JSON; the built-in i2b2 schema when absent.
    pub schema: Option<PathBuf>,
    /// word2vec text vectors for the word table.
    pub embeddings: Option<PathBuf>,
    pub clip: i64,
    pub blind: BlindMode,
    pub min_count: usize,
    /// Share of training samples held out for early stopping when no dev
    /// corpus is given. 0 disables early stopping.
    pub dev_fraction: f64,
    /// Skip invalid corpus lines instead of failing.
    pub lenient: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        let p = Preprocessing::default();
        Self {
            train: None,
            dev: None,
            test: None,
            schema: None,
            embeddings: None,
            clip: p.clip,
            blind: p.blind,
            min_count: p.min_count,
            dev_fraction: 0.1,
            lenient: false,
        }
    }
}

impl DataConfig {
    pub fn preprocessing(&self) -> Preprocessing {
        Preprocessing {
            clip: self.clip,
            blind: self.blind,
            min_count: self.min_count,
        }
    }
}

/// Everything a run needs. Unknown keys are rejected; omitted keys take
/// their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainSchedule,
    pub adam: AdamConfig,
    pub data: DataConfig,
    pub eval: ReportOptions,
    /// Master seed. When set, model initialization and shuffling seeds are
    /// derived from it.
    pub seed: Option<u64>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainSchedule::default(),
            adam: AdamConfig::default(),
            data: DataConfig::default(),
            eval: ReportOptions::default(),
            seed: None,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies command-line overrides and derives seeds.
    pub fn resolve(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        if seed.is_some() {
            self.seed = seed;
        }
        if let Some(out) = out {
            self.out = out;
        }
        if let Some(s) = self.seed {
            self.model.seed = Rng::derive(s, 1).next_u64();
            self.train.shuffle_seed = Rng::derive(s, 2).next_u64();
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.adam.validate()?;
        if let Some(ci) = &self.eval.ci {
            ci.validate()?;
        }
        if !(0.0..1.0).contains(&self.data.dev_fraction) {
            return Err(Error::Config(format!(
                "dev_fraction must lie in [0, 1), got {}",
                self.data.dev_fraction
            )));
        }
        if self.data.clip < 1 {
            return Err(Error::Config("clip must be at least 1".into()));
        }
        Ok(())
    }
}
