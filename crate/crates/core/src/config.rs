//! Run configuration: one JSON document with full defaulting.
//!
//! Precedence is built-in defaults, then the config file, then command-line
//! flags. Unknown fields are rejected with their line and column.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataprep::{BuildOptions, RouteSpec};
use crate::error::{Error, Result};
use crate::evalkit::DEFAULT_ALPHA;
use crate::numkit::Rng;
use crate::seq2seq::{BankLayout, ModelKind, TrainConfig, DEFAULT_EDB_HIDDEN, DEFAULT_EDU_HIDDEN, DEFAULT_ENC_HIDDEN};
use crate::simulator::SimConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub enc_hidden: usize,
    pub edu_hidden: usize,
    /// Per direction.
    pub edb_hidden: usize,
    /// Smallest current position covered by a model.
    pub bank_first: usize,
    pub bank_width: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            enc_hidden: DEFAULT_ENC_HIDDEN,
            edu_hidden: DEFAULT_EDU_HIDDEN,
            edb_hidden: DEFAULT_EDB_HIDDEN,
            bank_first: 3,
            bank_width: 5,
        }
    }
}

impl ModelConfig {
    pub fn dec_hidden(&self, kind: ModelKind) -> usize {
        match kind {
            ModelKind::Edu => self.edu_hidden,
            ModelKind::Edb => self.edb_hidden,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub i_values: Vec<usize>,
    pub j_step: usize,
    pub alpha: f64,
    /// Also score the persistence and historical-mean baselines.
    pub baselines: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            i_values: vec![5, 10, 15, 20, 25, 30],
            j_step: 5,
            alpha: DEFAULT_ALPHA,
            baselines: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    pub route: RouteSpec,
    pub simulator: SimConfig,
    pub prepare: BuildOptions,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            route: RouteSpec::default(),
            simulator: SimConfig::default(),
            prepare: BuildOptions::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

const STREAM_TRAIN: u64 = 0x0074_7261_696e;

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Usage(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.route.validate()?;
        self.sim_config().validate()?;
        self.train.validate()?;
        let m = &self.model;
        if m.enc_hidden == 0 || m.edu_hidden == 0 || m.edb_hidden == 0 {
            return Err(Error::Usage("model hidden sizes must be positive".into()));
        }
        self.layout()?;
        if self.eval.i_values.is_empty() || self.eval.j_step == 0 {
            return Err(Error::Usage("eval needs at least one i value and a positive j_step".into()));
        }
        if let Some(i) = self.eval.i_values.iter().find(|&&i| i < m.bank_first || i >= self.route.n_sections) {
            return Err(Error::Usage(format!(
                "eval.i_values entry {i} outside the covered positions {}..={}",
                m.bank_first,
                self.route.n_sections - 1
            )));
        }
        if !(self.eval.alpha > 0.0 && self.eval.alpha < 1.0) {
            return Err(Error::Usage(format!("eval.alpha must be in (0, 1), got {}", self.eval.alpha)));
        }
        Ok(())
    }

    /// Simulator settings with the run's route and master seed applied.
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            route: self.route,
            seed: self.seed,
            ..self.simulator.clone()
        }
    }

    pub fn layout(&self) -> Result<BankLayout> {
        BankLayout::standard(self.route.n_sections, self.model.bank_first, self.model.bank_width)
    }

    pub fn train_seed(&self) -> u64 {
        Rng::new(self.seed).derive(&[STREAM_TRAIN]).seed()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}
