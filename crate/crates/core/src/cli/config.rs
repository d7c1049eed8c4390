//! Flat `key = value` run configuration.
//!
//! ```text
//! # shared defaults
//! include = base.cfg
//! train.rl_episodes = 500
//! net.kind = CAMRL
//! ```
//!
//! Includes resolve relative to the including file and are applied first, so
//! later lines override them. Keys are `section.field` after the struct the
//! value lands in.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::crowdsim::{CrowdModel, ScenarioKind, SimParams};
use crate::vlearn::{DiscountConvention, NetConfig, PolicyKind, TrainConfig};

const MAX_INCLUDE_DEPTH: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{file}:{line}: expected `key = value`")]
    Syntax { file: String, line: usize },
    #[error("{file}:{line}: unknown key `{key}`")]
    UnknownKey { file: String, line: usize, key: String },
    #[error("{file}:{line}: bad value {value:?} for `{key}` (expected {expected})")]
    BadValue { file: String, line: usize, key: String, value: String, expected: &'static str },
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("include cycle or depth limit at {0}")]
    IncludeDepth(String),
    #[error("invalid setting: {0}")]
    Invalid(String),
}

/// Everything a run needs besides the command-line selectors.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    pub train: TrainConfig,
    pub net: NetConfig,
    pub scenario: ScenarioKind,
    pub crowd_model: CrowdModel,
    pub seed: u64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            net: NetConfig::new(PolicyKind::Camrl),
            scenario: ScenarioKind::BASELINE_CIRCLE,
            crowd_model: CrowdModel::Orca,
            seed: 0,
        }
    }
}

fn discount_name(d: DiscountConvention) -> &'static str {
    match d {
        DiscountConvention::TimeScaled => "time_scaled",
        DiscountConvention::PerStep => "per_step",
    }
}

impl RunSettings {
    /// Simulator parameters consistent with the training step and speed.
    pub fn sim(&self) -> SimParams {
        SimParams {
            time_step: self.train.time_step,
            time_limit: self.train.reward.time_limit,
            robot_v_pref: self.train.v_pref,
            ..SimParams::default()
        }
    }

    /// Every key with its effective value, sorted.
    pub fn entries(&self) -> BTreeMap<String, String> {
        let t = &self.train;
        let r = &t.reward;
        let mut m: BTreeMap<String, String> = [
            ("seed", self.seed.to_string()),
            ("scenario.kind", self.scenario.to_string()),
            ("scenario.crowd_model", self.crowd_model.to_string()),
            ("train.gamma", t.gamma.to_string()),
            ("train.discount", discount_name(t.discount).to_string()),
            ("train.epsilon_start", t.epsilon_start.to_string()),
            ("train.epsilon_end", t.epsilon_end.to_string()),
            ("train.epsilon_decay_fraction", t.epsilon_decay_fraction.to_string()),
            ("train.buffer_capacity", t.buffer_capacity.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.batches_per_episode", t.batches_per_episode.to_string()),
            ("train.target_sync_interval", t.target_sync_interval.to_string()),
            ("train.il_episodes", t.il_episodes.to_string()),
            ("train.il_epochs", t.il_epochs.to_string()),
            ("train.il_lr", t.il_lr.to_string()),
            ("train.rl_episodes", t.rl_episodes.to_string()),
            ("train.rl_lr", t.rl_lr.to_string()),
            ("train.time_step", t.time_step.to_string()),
            ("train.v_pref", t.v_pref.to_string()),
            ("reward.discomfort_radius", r.discomfort_radius.to_string()),
            ("reward.collision_penalty", r.collision_penalty.to_string()),
            ("reward.goal_reward", r.goal_reward.to_string()),
            ("reward.timeout_penalty", r.timeout_penalty.to_string()),
            ("reward.time_limit", r.time_limit.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        m.extend(self.net.to_meta());
        m
    }

    /// SHA-256 over the sorted effective settings; two configs that resolve to
    /// the same values hash the same however they were written.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Applies one key. Errors carry no location; the caller adds it.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), SetError> {
        fn p<T: FromStr>(v: &str, expected: &'static str) -> Result<T, SetError> {
            v.parse().map_err(|_| SetError::BadValue(expected))
        }
        const F: &str = "a number";
        const U: &str = "a non-negative integer";
        let t = &mut self.train;
        match key {
            "seed" => self.seed = p(value, U)?,
            "scenario.kind" => self.scenario = p(value, "an environment name such as baseline-circle")?,
            "scenario.crowd_model" => self.crowd_model = p(value, "orca or sfm")?,
            "train.gamma" => t.gamma = p(value, F)?,
            "train.discount" => {
                t.discount = match value {
                    "time_scaled" => DiscountConvention::TimeScaled,
                    "per_step" => DiscountConvention::PerStep,
                    _ => return Err(SetError::BadValue("time_scaled or per_step")),
                }
            }
            "train.epsilon_start" => t.epsilon_start = p(value, F)?,
            "train.epsilon_end" => t.epsilon_end = p(value, F)?,
            "train.epsilon_decay_fraction" => t.epsilon_decay_fraction = p(value, F)?,
            "train.buffer_capacity" => t.buffer_capacity = p(value, U)?,
            "train.batch_size" => t.batch_size = p(value, U)?,
            "train.batches_per_episode" => t.batches_per_episode = p(value, U)?,
            "train.target_sync_interval" => t.target_sync_interval = p(value, U)?,
            "train.il_episodes" => t.il_episodes = p(value, U)?,
            "train.il_epochs" => t.il_epochs = p(value, U)?,
            "train.il_lr" => t.il_lr = p(value, F)?,
            "train.rl_episodes" => t.rl_episodes = p(value, U)?,
            "train.rl_lr" => t.rl_lr = p(value, F)?,
            "train.time_step" => {
                t.time_step = p(value, F)?;
                t.reward.time_step = t.time_step;
            }
            "train.v_pref" => t.v_pref = p(value, F)?,
            "reward.discomfort_radius" => t.reward.discomfort_radius = p(value, F)?,
            "reward.collision_penalty" => t.reward.collision_penalty = p(value, F)?,
            "reward.goal_reward" => t.reward.goal_reward = p(value, F)?,
            "reward.timeout_penalty" => t.reward.timeout_penalty = p(value, F)?,
            "reward.time_limit" => t.reward.time_limit = p(value, F)?,
            "net.kind" => {
                let kind: PolicyKind = p(value, "CAMRL, LSTMRL or CADRL-MLP")?;
                self.net = NetConfig { kind, window: NetConfig::new(kind).window, ..self.net };
            }
            "net.window" => self.net.window = p(value, U)?,
            "net.embed" => self.net.embed = p(value, U)?,
            "net.hidden" => self.net.hidden = p(value, U)?,
            "net.mlp" => self.net.mlp = p(value, U)?,
            "mamba.d_model" => self.net.mamba.d_model = p(value, U)?,
            "mamba.d_state" => self.net.mamba.d_state = p(value, U)?,
            "mamba.expand" => self.net.mamba.expand = p(value, U)?,
            "mamba.conv_width" => self.net.mamba.conv_width = p(value, U)?,
            "mamba.dt_rank" => self.net.mamba.dt_rank = p(value, U)?,
            "mamba.dt_min" => self.net.mamba.dt_min = p(value, F)?,
            "mamba.dt_max" => self.net.mamba.dt_max = p(value, F)?,
            "mamba.norm_eps" => self.net.mamba.norm_eps = p(value, F)?,
            _ => return Err(SetError::UnknownKey),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.sim().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.net.embed == 0 || self.net.hidden == 0 || self.net.mlp == 0 || self.net.mamba.d_model == 0 {
            return Err(ConfigError::Invalid("network widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub enum SetError {
    UnknownKey,
    BadValue(&'static str),
}

/// Parses `text` (from `origin`) on top of `settings`.
pub fn apply_config_text(settings: &mut RunSettings, text: &str, origin: &Path) -> Result<(), ConfigError> {
    apply(settings, text, origin, 0)
}

pub fn load_config(path: &Path) -> Result<RunSettings, ConfigError> {
    let mut s = RunSettings::default();
    apply_file(&mut s, path, 0)?;
    s.validate()?;
    Ok(s)
}

fn apply_file(settings: &mut RunSettings, path: &Path, depth: usize) -> Result<(), ConfigError> {
    if depth > MAX_INCLUDE_DEPTH {
        return Err(ConfigError::IncludeDepth(path.display().to_string()));
    }
    let text =
        fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
    apply(settings, &text, path, depth)
}

fn apply(settings: &mut RunSettings, text: &str, origin: &Path, depth: usize) -> Result<(), ConfigError> {
    let file = origin.display().to_string();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .filter(|(k, _)| !k.is_empty())
            .ok_or(ConfigError::Syntax { file: file.clone(), line: i + 1 })?;
        if key == "include" {
            let base: PathBuf = origin.parent().map(Path::to_path_buf).unwrap_or_default();
            apply_file(settings, &base.join(value), depth + 1)?;
            continue;
        }
        settings.set(key, value).map_err(|e| match e {
            SetError::UnknownKey => ConfigError::UnknownKey { file: file.clone(), line: i + 1, key: key.to_string() },
            SetError::BadValue(expected) => ConfigError::BadValue {
                file: file.clone(),
                line: i + 1,
                key: key.to_string(),
                value: value.to_string(),
                expected,
            },
        })?;
    }
    Ok(())
}
