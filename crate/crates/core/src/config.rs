//! Training hyperparameters and their plain-text `key = value` form.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Bpr,
    Warp,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpr" => Ok(LossKind::Bpr),
            "warp" => Ok(LossKind::Warp),
            _ => Err(Error::Config(format!(
                "unknown loss {s:?} (expected bpr or warp)"
            ))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Bpr => "bpr",
            LossKind::Warp => "warp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Constant,
    /// `eta0 / (t + 1)^p` with `t` the zero-based epoch.
    InvScaling,
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "constant" => Ok(Schedule::Constant),
            "invscaling" => Ok(Schedule::InvScaling),
            _ => Err(Error::Config(format!(
                "unknown schedule {s:?} (expected constant or invscaling)"
            ))),
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schedule::Constant => "constant",
            Schedule::InvScaling => "invscaling",
        })
    }
}

/// Hyperparameters for one training run. The defaults are the reference
/// setting: 20 factors, WARP loss, 20 max samples, alpha (L2 weight) 0.1,
/// sigma (init scale) 0.1, learning rate 0.1 with inverse scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub factors: usize,
    pub loss: LossKind,
    pub epochs: usize,
    pub learning_rate: f64,
    pub schedule: Schedule,
    pub schedule_exponent: f64,
    /// L2 weight applied per update.
    pub regularization: f64,
    /// Negative draws per WARP step before giving up.
    pub max_samples: usize,
    /// Standard deviation of the initial latent factors.
    pub init_sigma: f64,
    /// Upper bound on the L2 norm of one update's data term. Zero disables
    /// clipping.
    pub max_step_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            factors: 20,
            loss: LossKind::Warp,
            epochs: 30,
            learning_rate: 0.1,
            schedule: Schedule::InvScaling,
            schedule_exponent: 0.25,
            regularization: 0.1,
            max_samples: 20,
            init_sigma: 0.1,
            max_step_norm: 0.5,
            seed: 42,
        }
    }
}

/// Keys accepted by [`TrainConfig::set`], in serialization order.
pub const CONFIG_KEYS: [&str; 11] = [
    "factors",
    "loss",
    "epochs",
    "learning_rate",
    "schedule",
    "schedule_exponent",
    "regularization",
    "max_samples",
    "init_sigma",
    "max_step_norm",
    "seed",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.factors < 1 {
            return Err(Error::Config("factors must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return Err(Error::Config("regularization must be >= 0".into()));
        }
        if self.max_samples < 1 {
            return Err(Error::Config("max_samples must be >= 1".into()));
        }
        if !(self.init_sigma > 0.0 && self.init_sigma.is_finite()) {
            return Err(Error::Config("init_sigma must be > 0".into()));
        }
        if !(self.max_step_norm >= 0.0 && self.max_step_norm.is_finite()) {
            return Err(Error::Config("max_step_norm must be >= 0".into()));
        }
        if !(self.schedule_exponent >= 0.0 && self.schedule_exponent.is_finite()) {
            return Err(Error::Config("schedule_exponent must be >= 0".into()));
        }
        Ok(())
    }

    /// Sets one field by name. `alpha` and `sigma` are accepted as aliases
    /// for `regularization` and `init_sigma`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "factors" => self.factors = parse(key, value)?,
            "loss" => self.loss = value.parse()?,
            "epochs" => self.epochs = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "schedule" => self.schedule = value.parse()?,
            "schedule_exponent" => self.schedule_exponent = parse(key, value)?,
            "regularization" | "alpha" => self.regularization = parse(key, value)?,
            "max_samples" => self.max_samples = parse(key, value)?,
            "init_sigma" | "sigma" => self.init_sigma = parse(key, value)?,
            "max_step_norm" => self.max_step_norm = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and `#`
    /// comments are skipped.
    pub fn apply_kv_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected `key = value`, got {raw:?}",
                    n + 1
                ))
            })?;
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut config = TrainConfig::default();
        config.apply_kv_text(text)?;
        Ok(config)
    }

    /// `key = value` lines for every field. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn to_kv_text(&self) -> String {
        let values = [
            self.factors.to_string(),
            self.loss.to_string(),
            self.epochs.to_string(),
            format!("{:?}", self.learning_rate),
            self.schedule.to_string(),
            format!("{:?}", self.schedule_exponent),
            format!("{:?}", self.regularization),
            self.max_samples.to_string(),
            format!("{:?}", self.init_sigma),
            format!("{:?}", self.max_step_norm),
            self.seed.to_string(),
        ];
        CONFIG_KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
