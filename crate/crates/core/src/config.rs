//! Run configuration in a flat `key = value` text format.
//!
//! The canonical rendering (`to_text`) lists every key in a fixed order, and
//! its SHA-256 is the config hash stamped into checkpoints and reports.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::DEFAULT_MACRO_FLOOR;
use crate::error::{Error, Result};
use crate::kernel::KernelBank;
use crate::metrics::DEFAULT_FPR_CEILING;
use crate::model::{AblationMode, IneligiblePolicy, ModelDims};
use crate::nn::AdamWConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SplitStrategy {
    /// Oldest posts train, newest test.
    #[default]
    Chronological,
    Random,
}

impl FromStr for SplitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chronological" => Ok(SplitStrategy::Chronological),
            "random" => Ok(SplitStrategy::Random),
            other => Err(Error::config("split", format!("unknown strategy `{other}`"))),
        }
    }
}

impl fmt::Display for SplitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitStrategy::Chronological => "chronological",
            SplitStrategy::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub window_days: u32,
    pub proportion: f64,
    pub macro_floor: usize,
    pub kernels: KernelBank,
    pub embed_dim: usize,
    pub env_dim: usize,
    pub detector_dim: usize,
    pub optimizer: AdamWConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mode: AblationMode,
    pub spauc_fpr: f64,
    /// Real-to-fake ratios for skewed evaluation; empty disables it.
    pub skew_ratios: Vec<f64>,
    pub resamples: usize,
    pub split: SplitStrategy,
    pub train_frac: f64,
    pub val_frac: f64,
    pub ineligible: IneligiblePolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            window_days: 3,
            proportion: 0.1,
            macro_floor: DEFAULT_MACRO_FLOOR,
            kernels: KernelBank::default_bank(),
            embed_dim: 64,
            env_dim: 128,
            detector_dim: 128,
            optimizer: AdamWConfig::default(),
            epochs: 30,
            batch_size: 32,
            seed: 42,
            mode: AblationMode::Full,
            spauc_fpr: DEFAULT_FPR_CEILING,
            skew_ratios: Vec::new(),
            resamples: 100,
            split: SplitStrategy::Chronological,
            train_frac: 0.7,
            val_frac: 0.15,
            ineligible: IneligiblePolicy::Skip,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| Error::config(key, format!("`{value}`: {e}")))
}

impl RunConfig {
    pub fn dims(&self) -> ModelDims {
        ModelDims {
            embed: self.embed_dim,
            kernels: self.kernels.len(),
            env: self.env_dim,
            detector: self.detector_dim,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "window_days" => self.window_days = parse(key, value)?,
            "proportion" => self.proportion = parse(key, value)?,
            "macro_floor" => self.macro_floor = parse(key, value)?,
            "kernels" => self.kernels = value.parse()?,
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "env_dim" => self.env_dim = parse(key, value)?,
            "detector_dim" => self.detector_dim = parse(key, value)?,
            "lr" => self.optimizer.lr = parse(key, value)?,
            "beta1" => self.optimizer.beta1 = parse(key, value)?,
            "beta2" => self.optimizer.beta2 = parse(key, value)?,
            "eps" => self.optimizer.eps = parse(key, value)?,
            "weight_decay" => self.optimizer.weight_decay = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "mode" => self.mode = value.parse()?,
            "spauc_fpr" => self.spauc_fpr = parse(key, value)?,
            "skew_ratios" => {
                self.skew_ratios = if value.trim().is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|v| parse(key, v.trim()))
                        .collect::<Result<_>>()?
                }
            }
            "resamples" => self.resamples = parse(key, value)?,
            "split" => self.split = value.parse()?,
            "train_frac" => self.train_frac = parse(key, value)?,
            "val_frac" => self.val_frac = parse(key, value)?,
            "ineligible" => self.ineligible = value.parse()?,
            other => return Err(Error::config(other, "unknown key")),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", n + 1), "expected key = value"))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(key, reason))
            }
        };
        check(self.window_days >= 1, "window_days", "must be at least 1")?;
        check(
            self.proportion > 0.0 && self.proportion < 1.0,
            "proportion",
            "must lie in (0, 1)",
        )?;
        check(self.macro_floor >= 1, "macro_floor", "must be at least 1")?;
        check(self.embed_dim >= 1, "embed_dim", "must be positive")?;
        check(self.env_dim >= 1, "env_dim", "must be positive")?;
        check(self.detector_dim >= 1, "detector_dim", "must be positive")?;
        let o = &self.optimizer;
        check(o.lr > 0.0 && o.lr.is_finite(), "lr", "must be positive")?;
        check((0.0..1.0).contains(&o.beta1), "beta1", "must lie in [0, 1)")?;
        check((0.0..1.0).contains(&o.beta2), "beta2", "must lie in [0, 1)")?;
        check(o.eps > 0.0, "eps", "must be positive")?;
        check(o.weight_decay >= 0.0, "weight_decay", "must be non-negative")?;
        check(self.batch_size >= 1, "batch_size", "must be at least 1")?;
        check(
            self.spauc_fpr > 0.0 && self.spauc_fpr <= 1.0,
            "spauc_fpr",
            "must lie in (0, 1]",
        )?;
        check(
            self.skew_ratios.iter().all(|r| *r > 0.0 && r.is_finite()),
            "skew_ratios",
            "ratios must be positive",
        )?;
        check(self.resamples >= 1, "resamples", "must be at least 1")?;
        check(
            self.train_frac > 0.0
                && self.val_frac >= 0.0
                && self.train_frac + self.val_frac < 1.0,
            "train_frac",
            "train_frac > 0, val_frac >= 0 and their sum < 1",
        )?;
        Ok(())
    }

    /// Canonical text with every key, in a fixed order.
    pub fn to_text(&self) -> String {
        let ratios: Vec<String> = self.skew_ratios.iter().map(|r| r.to_string()).collect();
        let o = &self.optimizer;
        let rows: [(&str, String); 23] = [
            ("window_days", self.window_days.to_string()),
            ("proportion", self.proportion.to_string()),
            ("macro_floor", self.macro_floor.to_string()),
            ("kernels", self.kernels.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("env_dim", self.env_dim.to_string()),
            ("detector_dim", self.detector_dim.to_string()),
            ("lr", o.lr.to_string()),
            ("beta1", o.beta1.to_string()),
            ("beta2", o.beta2.to_string()),
            ("eps", o.eps.to_string()),
            ("weight_decay", o.weight_decay.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("seed", self.seed.to_string()),
            ("mode", self.mode.to_string()),
            ("spauc_fpr", self.spauc_fpr.to_string()),
            ("skew_ratios", ratios.join(",")),
            ("resamples", self.resamples.to_string()),
            ("split", self.split.to_string()),
            ("train_frac", self.train_frac.to_string()),
            ("val_frac", self.val_frac.to_string()),
            ("ineligible", self.ineligible.to_string()),
        ];
        rows.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    /// Hash of the keys that determine parameter shapes.
    pub fn shape_hash(&self) -> String {
        let text = format!(
            "embed_dim={}\nkernels={}\nenv_dim={}\ndetector_dim={}\n",
            self.embed_dim,
            self.kernels.len(),
            self.env_dim,
            self.detector_dim
        );
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
