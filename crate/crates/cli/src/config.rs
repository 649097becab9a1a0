//! Experiment configuration: defaults, key-value config files, flag overrides.
//!
//! Precedence is defaults < config file < command-line flags. Config files
//! are plain `key = value` lines using the same keys as the long flags, with
//! `#` comments.

use crate::CliError;
use sgdg2_core::optim::OptimizerKind;
use std::path::{Path, PathBuf};

pub const DATA_DIR_ENV: &str = "SGDG2_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dataset {
    Mnist,
    Fmnist,
    Blobs,
    Quadratic,
}

impl Dataset {
    pub fn as_str(&self) -> &'static str {
        match self {
            Dataset::Mnist => "mnist",
            Dataset::Fmnist => "fmnist",
            Dataset::Blobs => "blobs",
            Dataset::Quadratic => "quadratic",
        }
    }
}

impl std::str::FromStr for Dataset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mnist" => Ok(Dataset::Mnist),
            "fmnist" => Ok(Dataset::Fmnist),
            "blobs" => Ok(Dataset::Blobs),
            "quadratic" => Ok(Dataset::Quadratic),
            other => Err(format!(
                "unknown dataset {other:?} (expected mnist, fmnist, blobs or quadratic)"
            )),
        }
    }
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: Dataset,
    pub data_dir: Option<PathBuf>,
    pub optimizer: OptimizerKind,
    pub h0: f64,
    pub beta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Evaluation cadence in iterations; 0 evaluates once per epoch.
    pub eval_every: u64,
    pub out: PathBuf,
    pub svg: bool,
    /// Hidden layer widths; `None` picks the per-dataset default.
    pub hidden: Option<Vec<usize>>,
    pub quad_a: f64,
    pub quad_b: f64,
    pub x0: f64,
    pub blob_classes: usize,
    pub blob_per_class: usize,
    pub blob_dim: usize,
    pub blob_separation: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: Dataset::Blobs,
            data_dir: None,
            optimizer: OptimizerKind::SgdG2,
            h0: 1e-6,
            beta: 0.9,
            batch_size: 32,
            epochs: 10,
            seed: 42,
            eval_every: 0,
            out: PathBuf::from("runs"),
            svg: false,
            hidden: None,
            quad_a: 1.0,
            quad_b: 0.0,
            x0: 1.0,
            blob_classes: 4,
            blob_per_class: 300,
            blob_dim: 20,
            blob_separation: 10.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.h0 > 0.0) {
            return Err(CliError::Usage(format!(
                "h0 must be positive, got {}",
                self.h0
            )));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(CliError::Usage(format!(
                "beta must lie in (0, 1), got {}",
                self.beta
            )));
        }
        if self.batch_size == 0 {
            return Err(CliError::Usage("batch_size must be >= 1".into()));
        }
        if self.dataset == Dataset::Blobs && self.blob_classes < 2 {
            return Err(CliError::Usage("blobs need at least 2 classes".into()));
        }
        Ok(())
    }

    /// Hidden layer widths actually used for MLP datasets.
    pub fn hidden_dims(&self) -> Vec<usize> {
        match &self.hidden {
            Some(h) => h.clone(),
            None => match self.dataset {
                Dataset::Mnist | Dataset::Fmnist => vec![256, 256, 256],
                Dataset::Blobs => vec![64, 32],
                Dataset::Quadratic => vec![],
            },
        }
    }

    /// Data directory resolution: explicit config, then $SGDG2_DATA_DIR,
    /// then ./data.
    pub fn resolved_data_dir(&self) -> PathBuf {
        if let Some(d) = &self.data_dir {
            return d.clone();
        }
        if let Ok(d) = std::env::var(DATA_DIR_ENV) {
            if !d.is_empty() {
                return PathBuf::from(d);
            }
        }
        PathBuf::from("data")
    }

    /// Canonical one-line echo of every field, embedded in output headers.
    pub fn echo(&self) -> String {
        let hidden = self
            .hidden_dims()
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "dataset={} optimizer={} h0={} beta={} batch_size={} epochs={} seed={} eval_every={} hidden=[{}] quad_a={} quad_b={} x0={} blob_classes={} blob_per_class={} blob_dim={} blob_separation={}",
            self.dataset.as_str(),
            self.optimizer.as_str(),
            self.h0,
            self.beta,
            self.batch_size,
            self.epochs,
            self.seed,
            self.eval_every,
            hidden,
            self.quad_a,
            self.quad_b,
            self.x0,
            self.blob_classes,
            self.blob_per_class,
            self.blob_dim,
            self.blob_separation,
        )
    }

    /// Apply one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let bad = |e: String| CliError::Usage(format!("config key {key}: {e}"));
        match key {
            "dataset" => self.dataset = value.parse().map_err(bad)?,
            "data_dir" => self.data_dir = Some(PathBuf::from(value)),
            "optimizer" => self.optimizer = value.parse().map_err(bad)?,
            "h0" => self.h0 = parse_num(value).map_err(bad)?,
            "beta" => self.beta = parse_num(value).map_err(bad)?,
            "batch_size" => self.batch_size = parse_num(value).map_err(bad)?,
            "epochs" => self.epochs = parse_num(value).map_err(bad)?,
            "seed" => self.seed = parse_num(value).map_err(bad)?,
            "eval_every" => self.eval_every = parse_num(value).map_err(bad)?,
            "out" => self.out = PathBuf::from(value),
            "svg" => self.svg = value.parse::<bool>().map_err(|e| bad(e.to_string()))?,
            "hidden" => self.hidden = Some(parse_dims(value).map_err(bad)?),
            "quad_a" => self.quad_a = parse_num(value).map_err(bad)?,
            "quad_b" => self.quad_b = parse_num(value).map_err(bad)?,
            "x0" => self.x0 = parse_num(value).map_err(bad)?,
            "blob_classes" => self.blob_classes = parse_num(value).map_err(bad)?,
            "blob_per_class" => self.blob_per_class = parse_num(value).map_err(bad)?,
            "blob_dim" => self.blob_dim = parse_num(value).map_err(bad)?,
            "blob_separation" => self.blob_separation = parse_num(value).map_err(bad)?,
            other => return Err(CliError::Usage(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Load a `key = value` config file into `self`.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "{}:{}: expected key = value, got {raw:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| format!("cannot parse {value:?}: {e}"))
}

/// Parse comma-separated layer widths; an empty string means no hidden layer.
pub fn parse_dims(value: &str) -> Result<Vec<usize>, String> {
    let trimmed = value.trim();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    trimmed
        .split(',')
        .map(|part| parse_num(part.trim()))
        .collect()
}

/// Parse a comma-separated list of floats (e.g. an h0 sweep).
pub fn parse_float_list(value: &str) -> Result<Vec<f64>, String> {
    let trimmed = value.trim();
    if trimmed.is_empty() {
        return Err("empty list".into());
    }
    trimmed
        .split(',')
        .map(|part| parse_num(part.trim()))
        .collect()
}
