//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comments run to the end of the line
//! n = 4
//! L = 2
//! layers = 200
//! settings = 1,0,0; 0.7071067811865476,0.7071067811865476,0
//! trials = 1000000
//! seed = 42
//! tie_weights = false
//! ```
//!
//! `settings` may be repeated; each occurrence appends its triples. Only `n`
//! is required.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::MeasureVariant;
use crate::setting::{parse_triple, UnitVector3};
use crate::spline::SplineSystem;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    /// Number of `w` intervals `L`.
    pub weight_count: usize,
    /// Number of layer pairs `M`.
    pub pairs: usize,
    pub settings: Vec<UnitVector3>,
    pub trials: u64,
    pub seed: Option<u64>,
    pub tie_weights: bool,
    pub genuine_variant: bool,
    pub witness: bool,
    pub balanced: bool,
    /// Rescale settings of any length onto the sphere instead of rejecting
    /// them.
    pub normalize: bool,
}

impl ExperimentConfig {
    pub const DEFAULT_WEIGHT_COUNT: usize = 2;
    pub const DEFAULT_PAIRS: usize = 200;
    pub const DEFAULT_TRIALS: u64 = 1_000_000;

    pub fn new(n: usize) -> Self {
        Self {
            n,
            weight_count: Self::DEFAULT_WEIGHT_COUNT,
            pairs: Self::DEFAULT_PAIRS,
            settings: Vec::new(),
            trials: Self::DEFAULT_TRIALS,
            seed: None,
            tie_weights: false,
            genuine_variant: false,
            witness: false,
            balanced: false,
            normalize: false,
        }
    }

    pub fn variant(&self) -> MeasureVariant {
        if self.genuine_variant {
            MeasureVariant::Genuine
        } else {
            MeasureVariant::Spline
        }
    }

    /// Checks the ranges of every numeric field.
    pub fn validate(&self) -> Result<()> {
        SplineSystem::new(self.n)?;
        if self.weight_count == 0 {
            return Err(Error::domain("L must be at least 1"));
        }
        if self.pairs == 0 {
            return Err(Error::domain("layers (M) must be at least 1"));
        }
        if self.trials == 0 {
            return Err(Error::domain("trials must be at least 1"));
        }
        Ok(())
    }
}

fn config_error(line: usize, key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

fn parse_number<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| config_error(line, key, format!("`{value}` is not a valid number")))
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(config_error(
            line,
            key,
            format!("`{value}` is not a boolean"),
        )),
    }
}

/// Parses configuration text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::new(0);
    let mut seen = HashSet::new();
    let mut n_line = None;
    let mut raw_settings: Vec<(usize, [f64; 3])> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| config_error(line, content, "expected `key = value`"))?;
        if key != "settings" && !seen.insert(key.to_string()) {
            return Err(config_error(line, key, "duplicate key"));
        }
        match key {
            "n" => {
                config.n = parse_number(line, key, value)?;
                n_line = Some(line);
            }
            "L" => config.weight_count = parse_number(line, key, value)?,
            "layers" | "M" => config.pairs = parse_number(line, key, value)?,
            "trials" => config.trials = parse_number(line, key, value)?,
            "seed" => config.seed = Some(parse_number(line, key, value)?),
            "tie_weights" => config.tie_weights = parse_bool(line, key, value)?,
            "genuine_variant" => config.genuine_variant = parse_bool(line, key, value)?,
            "witness" => config.witness = parse_bool(line, key, value)?,
            "balanced" => config.balanced = parse_bool(line, key, value)?,
            "normalize" => config.normalize = parse_bool(line, key, value)?,
            "settings" => {
                for triple in value.split(';').map(str::trim).filter(|s| !s.is_empty()) {
                    let c =
                        parse_triple(triple).map_err(|e| config_error(line, key, e.to_string()))?;
                    raw_settings.push((line, c));
                }
            }
            _ => return Err(config_error(line, key, "unknown key")),
        }
    }
    let n_line = n_line.ok_or_else(|| Error::MissingKey("n".into()))?;
    if config.n < SplineSystem::MIN_N {
        return Err(config_error(
            n_line,
            "n",
            format!(
                "n must satisfy n >= {}, got {}",
                SplineSystem::MIN_N,
                config.n
            ),
        ));
    }
    for (key, ok) in [
        ("L", config.weight_count >= 1),
        ("layers", config.pairs >= 1),
        ("trials", config.trials >= 1),
    ] {
        if !ok {
            let line = text
                .lines()
                .position(|l| l.split('=').next().map(str::trim) == Some(key))
                .map_or(0, |i| i + 1);
            return Err(config_error(line, key, "must be at least 1"));
        }
    }
    for (line, c) in raw_settings {
        let v = if config.normalize {
            UnitVector3::normalize(c[0], c[1], c[2])
        } else {
            UnitVector3::new(c[0], c[1], c[2])
        };
        config
            .settings
            .push(v.map_err(|e| config_error(line, "settings", e.to_string()))?);
    }
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}
