//! Run configuration: a single TOML or JSON document.
//!
//! Every field has a default, so an empty file is a valid configuration.
//! Command-line `key=value` overrides use dotted paths (`chart.h=6`); when the
//! same key is also set in the file, the file wins and a warning is emitted.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::synth::SyntheticSpec;
use crate::detector::FitConfig;
use crate::error::{Error, Result};
use crate::qcd::ChartConfig;
use crate::sphere::McConfig;
use crate::zb::{Activation, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden layer widths of the feature extractor (empty: identity).
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Width N1 of the reduced feature space.
    pub n1: usize,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32],
            activation: Activation::Tanh,
            n1: 16,
            seed: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub fit: FitConfig,
    pub mc: McConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreChange {
    /// Detector decisions on held-out normal samples.
    ValidationNormal,
    Bernoulli(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PostChange {
    /// Detector decisions on samples of the held-out classes.
    AbnormalClass,
    /// Decisions on points drawn uniformly from the detector's unit sphere.
    UniformSphere,
    /// Decisions on pure Gaussian noise inputs.
    Noise,
    Bernoulli(f64),
}

/// Stream simulation settings for a single pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub pre: PreChange,
    pub post: PostChange,
    pub change_time: u64,
    pub length: u64,
    pub trials: usize,
    pub seed: u64,
    /// Replace `chart.fpr` / `chart.tpr_lower` with the detector's bounds.
    pub model_from_bounds: bool,
    /// Smallest pre-change rate handed to the chart when the bound is zero.
    pub fpr_floor: f64,
    pub arl_trials: usize,
    pub arl_cap: u64,
    /// Size of the sampled pools for sphere and noise abnormalities.
    pub pool_size: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            pre: PreChange::ValidationNormal,
            post: PostChange::AbnormalClass,
            change_time: 200,
            length: 20_000,
            trials: 500,
            seed: 17,
            model_from_bounds: true,
            fpr_floor: 1e-3,
            arl_trials: 20,
            arl_cap: 1_000_000,
            pool_size: 20_000,
        }
    }
}

/// Grids for the figure-data CSVs written by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FigureConfig {
    pub seed: u64,
    pub trials: usize,
    pub change_time: u64,
    /// Streams longer than this count as missed detections.
    pub max_length: u64,
    pub window: usize,
    pub epsilon: f64,
    pub capacity_max_m: usize,
    /// σ runs over `kπ/(2·sigma_steps)`, `k = 1..sigma_steps`.
    pub capacity_sigma_steps: usize,
    pub accuracy_triggers: Vec<f64>,
    pub arl_h: Vec<f64>,
    pub arl_fpr: f64,
    pub arl_tpr_lower: f64,
    pub arl_trials: usize,
    pub arl_cap: u64,
    pub delay_h: Vec<f64>,
    pub delay_fpr: f64,
    pub delay_tpr: f64,
    pub delay_tpr_lower: f64,
    pub false_alarm_runs: usize,
    pub false_alarm_length: u64,
    pub dist_tpr: Vec<f64>,
    pub dist_fpr: Vec<f64>,
    pub dist_h: Vec<f64>,
    pub dist_tpr_lower: f64,
}

fn grid(start: f64, step: f64, count: usize) -> Vec<f64> {
    // rounded so that printed grid values are clean decimals
    (0..count)
        .map(|i| ((start + step * i as f64) * 1e6).round() / 1e6)
        .collect()
}

impl Default for FigureConfig {
    fn default() -> Self {
        let mut dist_tpr = grid(0.6, 0.05, 8);
        dist_tpr.push(0.99);
        let mut dist_fpr = vec![0.01];
        dist_fpr.extend(grid(0.05, 0.05, 8));
        Self {
            seed: 2021,
            trials: 500,
            change_time: 100,
            max_length: 100_000,
            window: 200,
            epsilon: 0.01,
            capacity_max_m: 128,
            capacity_sigma_steps: 18,
            accuracy_triggers: vec![0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.93, 0.96],
            arl_h: grid(2.0, 2.0, 6),
            arl_fpr: 0.05,
            arl_tpr_lower: 0.6,
            arl_trials: 20,
            arl_cap: 1_000_000,
            delay_h: grid(2.0, 2.0, 10),
            delay_fpr: 0.2,
            delay_tpr: 0.8,
            delay_tpr_lower: 0.6,
            false_alarm_runs: 500,
            false_alarm_length: 10_000,
            dist_tpr,
            dist_fpr,
            dist_h: grid(12.0, 2.0, 5),
            dist_tpr_lower: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data: SyntheticSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub detector: DetectorConfig,
    pub chart: ChartConfig,
    pub scenario: ScenarioConfig,
    pub figures: FigureConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            data: SyntheticSpec::default(),
            model: ModelConfig::default(),
            // slow enough that accuracy snapshots land in distinct epochs
            train: TrainConfig {
                learning_rate: 0.01,
                epochs: 40,
                ..TrainConfig::default()
            },
            detector: DetectorConfig::default(),
            chart: ChartConfig::default(),
            scenario: ScenarioConfig::default(),
            figures: FigureConfig::default(),
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.train.validate()?;
        if self.model.n1 < 2 {
            return Err(Error::InvalidConfig(format!(
                "model.n1 must be >= 2, got {}",
                self.model.n1
            )));
        }
        if self.model.hidden.contains(&0) {
            return Err(Error::InvalidConfig(
                "model.hidden widths must be >= 1".into(),
            ));
        }
        if self.scenario.trials == 0 {
            return Err(Error::InvalidConfig("scenario.trials must be >= 1".into()));
        }
        if !(self.scenario.fpr_floor > 0.0 && self.scenario.fpr_floor < 1.0) {
            return Err(Error::InvalidConfig(
                "scenario.fpr_floor must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    /// Canonical JSON (field order fixed by the type definitions).
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of [`Config::canonical_json`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parse a config document; `.json` files are JSON, anything else TOML.
pub fn parse_document(text: &str, path: &Path) -> Result<Value> {
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        Ok(serde_json::from_str(text)?)
    } else {
        let doc: toml::Table = toml::from_str(text)?;
        Ok(serde_json::to_value(doc)?)
    }
}

/// Interpret an override value as JSON when possible (`4`, `true`, `[1,2]`),
/// otherwise as a bare string (`cusum`).
pub fn parse_override(spec: &str) -> Result<(String, Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("override `{spec}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "override `{spec}` has an empty key"
        )));
    }
    let raw = raw.trim();
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

fn lookup<'a>(root: &'a Value, key: &str) -> Option<&'a Value> {
    key.split('.').try_fold(root, |v, part| v.get(part))
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        cur = cur
            .as_object_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("`{key}` does not name a config field")))?
            .entry(*part)
            .or_insert_with(|| Value::Object(Default::default()));
    }
    cur.as_object_mut()
        .ok_or_else(|| Error::InvalidConfig(format!("`{key}` does not name a config field")))?
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Defaults, then `overrides`, then the file document on top.
///
/// Returns the resolved config and one warning per override that the file
/// shadowed.
pub fn resolve(
    file: Option<Value>,
    overrides: &[(String, Value)],
) -> Result<(Config, Vec<String>)> {
    let mut root = serde_json::to_value(Config::default())?;
    let mut warnings = Vec::new();
    for (key, value) in overrides {
        if let Some(file_value) = file.as_ref().and_then(|f| lookup(f, key)) {
            if file_value != value {
                warnings.push(format!(
                    "`{key}` is set both on the command line ({value}) and in the config file ({file_value}); using the file value"
                ));
            }
        }
        set_path(&mut root, key, value.clone())?;
    }
    if let Some(doc) = file {
        merge(&mut root, doc);
    }
    let cfg: Config = serde_json::from_value(root)?;
    cfg.validate()?;
    Ok((cfg, warnings))
}

/// Read `path` (if any) and resolve it together with `overrides`.
pub fn load_config(
    path: Option<&Path>,
    overrides: &[(String, Value)],
) -> Result<(Config, Vec<String>)> {
    let file = match path {
        Some(p) => Some(parse_document(&std::fs::read_to_string(p)?, p)?),
        None => None,
    };
    resolve(file, overrides)
}
