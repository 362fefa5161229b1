//! Experiment configuration.
//!
//! A config is a TOML file; every key has a default, so an empty file is a
//! valid config. Overrides use dotted keys (`sampler.tP=0.8`) and must name
//! an existing key. Values are read as TOML; anything that fails to parse
//! is taken as a bare string.

use std::fs;
use std::path::{Path, PathBuf};

use eaoa_core::baseline::Strategy;
use eaoa_core::energy::MarginConfig;
use eaoa_core::fusion::GmmConfig;
use eaoa_core::nn::SgdConfig;
use eaoa_core::pool::{SplitConfig, SyntheticSpec};
use eaoa_core::sampler::SamplerConfig;
use eaoa_core::scoring::ScoringConfig;
use eaoa_core::training::ModelTemplate;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub strategy: String,
    pub rounds: usize,
    pub budget: usize,
    pub seeds: Vec<u64>,
    /// Measure wall-clock time per round. Off by default so that reruns
    /// produce identical files.
    pub record_timing: bool,
    /// Write the pool state after every round.
    pub snapshots: bool,
    pub dataset: DatasetConfig,
    pub sampler: SamplerSection,
    pub density: DensitySection,
    pub energy: EnergySection,
    pub gmm: GmmSection,
    pub detector: ModelSection,
    pub classifier: ModelSection,
}

/// Either a feature file (`path`) or a synthetic Gaussian-blob universe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Feature file; empty selects the synthetic generator.
    pub path: String,
    pub total_classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub center_spread: f64,
    pub within_std: f64,
    pub mismatch_ratio: f64,
    pub initial_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    #[serde(rename = "tP")]
    pub target_precision: f64,
    pub k1: f64,
    pub a: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensitySection {
    #[serde(rename = "K")]
    pub k_neighbors: usize,
    pub smoothing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergySection {
    pub m_kno: f64,
    pub m_unk: f64,
    pub lambda_e: f64,
    pub use_eu: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmSection {
    pub max_iters: usize,
    pub tol: f64,
    pub variance_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub sgd: SgdSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdSection {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Eaoa.name().to_string(),
            rounds: 10,
            budget: 50,
            seeds: vec![0, 1, 2],
            record_timing: false,
            snapshots: false,
            dataset: DatasetConfig::default(),
            sampler: SamplerSection::default(),
            density: DensitySection::default(),
            energy: EnergySection::default(),
            gmm: GmmSection::default(),
            detector: ModelSection::default(),
            classifier: ModelSection::default(),
        }
    }
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let synth = SyntheticSpec::default();
        let split = SplitConfig::default();
        Self {
            path: String::new(),
            total_classes: synth.total_classes,
            per_class: synth.per_class,
            dim: synth.dim,
            center_spread: synth.center_spread,
            within_std: synth.within_std,
            mismatch_ratio: split.mismatch_ratio,
            initial_fraction: split.initial_fraction,
            test_fraction: split.test_fraction,
            seed: 0,
        }
    }
}

impl Default for SamplerSection {
    fn default() -> Self {
        let s = SamplerConfig::default();
        Self {
            target_precision: s.target_precision,
            k1: s.initial_k,
            a: s.amplitude,
            z: s.threshold,
        }
    }
}

impl Default for DensitySection {
    fn default() -> Self {
        let s = ScoringConfig::default();
        Self {
            k_neighbors: s.k_neighbors,
            smoothing: s.smoothing,
        }
    }
}

impl Default for EnergySection {
    fn default() -> Self {
        let m = MarginConfig::default();
        Self {
            m_kno: m.m_known,
            m_unk: m.m_unknown,
            lambda_e: m.lambda_e,
            use_eu: m.use_eu,
        }
    }
}

impl Default for GmmSection {
    fn default() -> Self {
        let g = GmmConfig::default();
        Self {
            max_iters: g.max_iters,
            tol: g.tol,
            variance_floor: g.variance_floor,
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden: ModelTemplate::default().hidden,
            sgd: SgdSection::default(),
        }
    }
}

impl Default for SgdSection {
    fn default() -> Self {
        let s = SgdConfig::default();
        Self {
            learning_rate: s.learning_rate,
            momentum: s.momentum,
            weight_decay: s.weight_decay,
            batch_size: s.batch_size,
            epochs: s.epochs,
            lr_decay_factor: s.lr_decay_factor,
            lr_decay_every: s.lr_decay_every,
        }
    }
}

impl DatasetConfig {
    pub fn is_synthetic(&self) -> bool {
        self.path.is_empty()
    }

    pub fn file_path(&self) -> Option<PathBuf> {
        (!self.is_synthetic()).then(|| PathBuf::from(&self.path))
    }

    /// Generator settings for one run seed.
    pub fn synthetic(&self, data_seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            total_classes: self.total_classes,
            per_class: self.per_class,
            dim: self.dim,
            center_spread: self.center_spread,
            within_std: self.within_std,
            seed: data_seed,
        }
    }

    pub fn split(&self, split_seed: u64) -> SplitConfig {
        SplitConfig {
            mismatch_ratio: self.mismatch_ratio,
            initial_fraction: self.initial_fraction,
            test_fraction: self.test_fraction,
            seed: split_seed,
        }
    }
}

impl SamplerSection {
    pub fn to_core(self) -> SamplerConfig {
        SamplerConfig {
            initial_k: self.k1,
            target_precision: self.target_precision,
            amplitude: self.a,
            threshold: self.z,
        }
    }
}

impl EnergySection {
    pub fn to_core(self) -> MarginConfig {
        MarginConfig {
            m_known: self.m_kno,
            m_unknown: self.m_unk,
            lambda_e: self.lambda_e,
            use_eu: self.use_eu,
        }
    }
}

impl GmmSection {
    pub fn to_core(self) -> GmmConfig {
        GmmConfig {
            max_iters: self.max_iters,
            tol: self.tol,
            variance_floor: self.variance_floor,
        }
    }
}

impl SgdSection {
    pub fn to_core(self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            epochs: self.epochs,
            lr_decay_factor: self.lr_decay_factor,
            lr_decay_every: self.lr_decay_every,
        }
    }
}

impl ModelSection {
    pub fn template(&self) -> ModelTemplate {
        ModelTemplate {
            hidden: self.hidden.clone(),
        }
    }
}

/// Rewrites a core validation error so it names the dotted config key.
fn scoped(section: &str, err: eaoa_core::Error) -> Error {
    match err {
        eaoa_core::Error::InvalidParameter { field, reason } => {
            Error::config(format!("{section}.{field}"), reason)
        }
        other => Error::Core(other),
    }
}

impl ExperimentConfig {
    pub fn strategy(&self) -> Result<Strategy> {
        self.strategy
            .parse()
            .map_err(|_| Error::config("strategy", format!("unknown strategy `{}`", self.strategy)))
    }

    pub fn scoring(&self) -> ScoringConfig {
        ScoringConfig {
            k_neighbors: self.density.k_neighbors,
            smoothing: self.density.smoothing,
            gmm: self.gmm.to_core(),
        }
    }

    /// Checks every field; the error names the first offending key.
    pub fn validate(&self) -> Result<()> {
        self.strategy()?;
        if self.rounds == 0 {
            return Err(Error::config("rounds", "must be at least 1"));
        }
        if self.budget == 0 {
            return Err(Error::config("budget", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::config("seeds", "seeds must be distinct"));
        }

        let d = &self.dataset;
        if d.is_synthetic() {
            d.synthetic(0)
                .validate()
                .map_err(|e| scoped("dataset", e))?;
            d.split(0)
                .validate(d.total_classes)
                .map_err(|e| scoped("dataset", e))?;
        } else {
            // The class count is only known once the file is read.
            d.split(0)
                .validate(usize::MAX / 2)
                .map_err(|e| scoped("dataset", e))?;
        }

        self.sampler
            .to_core()
            .validate()
            .map_err(|e| scoped("sampler", e))?;
        if self.density.k_neighbors == 0 {
            return Err(Error::config("density.K", "must be at least 1"));
        }
        if !(self.density.smoothing >= 0.0 && self.density.smoothing.is_finite()) {
            return Err(Error::config("density.smoothing", "must be non-negative"));
        }
        self.energy
            .to_core()
            .validate()
            .map_err(|e| scoped("energy", e))?;
        let g = self.gmm;
        if g.max_iters == 0 {
            return Err(Error::config("gmm.max_iters", "must be at least 1"));
        }
        if !(g.tol >= 0.0 && g.tol.is_finite()) {
            return Err(Error::config("gmm.tol", "must be non-negative"));
        }
        if !(g.variance_floor > 0.0 && g.variance_floor.is_finite()) {
            return Err(Error::config("gmm.variance_floor", "must be positive"));
        }
        for (name, model) in [
            ("detector", &self.detector),
            ("classifier", &self.classifier),
        ] {
            if model.hidden.contains(&0) {
                return Err(Error::config(
                    format!("{name}.hidden"),
                    "widths must be positive",
                ));
            }
            model
                .sgd
                .to_core()
                .validate()
                .map_err(|e| scoped(&format!("{name}.sgd"), e))?;
        }
        Ok(())
    }

    /// Parses TOML text without validating.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Reads a config file, applies overrides and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let base = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::from_toml_str(&text)?
            }
            None => Self::default(),
        };
        let cfg = base.with_overrides(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `key=value` overrides. Does not validate.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut table = self.as_table();
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::config(item.as_str(), "override must look like key=value"))?;
            let key = resolve_key(key.trim())?;
            set_value(&mut table, &key, parse_value(raw.trim()))?;
        }
        Table::try_into(table).map_err(|e| Error::config("override", e.message().to_string()))
    }

    fn as_table(&self) -> Table {
        Table::try_from(self).expect("config serialises to a table")
    }
}

fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn collect_keys(table: &Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in table {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(inner) => collect_keys(inner, &path, out),
            _ => out.push(path),
        }
    }
}

/// Every settable dotted key, sorted.
pub fn known_keys() -> Vec<String> {
    let mut keys = Vec::new();
    collect_keys(&ExperimentConfig::default().as_table(), "", &mut keys);
    keys.sort();
    keys
}

/// Expands a key to its full dotted form. A bare leaf such as `tP` or
/// `lambda_e` is accepted when exactly one key ends with it.
pub fn resolve_key(key: &str) -> Result<String> {
    let keys = known_keys();
    if keys.iter().any(|k| k == key) {
        return Ok(key.to_string());
    }
    let suffix = format!(".{key}");
    let matches: Vec<&String> = keys.iter().filter(|k| k.ends_with(&suffix)).collect();
    match matches.as_slice() {
        [one] => Ok((*one).clone()),
        [] => Err(Error::config(key, "unknown config key")),
        many => Err(Error::config(
            key,
            format!(
                "ambiguous key; use one of {}",
                many.iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        )),
    }
}

fn set_value(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().expect("split yields at least one part");
    let mut cur = table;
    for part in parts {
        cur = match cur.get_mut(part) {
            Some(Value::Table(t)) => t,
            _ => return Err(Error::config(key, "unknown config key")),
        };
    }
    let slot = cur
        .get_mut(leaf)
        .ok_or_else(|| Error::config(key, "unknown config key"))?;
    // Integers are accepted where floats are expected.
    *slot = match (&*slot, value) {
        (Value::Float(_), Value::Integer(i)) => Value::Float(i as f64),
        (_, v) => v,
    };
    Ok(())
}
