//! TOML run configuration and its validation.
//!
//! ```toml
//! rule = "dkca"
//! p1 = 0.645
//! p2 = 0.874
//! sites = 129
//! steps = 200
//! chi = 64
//! cutoff = 1e-12
//! compressor = "svd"
//! densities = false
//! output = "dkca_critical"
//! ```
//!
//! The rule may also be given as a table, `[rule]` with `family = "dkca"`
//! and the same parameter keys.

use qca_core::evolution::{EvolutionConfig, InitialState, DEFAULT_CUTOFF};
use qca_core::registry::{build_update, compressors, LocalUpdate, RuleParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const OUTPUT_DIR_ENV: &str = "QCA_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleBlock {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p2: Option<f64>,
    /// Custom table in column order, `•••` first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

/// `rule = "dkca"` with parameters beside it, or a `[rule]` table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RuleSpec {
    Family(String),
    Block(RuleBlock),
}

impl RuleBlock {
    pub fn params(&self) -> RuleParams {
        RuleParams {
            n: self.n,
            p1: self.p1,
            p2: self.p2,
            p: self.p.clone(),
            dt: self.dt,
        }
    }
}

fn default_cutoff() -> f64 {
    DEFAULT_CUTOFF
}

fn default_compressor() -> String {
    "svd".to_string()
}

fn default_pairs() -> u64 {
    100_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub rule: RuleSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p2: Option<f64>,
    /// Custom table in column order, `•••` first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(alias = "L")]
    pub sites: usize,
    /// Recorded rows including the initial one.
    #[serde(alias = "T")]
    pub steps: usize,
    #[serde(default)]
    pub chi: Option<usize>,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    #[serde(default = "default_compressor")]
    pub compressor: String,
    #[serde(default)]
    pub densities: bool,
    /// Output stem; `.csv` and `.json` are appended.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    /// `"seed"` or a row of `0`/`1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<String>,
    /// Seed position, needed when `sites` is even.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_site: Option<usize>,
    /// Monte Carlo only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
    #[serde(default = "default_pairs")]
    pub pairs: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cheap checks only; nothing sized by `sites` is allocated here.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.sites == 0 {
            return bad("sites must be positive".into());
        }
        if self.steps == 0 {
            return bad("steps must be positive".into());
        }
        if self.chi == Some(0) {
            return bad("chi must be positive".into());
        }
        if !(0.0..1.0).contains(&self.cutoff) {
            return bad(format!("cutoff {} outside [0, 1)", self.cutoff));
        }
        if self.pairs == 0 {
            return bad("pairs must be positive".into());
        }
        if compressors().get(&self.compressor).is_none() {
            return bad(format!(
                "unknown compressor `{}` (known: {})",
                self.compressor,
                compressors().names().join(", ")
            ));
        }
        match self.initial.as_deref() {
            None | Some("seed") => match self.seed_site {
                Some(k) if k >= self.sites => return bad(format!("seed_site {k} outside row of {}", self.sites)),
                None if self.sites % 2 == 0 => {
                    return bad(format!("sites = {} is even; set seed_site or use an odd row", self.sites))
                }
                _ => {}
            },
            Some(row) => {
                let row: Vec<char> = row.chars().filter(|c| !c.is_whitespace()).collect();
                if row.len() != self.sites || row.iter().any(|c| !matches!(c, '0' | '1')) {
                    return bad(format!("initial must be \"seed\" or {} characters of 0/1", self.sites));
                }
            }
        }
        self.update()?;
        Ok(())
    }

    pub fn rule_block(&self) -> Result<RuleBlock, ConfigError> {
        let flat = [self.n.is_some(), self.p1.is_some(), self.p2.is_some(), self.p.is_some(), self.dt.is_some()];
        match &self.rule {
            RuleSpec::Family(family) => Ok(RuleBlock {
                family: family.clone(),
                n: self.n,
                p1: self.p1,
                p2: self.p2,
                p: self.p.clone(),
                dt: self.dt,
            }),
            RuleSpec::Block(b) if flat.iter().any(|&x| x) => Err(ConfigError::Invalid(format!(
                "rule parameters given both in the `{}` table and at top level",
                b.family
            ))),
            RuleSpec::Block(b) => Ok(b.clone()),
        }
    }

    pub fn update(&self) -> Result<LocalUpdate, ConfigError> {
        let b = self.rule_block()?;
        build_update(&b.family, &b.params()).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn initial_state(&self) -> InitialState {
        match self.initial.as_deref() {
            None | Some("seed") => match self.seed_site {
                Some(k) => InitialState::SeedAt(k),
                None => InitialState::Seed,
            },
            Some(row) => InitialState::Row(row.chars().filter(|c| !c.is_whitespace()).map(|c| c == '1').collect()),
        }
    }

    pub fn initial_row(&self) -> Vec<bool> {
        match self.initial_state() {
            InitialState::Seed => (0..self.sites).map(|k| k == self.sites / 2).collect(),
            InitialState::SeedAt(s) => (0..self.sites).map(|k| k == s).collect(),
            InitialState::Row(r) => r,
        }
    }

    pub fn evolution(&self) -> EvolutionConfig {
        EvolutionConfig::new(self.sites, self.steps, self.chi.unwrap_or(usize::MAX))
            .with_cutoff(self.cutoff)
            .with_densities(self.densities)
            .with_initial(self.initial_state())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Output stem resolved against `QCA_OUTPUT_DIR` when relative.
    pub fn output_stem(&self, default_name: &str) -> PathBuf {
        let stem = self
            .output
            .clone()
            .unwrap_or_else(|| format!("{}_{}", default_name, &self.hash()[..12]));
        resolve_output(Path::new(&stem))
    }
}

pub fn resolve_output(p: &Path) -> PathBuf {
    if p.is_absolute() {
        return p.to_path_buf();
    }
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) => Path::new(&dir).join(p),
        None => p.to_path_buf(),
    }
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}
