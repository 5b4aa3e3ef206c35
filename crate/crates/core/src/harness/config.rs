//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::measure::FourierField;
use crate::pde::DEFAULT_CFL;
use crate::velocity::{presets, VelocitySet};

/// Where the velocity set comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocitySource {
    /// JSON velocity file, relative paths resolved against the config file.
    File(PathBuf),
    /// `model_one:<d>`, `root_two` or `single_plus`.
    Preset(String),
}

impl VelocitySource {
    pub fn load(&self, base: Option<&Path>) -> Result<VelocitySet, HarnessError> {
        match self {
            Self::File(p) => {
                let path = match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p.clone(),
                };
                Ok(VelocitySet::from_path(&path)?)
            }
            Self::Preset(name) => preset(name),
        }
    }
}

pub fn preset(name: &str) -> Result<VelocitySet, HarnessError> {
    match name {
        "root_two" => Ok(presets::root_two()),
        "single_plus" => Ok(presets::single_plus()),
        _ => {
            let d = name
                .strip_prefix("model_one:")
                .and_then(|d| d.parse::<usize>().ok())
                .filter(|&d| (1..=3).contains(&d))
                .ok_or_else(|| HarnessError::Config(format!("unknown velocity preset `{name}`")))?;
            Ok(presets::model_one(d))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `a < d/(κ+2d)` for an integer-independent pair-form set.
    TheoremRegime,
    Exploratory,
}

/// Test functional `F` with an identifier used in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Functional {
    pub id: String,
    #[serde(flatten)]
    pub field: FourierField,
}

fn default_cfl() -> f64 {
    DEFAULT_CFL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub velocity: VelocitySource,
    pub a: f64,
    pub n_list: Vec<usize>,
    #[serde(rename = "T")]
    pub t_end: f64,
    /// Report times; defaults to `[T]`.
    #[serde(default)]
    pub snapshots: Vec<f64>,
    pub replicas: usize,
    /// Initial perturbation `φ(0)`.
    pub phi: FourierField,
    pub functionals: Vec<Functional>,
    pub grid: usize,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Derived from `a` when absent.
    #[serde(default)]
    pub tag: Option<Regime>,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io { path: path.to_owned(), source: e })?;
        Self::from_json_str(&text)
    }

    /// Canonical JSON used for hashing and manifests.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of [`Self::canonical_json`], hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn report_times(&self) -> Vec<f64> {
        if self.snapshots.is_empty() {
            vec![self.t_end]
        } else {
            self.snapshots.clone()
        }
    }

    /// Check the configuration against the velocity set and settle the tag.
    pub fn validate(&self, vs: &VelocitySet) -> Result<Regime, HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if !(self.a > 0.0 && self.a < 1.0) {
            return bad(format!("a = {} must lie in (0, 1)", self.a));
        }
        if self.n_list.is_empty() || self.n_list.iter().any(|&n| n < 3) {
            return bad("n_list must be non-empty with every N ≥ 3".into());
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return bad(format!("T = {} must be finite and nonnegative", self.t_end));
        }
        let times = self.report_times();
        if times.windows(2).any(|w| w[0] >= w[1]) || times.iter().any(|&t| !(0.0..=self.t_end).contains(&t)) {
            return bad("snapshots must be strictly increasing within [0, T]".into());
        }
        if self.replicas < 2 {
            return bad("at least two replicas are needed for standard errors".into());
        }
        if self.grid < 3 {
            return bad("PDE grid must have at least 3 points per side".into());
        }
        if !(self.cfl > 0.0) {
            return bad("cfl must be positive".into());
        }
        let (d, e) = (vs.dim(), vs.dim() + 1);
        self.phi.validate(d, e)?;
        let mut ids = std::collections::HashSet::new();
        for f in &self.functionals {
            f.field.validate(d, e)?;
            if f.id.is_empty() || f.id.contains([',', '"', '\n']) || !ids.insert(f.id.as_str()) {
                return bad(format!("functional id `{}` must be unique and CSV-safe", f.id));
            }
        }
        if !vs.check_span()?.spans {
            return bad("velocity set does not span R^d".into());
        }
        if !vs.assumption_av_report().invertible {
            return bad("Gram matrix of the velocity set is singular".into());
        }
        let bound = vs.a_bound();
        let eligible = bound.is_some_and(|b| self.a < b) && vs.check_integer_independence()?;
        match self.tag {
            Some(Regime::TheoremRegime) if !eligible => bad(format!(
                "a = {} is not in the theorem regime for this velocity set (bound {:?}, pair form and integer independence required)",
                self.a, bound
            )),
            Some(tag) => Ok(tag),
            None if eligible => Ok(Regime::TheoremRegime),
            None => Ok(Regime::Exploratory),
        }
    }
}
