//! Run configuration: everything a full analysis needs, with defaults for
//! all fields except the two input paths.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Hyperparameters;
use crate::quality::{CutoffPolicy, EnumerationConfig, ExtraConstraints, RoBTable};
use crate::robust::{QuantityKind, QuantitySpec, Target};
use crate::sampler::McmcSettings;

/// Which risk-of-bias domains drive the quality set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDomainSelection", into = "RawDomainSelection")]
pub enum DomainSelection {
    /// Every domain the table rates (multi-domain unless the table has one).
    All,
    /// An explicit list of domain ids.
    Domains(Vec<u8>),
}

impl Default for DomainSelection {
    fn default() -> Self {
        Self::All
    }
}

impl DomainSelection {
    /// The concrete domain list for a given table.
    pub fn resolve(&self, table: &RoBTable) -> Vec<u8> {
        match self {
            Self::All => table.domains(),
            Self::Domains(d) => d.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RawDomainSelection {
    Keyword(String),
    List(Vec<u8>),
}

impl TryFrom<RawDomainSelection> for DomainSelection {
    type Error = String;

    fn try_from(raw: RawDomainSelection) -> std::result::Result<Self, String> {
        match raw {
            RawDomainSelection::Keyword(s) if s == "all" => Ok(Self::All),
            RawDomainSelection::Keyword(s) => Err(format!(
                "domain selection must be \"all\" or a list of ids, got \"{s}\""
            )),
            RawDomainSelection::List(d) => Ok(Self::Domains(d)),
        }
    }
}

impl From<DomainSelection> for RawDomainSelection {
    fn from(sel: DomainSelection) -> Self {
        match sel {
            DomainSelection::All => Self::Keyword("all".into()),
            DomainSelection::Domains(d) => Self::List(d),
        }
    }
}

/// Which summaries of the overall effect to bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuantitiesConfig {
    /// Exceedance thresholds for `mu` (log odds-ratio scale).
    pub thresholds: Vec<f64>,
    /// Percentile levels for `mu` (study effects always get 2.5%/97.5%
    /// when those levels are present, for the forest plot).
    pub percentile_levels: Vec<f64>,
}

impl Default for QuantitiesConfig {
    fn default() -> Self {
        Self {
            thresholds: vec![1.0],
            percentile_levels: vec![0.05, 0.025, 0.975],
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("robustmeta-out")
}

fn default_decision_certainty() -> f64 {
    0.95
}

/// A complete, reproducible description of one analysis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// CSV of study counts.
    pub data_path: PathBuf,
    /// JSON risk-of-bias table.
    pub rob_path: PathBuf,
    #[serde(default)]
    pub domain_selection: DomainSelection,
    #[serde(default)]
    pub cutoff_policy: CutoffPolicy,
    /// Required when `domain_selection` spans more than one domain.
    #[serde(default)]
    pub extra_constraints: Option<ExtraConstraints>,
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
    #[serde(default)]
    pub mcmc: McmcSettings,
    #[serde(default)]
    pub enumeration: EnumerationConfig,
    #[serde(default)]
    pub quantities: QuantitiesConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Master seed; when set it overrides `mcmc.seed` at resolution time.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Certainty level an exceedance probability is judged against when
    /// flagging decision sensitivity.
    #[serde(default = "default_decision_certainty")]
    pub decision_certainty: f64,
}

impl RunConfig {
    /// A configuration with defaults everywhere but the input paths.
    pub fn new(data_path: impl Into<PathBuf>, rob_path: impl Into<PathBuf>) -> Self {
        Self {
            data_path: data_path.into(),
            rob_path: rob_path.into(),
            domain_selection: DomainSelection::default(),
            cutoff_policy: CutoffPolicy::default(),
            extra_constraints: None,
            hyperparameters: Hyperparameters::default(),
            mcmc: McmcSettings::default(),
            enumeration: EnumerationConfig::default(),
            quantities: QuantitiesConfig::default(),
            output_dir: default_output_dir(),
            seed: None,
            decision_certainty: default_decision_certainty(),
        }
    }

    /// Applies cross-field defaults: the master seed, when present, becomes
    /// the sampler seed.
    pub fn resolve(mut self) -> Self {
        if let Some(seed) = self.seed {
            self.mcmc.seed = seed;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.data_path.as_os_str().is_empty() {
            return Err(Error::Config("data_path is empty".into()));
        }
        if self.rob_path.as_os_str().is_empty() {
            return Err(Error::Config("rob_path is empty".into()));
        }
        if let DomainSelection::Domains(d) = &self.domain_selection {
            if d.is_empty() {
                return Err(Error::Config("domain selection list is empty".into()));
            }
        }
        self.cutoff_policy.validate()?;
        self.hyperparameters.validate()?;
        self.mcmc.validate()?;
        self.enumeration.validate()?;
        for &t in &self.quantities.thresholds {
            if !t.is_finite() {
                return Err(Error::Config(format!(
                    "exceedance threshold {t} must be finite"
                )));
            }
        }
        for &p in &self.quantities.percentile_levels {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Config(format!(
                    "percentile level {p} outside (0, 1)"
                )));
            }
        }
        if !(self.decision_certainty > 0.0 && self.decision_certainty < 1.0) {
            return Err(Error::Config(format!(
                "decision certainty {} outside (0, 1)",
                self.decision_certainty
            )));
        }
        Ok(())
    }

    /// The full quantity list for a `k`-study analysis: overall-effect
    /// expectation, exceedance at each threshold, and each percentile
    /// level; then per study the effect expectation and the 2.5%/97.5%
    /// percentiles (when configured) for the forest plot.
    pub fn expand_quantities(&self, k: usize) -> Vec<QuantitySpec> {
        let mut out = vec![QuantitySpec {
            kind: QuantityKind::Expectation,
            target: Target::Mu,
        }];
        for &t in &self.quantities.thresholds {
            out.push(QuantitySpec {
                kind: QuantityKind::Exceedance { threshold: t },
                target: Target::Mu,
            });
        }
        for &p in &self.quantities.percentile_levels {
            out.push(QuantitySpec {
                kind: QuantityKind::Percentile { level: p },
                target: Target::Mu,
            });
        }
        let delta_levels: Vec<f64> = [0.025f64, 0.975]
            .into_iter()
            .filter(|l| {
                self.quantities
                    .percentile_levels
                    .iter()
                    .any(|p| p.to_bits() == l.to_bits())
            })
            .collect();
        for study in 0..k {
            out.push(QuantitySpec {
                kind: QuantityKind::Expectation,
                target: Target::Delta { study },
            });
            for &level in &delta_levels {
                out.push(QuantitySpec {
                    kind: QuantityKind::Percentile { level },
                    target: Target::Delta { study },
                });
            }
        }
        out
    }
}

/// Loads a run configuration from JSON. A persisted run manifest (which
/// wraps the configuration under a `"config"` key) is accepted directly, so
/// a manifest is replayable as-is.
pub fn load_run_config(path: &std::path::Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("parsing {}: {e}", path.display())))?;
    let config_value = match value.get("config") {
        Some(inner) => inner.clone(),
        None => value,
    };
    let config: RunConfig = serde_json::from_value(config_value)
        .map_err(|e| Error::Config(format!("parsing {}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}
