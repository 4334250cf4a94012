use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};
use crate::fairlet::SelectionPolicy;
use crate::hst::{default_max_depth, HstConfig};
use crate::kmedian::CenterPolicy;
use crate::types::{validate_params, FairnessParams, ParamWarning};

/// Every knob of a run. Loadable from TOML or JSON; CLI flags override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub features: Vec<String>,
    pub sensitive: Option<String>,
    /// Sensitive-attribute value mapped to blue; everything else is red.
    pub blue_value: Option<String>,
    pub r: u64,
    pub b: u64,
    pub k: usize,
    pub gamma: u32,
    pub seed: u64,
    pub max_depth: Option<u32>,
    pub sample: Option<usize>,
    pub trials: usize,
    pub selection: SelectionPolicy,
    pub center: CenterPolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            features: Vec::new(),
            sensitive: None,
            blue_value: None,
            r: 2,
            b: 1,
            k: 20,
            gamma: 2,
            seed: 0,
            max_depth: None,
            sample: None,
            trials: 10,
            selection: SelectionPolicy::default(),
            center: CenterPolicy::default(),
        }
    }
}

impl RunConfig {
    /// Parse a config file; `.json` is read as JSON, anything else as TOML.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Ok(serde_json::from_str(&text)?)
        } else {
            toml::from_str(&text).map_err(|e| FairError::Config(format!("{}: {e}", path.display())))
        }
    }

    /// Normalized fairness parameters plus a warning if they were reduced.
    pub fn params(&self) -> Result<(FairnessParams, Option<ParamWarning>)> {
        validate_params(self.r, self.b)
    }

    pub fn hst_config(&self) -> Result<HstConfig> {
        if self.gamma < 2 {
            return Err(FairError::InvalidGamma(self.gamma));
        }
        let depth = self.max_depth.unwrap_or_else(|| default_max_depth(self.gamma));
        if depth == 0 {
            return Err(FairError::Config("max_depth must be positive".into()));
        }
        Ok(HstConfig { gamma: self.gamma, seed: self.seed, max_depth: depth })
    }

    pub fn validate(&self) -> Result<FairnessParams> {
        let (p, warning) = self.params()?;
        if let Some(w) = warning {
            log::warn!("{w}");
        }
        self.hst_config()?;
        if self.k == 0 {
            return Err(FairError::Config("k must be positive".into()));
        }
        if self.trials == 0 {
            return Err(FairError::Config("trials must be positive".into()));
        }
        Ok(p)
    }
}
