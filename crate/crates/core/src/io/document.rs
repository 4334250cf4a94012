use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::cost::{CheckResult, CostReport};
use crate::error::Result;

pub const SCHEMA: &str = "fairkm/1";

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub embed_s: f64,
    pub fairlet_s: f64,
    pub cluster_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamsDoc {
    pub r: u64,
    pub b: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub n: usize,
    pub dim: usize,
    pub red: u64,
    pub blue: u64,
    pub balance: f64,
    pub blue_value: Option<String>,
    pub dropped_rows: Vec<usize>,
    /// Source data row of every point; fairlet indices refer to positions here.
    pub source_rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HstInfo {
    pub gamma: u32,
    pub seed: u64,
    pub max_depth: u32,
    pub height: u32,
    pub nodes: usize,
    pub delta: f64,
    pub clamped_coordinates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDoc {
    pub fairlets: Vec<usize>,
    pub center: Vec<f64>,
    pub red: u64,
    pub blue: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub schema: String,
    pub config: RunConfig,
    pub params: ParamsDoc,
    pub dataset: DatasetInfo,
    pub hst: HstInfo,
    pub fairlets: Vec<Vec<usize>>,
    /// Tree level at which each fairlet was formed.
    pub fairlet_levels: Vec<u32>,
    #[serde(default)]
    pub clusters: Vec<ClusterDoc>,
    pub report: CostReport,
    pub checks: Vec<CheckResult>,
    pub timings: Timings,
}

impl ResultDocument {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// JSON with every timing zeroed, for run-to-run comparison.
    pub fn to_json_without_timings(&self) -> Result<String> {
        let mut doc = self.clone();
        doc.timings = Timings::default();
        doc.to_json()
    }
}
