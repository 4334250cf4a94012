use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{FairError, Result};
use crate::types::{Color, ColoredDataset};

/// A dataset together with where its rows came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub data: ColoredDataset,
    /// 0-based data-row number (header excluded) of every point.
    pub source_rows: Vec<usize>,
    /// Data-row numbers skipped because a field was missing or unparseable.
    pub dropped_rows: Vec<usize>,
    pub colors: ColorMapping,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorMapping {
    pub column: String,
    pub blue: String,
    /// Every other value seen in the column.
    pub red: Vec<String>,
}

/// Read a header-first CSV as configured by `cfg`.
pub fn load_csv(cfg: &RunConfig) -> Result<LoadedDataset> {
    let path = cfg.input.as_deref().ok_or_else(|| FairError::Config("no input file given".into()))?;
    let file = std::fs::File::open(path)?;
    load_reader(file, path, cfg)
}

fn load_reader<R: std::io::Read>(reader: R, path: &Path, cfg: &RunConfig) -> Result<LoadedDataset> {
    if cfg.features.is_empty() {
        return Err(FairError::Config("no feature columns given".into()));
    }
    let sensitive = cfg
        .sensitive
        .as_deref()
        .ok_or_else(|| FairError::Config("no sensitive column given".into()))?;

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| FairError::MissingColumn(name.to_string()))
    };
    let feature_cols = cfg.features.iter().map(|f| column(f)).collect::<Result<Vec<_>>>()?;
    let sensitive_col = column(sensitive)?;

    let dim = feature_cols.len();
    let mut coords = Vec::new();
    let mut labels = Vec::new();
    let mut source_rows = Vec::new();
    let mut dropped_rows = Vec::new();
    let mut row_buf = Vec::with_capacity(dim);
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        row_buf.clear();
        let parsed = feature_cols.iter().all(|&c| match rec.get(c).and_then(|s| s.parse::<f64>().ok()) {
            Some(v) if v.is_finite() => {
                row_buf.push(v);
                true
            }
            _ => false,
        });
        let label = rec.get(sensitive_col).filter(|s| !s.is_empty());
        match (parsed, label) {
            (true, Some(label)) => {
                coords.extend_from_slice(&row_buf);
                labels.push(label.to_string());
                source_rows.push(row);
            }
            _ => {
                log::debug!("{}: dropping data row {row}", path.display());
                dropped_rows.push(row);
            }
        }
    }
    if !dropped_rows.is_empty() {
        log::warn!("{}: dropped {} malformed rows", path.display(), dropped_rows.len());
    }
    if labels.is_empty() {
        return Err(FairError::EmptyDataset);
    }

    let distinct: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
    let blue = match &cfg.blue_value {
        Some(v) => v.clone(),
        None if distinct.len() == 2 => distinct.iter().next_back().expect("two values").to_string(),
        None => return Err(FairError::SensitiveColumn { column: sensitive.to_string(), distinct: distinct.len() }),
    };
    if !distinct.contains(blue.as_str()) {
        log::warn!("blue value `{blue}` never occurs in column `{sensitive}`");
    }
    let mapping = ColorMapping {
        column: sensitive.to_string(),
        red: distinct.iter().filter(|v| **v != blue).map(|v| v.to_string()).collect(),
        blue,
    };
    let mut colors: Vec<Color> =
        labels.iter().map(|l| if *l == mapping.blue { Color::Blue } else { Color::Red }).collect();

    if let Some(s) = cfg.sample {
        let n = colors.len();
        if s > n {
            return Err(FairError::Config(format!("sample size {s} exceeds the {n} loaded points")));
        }
        if s == 0 {
            return Err(FairError::EmptyDataset);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut keep = index::sample(&mut rng, n, s).into_vec();
        keep.sort_unstable();
        coords = keep.iter().flat_map(|&i| coords[i * dim..(i + 1) * dim].to_vec()).collect();
        colors = keep.iter().map(|&i| colors[i]).collect();
        source_rows = keep.iter().map(|&i| source_rows[i]).collect();
    }

    Ok(LoadedDataset { data: ColoredDataset::from_flat(dim, coords, colors)?, source_rows, dropped_rows, colors: mapping })
}
