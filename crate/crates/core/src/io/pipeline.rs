use std::time::Instant;

use super::config::RunConfig;
use super::document::{ClusterDoc, DatasetInfo, HstInfo, ParamsDoc, ResultDocument, Timings, SCHEMA};
use super::load::{load_csv, LoadedDataset};
use crate::cost::{audit, AuditReport};
use crate::error::{FairError, Result};
use crate::fairlet::{fairlet_decomposition_with, DecompositionConfig, Fairlet, FairletSet};
use crate::hst::{build_hst, HstTree};
use crate::kmedian::{cluster_fairlets, Cluster, FairClustering};
use crate::types::{balance_f64, euclidean, is_rb_balanced, ColorCount, ColoredDataset, FairnessParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Embed and decompose only.
    Decompose,
    /// Embed, decompose and merge fairlets into `k` clusters.
    Cluster,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub document: ResultDocument,
    pub tree: HstTree,
    pub fairlets: FairletSet,
    pub clustering: Option<FairClustering>,
}

/// Largest `b/r` with `r <= 20` that `counts` satisfies.
pub fn suggest_params(counts: ColorCount) -> Option<FairnessParams> {
    let mut best: Option<FairnessParams> = None;
    for r in 1..=20u64 {
        for b in 1..=r {
            let Ok(p) = FairnessParams::new(r, b) else { continue };
            if !is_rb_balanced(counts, p) {
                continue;
            }
            if best.is_none_or(|q| p.target() > q.target()) {
                best = Some(p);
            }
        }
    }
    best
}

/// Fail unless the whole dataset meets the target balance.
pub fn precheck(data: &ColoredDataset, p: FairnessParams) -> Result<()> {
    let counts = data.counts();
    if is_rb_balanced(counts, p) {
        return Ok(());
    }
    let suggestion = match suggest_params(counts) {
        Some(q) => format!("largest feasible parameters with r <= 20 are r={}, b={}", q.r(), q.b()),
        None => "no parameters are feasible because one colour is absent".to_string(),
    };
    Err(FairError::BalancePrecheck { balance: balance_f64(counts), target: p.target_f64(), suggestion })
}

/// Load the configured CSV and run the full pipeline.
pub fn run_pipeline(cfg: &RunConfig) -> Result<ResultDocument> {
    let loaded = load_csv(cfg)?;
    Ok(run_on_dataset(&loaded, cfg, Mode::Cluster)?.document)
}

pub fn run_on_dataset(loaded: &LoadedDataset, cfg: &RunConfig, mode: Mode) -> Result<RunOutcome> {
    let p = cfg.validate()?;
    let hst_cfg = cfg.hst_config()?;
    let data = &loaded.data;
    precheck(data, p)?;

    let t0 = Instant::now();
    let tree = build_hst(data, hst_cfg)?;
    let t1 = Instant::now();
    let fairlets = fairlet_decomposition_with(&tree, data, p, DecompositionConfig { selection: cfg.selection })?;
    let t2 = Instant::now();
    let clustering = match mode {
        Mode::Decompose => None,
        Mode::Cluster => Some(cluster_fairlets(data, &fairlets, cfg.k, cfg.seed, cfg.center)?),
    };
    let t3 = Instant::now();

    let report = audit(data, &fairlets, clustering.as_ref(), p, Some(&tree));
    if !report.passed() {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        return Err(FairError::Invariant(format!("refusing to emit a document failing {names:?}")));
    }
    let timings = Timings {
        embed_s: (t1 - t0).as_secs_f64(),
        fairlet_s: (t2 - t1).as_secs_f64(),
        cluster_s: (t3 - t2).as_secs_f64(),
        total_s: (t3 - t0).as_secs_f64(),
    };
    let document = build_document(loaded, cfg, p, &tree, &fairlets, clustering.as_ref(), report, timings);
    Ok(RunOutcome { document, tree, fairlets, clustering })
}

#[allow(clippy::too_many_arguments)]
fn build_document(
    loaded: &LoadedDataset,
    cfg: &RunConfig,
    p: FairnessParams,
    tree: &HstTree,
    fs: &FairletSet,
    fc: Option<&FairClustering>,
    audit: AuditReport,
    timings: Timings,
) -> ResultDocument {
    let counts = loaded.data.counts();
    ResultDocument {
        schema: SCHEMA.to_string(),
        config: cfg.clone(),
        params: ParamsDoc { r: p.r(), b: p.b() },
        dataset: DatasetInfo {
            n: loaded.data.len(),
            dim: loaded.data.dim(),
            red: counts.red,
            blue: counts.blue,
            balance: balance_f64(counts),
            blue_value: Some(loaded.colors.blue.clone()),
            dropped_rows: loaded.dropped_rows.clone(),
            source_rows: loaded.source_rows.clone(),
        },
        hst: HstInfo {
            gamma: tree.gamma(),
            seed: cfg.seed,
            max_depth: tree.max_depth(),
            height: tree.height(),
            nodes: tree.nodes().len(),
            delta: tree.delta(),
            clamped_coordinates: tree.clamped_coordinates(),
        },
        fairlets: fs.fairlets().iter().map(|f| f.members.clone()).collect(),
        fairlet_levels: fs.fairlets().iter().map(|f| f.level).collect(),
        clusters: fc
            .map(|fc| {
                fc.clusters
                    .iter()
                    .map(|c| ClusterDoc {
                        fairlets: c.fairlets.clone(),
                        center: c.center.clone(),
                        red: c.counts.red,
                        blue: c.counts.blue,
                    })
                    .collect()
            })
            .unwrap_or_default(),
        report: audit.report,
        checks: audit.checks,
        timings,
    }
}

/// Re-audit a stored document against the dataset it was computed on. The
/// tree is rebuilt from the echoed configuration.
pub fn evaluate(loaded: &LoadedDataset, doc: &ResultDocument) -> Result<AuditReport> {
    let p = doc.config.validate()?;
    let data = &loaded.data;
    if doc.dataset.n != data.len() {
        return Err(FairError::DimensionMismatch { expected: doc.dataset.n, got: data.len() });
    }
    let tree = build_hst(data, doc.config.hst_config()?)?;
    let fairlets: Vec<Fairlet> = doc
        .fairlets
        .iter()
        .zip(doc.fairlet_levels.iter().chain(std::iter::repeat(&0)))
        .map(|(m, &level)| Fairlet { members: m.clone(), node: tree.root(), level })
        .collect();
    let fs = FairletSet::from_fairlets(fairlets, data.len());

    let fc = (!doc.clusters.is_empty()).then(|| {
        let n = data.len();
        let mut cost = 0.0;
        let mut cluster_of_fairlet = vec![usize::MAX; fs.len()];
        let clusters = doc
            .clusters
            .iter()
            .enumerate()
            .map(|(cid, c)| {
                for &fid in &c.fairlets {
                    if let Some(slot) = cluster_of_fairlet.get_mut(fid) {
                        *slot = cid;
                    }
                    for &q in fs.fairlets().get(fid).map_or(&[][..], |f| &f.members[..]) {
                        if q < n && q < data.len() && c.center.len() == data.dim() {
                            cost += euclidean(data.point(q), &c.center);
                        }
                    }
                }
                Cluster { fairlets: c.fairlets.clone(), center: c.center.clone(), counts: ColorCount::new(c.red, c.blue) }
            })
            .collect();
        FairClustering {
            clusters,
            fairlet_centers: Vec::new(),
            cluster_of_fairlet,
            cost,
            fairlet_cost: 0.0,
            medoid_cost: 0.0,
        }
    });
    Ok(audit(data, &fs, fc.as_ref(), p, Some(&tree)))
}
