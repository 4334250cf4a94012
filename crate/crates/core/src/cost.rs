//! Objective functions and validity audits.
//!
//! Two metrics appear throughout: the tree metric of the HST, in which the
//! decomposition guarantees are stated, and the Euclidean metric, in which
//! results are reported.

use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};
use crate::fairlet::FairletSet;
use crate::hst::HstTree;
use crate::kmedian::FairClustering;
use crate::types::{balance_f64, euclidean, is_rb_balanced, ColoredDataset, FairnessParams};

#[derive(Debug, Clone, Copy)]
pub enum Metric<'a> {
    Euclidean(&'a ColoredDataset),
    Tree(&'a HstTree),
}

impl Metric<'_> {
    pub fn distance(&self, i: usize, j: usize) -> Result<f64> {
        match self {
            Metric::Euclidean(data) => {
                let n = data.len();
                if i >= n || j >= n {
                    return Err(FairError::IndexOutOfRange { index: i.max(j), len: n });
                }
                Ok(euclidean(data.point(i), data.point(j)))
            }
            Metric::Tree(tree) => tree.tree_distance(i, j),
        }
    }
}

/// Best member of `set` as a median and its summed distance to the set.
/// Ties go to the earliest member.
pub fn median_of(set: &[usize], metric: Metric<'_>) -> Result<(usize, f64)> {
    if set.is_empty() {
        return Err(FairError::EmptySet);
    }
    let mut best = (set[0], f64::INFINITY);
    for &p in set {
        let mut s = 0.0;
        for &q in set {
            s += metric.distance(p, q)?;
        }
        if s < best.1 {
            best = (p, s);
        }
    }
    Ok(best)
}

/// `min_{p in S} sum_{q in S} d(p, q)`.
pub fn cost_median(set: &[usize], metric: Metric<'_>) -> Result<f64> {
    median_of(set, metric).map(|(_, c)| c)
}

/// Sum of tree distances from the lca of `members` to each member.
pub fn cost_med(members: &[usize], tree: &HstTree) -> Result<f64> {
    let (_, h) = tree.lca_node(members)?;
    members
        .iter()
        .map(|&q| Ok(tree.distance_to_ancestor_level(tree.leaf_of(q)?, h)))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    /// Sum over fairlets of the Euclidean median cost.
    pub fairlet_cost_euclidean: f64,
    /// Sum over fairlets of `cost_med` on the tree; absent without a tree.
    pub fairlet_cost_tree: Option<f64>,
    /// Euclidean k-median objective of the clustering.
    pub clustering_cost: Option<f64>,
    pub min_cluster_balance: Option<f64>,
    pub min_fairlet_balance: f64,
    pub max_fairlet_size: usize,
    pub num_fairlets: usize,
    pub num_clusters: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Offending point, fairlet or cluster ids, depending on the check.
    pub violations: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub report: CostReport,
    pub checks: Vec<CheckResult>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(name: &str, violations: Vec<usize>) -> CheckResult {
    CheckResult { name: name.to_string(), passed: violations.is_empty(), violations }
}

/// Verify a fairlet decomposition (and optionally a clustering built on it)
/// and compute every cost. Failures are reported, never raised.
pub fn audit(
    data: &ColoredDataset,
    fs: &FairletSet,
    fc: Option<&FairClustering>,
    p: FairnessParams,
    tree: Option<&HstTree>,
) -> AuditReport {
    let n = data.len();
    let mut cover = vec![0usize; n];
    let mut bad_points = Vec::new();
    let mut bad_size = Vec::new();
    let mut bad_balance = Vec::new();
    let mut min_fairlet_balance = 1.0f64;
    let mut max_fairlet_size = 0;
    let mut euclid = 0.0;
    let mut tree_cost = tree.map(|_| 0.0);

    for (id, f) in fs.fairlets().iter().enumerate() {
        if f.members.iter().any(|&i| i >= n) {
            bad_points.extend(f.members.iter().copied().filter(|&i| i >= n));
            bad_size.push(id);
            continue;
        }
        for &i in &f.members {
            cover[i] += 1;
        }
        max_fairlet_size = max_fairlet_size.max(f.len());
        if f.is_empty() || f.len() as u64 > p.fairlet_size() {
            bad_size.push(id);
        }
        if f.is_empty() {
            continue;
        }
        let counts = f.counts(data);
        if !is_rb_balanced(counts, p) {
            bad_balance.push(id);
        }
        min_fairlet_balance = min_fairlet_balance.min(balance_f64(counts));
        euclid += cost_median(&f.members, Metric::Euclidean(data)).unwrap_or(0.0);
        if let (Some(t), Some(acc)) = (tree, tree_cost.as_mut()) {
            *acc += cost_med(&f.members, t).unwrap_or(0.0);
        }
    }
    bad_points.extend(cover.iter().enumerate().filter(|(_, &c)| c != 1).map(|(i, _)| i));
    bad_points.sort_unstable();
    bad_points.dedup();

    let mut checks = vec![
        check("partition", bad_points),
        check("fairlet_size", bad_size),
        check("fairlet_balance", bad_balance),
    ];

    let mut report = CostReport {
        fairlet_cost_euclidean: euclid,
        fairlet_cost_tree: tree_cost,
        clustering_cost: None,
        min_cluster_balance: None,
        min_fairlet_balance,
        max_fairlet_size,
        num_fairlets: fs.len(),
        num_clusters: None,
    };

    if let Some(fc) = fc {
        let mut owner = vec![0usize; fs.len()];
        let mut bad_owner = Vec::new();
        let mut bad_cluster = Vec::new();
        let mut min_cluster_balance = 1.0f64;
        for (cid, cl) in fc.clusters.iter().enumerate() {
            let mut counts = crate::types::ColorCount::ZERO;
            for &fid in &cl.fairlets {
                match owner.get_mut(fid) {
                    Some(o) => *o += 1,
                    None => bad_owner.push(fid),
                }
                if let Some(f) = fs.fairlets().get(fid) {
                    counts += data.count_of(f.members.iter().copied().filter(|&i| i < n));
                }
            }
            if counts != cl.counts || !is_rb_balanced(counts, p) {
                bad_cluster.push(cid);
            }
            min_cluster_balance = min_cluster_balance.min(balance_f64(counts));
        }
        bad_owner.extend(owner.iter().enumerate().filter(|(_, &c)| c != 1).map(|(i, _)| i));
        bad_owner.sort_unstable();
        bad_owner.dedup();
        checks.push(check("cluster_partition", bad_owner));
        checks.push(check("cluster_balance", bad_cluster));
        report.clustering_cost = Some(fc.cost);
        report.min_cluster_balance = Some(min_cluster_balance);
        report.num_clusters = Some(fc.clusters.len());
    }

    AuditReport { report, checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fairlet::Fairlet;
    use crate::hst::{build_hst, HstConfig};
    use crate::types::Color;

    fn line(xs: &[f64], colors: &[Color]) -> ColoredDataset {
        ColoredDataset::new(xs.iter().map(|&x| vec![x]).collect(), colors.to_vec()).unwrap()
    }

    #[test]
    fn cost_median_small_cases() {
        let data = line(&[0.0, 3.0], &[Color::Red, Color::Blue]);
        assert_eq!(cost_median(&[0], Metric::Euclidean(&data)).unwrap(), 0.0);
        assert_eq!(cost_median(&[0, 1], Metric::Euclidean(&data)).unwrap(), 3.0);
        assert!(matches!(cost_median(&[], Metric::Euclidean(&data)), Err(FairError::EmptySet)));
    }

    #[test]
    fn cost_median_five_points_brute() {
        let xs = [0.3, -1.2, 4.0, 2.2, 0.0];
        let data = ColoredDataset::new(
            xs.iter().enumerate().map(|(i, &x)| vec![x, (i as f64).sin()]).collect(),
            vec![Color::Red; 5],
        )
        .unwrap();
        let set: Vec<usize> = (0..5).collect();
        let brute = set
            .iter()
            .map(|&p| set.iter().map(|&q| euclidean(data.point(p), data.point(q))).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let got = cost_median(&set, Metric::Euclidean(&data)).unwrap();
        assert!((got - brute).abs() < 1e-12);
    }

    #[test]
    fn cost_med_singleton_and_siblings() {
        let data = line(&[0.0, 1.0], &[Color::Red, Color::Blue]);
        let t = build_hst(&data, HstConfig::new(2, 0)).unwrap();
        assert_eq!(cost_med(&[0], &t).unwrap(), 0.0);
        for seed in 0..32 {
            let t = build_hst(&data, HstConfig::new(2, seed)).unwrap();
            let (lca, h) = t.lca_node(&[0, 1]).unwrap();
            let leaves = [t.leaf_of(0).unwrap(), t.leaf_of(1).unwrap()];
            if leaves.iter().all(|&l| t.node(l).parent == Some(lca)) {
                assert!((cost_med(&[0, 1], &t).unwrap() - 2.0 * t.weight(h)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn audit_flags_unbalanced_fairlet() {
        let data = line(&[0.0, 1.0, 2.0], &[Color::Red, Color::Red, Color::Red]);
        let fs = FairletSet::from_fairlets(vec![Fairlet { members: vec![0, 1, 2], node: 0, level: 0 }], 3);
        let rep = audit(&data, &fs, None, FairnessParams::new(2, 1).unwrap(), None);
        assert!(!rep.passed());
        let bal = rep.check("fairlet_balance").unwrap();
        assert_eq!(bal.violations, vec![0]);
        assert!(rep.check("partition").unwrap().passed);
    }

    #[test]
    fn audit_flags_partition_and_size() {
        let data = line(&[0.0, 1.0, 2.0, 3.0], &[Color::Red, Color::Blue, Color::Red, Color::Blue]);
        let fs = FairletSet::from_fairlets(
            vec![
                Fairlet { members: vec![0, 1, 2, 3], node: 0, level: 0 },
                Fairlet { members: vec![1, 7], node: 0, level: 0 },
            ],
            4,
        );
        let rep = audit(&data, &fs, None, FairnessParams::new(1, 1).unwrap(), None);
        assert_eq!(rep.check("partition").unwrap().violations, vec![7]);
        assert_eq!(rep.check("fairlet_size").unwrap().violations, vec![0, 1]);
    }
}
