//! Exhaustive reference solvers for desk-scale instances.
//!
//! Everything here is exponential and guarded by [`OracleBudget`]. The tree
//! objective walks parent links directly instead of going through the cost
//! module, so the two implementations check each other.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};
use crate::heavy::ChildProfile;
use crate::hst::{HstTree, NodeId};
use crate::types::{euclidean, is_rb_balanced, ColorCount, ColoredDataset, FairnessParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleBudget {
    pub max_points: usize,
    pub max_children: usize,
    pub max_child_count: u64,
    pub time_cap: Duration,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self { max_points: 8, max_children: 5, max_child_count: 8, time_cap: Duration::from_secs(10) }
    }
}

struct Clock {
    start: Instant,
    cap: Duration,
}

impl Clock {
    fn new(cap: Duration) -> Self {
        Self { start: Instant::now(), cap }
    }

    fn check(&self) -> Result<()> {
        if self.start.elapsed() > self.cap {
            return Err(FairError::BudgetExceeded(format!("time cap of {:?} reached", self.cap)));
        }
        Ok(())
    }
}

/// Exact Minimum Heavy Points value: the fewest points removed from the
/// children so that every residual and the removed aggregate are balanced.
pub fn brute_min_heavy(children: &[ChildProfile], p: FairnessParams, budget: &OracleBudget) -> Result<u64> {
    if children.len() > budget.max_children {
        return Err(FairError::BudgetExceeded(format!(
            "{} children, cap {}",
            children.len(),
            budget.max_children
        )));
    }
    if let Some(c) = children
        .iter()
        .find(|c| c.counts.red.max(c.counts.blue) > budget.max_child_count)
    {
        return Err(FairError::BudgetExceeded(format!(
            "child with {} exceeds per-colour cap {}",
            c.counts, budget.max_child_count
        )));
    }
    let clock = Clock::new(budget.time_cap);

    // Reachable removed aggregates; the objective is just red + blue.
    let mut reach = vec![ColorCount::ZERO];
    for c in children {
        clock.check()?;
        let mut options = Vec::new();
        for xr in 0..=c.counts.red {
            for xb in 0..=c.counts.blue {
                let left = ColorCount::new(c.counts.red - xr, c.counts.blue - xb);
                if is_rb_balanced(left, p) {
                    options.push(ColorCount::new(xr, xb));
                }
            }
        }
        let mut next: Vec<ColorCount> = reach
            .iter()
            .flat_map(|&a| options.iter().map(move |&o| a + o))
            .collect();
        next.sort_unstable_by_key(|c| (c.red, c.blue));
        next.dedup();
        reach = next;
    }
    reach
        .into_iter()
        .filter(|&a| is_rb_balanced(a, p))
        .map(|a| a.total())
        .min()
        .ok_or_else(|| {
            let total: ColorCount = children.iter().map(|c| c.counts).sum();
            FairError::Unbalanced { red: total.red, blue: total.blue, r: p.r(), b: p.b() }
        })
}

/// Tree distance by walking both leaves up to their meeting point.
pub fn path_walk_distance(tree: &HstTree, i: usize, j: usize) -> Result<f64> {
    let (mut a, mut b) = (tree.leaf_of(i)?, tree.leaf_of(j)?);
    let mut d = 0.0;
    while a != b {
        let (la, lb) = (tree.node(a).level, tree.node(b).level);
        if la >= lb {
            a = step_up(tree, a, &mut d);
        }
        if lb >= la {
            b = step_up(tree, b, &mut d);
        }
    }
    Ok(d)
}

fn step_up(tree: &HstTree, node: NodeId, acc: &mut f64) -> NodeId {
    let parent = tree.node(node).parent.expect("non-root node has a parent");
    *acc += tree.weight(tree.node(parent).level);
    parent
}

fn ancestors(tree: &HstTree, mut node: NodeId) -> Vec<NodeId> {
    let mut out = vec![node];
    while let Some(p) = tree.node(node).parent {
        out.push(p);
        node = p;
    }
    out.reverse();
    out
}

/// Sum of tree distances from the deepest common ancestor of `members` to
/// each member, via explicit root paths.
pub fn path_walk_cost_med(tree: &HstTree, members: &[usize]) -> Result<f64> {
    let paths = members
        .iter()
        .map(|&q| tree.leaf_of(q).map(|l| ancestors(tree, l)))
        .collect::<Result<Vec<_>>>()?;
    let Some(first) = paths.first() else {
        return Err(FairError::EmptySet);
    };
    let mut depth = 0;
    while depth + 1 < first.len() && paths.iter().all(|p| p.get(depth + 1) == Some(&first[depth + 1])) {
        depth += 1;
    }
    let mut total = 0.0;
    for path in &paths {
        for w in path[depth..].windows(2) {
            total += tree.weight(tree.node(w[0]).level);
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy)]
pub enum FairletObjective<'a> {
    /// `cost_med` on the tree.
    TreeMed(&'a HstTree),
    /// Medoid cost in the Euclidean metric.
    EuclideanMedian(&'a ColoredDataset),
}

fn euclid_median(data: &ColoredDataset, members: &[usize]) -> f64 {
    members
        .iter()
        .map(|&p| members.iter().map(|&q| euclidean(data.point(p), data.point(q))).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

fn check_points(data: &ColoredDataset, points: &[usize], budget: &OracleBudget) -> Result<()> {
    if points.len() > budget.max_points {
        return Err(FairError::BudgetExceeded(format!("{} points, cap {}", points.len(), budget.max_points)));
    }
    if points.is_empty() {
        return Err(FairError::EmptySet);
    }
    if let Some(&i) = points.iter().find(|&&i| i >= data.len()) {
        return Err(FairError::IndexOutOfRange { index: i, len: data.len() });
    }
    let mut sorted = points.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(FairError::InvalidParams("oracle points must be distinct".into()));
    }
    Ok(())
}

fn members_of(points: &[usize], mask: usize) -> Vec<usize> {
    (0..points.len()).filter(|&i| mask >> i & 1 == 1).map(|i| points[i]).collect()
}

fn unbalanced(data: &ColoredDataset, points: &[usize], p: FairnessParams) -> FairError {
    let c = data.count_of(points.iter().copied());
    FairError::Unbalanced { red: c.red, blue: c.blue, r: p.r(), b: p.b() }
}

/// Minimum cost over all valid fairlet decompositions of `points`.
pub fn brute_optimal_fairlet_cost(
    data: &ColoredDataset,
    points: &[usize],
    p: FairnessParams,
    objective: FairletObjective<'_>,
    budget: &OracleBudget,
) -> Result<f64> {
    check_points(data, points, budget)?;
    let n = points.len();
    let full = (1usize << n) - 1;
    let clock = Clock::new(budget.time_cap);

    let mut part_cost = vec![f64::INFINITY; full + 1];
    for (mask, slot) in part_cost.iter_mut().enumerate().skip(1) {
        let members = members_of(points, mask);
        if members.len() as u64 > p.fairlet_size() || !is_rb_balanced(data.count_of(members.iter().copied()), p) {
            continue;
        }
        *slot = match objective {
            FairletObjective::TreeMed(tree) => path_walk_cost_med(tree, &members)?,
            FairletObjective::EuclideanMedian(d) => euclid_median(d, &members),
        };
    }

    // best[mask]: cheapest decomposition of exactly `mask`; the part holding
    // the lowest remaining point is chosen first to avoid recounting.
    let mut best = vec![f64::INFINITY; full + 1];
    best[0] = 0.0;
    for mask in 1..=full {
        clock.check()?;
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        let mut sub = rest;
        loop {
            let part = sub | low;
            let c = part_cost[part] + best[mask ^ part];
            if c < best[mask] {
                best[mask] = c;
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    if best[full].is_finite() {
        Ok(best[full])
    } else {
        Err(unbalanced(data, points, p))
    }
}

fn check_k(points: &[usize], k: usize) -> Result<()> {
    if k == 0 || k > points.len() {
        return Err(FairError::InvalidParams(format!("k={k} must be in 1..={}", points.len())));
    }
    Ok(())
}

/// Minimum fair k-median cost: partitions into at most `k` balanced parts,
/// each charged its Euclidean medoid cost.
pub fn brute_optimal_fair_kmedian(
    data: &ColoredDataset,
    points: &[usize],
    p: FairnessParams,
    k: usize,
    budget: &OracleBudget,
) -> Result<f64> {
    check_points(data, points, budget)?;
    check_k(points, k)?;
    let n = points.len();
    let full = (1usize << n) - 1;
    let clock = Clock::new(budget.time_cap);

    let part_cost: Vec<f64> = (0..=full)
        .map(|mask| {
            let members = members_of(points, mask);
            if mask == 0 || !is_rb_balanced(data.count_of(members.iter().copied()), p) {
                f64::INFINITY
            } else {
                euclid_median(data, &members)
            }
        })
        .collect();

    // layer[mask]: cheapest split of `mask` into at most j parts.
    let mut layer = vec![f64::INFINITY; full + 1];
    layer[0] = 0.0;
    for _ in 0..k {
        clock.check()?;
        let mut next = layer.clone();
        for mask in 1..=full {
            let low = mask & mask.wrapping_neg();
            let rest = mask ^ low;
            let mut sub = rest;
            loop {
                let part = sub | low;
                let c = part_cost[part] + layer[mask ^ part];
                if c < next[mask] {
                    next[mask] = c;
                }
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & rest;
            }
        }
        layer = next;
    }
    if layer[full].is_finite() {
        Ok(layer[full])
    } else {
        Err(unbalanced(data, points, p))
    }
}

/// Same value as [`brute_optimal_fair_kmedian`], computed by walking every
/// restricted growth string with at most `k` blocks.
pub fn brute_optimal_fair_kmedian_rgs(
    data: &ColoredDataset,
    points: &[usize],
    p: FairnessParams,
    k: usize,
    budget: &OracleBudget,
) -> Result<f64> {
    check_points(data, points, budget)?;
    check_k(points, k)?;
    let n = points.len();
    let clock = Clock::new(budget.time_cap);
    let mut cache: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut best = f64::INFINITY;
    let mut label = vec![0usize; n];
    let mut visited = 0u64;

    loop {
        visited += 1;
        if visited.is_multiple_of(4096) {
            clock.check()?;
        }
        let blocks = label.iter().max().map_or(0, |m| m + 1);
        let mut total = 0.0;
        for blk in 0..blocks {
            let members: Vec<usize> = (0..n).filter(|&i| label[i] == blk).map(|i| points[i]).collect();
            let c = *cache.entry(members).or_insert_with_key(|m| {
                if is_rb_balanced(data.count_of(m.iter().copied()), p) {
                    euclid_median(data, m)
                } else {
                    f64::INFINITY
                }
            });
            total += c;
            if total >= best {
                break;
            }
        }
        best = best.min(total);

        // Next string: bump the rightmost position that can grow.
        let mut i = n;
        loop {
            if i == 1 {
                return if best.is_finite() { Ok(best) } else { Err(unbalanced(data, points, p)) };
            }
            i -= 1;
            let cap = label[..i].iter().max().copied().unwrap_or(0) + 1;
            if label[i] < cap && label[i] + 1 < k {
                label[i] += 1;
                label[i + 1..].iter_mut().for_each(|v| *v = 0);
                break;
            }
        }
    }
}
