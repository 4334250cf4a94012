//! Approximate Minimum Heavy Points at a single tree node.
//!
//! Given the red/blue counts of each nonempty child of a node `v`, choose how
//! many points of each color to pull out of every child so that each child's
//! residual and the pulled-out aggregate (the heavy points of `v`) are both
//! `(r,b)`-balanced, keeping the aggregate small. Three stages:
//!
//! 1. remove each child's forced surplus ([`unbalanced_points`]);
//! 2. if the aggregate leans to color `c`, borrow spare points of the other
//!    color from children that can afford it ([`extra_point`]);
//! 3. add children's non-saturated fairlets until the aggregate balances
//!    ([`non_satur_fairlet`]).
//!
//! Everything here works on counts only, O(1) per child.

use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};
use crate::types::{is_rb_balanced, Color, ColorCount, FairnessParams};

/// Counts of one child subtree, tagged with the caller's child identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChildProfile {
    pub child: usize,
    pub counts: ColorCount,
}

impl ChildProfile {
    pub fn new(child: usize, counts: ColorCount) -> Self {
        Self { child, counts }
    }
}

/// Which stage of [`min_heavy_points`] produced a balanced aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Forced,
    Borrowed,
    NonSaturated,
}

/// Per-child removal counts plus their column sums.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalPlan {
    pub removals: Vec<ColorCount>,
    pub aggregate: ColorCount,
    pub stage: Stage,
}

impl RemovalPlan {
    pub fn total(&self) -> u64 {
        self.aggregate.total()
    }

    /// Check both Minimum Heavy Points conditions against `children`.
    pub fn verify(&self, children: &[ChildProfile], p: FairnessParams) -> std::result::Result<(), String> {
        if self.removals.len() != children.len() {
            return Err("plan length differs from child count".into());
        }
        let mut sum = ColorCount::ZERO;
        for (x, ch) in self.removals.iter().zip(children) {
            let residual = ch
                .counts
                .checked_sub(*x)
                .ok_or_else(|| format!("child {} removes {} from {}", ch.child, x, ch.counts))?;
            if !is_rb_balanced(residual, p) {
                return Err(format!("child {} residual {} unbalanced", ch.child, residual));
            }
            sum += *x;
        }
        if sum != self.aggregate {
            return Err("aggregate is not the column sum".into());
        }
        if !is_rb_balanced(sum, p) {
            return Err(format!("aggregate {} unbalanced", sum));
        }
        Ok(())
    }
}

/// Minimum single-color removal making `counts` balanced.
pub fn unbalanced_points(counts: ColorCount, p: FairnessParams) -> ColorCount {
    let (r, b) = (p.r(), p.b());
    if counts.red >= counts.blue {
        let keep = counts.blue * r / b;
        ColorCount::new(counts.red.saturating_sub(keep), 0)
    } else {
        let keep = counts.red * r / b;
        ColorCount::new(0, counts.blue.saturating_sub(keep))
    }
}

/// Largest number of `color` points removable from a balanced set while it
/// stays balanced. Zero whenever `color` is not the strict majority.
pub fn extra_point(color: Color, counts: ColorCount, p: FairnessParams) -> u64 {
    let mine = counts.get(color);
    let other = counts.get(color.other());
    if mine <= other {
        return 0;
    }
    mine - (other * p.b()).div_ceil(p.r())
}

/// Leftover after pulling as many saturated fairlets (`r` of the majority
/// color, `b` of the minority) as possible out of a balanced set, such that
/// the leftover stays balanced or empty. Ties orient toward red.
pub fn non_satur_fairlet(counts: ColorCount, p: FairnessParams) -> Result<ColorCount> {
    non_satur_fairlet_oriented(counts, counts.dominant(), p)
}

/// [`non_satur_fairlet`] with the saturated fairlets oriented toward `major`.
pub fn non_satur_fairlet_oriented(counts: ColorCount, major: Color, p: FairnessParams) -> Result<ColorCount> {
    let nc = counts.get(major);
    let nm = counts.get(major.other());
    let mut s = (nc / p.r()).min(nm / p.b());
    loop {
        let left = ColorCount::of(major, nc - s * p.r()) + ColorCount::of(major.other(), nm - s * p.b());
        if is_rb_balanced(left, p) {
            return Ok(left);
        }
        if s == 0 {
            return Err(FairError::Unbalanced { red: counts.red, blue: counts.blue, r: p.r(), b: p.b() });
        }
        s -= 1;
    }
}

/// Three-stage approximate solution of Minimum Heavy Points.
///
/// Requires the sum over all children to be balanced.
pub fn min_heavy_points(children: &[ChildProfile], p: FairnessParams) -> Result<RemovalPlan> {
    let total: ColorCount = children.iter().map(|c| c.counts).sum();
    if !is_rb_balanced(total, p) {
        return Err(FairError::Unbalanced { red: total.red, blue: total.blue, r: p.r(), b: p.b() });
    }

    let mut removals: Vec<ColorCount> = children.iter().map(|c| unbalanced_points(c.counts, p)).collect();
    let mut agg: ColorCount = removals.iter().copied().sum();
    if is_rb_balanced(agg, p) {
        return Ok(RemovalPlan { removals, aggregate: agg, stage: Stage::Forced });
    }

    let major = agg.dominant();
    let minor = major.other();
    let mut deficit = (agg.get(major) * p.b()).div_ceil(p.r()) - agg.get(minor);
    for (x, ch) in removals.iter_mut().zip(children) {
        if deficit == 0 {
            break;
        }
        let residual = ch.counts.checked_sub(*x).expect("stage-1 removal within child");
        let take = extra_point(minor, residual, p).min(deficit);
        x.add_color(minor, take);
        agg.add_color(minor, take);
        deficit -= take;
    }
    if is_rb_balanced(agg, p) {
        return Ok(RemovalPlan { removals, aggregate: agg, stage: Stage::Borrowed });
    }

    for (x, ch) in removals.iter_mut().zip(children) {
        let residual = ch.counts.checked_sub(*x).expect("stage-2 removal within child");
        let left = non_satur_fairlet_oriented(residual, major, p)?;
        *x += left;
        agg += left;
        if is_rb_balanced(agg, p) {
            return Ok(RemovalPlan { removals, aggregate: agg, stage: Stage::NonSaturated });
        }
    }
    Err(FairError::Invariant(format!(
        "heavy set {} still unbalanced after all non-saturated fairlets (children total {})",
        agg, total
    )))
}
