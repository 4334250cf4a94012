//! Top-down fairlet decomposition over an HST.
//!
//! At every internal node the removal plan from [`min_heavy_points`] says how
//! many red and blue points to pull out of each child. Those points are the
//! heavy points of the node; they are grouped into fairlets whose lca is the
//! node, and the children are processed recursively with the pulled points
//! masked out. Leaves split whatever remains into fairlets directly.

use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};
use crate::heavy::{min_heavy_points, ChildProfile, RemovalPlan};
use crate::hst::{HstTree, NodeId};
use crate::types::{is_rb_balanced, Color, ColorCount, ColoredDataset, FairnessParams};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fairlet {
    pub members: Vec<usize>,
    /// Node at which the fairlet was formed; its subtree holds every member.
    pub node: NodeId,
    pub level: u32,
}

impl Fairlet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn counts(&self, data: &ColoredDataset) -> ColorCount {
        data.count_of(self.members.iter().copied())
    }
}

/// A collection of fairlets over `n` points with a point-to-fairlet map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FairletSet {
    fairlets: Vec<Fairlet>,
    fairlet_of: Vec<Option<usize>>,
}

impl FairletSet {
    /// Wrap fairlets without validating them; use the audit for that.
    /// Indices `>= n` are ignored by the back-map.
    pub fn from_fairlets(fairlets: Vec<Fairlet>, n: usize) -> Self {
        let mut fairlet_of = vec![None; n];
        for (id, f) in fairlets.iter().enumerate() {
            for &i in &f.members {
                if let Some(slot) = fairlet_of.get_mut(i) {
                    *slot = Some(id);
                }
            }
        }
        Self { fairlets, fairlet_of }
    }

    pub fn fairlets(&self) -> &[Fairlet] {
        &self.fairlets
    }

    pub fn len(&self) -> usize {
        self.fairlets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fairlets.is_empty()
    }

    pub fn num_points(&self) -> usize {
        self.fairlet_of.len()
    }

    pub fn fairlet_of(&self, point: usize) -> Option<usize> {
        self.fairlet_of.get(point).copied().flatten()
    }

    /// Number of points whose fairlet was formed above the leaf level.
    pub fn heavy_points(&self, tree: &HstTree) -> usize {
        self.fairlets.iter().filter(|f| !tree.node(f.node).is_leaf()).map(|f| f.len()).sum()
    }
}

/// How Step 2 picks which concrete points to pull out of a child subtree.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionPolicy {
    /// Depth-first, children in tree order.
    #[default]
    DepthFirst,
    /// Prefer points in the shallowest leaves, i.e. closest to the node in
    /// the tree metric.
    ShallowFirst,
}

/// Remaining (not yet assigned) points, tracked as per-node counts and a
/// per-leaf cursor into that leaf's red and blue residents.
#[derive(Debug, Clone)]
pub struct RemovalMask {
    remaining: Vec<ColorCount>,
    // residents of each leaf, reds then blues, at leaf_start[leaf]..
    leaf_points: Vec<usize>,
    leaf_start: Vec<usize>,
    leaf_total: Vec<ColorCount>,
}

impl RemovalMask {
    pub fn new(tree: &HstTree, data: &ColoredDataset) -> Self {
        let nodes = tree.nodes();
        let mut leaf_points = Vec::with_capacity(tree.num_points());
        let mut leaf_start = vec![0; nodes.len()];
        let mut leaf_total = vec![ColorCount::ZERO; nodes.len()];
        for (id, node) in nodes.iter().enumerate() {
            if !node.is_leaf() {
                continue;
            }
            leaf_start[id] = leaf_points.len();
            leaf_total[id] = node.counts;
            let pts = tree.points(id);
            leaf_points.extend(pts.iter().copied().filter(|&i| data.color(i) == Color::Red));
            leaf_points.extend(pts.iter().copied().filter(|&i| data.color(i) == Color::Blue));
        }
        Self { remaining: nodes.iter().map(|n| n.counts).collect(), leaf_points, leaf_start, leaf_total }
    }

    pub fn remaining(&self, node: NodeId) -> ColorCount {
        self.remaining[node]
    }

    /// Unassigned residents of a leaf, in storage order. Points are taken
    /// from the front of each colour's list.
    fn leaf_remaining(&self, leaf: NodeId, color: Color) -> &[usize] {
        let total = self.leaf_total[leaf];
        let end = self.leaf_start[leaf]
            + match color {
                Color::Red => total.red,
                Color::Blue => total.total(),
            } as usize;
        let left = self.remaining[leaf].get(color) as usize;
        &self.leaf_points[end - left..end]
    }

    fn take_from_leaf(&mut self, leaf: NodeId, color: Color, want: u64, out: &mut Vec<usize>) -> u64 {
        let avail = self.remaining[leaf].get(color);
        let k = want.min(avail);
        out.extend_from_slice(&self.leaf_remaining(leaf, color)[..k as usize]);
        *self.remaining[leaf].get_mut(color) -= k;
        k
    }

    fn take_depth_first(
        &mut self,
        tree: &HstTree,
        node: NodeId,
        color: Color,
        want: u64,
        out: &mut Vec<usize>,
    ) -> u64 {
        if want == 0 || self.remaining[node].get(color) == 0 {
            return 0;
        }
        let n = tree.node(node);
        if n.is_leaf() {
            return self.take_from_leaf(node, color, want, out);
        }
        let mut taken = 0;
        for c in tree.children(node) {
            if taken == want {
                break;
            }
            taken += self.take_depth_first(tree, c, color, want - taken, out);
        }
        *self.remaining[node].get_mut(color) -= taken;
        taken
    }

    fn take_shallow_first(
        &mut self,
        tree: &HstTree,
        root: NodeId,
        color: Color,
        want: u64,
        out: &mut Vec<usize>,
    ) -> u64 {
        let mut frontier = vec![root];
        let mut taken = 0;
        while taken < want && !frontier.is_empty() {
            let mut next = Vec::new();
            for &id in &frontier {
                if taken == want {
                    break;
                }
                if self.remaining[id].get(color) == 0 {
                    continue;
                }
                let node = tree.node(id);
                if node.is_leaf() {
                    let k = self.take_from_leaf(id, color, want - taken, out);
                    taken += k;
                    let mut at = id;
                    while at != root {
                        at = tree.node(at).parent.expect("root is an ancestor");
                        *self.remaining[at].get_mut(color) -= k;
                    }
                } else {
                    next.extend(tree.children(id));
                }
            }
            frontier = next;
        }
        taken
    }
}

/// Points pulled out of one child for the heavy set of its parent.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ChildSelection {
    pub child: NodeId,
    pub red: Vec<usize>,
    pub blue: Vec<usize>,
}

/// Pull the planned number of red and blue points out of each child of a node
/// and mark them as assigned. `children[i]` pairs with `plan.removals[i]`.
pub fn select_removal_points(
    tree: &HstTree,
    children: &[NodeId],
    plan: &RemovalPlan,
    mask: &mut RemovalMask,
    policy: SelectionPolicy,
) -> Result<Vec<ChildSelection>> {
    if children.len() != plan.removals.len() {
        return Err(FairError::Invariant("plan and child list lengths differ".into()));
    }
    let mut out = Vec::with_capacity(children.len());
    for (&child, want) in children.iter().zip(&plan.removals) {
        let mut sel = ChildSelection { child, ..Default::default() };
        for color in [Color::Red, Color::Blue] {
            let need = want.get(color);
            if need == 0 {
                continue;
            }
            if mask.remaining(child).get(color) < need {
                return Err(FairError::Invariant(format!(
                    "child {child} has {} {color} points left, plan asks for {need}",
                    mask.remaining(child).get(color)
                )));
            }
            let list = match color {
                Color::Red => &mut sel.red,
                Color::Blue => &mut sel.blue,
            };
            let got = match policy {
                SelectionPolicy::DepthFirst => mask.take_depth_first(tree, child, color, need, list),
                SelectionPolicy::ShallowFirst => mask.take_shallow_first(tree, child, color, need, list),
            };
            debug_assert_eq!(got, need);
        }
        out.push(sel);
    }
    Ok(out)
}

fn fits(c: ColorCount, p: FairnessParams) -> bool {
    !c.is_empty() && c.total() <= p.fairlet_size() && is_rb_balanced(c, p)
}

/// Split a balanced count into fairlet shapes, each balanced with at most
/// `r + b` points.
///
/// Saturated `(r, b)` fairlets are peeled off while the majority color has at
/// least `r + b` points; the small remainder is then split by exhaustive
/// search into at most three parts.
pub fn decompose_balanced_counts(counts: ColorCount, p: FairnessParams) -> Result<Vec<ColorCount>> {
    if counts.is_empty() || !is_rb_balanced(counts, p) {
        return Err(FairError::Unbalanced { red: counts.red, blue: counts.blue, r: p.r(), b: p.b() });
    }
    let mut shapes = Vec::new();
    let mut left = counts;
    loop {
        let major = left.dominant();
        if left.get(major) < p.fairlet_size() {
            break;
        }
        let sat = ColorCount::of(major, p.r()) + ColorCount::of(major.other(), p.b());
        shapes.push(sat);
        left = left.checked_sub(sat).expect("majority >= r+b keeps minority >= b");
        debug_assert!(is_rb_balanced(left, p));
    }
    if left.is_empty() {
        return Ok(shapes);
    }
    if fits(left, p) {
        shapes.push(left);
        return Ok(shapes);
    }
    let size = p.fairlet_size();
    for ar in (0..=left.red.min(size)).rev() {
        for ab in (0..=left.blue.min(size - ar)).rev() {
            let first = ColorCount::new(ar, ab);
            if !fits(first, p) {
                continue;
            }
            let rest = left.checked_sub(first).expect("part within remainder");
            if fits(rest, p) {
                shapes.extend([first, rest]);
                return Ok(shapes);
            }
        }
    }
    for ar in (0..=left.red.min(size)).rev() {
        for ab in (0..=left.blue.min(size - ar)).rev() {
            let first = ColorCount::new(ar, ab);
            if !fits(first, p) {
                continue;
            }
            let rest = left.checked_sub(first).expect("part within remainder");
            for br in (0..=rest.red.min(size)).rev() {
                for bb in (0..=rest.blue.min(size - br)).rev() {
                    let second = ColorCount::new(br, bb);
                    if !fits(second, p) {
                        continue;
                    }
                    let third = rest.checked_sub(second).expect("part within remainder");
                    if fits(third, p) {
                        shapes.extend([first, second, third]);
                        return Ok(shapes);
                    }
                }
            }
        }
    }
    log::error!("balanced remainder {left} under {p} admits no split into <= 3 fairlets");
    Err(FairError::Invariant(format!("remainder {left} under {p} admits no split into <= 3 fairlets")))
}

fn emit_fairlets(
    shapes: &[ColorCount],
    red: &[usize],
    blue: &[usize],
    node: NodeId,
    level: u32,
    out: &mut Vec<Fairlet>,
) {
    let (mut ri, mut bi) = (0usize, 0usize);
    for s in shapes {
        let mut members = Vec::with_capacity(s.total() as usize);
        members.extend_from_slice(&red[ri..ri + s.red as usize]);
        members.extend_from_slice(&blue[bi..bi + s.blue as usize]);
        ri += s.red as usize;
        bi += s.blue as usize;
        out.push(Fairlet { members, node, level });
    }
}

/// Knobs for [`fairlet_decomposition_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionConfig {
    pub selection: SelectionPolicy,
}

/// `(r,b)`-fairlet decomposition of every point in the tree.
pub fn fairlet_decomposition(tree: &HstTree, data: &ColoredDataset, p: FairnessParams) -> Result<FairletSet> {
    fairlet_decomposition_with(tree, data, p, DecompositionConfig::default())
}

pub fn fairlet_decomposition_with(
    tree: &HstTree,
    data: &ColoredDataset,
    p: FairnessParams,
    cfg: DecompositionConfig,
) -> Result<FairletSet> {
    if tree.num_points() != data.len() {
        return Err(FairError::DimensionMismatch { expected: tree.num_points(), got: data.len() });
    }
    let root = tree.node(tree.root());
    if !is_rb_balanced(root.counts, p) {
        return Err(FairError::Unbalanced { red: root.counts.red, blue: root.counts.blue, r: p.r(), b: p.b() });
    }

    let mut mask = RemovalMask::new(tree, data);
    let mut fairlets = Vec::new();
    let mut stack = vec![tree.root()];
    let mut children = Vec::new();
    let mut profiles = Vec::new();
    while let Some(v) = stack.pop() {
        let here = mask.remaining(v);
        if here.is_empty() {
            continue;
        }
        let node = tree.node(v);
        if node.is_leaf() {
            let shapes = decompose_balanced_counts(here, p)?;
            let red = mask.leaf_remaining(v, Color::Red).to_vec();
            let blue = mask.leaf_remaining(v, Color::Blue).to_vec();
            emit_fairlets(&shapes, &red, &blue, v, node.level, &mut fairlets);
            mask.remaining[v] = ColorCount::ZERO;
            continue;
        }

        children.clear();
        profiles.clear();
        for c in tree.children(v) {
            let counts = mask.remaining(c);
            if !counts.is_empty() {
                children.push(c);
                profiles.push(ChildProfile::new(c, counts));
            }
        }
        let plan = min_heavy_points(&profiles, p)?;
        if plan.total() > 0 {
            let picked = select_removal_points(tree, &children, &plan, &mut mask, cfg.selection)?;
            let mut red = Vec::with_capacity(plan.aggregate.red as usize);
            let mut blue = Vec::with_capacity(plan.aggregate.blue as usize);
            for sel in &picked {
                red.extend_from_slice(&sel.red);
                blue.extend_from_slice(&sel.blue);
            }
            let shapes = decompose_balanced_counts(plan.aggregate, p)?;
            emit_fairlets(&shapes, &red, &blue, v, node.level, &mut fairlets);
        }
        for (i, &c) in children.iter().enumerate() {
            let expect = profiles[i].counts.checked_sub(plan.removals[i]);
            let got = mask.remaining(c);
            if expect != Some(got) || !is_rb_balanced(got, p) {
                return Err(FairError::Invariant(format!(
                    "child {c} residual {got} (expected {expect:?}) is not a balanced remainder"
                )));
            }
        }
        mask.remaining[v] = ColorCount::ZERO;
        stack.extend(children.iter().rev());
    }
    Ok(FairletSet::from_fairlets(fairlets, data.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hst::{build_hst, HstConfig};

    fn p(r: u64, b: u64) -> FairnessParams {
        FairnessParams::new(r, b).unwrap()
    }

    fn c(red: u64, blue: u64) -> ColorCount {
        ColorCount::new(red, blue)
    }

    #[test]
    fn decompose_counts_examples() {
        assert_eq!(decompose_balanced_counts(c(7, 5), p(3, 2)).unwrap(), vec![c(3, 2), c(3, 2), c(1, 1)]);
        assert_eq!(decompose_balanced_counts(c(4, 4), p(3, 2)).unwrap(), vec![c(2, 2), c(2, 2)]);
        assert_eq!(decompose_balanced_counts(c(2, 1), p(2, 1)).unwrap(), vec![c(2, 1)]);
        assert!(decompose_balanced_counts(c(3, 0), p(2, 1)).is_err());
        assert!(decompose_balanced_counts(c(0, 0), p(2, 1)).is_err());
    }

    #[test]
    fn decompose_counts_exhaustive_small() {
        for params in [p(1, 1), p(2, 1), p(3, 1), p(3, 2), p(5, 4), p(5, 2), p(7, 5)] {
            for red in 0..=40u64 {
                for blue in 0..=40u64 {
                    let counts = c(red, blue);
                    if counts.is_empty() || !is_rb_balanced(counts, params) {
                        continue;
                    }
                    let shapes = decompose_balanced_counts(counts, params)
                        .unwrap_or_else(|e| panic!("{counts} {params}: {e}"));
                    let sum: ColorCount = shapes.iter().copied().sum();
                    assert_eq!(sum, counts);
                    for s in &shapes {
                        assert!(fits(*s, params), "{s} under {params}");
                    }
                }
            }
        }
    }

    fn fig1_like() -> ColoredDataset {
        // four tight groups of one red and two blue, far apart
        let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]];
        let mut pts = Vec::new();
        let mut colors = Vec::new();
        for cc in centers {
            pts.push(vec![cc[0], cc[1]]);
            colors.push(Color::Red);
            pts.push(vec![cc[0] + 0.01, cc[1]]);
            colors.push(Color::Blue);
            pts.push(vec![cc[0], cc[1] + 0.01]);
            colors.push(Color::Blue);
        }
        ColoredDataset::new(pts, colors).unwrap()
    }

    #[test]
    fn selection_all_zero_plan_is_empty() {
        let data = fig1_like();
        let tree = build_hst(&data, HstConfig::new(2, 0)).unwrap();
        let mut mask = RemovalMask::new(&tree, &data);
        let kids = tree.children(0).collect::<Vec<_>>();
        let plan = RemovalPlan {
            removals: vec![ColorCount::ZERO; kids.len()],
            aggregate: ColorCount::ZERO,
            stage: crate::heavy::Stage::Forced,
        };
        let sel = select_removal_points(&tree, &kids, &plan, &mut mask, SelectionPolicy::DepthFirst).unwrap();
        assert!(sel.iter().all(|s| s.red.is_empty() && s.blue.is_empty()));
    }

    #[test]
    fn selection_takes_every_red_of_a_child() {
        let data = fig1_like();
        let tree = build_hst(&data, HstConfig::new(2, 0)).unwrap();
        let kids = tree.children(0).collect::<Vec<_>>();
        let first = kids[0];
        let reds = tree.node(first).counts.red;
        let mut removals = vec![ColorCount::ZERO; kids.len()];
        removals[0] = ColorCount::new(reds, 0);
        let plan = RemovalPlan { removals, aggregate: ColorCount::new(reds, 0), stage: crate::heavy::Stage::Forced };

        for policy in [SelectionPolicy::DepthFirst, SelectionPolicy::ShallowFirst] {
            let mut mask = RemovalMask::new(&tree, &data);
            let sel = select_removal_points(&tree, &kids, &plan, &mut mask, policy).unwrap();
            let mut got = sel[0].red.clone();
            got.sort_unstable();
            let mut expect: Vec<usize> = (0..data.len())
                .filter(|&i| data.color(i) == Color::Red && tree.is_ancestor(first, tree.leaf_of(i).unwrap()))
                .collect();
            expect.sort_unstable();
            assert_eq!(got, expect);
            assert_eq!(mask.remaining(first).red, 0);

            // repeated selection is identical
            let mut mask2 = RemovalMask::new(&tree, &data);
            let sel2 = select_removal_points(&tree, &kids, &plan, &mut mask2, policy).unwrap();
            assert_eq!(sel, sel2);
        }
    }

    #[test]
    fn selection_rejects_overdraw() {
        let data = fig1_like();
        let tree = build_hst(&data, HstConfig::new(2, 0)).unwrap();
        let kids = tree.children(0).collect::<Vec<_>>();
        let mut removals = vec![ColorCount::ZERO; kids.len()];
        removals[0] = ColorCount::new(100, 0);
        let plan = RemovalPlan { removals, aggregate: ColorCount::new(100, 0), stage: crate::heavy::Stage::Forced };
        let mut mask = RemovalMask::new(&tree, &data);
        let err = select_removal_points(&tree, &kids, &plan, &mut mask, SelectionPolicy::DepthFirst);
        assert!(matches!(err, Err(FairError::Invariant(_))));
    }

    #[test]
    fn coincident_alternating_pairs_resolve_at_leaves() {
        let mut pts = Vec::new();
        let mut colors = Vec::new();
        for i in 0..20 {
            let x = vec![(i * 37 % 101) as f64, (i * 11 % 17) as f64];
            pts.push(x.clone());
            colors.push(Color::Red);
            pts.push(x);
            colors.push(Color::Blue);
        }
        let data = ColoredDataset::new(pts, colors).unwrap();
        let tree = build_hst(&data, HstConfig::new(2, 5)).unwrap();
        let fs = fairlet_decomposition(&tree, &data, p(1, 1)).unwrap();
        assert_eq!(fs.len(), 20);
        assert_eq!(fs.heavy_points(&tree), 0);
        for f in fs.fairlets() {
            assert_eq!(f.counts(&data), c(1, 1));
            assert!(tree.node(f.node).is_leaf());
        }
    }

    #[test]
    fn unbalanced_root_is_rejected() {
        let data = ColoredDataset::new(
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![Color::Red, Color::Red, Color::Red],
        )
        .unwrap();
        let tree = build_hst(&data, HstConfig::default()).unwrap();
        assert!(matches!(fairlet_decomposition(&tree, &data, p(2, 1)), Err(FairError::Unbalanced { .. })));
    }

    #[test]
    fn fairlets_partition_and_stay_inside_their_node() {
        let data = fig1_like();
        for seed in 0..30 {
            let tree = build_hst(&data, HstConfig::new(2, seed)).unwrap();
            for policy in [SelectionPolicy::DepthFirst, SelectionPolicy::ShallowFirst] {
                let fs = fairlet_decomposition_with(&tree, &data, p(3, 1), DecompositionConfig { selection: policy })
                    .unwrap();
                let mut seen = vec![0; data.len()];
                for f in fs.fairlets() {
                    assert!(f.len() <= 4);
                    assert!(is_rb_balanced(f.counts(&data), p(3, 1)));
                    for &i in &f.members {
                        seen[i] += 1;
                        assert!(tree.is_ancestor(f.node, tree.leaf_of(i).unwrap()));
                    }
                    assert_eq!(tree.node(f.node).level, f.level);
                }
                assert!(seen.iter().all(|&s| s == 1));
            }
        }
    }
}
