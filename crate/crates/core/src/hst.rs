//! Randomly shifted nested-grid embedding of a colored pointset into a
//! `gamma`-HST.
//!
//! The bounding box of the data is centered and its half-extent `delta`
//! computed. The root cell is the cube of side `4 * delta`, shifted by a
//! vector drawn uniformly from `[-delta, delta]^d`, so it always encloses the
//! data. Every cell is cut into `gamma` equal slabs per axis; only nonempty
//! children are materialized. A cell becomes a leaf once it holds at most one
//! distinct location or reaches `max_depth`.
//!
//! The edge from a level-`i` node to each of its children has weight
//! `W(i) = sqrt(d) * side(i)` with `side(i) = side(0) / gamma^i`, the diameter
//! of the level-`i` cell. Two points first separated below a level-`i` cell
//! are at tree distance at least `2 W(i)`, which is at least twice their
//! Euclidean distance, so the embedding never contracts.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};
use crate::types::{euclidean, Color, ColorCount, ColoredDataset};

pub type NodeId = usize;

/// Maximum depth used when none is configured: 40 levels for `gamma = 2`,
/// scaled so that `gamma^max_depth` stays near `2^40` for larger `gamma`.
pub fn default_max_depth(gamma: u32) -> u32 {
    let g = gamma.max(2) as f64;
    (40.0 / g.log2()).ceil().max(1.0) as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HstConfig {
    pub gamma: u32,
    pub seed: u64,
    pub max_depth: u32,
}

impl HstConfig {
    pub fn new(gamma: u32, seed: u64) -> Self {
        Self { gamma, seed, max_depth: default_max_depth(gamma) }
    }

    pub fn with_max_depth(mut self, max_depth: u32) -> Self {
        self.max_depth = max_depth;
        self
    }
}

impl Default for HstConfig {
    fn default() -> Self {
        Self::new(2, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HstNode {
    pub level: u32,
    pub parent: Option<NodeId>,
    /// Red/blue counts of the whole subtree.
    pub counts: ColorCount,
    pub side: f64,
    // children are the contiguous ids first_child..first_child + num_children
    first_child: NodeId,
    num_children: usize,
    // range into the tree's point permutation covering the subtree
    pt_lo: usize,
    pt_hi: usize,
}

impl HstNode {
    pub fn is_leaf(&self) -> bool {
        self.num_children == 0
    }

    pub fn num_children(&self) -> usize {
        self.num_children
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HstTree {
    gamma: u32,
    dim: usize,
    max_depth: u32,
    delta: f64,
    center: Vec<f64>,
    shift: Vec<f64>,
    /// `weights[i]` is the parent-to-child edge weight below a level-`i` node.
    weights: Vec<f64>,
    nodes: Vec<HstNode>,
    /// Lowest cell corners, `dim` values per node.
    anchors: Vec<f64>,
    /// Point indices ordered so that every subtree is a contiguous range.
    perm: Vec<usize>,
    leaf_of: Vec<NodeId>,
    clamped: usize,
}

/// Tree-distance / Euclidean-distance statistics over sampled pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub pairs: usize,
    pub min_ratio: f64,
    pub mean_ratio: f64,
    pub max_ratio: f64,
}

/// Whether every point of a node sits at one location. `offsets` holds the
/// members' in-cell offsets; equal coordinates always produce equal offsets,
/// so comparing those first rules out most nodes without touching `data`.
fn all_same_location(data: &ColoredDataset, points: &[usize], offsets: &[f64], d: usize) -> bool {
    let (first, rest) = offsets.split_at(d);
    if rest.chunks_exact(d).any(|o| o != first) {
        return false;
    }
    let p0 = data.point(points[0]);
    points[1..].iter().all(|&i| data.point(i) == p0)
}

/// Fill `order` with member slots sorted by their child key (lexicographic,
/// ties by slot). Keys are packed into one integer when `gamma^d` fits, and
/// counting-sorted when there are not many more cells than members.
fn group_by_key(
    keys: &[u32],
    d: usize,
    gamma: usize,
    order: &mut Vec<usize>,
    codes: &mut Vec<u64>,
    buckets: &mut Vec<usize>,
) {
    let m = keys.len() / d;
    order.clear();
    let cells = (gamma as u64).checked_pow(d as u32);
    let Some(cells) = cells.filter(|&c| c < u64::MAX / 2) else {
        order.extend(0..m);
        order.sort_by(|&a, &b| keys[a * d..(a + 1) * d].cmp(&keys[b * d..(b + 1) * d]).then(a.cmp(&b)));
        return;
    };
    codes.clear();
    codes.extend(keys.chunks_exact(d).map(|k| k.iter().fold(0u64, |acc, &c| acc * gamma as u64 + c as u64)));
    if cells as usize <= 2 * m + 64 {
        buckets.clear();
        buckets.resize(cells as usize + 1, 0);
        for &c in codes.iter() {
            buckets[c as usize + 1] += 1;
        }
        for i in 1..buckets.len() {
            buckets[i] += buckets[i - 1];
        }
        order.resize(m, 0);
        for (slot, &c) in codes.iter().enumerate() {
            order[buckets[c as usize]] = slot;
            buckets[c as usize] += 1;
        }
    } else {
        order.extend(0..m);
        order.sort_unstable_by_key(|&a| (codes[a], a));
    }
}

/// Build the randomly shifted `gamma`-HST for `data`.
pub fn build_hst(data: &ColoredDataset, cfg: HstConfig) -> Result<HstTree> {
    if data.is_empty() {
        return Err(FairError::EmptyDataset);
    }
    if cfg.gamma < 2 {
        return Err(FairError::InvalidGamma(cfg.gamma));
    }
    let d = data.dim();
    let n = data.len();
    let gamma = cfg.gamma as usize;

    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in data.points() {
        for j in 0..d {
            lo[j] = lo[j].min(p[j]);
            hi[j] = hi[j].max(p[j]);
        }
    }
    let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let delta = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (b - a)).fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shift: Vec<f64> = (0..d)
        .map(|_| if delta > 0.0 { rng.random_range(-delta..=delta) } else { 0.0 })
        .collect();

    let root_side = if delta > 0.0 { 4.0 * delta } else { 1.0 };
    let root_anchor: Vec<f64> = (0..d).map(|j| center[j] + shift[j] - 0.5 * root_side).collect();

    let mut weights = Vec::with_capacity(cfg.max_depth as usize + 1);
    let sqrt_d = (d as f64).sqrt();
    let mut side = root_side;
    for _ in 0..=cfg.max_depth {
        weights.push(sqrt_d * side);
        side /= cfg.gamma as f64;
    }

    // Points are kept in one permutation; every queued node owns a
    // contiguous range of it. `offset` is aligned with the permutation and
    // holds each point's position inside its current cell, in units of that
    // cell's side.
    let mut perm: Vec<usize> = (0..n).collect();
    let mut blue: Vec<bool> = data.colors().iter().map(|&c| c == Color::Blue).collect();
    let mut offset = vec![0.0f64; n * d];
    let mut clamped = 0usize;
    for i in 0..n {
        let p = data.point(i);
        for j in 0..d {
            let t = (p[j] - root_anchor[j]) / root_side;
            if !(0.0..1.0).contains(&t) {
                clamped += 1;
            }
            offset[i * d + j] = t.clamp(0.0, 1.0);
        }
    }

    let mut nodes = vec![HstNode {
        level: 0,
        parent: None,
        counts: data.counts(),
        side: root_side,
        first_child: 0,
        num_children: 0,
        pt_lo: 0,
        pt_hi: n,
    }];
    let mut anchors = root_anchor;
    let mut leaf_of = vec![usize::MAX; n];
    // Depth-first, so a subtree's slice of the arrays stays cache-resident
    // until it is finished. Siblings still get consecutive ids.
    let mut stack: Vec<(NodeId, usize, usize)> = vec![(0, 0, n)];

    let mut keys: Vec<u32> = Vec::new();
    let mut order: Vec<usize> = Vec::new();
    let mut codes: Vec<u64> = Vec::new();
    let mut buckets: Vec<usize> = Vec::new();
    let mut perm_tmp: Vec<usize> = Vec::new();
    let mut blue_tmp: Vec<bool> = Vec::new();
    let mut off_tmp: Vec<f64> = Vec::new();
    while let Some((id, lo, hi)) = stack.pop() {
        let level = nodes[id].level;
        if level >= cfg.max_depth || all_same_location(data, &perm[lo..hi], &offset[lo * d..hi * d], d) {
            for &i in &perm[lo..hi] {
                leaf_of[i] = id;
            }
            continue;
        }
        let m = hi - lo;
        keys.clear();
        keys.resize(m * d, 0);
        for (t, k) in offset[lo * d..hi * d].iter_mut().zip(keys.iter_mut()) {
            let scaled = *t * gamma as f64;
            let cell = (scaled.floor().max(0.0) as usize).min(gamma - 1);
            *t = (scaled - cell as f64).clamp(0.0, 1.0);
            *k = cell as u32;
        }
        group_by_key(&keys, d, gamma, &mut order, &mut codes, &mut buckets);
        perm_tmp.clear();
        perm_tmp.extend(order.iter().map(|&s| perm[lo + s]));
        perm[lo..hi].copy_from_slice(&perm_tmp);
        blue_tmp.clear();
        blue_tmp.extend(order.iter().map(|&s| blue[lo + s]));
        blue[lo..hi].copy_from_slice(&blue_tmp);
        off_tmp.clear();
        off_tmp.extend(order.iter().flat_map(|&s| offset[(lo + s) * d..(lo + s + 1) * d].iter().copied()));
        offset[lo * d..hi * d].copy_from_slice(&off_tmp);

        let child_side = nodes[id].side / cfg.gamma as f64;
        nodes[id].first_child = nodes.len();
        let pushed = stack.len();
        let mut start = 0;
        while start < m {
            let key = &keys[order[start] * d..(order[start] + 1) * d];
            let mut end = start + 1;
            while end < m && &keys[order[end] * d..(order[end] + 1) * d] == key {
                end += 1;
            }
            for j in 0..d {
                anchors.push(anchors[id * d + j] + key[j] as f64 * child_side);
            }
            let child_id = nodes.len();
            nodes.push(HstNode {
                level: level + 1,
                parent: Some(id),
                counts: {
                    let nb = blue[lo + start..lo + end].iter().filter(|&&b| b).count() as u64;
                    ColorCount::new((end - start) as u64 - nb, nb)
                },
                side: child_side,
                first_child: 0,
                num_children: 0,
                pt_lo: lo + start,
                pt_hi: lo + end,
            });
            nodes[id].num_children += 1;
            stack.push((child_id, lo + start, lo + end));
            start = end;
        }
        stack[pushed..].reverse();
    }

    Ok(HstTree {
        gamma: cfg.gamma,
        dim: d,
        max_depth: cfg.max_depth,
        delta,
        center,
        shift,
        weights,
        nodes,
        anchors,
        perm,
        leaf_of,
        clamped,
    })
}

impl HstTree {
    pub fn gamma(&self) -> u32 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    /// Half-extent of the data bounding box.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    /// Coordinates that fell outside the shifted root cell and were clamped.
    pub fn clamped_coordinates(&self) -> usize {
        self.clamped
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn node(&self, id: NodeId) -> &HstNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[HstNode] {
        &self.nodes
    }

    pub fn children(&self, id: NodeId) -> std::ops::Range<NodeId> {
        let n = &self.nodes[id];
        n.first_child..n.first_child + n.num_children
    }

    /// Every point below `id`; at a leaf these are its residents.
    pub fn points(&self, id: NodeId) -> &[usize] {
        let n = &self.nodes[id];
        &self.perm[n.pt_lo..n.pt_hi]
    }

    /// Lowest corner of the cell of `id`.
    pub fn anchor(&self, id: NodeId) -> &[f64] {
        &self.anchors[id * self.dim..(id + 1) * self.dim]
    }

    pub fn num_points(&self) -> usize {
        self.leaf_of.len()
    }

    /// Deepest level present in the tree.
    pub fn height(&self) -> u32 {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }

    /// Edge weight from a node at `level` to each of its children.
    pub fn weight(&self, level: u32) -> f64 {
        self.weights[level as usize]
    }

    pub fn leaf_of(&self, i: usize) -> Result<NodeId> {
        self.leaf_of
            .get(i)
            .copied()
            .ok_or(FairError::IndexOutOfRange { index: i, len: self.leaf_of.len() })
    }

    /// Tree distance from `node` up to its ancestor at `ancestor_level`.
    pub fn distance_to_ancestor_level(&self, node: NodeId, ancestor_level: u32) -> f64 {
        let level = self.nodes[node].level;
        (ancestor_level..level).map(|l| self.weights[l as usize]).sum()
    }

    pub fn lca_of_nodes(&self, mut a: NodeId, mut b: NodeId) -> NodeId {
        while self.nodes[a].level > self.nodes[b].level {
            a = self.nodes[a].parent.expect("non-root has a parent");
        }
        while self.nodes[b].level > self.nodes[a].level {
            b = self.nodes[b].parent.expect("non-root has a parent");
        }
        while a != b {
            a = self.nodes[a].parent.expect("distinct nodes below the root");
            b = self.nodes[b].parent.expect("distinct nodes below the root");
        }
        a
    }

    /// Sum of edge weights on the leaf-to-leaf path between points `i` and `j`.
    pub fn tree_distance(&self, i: usize, j: usize) -> Result<f64> {
        let a = self.leaf_of(i)?;
        let b = self.leaf_of(j)?;
        if a == b {
            return Ok(0.0);
        }
        let h = self.nodes[self.lca_of_nodes(a, b)].level;
        Ok(self.distance_to_ancestor_level(a, h) + self.distance_to_ancestor_level(b, h))
    }

    /// Deepest node whose subtree contains every listed point, with its level.
    pub fn lca_node(&self, indices: &[usize]) -> Result<(NodeId, u32)> {
        let (&first, rest) = indices.split_first().ok_or(FairError::EmptySet)?;
        let mut acc = self.leaf_of(first)?;
        for &i in rest {
            acc = self.lca_of_nodes(acc, self.leaf_of(i)?);
        }
        Ok((acc, self.nodes[acc].level))
    }

    /// Whether `ancestor` is `node` or lies on its root path.
    pub fn is_ancestor(&self, ancestor: NodeId, mut node: NodeId) -> bool {
        loop {
            if node == ancestor {
                return true;
            }
            match self.nodes[node].parent {
                Some(p) => node = p,
                None => return false,
            }
        }
    }

    /// Full structural audit; returns the first violated property.
    pub fn check_invariants(&self, data: &ColoredDataset) -> std::result::Result<(), String> {
        let mut seen = vec![0usize; data.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            if node.level > self.max_depth {
                return Err(format!("node {id} at level {} exceeds max_depth", node.level));
            }
            let c = data.count_of(self.points(id).iter().copied());
            if c != node.counts {
                return Err(format!("node {id} counts {} != residents {}", node.counts, c));
            }
            if node.is_leaf() {
                if self.points(id).is_empty() {
                    return Err(format!("leaf {id} has no points"));
                }
                for &i in self.points(id) {
                    seen[i] += 1;
                    if self.leaf_of[i] != id {
                        return Err(format!("point {i} leaf map disagrees"));
                    }
                }
            } else {
                let sum: ColorCount = self.children(id).map(|c| self.nodes[c].counts).sum();
                if sum != node.counts {
                    return Err(format!("node {id} counts {} != children sum {}", node.counts, sum));
                }
                for c in self.children(id) {
                    let child = &self.nodes[c];
                    if child.level != node.level + 1 || child.parent != Some(id) {
                        return Err(format!("child {c} of {id} has inconsistent level/parent"));
                    }
                    if child.counts.is_empty() {
                        return Err(format!("empty child {c} materialized"));
                    }
                }
            }
        }
        if let Some(i) = seen.iter().position(|&s| s != 1) {
            return Err(format!("point {i} appears in {} leaves", seen[i]));
        }
        for l in 1..self.weights.len() {
            let ratio = self.weights[l - 1] / self.weights[l];
            if (ratio - self.gamma as f64).abs() > 1e-9 * self.gamma as f64 {
                return Err(format!("weight ratio {ratio} at level {l} is not gamma"));
            }
        }
        Ok(())
    }

    /// Sample `pair_sample` pairs with distinct coordinates and report the
    /// tree/Euclidean distance ratios.
    pub fn audit_distortion(
        &self,
        data: &ColoredDataset,
        pair_sample: usize,
        seed: u64,
    ) -> Result<DistortionReport> {
        let n = data.len();
        if n < 2 || (1..n).all(|i| data.point(i) == data.point(0)) {
            return Err(FairError::TooFewLocations);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut min_ratio = f64::INFINITY;
        let mut max_ratio = 0.0f64;
        let mut sum = 0.0;
        let mut taken = 0;
        while taken < pair_sample {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            let e = euclidean(data.point(i), data.point(j));
            if e == 0.0 {
                continue;
            }
            let ratio = self.tree_distance(i, j)? / e;
            min_ratio = min_ratio.min(ratio);
            max_ratio = max_ratio.max(ratio);
            sum += ratio;
            taken += 1;
        }
        Ok(DistortionReport {
            pairs: taken,
            min_ratio: if taken == 0 { 0.0 } else { min_ratio },
            mean_ratio: if taken == 0 { 0.0 } else { sum / taken as f64 },
            max_ratio,
        })
    }

    /// Diagnostic dump, one node per line in preorder:
    /// `level<TAB>anchor<TAB>side<TAB>red<TAB>blue<TAB>children`.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# level\tanchor\tside\tred\tblue\tchildren")?;
        let mut stack = vec![self.root()];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let anchor: Vec<String> = self.anchor(id).iter().map(|a| a.to_string()).collect();
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                node.level,
                anchor.join(","),
                node.side,
                node.counts.red,
                node.counts.blue,
                node.num_children
            )?;
            stack.extend(self.children(id).rev());
        }
        Ok(())
    }
}
