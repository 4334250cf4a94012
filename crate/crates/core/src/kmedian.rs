//! Weighted k-median by medoid seeding and single-swap local search, and the
//! merge of fairlets into `k` fair clusters.
//!
//! Fairlet centers enter the k-median instance with the fairlet size as an
//! integer weight, which is the same objective as inserting that many copies.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{median_of, Metric};
use crate::error::{FairError, Result};
use crate::fairlet::FairletSet;
use crate::types::{euclidean, ColorCount, ColoredDataset};

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPointSet {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<u64>,
}

impl WeightedPointSet {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<u64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(FairError::DimensionMismatch { expected: points.len(), got: weights.len() });
        }
        if weights.contains(&0) {
            return Err(FairError::Config("weights must be >= 1".into()));
        }
        let dim = points.first().map(|p| p.len()).unwrap_or(0);
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in &points {
            if p.len() != dim {
                return Err(FairError::DimensionMismatch { expected: dim, got: p.len() });
            }
            coords.extend_from_slice(p);
        }
        Ok(Self { dim, coords, weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> u64 {
        self.weights[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMedianConfig {
    pub k: usize,
    pub seed: u64,
    /// A swap is applied only if it lowers the cost by more than this
    /// fraction of the current cost.
    pub min_improvement: f64,
    pub max_swaps: usize,
    /// Above this many distinct locations, each pass tries a random sample of
    /// this many swap-in candidates instead of all of them.
    pub max_candidates: usize,
}

impl KMedianConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, seed, min_improvement: 0.01, max_swaps: 1000, max_candidates: 2048 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMedianResult {
    /// Indices into the input of the chosen medoids.
    pub centers: Vec<usize>,
    /// For every input point, the slot in `centers` it is assigned to.
    pub assignment: Vec<usize>,
    pub cost: f64,
    pub swaps: usize,
}

pub fn kmedian_weighted(pts: &WeightedPointSet, k: usize, seed: u64) -> Result<KMedianResult> {
    kmedian_weighted_with(pts, &KMedianConfig::new(k, seed))
}

struct Nearest {
    near: usize,
    dn: f64,
    ds: f64,
}

fn assign(locs: &[&[f64]], medoids: &[usize], out: &mut Vec<Nearest>) {
    out.clear();
    for p in locs {
        let mut rec = Nearest { near: 0, dn: f64::INFINITY, ds: f64::INFINITY };
        for (slot, &m) in medoids.iter().enumerate() {
            let d = euclidean(p, locs[m]);
            if d < rec.dn {
                rec.ds = rec.dn;
                rec.near = slot;
                rec.dn = d;
            } else if d < rec.ds {
                rec.ds = d;
            }
        }
        out.push(rec);
    }
}

fn total_cost(weights: &[u64], near: &[Nearest]) -> f64 {
    weights.iter().zip(near).map(|(&w, n)| w as f64 * n.dn).sum()
}

pub fn kmedian_weighted_with(pts: &WeightedPointSet, cfg: &KMedianConfig) -> Result<KMedianResult> {
    if pts.is_empty() {
        return Err(FairError::EmptyDataset);
    }
    if cfg.k == 0 {
        return Err(FairError::Config("k must be >= 1".into()));
    }

    // Collapse identical coordinates into one weighted location.
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| {
        pts.point(a)
            .iter()
            .zip(pts.point(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut loc_rep: Vec<usize> = Vec::new();
    let mut loc_weight: Vec<u64> = Vec::new();
    let mut loc_of = vec![0usize; pts.len()];
    for &i in &order {
        if loc_rep.last().is_none_or(|&r| pts.point(r) != pts.point(i)) {
            loc_rep.push(i);
            loc_weight.push(0);
        }
        *loc_weight.last_mut().expect("pushed above") += pts.weight(i);
        loc_of[i] = loc_rep.len() - 1;
    }
    // Restore input order of locations so that results do not depend on
    // coordinate sort order beyond tie handling.
    let mut by_first: Vec<usize> = (0..loc_rep.len()).collect();
    by_first.sort_by_key(|&l| loc_rep[l]);
    let mut rank = vec![0usize; loc_rep.len()];
    for (new, &old) in by_first.iter().enumerate() {
        rank[old] = new;
    }
    let loc_rep: Vec<usize> = by_first.iter().map(|&l| loc_rep[l]).collect();
    let loc_weight: Vec<u64> = by_first.iter().map(|&l| loc_weight[l]).collect();
    for l in loc_of.iter_mut() {
        *l = rank[*l];
    }

    let m = loc_rep.len();
    let locs: Vec<&[f64]> = loc_rep.iter().map(|&i| pts.point(i)).collect();
    let k = if cfg.k > m {
        log::warn!("k={} exceeds {} distinct locations; using k={}", cfg.k, m, m);
        m
    } else {
        cfg.k
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    if k == m {
        medoids.extend(0..m);
    } else {
        let total_w: u64 = loc_weight.iter().sum();
        let mut pick = rng.random_range(0..total_w);
        let first = loc_weight
            .iter()
            .position(|&w| {
                if pick < w {
                    true
                } else {
                    pick -= w;
                    false
                }
            })
            .expect("pick below total weight");
        medoids.push(first);
        let mut dist: Vec<f64> = locs.iter().map(|p| euclidean(p, locs[first])).collect();
        while medoids.len() < k {
            let mass: Vec<f64> = dist.iter().zip(&loc_weight).map(|(&d, &w)| d * w as f64).collect();
            let total: f64 = mass.iter().sum();
            let next = if total > 0.0 {
                let mut u = rng.random::<f64>() * total;
                let mut chosen = None;
                for (i, &mv) in mass.iter().enumerate() {
                    if mv > 0.0 {
                        chosen = Some(i);
                        if u < mv {
                            break;
                        }
                        u -= mv;
                    }
                }
                chosen.expect("positive mass somewhere")
            } else {
                (0..m).find(|i| !medoids.contains(i)).expect("k < m")
            };
            medoids.push(next);
            for (i, d) in dist.iter_mut().enumerate() {
                *d = d.min(euclidean(locs[i], locs[next]));
            }
        }
    }

    let mut near = Vec::with_capacity(m);
    assign(&locs, &medoids, &mut near);
    let mut cost = total_cost(&loc_weight, &near);
    let mut swaps = 0;
    let mut is_medoid = vec![false; m];
    for &md in &medoids {
        is_medoid[md] = true;
    }

    if k < m {
        let mut delta = vec![0.0f64; k];
        'passes: loop {
            let candidates: Vec<usize> = if m <= cfg.max_candidates {
                (0..m).collect()
            } else {
                let mut c = index::sample(&mut rng, m, cfg.max_candidates).into_vec();
                c.sort_unstable();
                c
            };
            let mut improved = false;
            for x in candidates {
                if is_medoid[x] || cost <= 0.0 {
                    continue;
                }
                // Swapping slot i for x changes the cost by `shared + delta[i]`:
                // every point may move to x, and points served by slot i
                // otherwise fall back to their second-nearest medoid.
                delta.iter_mut().for_each(|v| *v = 0.0);
                let mut shared = 0.0;
                for (o, rec) in near.iter().enumerate() {
                    let w = loc_weight[o] as f64;
                    let dox = euclidean(locs[o], locs[x]);
                    if dox < rec.dn {
                        shared += w * (dox - rec.dn);
                    } else {
                        delta[rec.near] += w * (dox.min(rec.ds) - rec.dn);
                    }
                }
                let (slot, best) = delta
                    .iter()
                    .copied()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                    .expect("k >= 1");
                let change = shared + best;
                if change < -cfg.min_improvement * cost {
                    is_medoid[medoids[slot]] = false;
                    medoids[slot] = x;
                    is_medoid[x] = true;
                    assign(&locs, &medoids, &mut near);
                    cost = total_cost(&loc_weight, &near);
                    swaps += 1;
                    improved = true;
                    if swaps >= cfg.max_swaps {
                        break 'passes;
                    }
                }
            }
            if !improved {
                break;
            }
        }
    }

    let centers: Vec<usize> = medoids.iter().map(|&l| loc_rep[l]).collect();
    let assignment: Vec<usize> = loc_of.iter().map(|&l| near[l].near).collect();
    Ok(KMedianResult { centers, assignment, cost, swaps })
}

/// How each fairlet's representative point is chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenterPolicy {
    /// Member minimizing the summed Euclidean distance to the fairlet.
    #[default]
    Medoid,
    /// First listed member.
    FirstMember,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub fairlets: Vec<usize>,
    pub center: Vec<f64>,
    pub counts: ColorCount,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairClustering {
    pub clusters: Vec<Cluster>,
    /// Representative point of every fairlet.
    pub fairlet_centers: Vec<usize>,
    /// Cluster index of every fairlet.
    pub cluster_of_fairlet: Vec<usize>,
    /// `sum_p d(p, center(cluster(p)))` over the original points.
    pub cost: f64,
    /// Sum over fairlets of the distance from members to their representative.
    pub fairlet_cost: f64,
    /// Weighted k-median cost of the representatives.
    pub medoid_cost: f64,
}

/// Merge whole fairlets into at most `k` clusters.
pub fn cluster_fairlets(
    data: &ColoredDataset,
    fs: &FairletSet,
    k: usize,
    seed: u64,
    policy: CenterPolicy,
) -> Result<FairClustering> {
    if fs.is_empty() {
        return Err(FairError::EmptyDataset);
    }
    let mut fairlet_centers = Vec::with_capacity(fs.len());
    let mut fairlet_cost = 0.0;
    for f in fs.fairlets() {
        let c = match policy {
            CenterPolicy::Medoid => median_of(&f.members, Metric::Euclidean(data))?.0,
            CenterPolicy::FirstMember => *f.members.first().ok_or(FairError::EmptySet)?,
        };
        fairlet_cost += f.members.iter().map(|&q| euclidean(data.point(q), data.point(c))).sum::<f64>();
        fairlet_centers.push(c);
    }
    let weighted = WeightedPointSet::new(
        fairlet_centers.iter().map(|&c| data.point(c).to_vec()).collect(),
        fs.fairlets().iter().map(|f| f.len() as u64).collect(),
    )?;
    let km = kmedian_weighted(&weighted, k, seed)?;

    let mut clusters: Vec<Cluster> = km
        .centers
        .iter()
        .map(|&c| Cluster { fairlets: Vec::new(), center: weighted.point(c).to_vec(), counts: ColorCount::ZERO })
        .collect();
    let mut cost = 0.0;
    for (fid, f) in fs.fairlets().iter().enumerate() {
        let slot = km.assignment[fid];
        let cl = &mut clusters[slot];
        cl.fairlets.push(fid);
        cl.counts += f.counts(data);
        cost += f.members.iter().map(|&q| euclidean(data.point(q), &cl.center)).sum::<f64>();
    }
    Ok(FairClustering {
        clusters,
        fairlet_centers,
        cluster_of_fairlet: km.assignment,
        cost,
        fairlet_cost,
        medoid_cost: km.cost,
    })
}
