use std::io::Write;
use std::time::Instant;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{FairError, Result};
use crate::fairlet::{fairlet_decomposition_with, DecompositionConfig};
use crate::hst::build_hst;
use crate::kmedian::cluster_fairlets;
use crate::types::{Color, ColoredDataset};

/// One line of the runtime table. `fairlet_s` covers embedding plus
/// decomposition; `total_s` adds clustering when it is enabled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub fairlet_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, Copy)]
pub enum BenchSource<'a> {
    /// Fresh uniform points in `[0,1)^dim`, half of them blue.
    Synthetic { dim: usize },
    /// Seeded subsamples of a loaded dataset.
    Dataset(&'a ColoredDataset),
}

/// Uniform points in the unit cube; exactly `n / 2` of them blue.
pub fn synthetic_uniform(n: usize, dim: usize, seed: u64) -> Result<ColoredDataset> {
    if n == 0 || dim == 0 {
        return Err(FairError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<f64> = (0..n * dim).map(|_| rng.random::<f64>()).collect();
    let mut colors = vec![Color::Red; n];
    for i in index::sample(&mut rng, n, n / 2) {
        colors[i] = Color::Blue;
    }
    ColoredDataset::from_flat(dim, coords, colors)
}

/// Seed of trial `t` derived from the master seed (splitmix64 step).
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    let mut z = master.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(trial as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// Median timings over `cfg.trials` instances per size. Trials are
/// interleaved across sizes so slow periods on the host hit every size alike.
pub fn bench(cfg: &RunConfig, sizes: &[usize], source: BenchSource<'_>, cluster: bool) -> Result<Vec<BenchRow>> {
    let p = cfg.validate()?;
    if let BenchSource::Dataset(d) = source {
        if let Some(&n) = sizes.iter().find(|&&n| n > d.len()) {
            return Err(FairError::Config(format!("bench size {n} exceeds the {} loaded points", d.len())));
        }
    }
    let mut fairlet = vec![Vec::with_capacity(cfg.trials); sizes.len()];
    let mut total = vec![Vec::with_capacity(cfg.trials); sizes.len()];
    for t in 0..cfg.trials {
        let seed = trial_seed(cfg.seed, t);
        let hst_cfg = RunConfig { seed, ..cfg.clone() }.hst_config()?;
        for (s, &n) in sizes.iter().enumerate() {
            let data = match source {
                BenchSource::Synthetic { dim } => synthetic_uniform(n, dim, seed)?,
                BenchSource::Dataset(d) => {
                    let mut keep = index::sample(&mut ChaCha8Rng::seed_from_u64(seed), d.len(), n).into_vec();
                    keep.sort_unstable();
                    d.select(&keep)
                }
            };
            super::pipeline::precheck(&data, p)?;
            let t0 = Instant::now();
            let tree = build_hst(&data, hst_cfg)?;
            let fs = fairlet_decomposition_with(&tree, &data, p, DecompositionConfig { selection: cfg.selection })?;
            let t1 = Instant::now();
            if cluster {
                cluster_fairlets(&data, &fs, cfg.k, seed, cfg.center)?;
            }
            let t2 = Instant::now();
            fairlet[s].push((t1 - t0).as_secs_f64());
            total[s].push((t2 - t0).as_secs_f64());
        }
    }
    Ok(sizes
        .iter()
        .enumerate()
        .map(|(s, &n)| BenchRow { n, fairlet_s: median(&mut fairlet[s]), total_s: median(&mut total[s]) })
        .collect())
}

/// Write rows as CSV with header `n,fairlet_s,total_s`.
pub fn write_bench_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
