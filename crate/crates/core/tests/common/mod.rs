#![allow(dead_code)]

use fairkm::types::{Color, ColoredDataset, FairnessParams};
use rand::seq::SliceRandom;
use rand::Rng;

pub const PARAM_GRID: [(u64, u64); 5] = [(1, 1), (2, 1), (3, 1), (3, 2), (5, 4)];

pub fn params(r: u64, b: u64) -> FairnessParams {
    FairnessParams::new(r, b).unwrap()
}

/// Blue counts in `lo..=hi` keep `n` points `(r,b)`-balanced.
pub fn balanced_blue_range(n: u64, p: FairnessParams) -> Option<(u64, u64)> {
    let (r, b) = (p.r(), p.b());
    let lo = (n * b).div_ceil(r + b);
    let hi = n * r / (r + b);
    (lo <= hi).then_some((lo, hi))
}

/// Coordinates of various shapes: uniform, a few tight clumps, or a coarse
/// integer grid that produces coincident points.
pub fn coords<R: Rng>(rng: &mut R, n: usize, d: usize) -> Vec<Vec<f64>> {
    match rng.random_range(0..3) {
        0 => (0..n).map(|_| (0..d).map(|_| rng.random::<f64>() * 100.0).collect()).collect(),
        1 => {
            let centers: Vec<Vec<f64>> =
                (0..rng.random_range(1..5)).map(|_| (0..d).map(|_| rng.random::<f64>() * 1000.0).collect()).collect();
            (0..n)
                .map(|_| {
                    let c = &centers[rng.random_range(0..centers.len())];
                    c.iter().map(|&x| x + rng.random::<f64>()).collect()
                })
                .collect()
        }
        _ => (0..n).map(|_| (0..d).map(|_| rng.random_range(0..4) as f64).collect()).collect(),
    }
}

/// Random dataset of `n` points (adjusted upward until a balanced colouring
/// exists) with a uniformly chosen balanced number of blue points.
pub fn balanced_instance<R: Rng>(rng: &mut R, n: usize, d: usize, p: FairnessParams) -> ColoredDataset {
    let mut n = n as u64;
    let (lo, hi) = loop {
        if let Some(r) = balanced_blue_range(n, p) {
            break r;
        }
        n += 1;
    };
    let blue = rng.random_range(lo..=hi) as usize;
    let mut colors = vec![Color::Red; n as usize];
    colors[..blue].iter_mut().for_each(|c| *c = Color::Blue);
    colors.shuffle(rng);
    ColoredDataset::new(coords(rng, n as usize, d), colors).unwrap()
}

/// Like [`balanced_instance`] but with continuous coordinates only.
pub fn balanced_uniform<R: Rng>(rng: &mut R, n: usize, d: usize, p: FairnessParams) -> ColoredDataset {
    loop {
        let ds = balanced_instance(rng, n, d, p);
        let mut seen: Vec<Vec<u64>> = ds.points().map(|q| q.iter().map(|x| x.to_bits()).collect()).collect();
        seen.sort();
        seen.dedup();
        if seen.len() == ds.len() {
            return ds;
        }
    }
}

pub fn uniform_square<R: Rng>(rng: &mut R, n: usize, d: usize) -> ColoredDataset {
    let pts = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
    let colors = (0..n).map(|i| if i % 2 == 0 { Color::Red } else { Color::Blue }).collect();
    ColoredDataset::new(pts, colors).unwrap()
}

/// Random child profiles with a balanced total, each colour count at most
/// `cap`, between 2 and `max_children` children.
pub fn random_children<R: Rng>(
    rng: &mut R,
    p: FairnessParams,
    max_children: usize,
    cap: u64,
) -> Vec<fairkm::heavy::ChildProfile> {
    use fairkm::heavy::ChildProfile;
    use fairkm::types::{is_rb_balanced, ColorCount};
    loop {
        let m = rng.random_range(2..=max_children);
        let skew = rng.random_bool(0.5);
        let kids: Vec<ChildProfile> = (0..m)
            .map(|i| {
                let (mut a, mut b) = (rng.random_range(0..=cap), rng.random_range(0..=cap));
                if skew && rng.random_bool(0.5) {
                    // one-sided children exercise the later stages
                    if rng.random_bool(0.5) { a = 0 } else { b = 0 }
                }
                if a + b == 0 {
                    a = 1;
                }
                ChildProfile::new(i, ColorCount::new(a, b))
            })
            .collect();
        let total: ColorCount = kids.iter().map(|c| c.counts).sum();
        if is_rb_balanced(total, p) {
            return kids;
        }
    }
}
