//! Shared vocabulary: colors, color counts, balance arithmetic, fairness
//! parameters and the colored input pointset.
//!
//! Every balance comparison is done in exact integer arithmetic. A set with
//! `red` and `blue` points is `(r,b)`-balanced iff
//! `r * min(red, blue) >= b * max(red, blue)`; the empty set is balanced.

use std::fmt;

use num_integer::Integer;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};

/// Binary sensitive attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Blue,
}

impl Color {
    pub fn other(self) -> Color {
        match self {
            Color::Red => Color::Blue,
            Color::Blue => Color::Red,
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Color::Red => write!(f, "red"),
            Color::Blue => write!(f, "blue"),
        }
    }
}

/// Number of red and blue points in some set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColorCount {
    pub red: u64,
    pub blue: u64,
}

impl ColorCount {
    pub const ZERO: ColorCount = ColorCount { red: 0, blue: 0 };

    pub fn new(red: u64, blue: u64) -> Self {
        Self { red, blue }
    }

    /// A count holding `n` points of `color` and nothing else.
    pub fn of(color: Color, n: u64) -> Self {
        match color {
            Color::Red => Self::new(n, 0),
            Color::Blue => Self::new(0, n),
        }
    }

    pub fn total(&self) -> u64 {
        self.red + self.blue
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn get(&self, color: Color) -> u64 {
        match color {
            Color::Red => self.red,
            Color::Blue => self.blue,
        }
    }

    pub fn get_mut(&mut self, color: Color) -> &mut u64 {
        match color {
            Color::Red => &mut self.red,
            Color::Blue => &mut self.blue,
        }
    }

    /// The color with the larger count; red on ties.
    pub fn dominant(&self) -> Color {
        if self.red >= self.blue {
            Color::Red
        } else {
            Color::Blue
        }
    }

    pub fn min(&self) -> u64 {
        self.red.min(self.blue)
    }

    pub fn max(&self) -> u64 {
        self.red.max(self.blue)
    }

    pub fn swapped(&self) -> Self {
        Self::new(self.blue, self.red)
    }

    /// Component-wise subtraction, `None` if either component would go negative.
    pub fn checked_sub(&self, other: ColorCount) -> Option<ColorCount> {
        Some(Self::new(
            self.red.checked_sub(other.red)?,
            self.blue.checked_sub(other.blue)?,
        ))
    }

    pub fn add_color(&mut self, color: Color, n: u64) {
        *self.get_mut(color) += n;
    }
}

impl std::ops::Add for ColorCount {
    type Output = ColorCount;
    fn add(self, rhs: ColorCount) -> ColorCount {
        ColorCount::new(self.red + rhs.red, self.blue + rhs.blue)
    }
}

impl std::ops::AddAssign for ColorCount {
    fn add_assign(&mut self, rhs: ColorCount) {
        self.red += rhs.red;
        self.blue += rhs.blue;
    }
}

impl std::iter::Sum for ColorCount {
    fn sum<I: Iterator<Item = ColorCount>>(iter: I) -> ColorCount {
        iter.fold(ColorCount::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for ColorCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} red, {} blue)", self.red, self.blue)
    }
}

/// Exact balance `min(red/blue, blue/red)`.
///
/// Returns 1 for the empty set and for equal counts, 0 when exactly one
/// color is absent.
pub fn balance(c: ColorCount) -> Ratio<u64> {
    if c.max() == 0 {
        return Ratio::from_integer(1);
    }
    Ratio::new(c.min(), c.max())
}

/// Balance as a float, for reporting only.
pub fn balance_f64(c: ColorCount) -> f64 {
    let q = balance(c);
    *q.numer() as f64 / *q.denom() as f64
}

/// `balance(c) >= b/r`, evaluated as `r * min >= b * max` in `u128`.
pub fn is_rb_balanced(c: ColorCount, p: FairnessParams) -> bool {
    (p.r as u128) * (c.min() as u128) >= (p.b as u128) * (c.max() as u128)
}

/// Balance parameters `(r, b)` with `1 <= b <= r` and `gcd(r, b) = 1`.
///
/// Construct through [`validate_params`] or [`FairnessParams::new`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct FairnessParams {
    r: u64,
    b: u64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    r: u64,
    b: u64,
}

impl TryFrom<RawParams> for FairnessParams {
    type Error = FairError;
    fn try_from(raw: RawParams) -> Result<Self> {
        FairnessParams::new(raw.r, raw.b)
    }
}

impl From<FairnessParams> for RawParams {
    fn from(p: FairnessParams) -> Self {
        RawParams { r: p.r, b: p.b }
    }
}

impl FairnessParams {
    /// Strict constructor: rejects anything not already normalized.
    pub fn new(r: u64, b: u64) -> Result<Self> {
        if r == 0 || b == 0 {
            return Err(FairError::InvalidParams(format!("r and b must be >= 1 (got r={r}, b={b})")));
        }
        if b > r {
            return Err(FairError::InvalidParams(format!("need b <= r (got r={r}, b={b})")));
        }
        if r.gcd(&b) != 1 {
            return Err(FairError::InvalidParams(format!("need gcd(r, b) = 1 (got r={r}, b={b})")));
        }
        Ok(Self { r, b })
    }

    pub fn r(&self) -> u64 {
        self.r
    }

    pub fn b(&self) -> u64 {
        self.b
    }

    /// Maximum fairlet size `r + b`.
    pub fn fairlet_size(&self) -> u64 {
        self.r + self.b
    }

    /// Target balance `b / r`.
    pub fn target(&self) -> Ratio<u64> {
        Ratio::new(self.b, self.r)
    }

    pub fn target_f64(&self) -> f64 {
        self.b as f64 / self.r as f64
    }
}

impl fmt::Display for FairnessParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.r, self.b)
    }
}

/// Note attached to a parameter pair that had to be rewritten.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamWarning {
    /// Both values were divided by their gcd.
    GcdReduced { gcd: u64, r: u64, b: u64 },
}

impl fmt::Display for ParamWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamWarning::GcdReduced { gcd, r, b } => {
                write!(f, "gcd(r, b) = {gcd}; reduced to r={r}, b={b}")
            }
        }
    }
}

/// Normalize user-supplied `(r, b)`: swap so that `b <= r`, then divide by
/// the gcd. A gcd reduction is reported as a warning, not an error.
pub fn validate_params(r: u64, b: u64) -> Result<(FairnessParams, Option<ParamWarning>)> {
    if r == 0 || b == 0 {
        return Err(FairError::InvalidParams(format!("r and b must be >= 1 (got r={r}, b={b})")));
    }
    let (r, b) = if b > r { (b, r) } else { (r, b) };
    let g = r.gcd(&b);
    let warning = (g > 1).then(|| ParamWarning::GcdReduced { gcd: g, r: r / g, b: b / g });
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok((FairnessParams { r: r / g, b: b / g }, warning))
}

/// Colored pointset in `R^d`. Coordinates are stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColoredDataset {
    dim: usize,
    coords: Vec<f64>,
    colors: Vec<Color>,
}

impl ColoredDataset {
    pub fn new(points: Vec<Vec<f64>>, colors: Vec<Color>) -> Result<Self> {
        if points.len() != colors.len() {
            return Err(FairError::DimensionMismatch { expected: points.len(), got: colors.len() });
        }
        let dim = points.first().map(|p| p.len()).unwrap_or(0);
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in &points {
            if p.len() != dim {
                return Err(FairError::DimensionMismatch { expected: dim, got: p.len() });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, coords, colors)
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>, colors: Vec<Color>) -> Result<Self> {
        if !colors.is_empty() && dim == 0 {
            return Err(FairError::DimensionMismatch { expected: 1, got: 0 });
        }
        if coords.len() != dim * colors.len() {
            return Err(FairError::DimensionMismatch {
                expected: dim * colors.len(),
                got: coords.len(),
            });
        }
        Ok(Self { dim, coords, colors })
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn color(&self, i: usize) -> Color {
        self.colors[i]
    }

    pub fn colors(&self) -> &[Color] {
        &self.colors
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim.max(1))
    }

    pub fn counts(&self) -> ColorCount {
        self.count_of(0..self.len())
    }

    pub fn count_of(&self, indices: impl IntoIterator<Item = usize>) -> ColorCount {
        let mut c = ColorCount::ZERO;
        for i in indices {
            c.add_color(self.colors[i], 1);
        }
        c
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        euclidean(self.point(i), self.point(j))
    }

    /// New dataset holding the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> ColoredDataset {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        let mut colors = Vec::with_capacity(indices.len());
        for &i in indices {
            coords.extend_from_slice(self.point(i));
            colors.push(self.colors[i]);
        }
        ColoredDataset { dim: self.dim, coords, colors }
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
