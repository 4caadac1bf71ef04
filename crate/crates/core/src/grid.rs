//! Regular one-dimensional grids, their Minkowski sums, and probability
//! mass functions living on them.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::model::{render_rational, Rational};

/// Default cap on the number of grid points any DP stage may hold.
pub const DEFAULT_GRID_CAP: usize = 1_000_000;

/// `{origin + spacing * n : n = 0..count}`. A single-point grid has spacing 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegularGrid1D {
    pub origin: Rational,
    pub spacing: Rational,
    pub count: usize,
}

impl RegularGrid1D {
    pub fn singleton(origin: Rational) -> Self {
        RegularGrid1D {
            origin,
            spacing: Rational::zero(),
            count: 1,
        }
    }

    /// Zero-based n-th point.
    pub fn point(&self, n: usize) -> Rational {
        &self.origin + &self.spacing * Rational::from_integer(BigInt::from(n))
    }

    pub fn points(&self) -> impl Iterator<Item = Rational> + '_ {
        (0..self.count).map(move |n| self.point(n))
    }

    pub fn last(&self) -> Rational {
        self.point(self.count - 1)
    }

    /// Zero-based position of `value`, if it lies exactly on the grid.
    pub fn index_of(&self, value: &Rational) -> Option<usize> {
        if self.count == 1 || self.spacing.is_zero() {
            return (value == &self.origin).then_some(0);
        }
        let steps = (value - &self.origin) / &self.spacing;
        if !steps.is_integer() || steps.is_negative() {
            return None;
        }
        steps.to_integer().to_usize().filter(|&n| n < self.count)
    }
}

/// Number of points of the k-fold Minkowski sum of an N-point grid, or
/// `None` on overflow.
pub fn minkowski_size(count: usize, k: usize) -> Option<usize> {
    k.checked_mul(count.checked_sub(1)?)?.checked_add(1)
}

/// The coarsest regular grid spanned by `values`: it starts at the minimum,
/// ends at the maximum, and its spacing is the rational gcd of all offsets
/// from the minimum.
pub fn detect_spanned_grid(values: &[Rational], cap: usize) -> Result<RegularGrid1D> {
    let min = values.iter().min().ok_or(Error::EmptyInput)?;
    let max = values.iter().max().ok_or(Error::EmptyInput)?;
    if min == max {
        return Ok(RegularGrid1D::singleton(min.clone()));
    }
    // gcd(a_i / b_i) = gcd(a_i) / lcm(b_i) for reduced fractions
    let (numer_gcd, denom_lcm) = values
        .iter()
        .map(|v| v - min)
        .filter(|d| !d.is_zero())
        .fold((BigInt::zero(), BigInt::one()), |(g, l), d| {
            (g.gcd(d.numer()), l.lcm(d.denom()))
        });
    let spacing = Rational::new(numer_gcd, denom_lcm);
    let steps = (max - min) / &spacing;
    debug_assert!(steps.is_integer());
    let count = steps.to_integer() + BigInt::one();
    let count = match count.to_usize() {
        Some(n) if n <= cap => n,
        _ => {
            return Err(Error::GridTooLarge {
                size: count.to_string(),
                cap,
            })
        }
    };
    Ok(RegularGrid1D {
        origin: min.clone(),
        spacing,
        count,
    })
}

/// The k-fold Minkowski sum `grid + ... + grid`: same spacing, origin scaled
/// by k, `k (N - 1) + 1` points.
///
/// Panics if the point count overflows `usize`; use [`minkowski_size`] to
/// check first.
pub fn minkowski_grid(grid: &RegularGrid1D, k: usize) -> RegularGrid1D {
    assert!(k >= 1, "Minkowski power must be positive");
    RegularGrid1D {
        origin: &grid.origin * Rational::from_integer(BigInt::from(k)),
        spacing: grid.spacing.clone(),
        count: minkowski_size(grid.count, k).expect("Minkowski grid size overflows usize"),
    }
}

/// A probability mass function on a regular grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GriddedPmf {
    pub grid: RegularGrid1D,
    pub probs: Vec<Rational>,
}

impl GriddedPmf {
    pub fn new(grid: RegularGrid1D, probs: Vec<Rational>) -> Result<Self> {
        if probs.len() != grid.count {
            return Err(Error::DimensionMismatch(format!(
                "{} probabilities for a grid of {} points",
                probs.len(),
                grid.count
            )));
        }
        if let Some(p) = probs.iter().find(|p| p.is_negative()) {
            return Err(Error::BadProbabilities(format!(
                "negative mass {}",
                render_rational(p)
            )));
        }
        let total: Rational = probs.iter().sum();
        if !total.is_one() {
            return Err(Error::BadProbabilities(format!(
                "masses sum to {}",
                render_rational(&total)
            )));
        }
        Ok(GriddedPmf { grid, probs })
    }

    pub fn iter(&self) -> impl Iterator<Item = (Rational, &Rational)> + '_ {
        self.grid.points().zip(self.probs.iter())
    }

    pub fn mean(&self) -> Rational {
        self.iter().map(|(s, p)| s * p).sum()
    }
}
