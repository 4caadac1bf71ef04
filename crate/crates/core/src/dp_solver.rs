//! Exact squared-Euclidean optimal transport from a product distribution to a
//! two-point target.
//!
//! With `ℓ(x) = xᵀ(y1 - y2)` the distance splits into
//!
//! ```text
//! W = E_μ‖x‖² + t‖y1‖² + (1-t)‖y2‖² - 2 E_μ[xᵀy2] - 2 t·CVaR_t[ℓ(x)]
//! ```
//!
//! and only the CVaR term couples the coordinates. Because each increment
//! `x_k (y1_k - y2_k)` lies on one regular grid, the law of `ℓ(x)` is obtained
//! by K-1 discrete convolutions on the Minkowski-sum grid, after which the
//! CVaR is a single pass over the cumulative distribution.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::grid::{detect_spanned_grid, minkowski_grid, minkowski_size, GriddedPmf, RegularGrid1D};
use crate::model::{
    dot, render_rational, squared_distance, validate_instance, Diagnostics, OtScalar, OtValue,
    ProductDistribution, Rational, TwoPointTarget,
};

/// Per-coordinate laws of the loss increments `x_k (y1_k - y2_k)`.
///
/// `entries[k]` lists distinct increment values in ascending order with the
/// total marginal probability mapping to each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LossTable {
    pub entries: Vec<Vec<(Rational, Rational)>>,
}

impl LossTable {
    pub fn values(&self) -> impl Iterator<Item = &Rational> {
        self.entries.iter().flatten().map(|(v, _)| v)
    }
}

/// Compact encoding of an optimal plan: atoms whose loss exceeds `threshold`
/// go to y1, atoms below it go to y2, and atoms exactly at the threshold send
/// the fraction `fraction` of their mass to y1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanDescriptor {
    /// Value-at-risk of the loss, the grid point at the critical index.
    pub threshold: Rational,
    pub fraction: Rational,
    pub t: Rational,
    pub loss_pmf: GriddedPmf,
    /// Zero-based critical index on the loss grid.
    pub critical_index: usize,
}

/// `ℓ(x) = xᵀ(y1 - y2)`.
pub fn loss_of(point: &[Rational], target: &TwoPointTarget) -> Rational {
    let direction: Vec<Rational> = target.y1.iter().zip(&target.y2).map(|(a, b)| a - b).collect();
    dot(point, &direction)
}

pub fn loss_table(mu: &ProductDistribution, target: &TwoPointTarget) -> LossTable {
    let entries = mu
        .marginals
        .iter()
        .zip(target.y1.iter().zip(&target.y2))
        .map(|(marginal, (a, b))| {
            let diff = a - b;
            let mut merged: BTreeMap<Rational, Rational> = BTreeMap::new();
            for (x, p) in marginal.iter() {
                *merged.entry(x * &diff).or_insert_with(Rational::zero) += p;
            }
            merged.into_iter().collect()
        })
        .collect();
    LossTable { entries }
}

/// Probability vector of one coordinate scaled to integers over a common
/// denominator, as (grid offset, numerator) pairs.
struct ScaledIncrements {
    weights: Vec<(usize, BigInt)>,
    denom: BigInt,
}

fn scale_increments(list: &[(Rational, Rational)], grid: &RegularGrid1D) -> Result<ScaledIncrements> {
    let denom = list
        .iter()
        .fold(BigInt::one(), |acc, (_, p)| acc.lcm(p.denom()));
    let mut weights = Vec::with_capacity(list.len());
    for (value, prob) in list {
        let offset = grid.index_of(value).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "loss increment {} is not on the supplied grid",
                render_rational(value)
            ))
        })?;
        if prob.is_zero() {
            continue;
        }
        weights.push((offset, prob.numer() * (&denom / prob.denom())));
    }
    Ok(ScaledIncrements { weights, denom })
}

/// Runs the convolution recursion and hands every stage (1-based k, integer
/// masses, common denominator) to `on_stage`.
fn convolve_with<F>(table: &LossTable, grid: &RegularGrid1D, cap: usize, mut on_stage: F) -> Result<()>
where
    F: FnMut(usize, &[BigInt], &BigInt),
{
    let k_total = table.entries.len();
    if k_total == 0 {
        return Err(Error::EmptyInput);
    }
    let final_size = minkowski_size(grid.count, k_total)
        .filter(|&n| n <= cap)
        .ok_or_else(|| Error::GridTooLarge {
            size: format!("{}*({}-1)+1", k_total, grid.count),
            cap,
        })?;
    let mut increments = table
        .entries
        .iter()
        .map(|list| scale_increments(list, grid))
        .collect::<Result<Vec<_>>>()?
        .into_iter();

    let first = increments.next().expect("K >= 1");
    let mut masses = vec![BigInt::zero(); grid.count];
    for (offset, w) in first.weights {
        masses[offset] += w;
    }
    let mut denom = first.denom;
    on_stage(1, &masses, &denom);

    for (stage, inc) in increments.enumerate() {
        let k = stage + 2;
        let size = k * (grid.count - 1) + 1;
        let mut next = vec![BigInt::zero(); size];
        for (offset, w) in &inc.weights {
            for (j, m) in masses.iter().enumerate() {
                if !m.is_zero() {
                    next[j + offset] += m * w;
                }
            }
        }
        denom *= &inc.denom;
        // keep numerators small: strip the common factor of all masses and denom
        let common = next.iter().fold(denom.clone(), |g, m| g.gcd(m));
        if !common.is_one() {
            for m in next.iter_mut() {
                *m /= &common;
            }
            denom /= &common;
        }
        masses = next;
        on_stage(k, &masses, &denom);
    }
    debug_assert_eq!(masses.len(), final_size);
    Ok(())
}

fn to_pmf(grid: &RegularGrid1D, k: usize, masses: &[BigInt], denom: &BigInt) -> GriddedPmf {
    GriddedPmf {
        grid: minkowski_grid(grid, k),
        probs: masses
            .iter()
            .map(|m| {
                if m.is_zero() {
                    Rational::zero()
                } else {
                    Rational::new(m.clone(), denom.clone())
                }
            })
            .collect(),
    }
}

/// Law of `ℓ(x) = Σ_k x_k (y1_k - y2_k)` on the K-fold Minkowski sum of
/// `grid`. Every table value must lie on `grid`.
pub fn convolve_losses(table: &LossTable, grid: &RegularGrid1D, cap: usize) -> Result<GriddedPmf> {
    let mut last = None;
    convolve_with(table, grid, cap, |k, masses, denom| {
        if k == table.entries.len() {
            last = Some(to_pmf(grid, k, masses, denom));
        }
    })?;
    Ok(last.expect("final stage is always reported"))
}

/// The loss law after each stage k = 1..K of the recursion.
pub fn convolution_stages(table: &LossTable, grid: &RegularGrid1D, cap: usize) -> Result<Vec<GriddedPmf>> {
    let mut stages = Vec::with_capacity(table.entries.len());
    convolve_with(table, grid, cap, |k, masses, denom| {
        stages.push(to_pmf(grid, k, masses, denom));
    })?;
    Ok(stages)
}

fn check_open_unit(t: &Rational) -> Result<()> {
    if t.is_positive() && t < &Rational::one() {
        Ok(())
    } else {
        Err(Error::BadT(render_rational(t)))
    }
}

/// Zero-based index n with `cdf(n) ≥ 1 - t > cdf(n - 1)`. Requires 0 < t < 1.
pub fn critical_index(pmf: &GriddedPmf, t: &Rational) -> Result<usize> {
    check_open_unit(t)?;
    let level = Rational::one() - t;
    let mut cdf = Rational::zero();
    for (n, p) in pmf.probs.iter().enumerate().filter(|(_, p)| !p.is_zero()) {
        cdf += p;
        if cdf >= level {
            return Ok(n);
        }
    }
    Err(Error::BadProbabilities("pmf mass is below one".into()))
}

/// `t · CVaR_t[ℓ]`, the expected loss over the worst t-fraction of mass.
///
/// Defined for all t in [0, 1]: zero at t = 0 and the mean at t = 1.
pub fn scaled_cvar(pmf: &GriddedPmf, t: &Rational) -> Result<Rational> {
    if t.is_zero() {
        return Ok(Rational::zero());
    }
    if t.is_one() {
        return Ok(pmf.mean());
    }
    let n_t = critical_index(pmf, t)?;
    let cdf: Rational = pmf.probs[..=n_t].iter().filter(|p| !p.is_zero()).sum();
    let head = (cdf - (Rational::one() - t)) * pmf.grid.point(n_t);
    let tail: Rational = pmf.probs[n_t + 1..]
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.is_zero())
        .map(|(j, p)| pmf.grid.point(n_t + 1 + j) * p)
        .sum();
    Ok(head + tail)
}

/// `Σ_k Σ_l μ_k^l (x_k^l - y_k)²`, the cost of sending everything to `y`.
fn cost_to_point(mu: &ProductDistribution, y: &[Rational]) -> Rational {
    mu.marginals
        .iter()
        .zip(y)
        .map(|(m, yk)| {
            m.iter()
                .map(|(x, p)| {
                    let d = x - yk;
                    p * &d * &d
                })
                .sum::<Rational>()
        })
        .sum()
}

struct LossLaw {
    grid: RegularGrid1D,
    pmf: GriddedPmf,
}

fn loss_law(mu: &ProductDistribution, target: &TwoPointTarget, cap: usize) -> Result<LossLaw> {
    let table = loss_table(mu, target);
    let values: Vec<Rational> = table.values().cloned().collect();
    let grid = detect_spanned_grid(&values, cap)?;
    let pmf = convolve_losses(&table, &grid, cap)?;
    Ok(LossLaw { grid, pmf })
}

/// Exact `W(μ, ν_t)` for the squared Euclidean cost.
pub fn ot_exact(mu: &ProductDistribution, target: &TwoPointTarget, cap: usize) -> Result<OtValue> {
    validate_instance(mu, target)?;
    let t = &target.t;
    if t.is_zero() {
        return Ok(OtValue::exact(cost_to_point(mu, &target.y2)));
    }
    if t.is_one() || target.y1 == target.y2 {
        return Ok(OtValue::exact(cost_to_point(mu, &target.y1)));
    }

    let law = loss_law(mu, target, cap)?;
    let n_t = critical_index(&law.pmf, t)?;
    let cvar_term = scaled_cvar(&law.pmf, t)?;

    let second_moment: Rational = mu
        .marginals
        .iter()
        .flat_map(|m| m.iter().map(|(x, p)| p * x * x))
        .sum();
    let one_minus_t = Rational::one() - t;
    let target_moment = t * dot(&target.y1, &target.y1) + &one_minus_t * dot(&target.y2, &target.y2);
    let cross: Rational = mu
        .marginals
        .iter()
        .zip(&target.y2)
        .flat_map(|(m, y)| m.iter().map(move |(x, p)| x * p * y))
        .sum();
    let two = Rational::from_integer(BigInt::from(2));
    let value = second_moment + target_moment - &two * cross - &two * cvar_term;
    debug_assert!(!value.is_negative());

    Ok(OtValue {
        value: OtScalar::Exact(value),
        diagnostics: Diagnostics {
            grid_n: Some(law.grid.count),
            minkowski_size: Some(law.pmf.grid.count),
            critical_index: Some(n_t),
        },
    })
}

/// Threshold/fraction description of an optimal plan. Requires 0 < t < 1.
pub fn plan_descriptor(mu: &ProductDistribution, target: &TwoPointTarget, cap: usize) -> Result<PlanDescriptor> {
    validate_instance(mu, target)?;
    check_open_unit(&target.t)?;
    let law = loss_law(mu, target, cap)?;
    let n_t = critical_index(&law.pmf, &target.t)?;
    let cdf: Rational = law.pmf.probs[..=n_t].iter().filter(|p| !p.is_zero()).sum();
    let at_threshold = &law.pmf.probs[n_t];
    let fraction = (&target.t - Rational::one() + cdf) / at_threshold;
    debug_assert!(!fraction.is_negative() && fraction <= Rational::one());
    Ok(PlanDescriptor {
        threshold: law.pmf.grid.point(n_t),
        fraction,
        t: target.t.clone(),
        loss_pmf: law.pmf,
        critical_index: n_t,
    })
}

/// Mass `(π_1, π_2)` that the atom `point` (with probability `atom_prob`)
/// sends to y1 and y2 under the plan.
pub fn plan_query(
    desc: &PlanDescriptor,
    point: &[Rational],
    atom_prob: &Rational,
    target: &TwoPointTarget,
) -> Result<(Rational, Rational)> {
    if !atom_prob.is_positive() {
        return Err(Error::NotAnAtom);
    }
    if point.len() != target.dim() {
        return Err(Error::DimensionMismatch(format!(
            "atom has {} coordinates, targets have {}",
            point.len(),
            target.dim()
        )));
    }
    let loss = loss_of(point, target);
    let to_y1 = match loss.cmp(&desc.threshold) {
        std::cmp::Ordering::Greater => atom_prob.clone(),
        std::cmp::Ordering::Equal => &desc.fraction * atom_prob,
        std::cmp::Ordering::Less => Rational::zero(),
    };
    let to_y2 = atom_prob - &to_y1;
    Ok((to_y1, to_y2))
}

/// Cost of transporting `point` with masses `(π_1, π_2)`.
pub fn plan_cost_of_atom(point: &[Rational], masses: &(Rational, Rational), target: &TwoPointTarget) -> Rational {
    &masses.0 * squared_distance(point, &target.y1) + &masses.1 * squared_distance(point, &target.y2)
}
