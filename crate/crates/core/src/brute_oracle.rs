//! Small-instance oracle: explicit enumeration of the product atoms and the
//! sorted greedy solution of the transport LP against a two-point target.
//! Independent of the grid/convolution machinery in `dp_solver`.

use num_bigint::BigUint;
use num_traits::{Num, One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::model::{
    rational_to_f64, squared_distance, validate_instance, OtScalar, OtValue,
    ProductDistribution, Rational, TwoPointTarget,
};

/// Default cap on enumerated atoms, 2^20.
pub const DEFAULT_ATOM_CAP: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    /// One support index per marginal.
    pub indices: Vec<usize>,
    pub point: Vec<Rational>,
    pub prob: Rational,
}

/// All atoms of a product distribution, in lexicographic order of their
/// marginal indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomList {
    pub atoms: Vec<Atom>,
}

impl AtomList {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Exact,
    Float,
}

pub fn enumerate_atoms(mu: &ProductDistribution, cap: usize) -> Result<AtomList> {
    let count = mu.atom_count();
    let n = match count.to_usize() {
        Some(n) if n <= cap => n,
        _ => {
            return Err(Error::TooManyAtoms {
                count: count.to_string(),
                cap,
            })
        }
    };
    let sizes: Vec<usize> = mu.marginals.iter().map(|m| m.len()).collect();
    let mut atoms = Vec::with_capacity(n);
    if sizes.contains(&0) {
        return Ok(AtomList { atoms });
    }
    let mut indices = vec![0usize; sizes.len()];
    loop {
        let (point, prob) = mu.atom(&indices)?;
        atoms.push(Atom {
            indices: indices.clone(),
            point,
            prob,
        });
        // odometer, last coordinate fastest
        let mut k = sizes.len();
        loop {
            if k == 0 {
                return Ok(AtomList { atoms });
            }
            k -= 1;
            indices[k] += 1;
            if indices[k] < sizes[k] {
                break;
            }
            indices[k] = 0;
        }
    }
}

/// Validated transport exponent.
#[derive(Debug, Clone, Copy)]
enum Exponent {
    Even(u32),
    Real(f64),
}

fn exponent(p: f64, mode: Mode) -> Result<Exponent> {
    if !p.is_finite() || p < 1.0 {
        return Err(Error::InvalidArgument(format!("exponent p = {p} must be at least 1")));
    }
    match mode {
        Mode::Float => Ok(Exponent::Real(p)),
        Mode::Exact => {
            if p.fract() == 0.0 && p <= u32::MAX as f64 && (p as u32) % 2 == 0 {
                Ok(Exponent::Even(p as u32))
            } else {
                Err(Error::OddPExact(p.to_string()))
            }
        }
    }
}

/// `‖a - b‖^p` in the requested arithmetic.
enum Cost {
    Exact(Rational),
    Float(f64),
}

fn cost(a: &[Rational], b: &[Rational], p: Exponent) -> Cost {
    let sq = squared_distance(a, b);
    match p {
        Exponent::Even(p) => Cost::Exact(num_traits::pow(sq, (p / 2) as usize)),
        Exponent::Real(p) => {
            let sq = rational_to_f64(&sq);
            Cost::Float(if p == 2.0 { sq } else { sq.sqrt().powf(p) })
        }
    }
}

/// Fills the y1 budget `t` in ascending order of `c1 - c2`, breaking ties by
/// input order, and returns the per-row y1 masses. Rows are
/// `(cost to y1, cost to y2, probability)`.
fn greedy_masses<T>(rows: &[(T, T, T)], t: &T) -> Vec<T>
where
    T: Num + Clone + PartialOrd,
{
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let keys: Vec<T> = rows.iter().map(|(c1, c2, _)| c1.clone() - c2.clone()).collect();
    order.sort_by(|&i, &j| keys[i].partial_cmp(&keys[j]).unwrap_or(std::cmp::Ordering::Equal));
    let mut remaining = t.clone();
    let mut masses = vec![T::zero(); rows.len()];
    for i in order {
        if remaining <= T::zero() {
            break;
        }
        let prob = &rows[i].2;
        let q = if prob < &remaining { prob.clone() } else { remaining.clone() };
        remaining = remaining - q.clone();
        masses[i] = q;
    }
    masses
}

fn greedy_value<T>(rows: &[(T, T, T)], t: &T) -> T
where
    T: Num + Clone + PartialOrd,
{
    let masses = greedy_masses(rows, t);
    rows.iter().zip(masses).fold(T::zero(), |acc, ((c1, c2, p), q)| {
        acc + q.clone() * c1.clone() + (p.clone() - q) * c2.clone()
    })
}

enum Rows {
    Exact(Vec<(Rational, Rational, Rational)>),
    Float(Vec<(f64, f64, f64)>),
}

fn cost_rows(atoms: &AtomList, y1: &[Rational], y2: &[Rational], p: Exponent) -> Rows {
    match p {
        Exponent::Even(_) => Rows::Exact(
            atoms
                .atoms
                .iter()
                .map(|a| match (cost(&a.point, y1, p), cost(&a.point, y2, p)) {
                    (Cost::Exact(c1), Cost::Exact(c2)) => (c1, c2, a.prob.clone()),
                    _ => unreachable!("even exponent yields exact costs"),
                })
                .collect(),
        ),
        Exponent::Real(_) => Rows::Float(
            atoms
                .atoms
                .iter()
                .map(|a| match (cost(&a.point, y1, p), cost(&a.point, y2, p)) {
                    (Cost::Float(c1), Cost::Float(c2)) => (c1, c2, rational_to_f64(&a.prob)),
                    _ => unreachable!("real exponent yields float costs"),
                })
                .collect(),
        ),
    }
}

/// `W(μ, ν_t)` for the cost `‖x - y‖^p` by sorting atoms on
/// `‖x - y1‖^p - ‖x - y2‖^p` and filling y1 greedily.
pub fn ot_closed_form(
    mu: &ProductDistribution,
    target: &TwoPointTarget,
    p: f64,
    mode: Mode,
    cap: usize,
) -> Result<OtValue> {
    validate_instance(mu, target)?;
    let p = exponent(p, mode)?;
    let atoms = enumerate_atoms(mu, cap)?;
    let value = match cost_rows(&atoms, &target.y1, &target.y2, p) {
        Rows::Exact(rows) => OtScalar::Exact(greedy_value(&rows, &target.t)),
        Rows::Float(rows) => OtScalar::Float(greedy_value(&rows, &rational_to_f64(&target.t))),
    };
    Ok(OtValue {
        value,
        diagnostics: Default::default(),
    })
}

/// The greedy plan for p = 2 in exact arithmetic: each atom with the mass it
/// sends to y1.
pub fn greedy_plan(mu: &ProductDistribution, target: &TwoPointTarget, cap: usize) -> Result<Vec<(Atom, Rational)>> {
    validate_instance(mu, target)?;
    let atoms = enumerate_atoms(mu, cap)?;
    let rows = match cost_rows(&atoms, &target.y1, &target.y2, Exponent::Even(2)) {
        Rows::Exact(rows) => rows,
        Rows::Float(_) => unreachable!(),
    };
    let masses = greedy_masses(&rows, &target.t);
    Ok(atoms.atoms.into_iter().zip(masses).collect())
}

/// `min_t W(μ, ν_t) = Σ_i μ_i min(‖x_i - y1‖^p, ‖x_i - y2‖^p)`.
pub fn min_of_wasserstein_over_t(
    mu: &ProductDistribution,
    y1: &[Rational],
    y2: &[Rational],
    p: f64,
    mode: Mode,
    cap: usize,
) -> Result<OtScalar> {
    validate_instance(mu, &TwoPointTarget::new(y1.to_vec(), y2.to_vec(), Rational::zero())?)?;
    let p = exponent(p, mode)?;
    let atoms = enumerate_atoms(mu, cap)?;
    Ok(match cost_rows(&atoms, y1, y2, p) {
        Rows::Exact(rows) => OtScalar::Exact(
            rows.into_iter()
                .map(|(c1, c2, prob)| prob * c1.min(c2))
                .sum(),
        ),
        Rows::Float(rows) => OtScalar::Float(rows.into_iter().map(|(c1, c2, prob)| prob * c1.min(c2)).sum()),
    })
}

/// Largest oracle error the knapsack reduction tolerates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EpsilonBar {
    Finite(Rational),
    /// No atom distinguishes y1 from y2.
    Infinite,
}

impl EpsilonBar {
    pub fn finite(&self) -> Option<&Rational> {
        match self {
            EpsilonBar::Finite(r) => Some(r),
            EpsilonBar::Infinite => None,
        }
    }
}

/// `(1 / 4I) · min { |‖x_i - y1‖^p - ‖x_i - y2‖^p| ≠ 0 }` over the I atoms.
pub fn epsilon_bar(mu: &ProductDistribution, y1: &[Rational], y2: &[Rational], p: u32, cap: usize) -> Result<EpsilonBar> {
    validate_instance(mu, &TwoPointTarget::new(y1.to_vec(), y2.to_vec(), Rational::zero())?)?;
    let p = exponent(p as f64, Mode::Exact)?;
    let atoms = enumerate_atoms(mu, cap)?;
    let rows = match cost_rows(&atoms, y1, y2, p) {
        Rows::Exact(rows) => rows,
        Rows::Float(_) => unreachable!(),
    };
    let smallest = rows
        .iter()
        .map(|(c1, c2, _)| (c1 - c2).abs())
        .filter(|d| !d.is_zero())
        .min();
    Ok(match smallest {
        Some(d) => {
            let four_i = Rational::from_integer((BigUint::from(4u32) * BigUint::from(atoms.len())).into());
            EpsilonBar::Finite(d / four_i)
        }
        None => EpsilonBar::Infinite,
    })
}

/// `t · CVaR_t[ℓ(x)]` as the optimum of its dual representation
/// `t · max { Σ ℓ_i μ_i ζ_i : 0 ≤ ζ_i ≤ 1/t, Σ μ_i ζ_i = 1 }`, solved by
/// saturating the largest losses first. At t = 0 this is the limit 0.
pub fn scaled_cvar_by_lp(mu: &ProductDistribution, target: &TwoPointTarget, cap: usize) -> Result<Rational> {
    validate_instance(mu, target)?;
    let t = &target.t;
    if t.is_zero() {
        return Ok(Rational::zero());
    }
    let direction: Vec<Rational> = target.y1.iter().zip(&target.y2).map(|(a, b)| a - b).collect();
    let mut weighted: Vec<(Rational, Rational)> = enumerate_atoms(mu, cap)?
        .atoms
        .into_iter()
        .filter(|a| a.prob.is_positive())
        .map(|a| {
            let loss: Rational = a.point.iter().zip(&direction).map(|(x, d)| x * d).sum();
            (loss, a.prob)
        })
        .collect();
    weighted.sort_by(|a, b| b.0.cmp(&a.0));
    let upper = t.recip();
    let mut budget = Rational::one();
    let mut objective = Rational::zero();
    for (loss, prob) in weighted {
        if !budget.is_positive() {
            break;
        }
        let zeta = upper.clone().min(&budget / &prob);
        budget -= &prob * &zeta;
        objective += loss * prob * zeta;
    }
    Ok(t * objective)
}
