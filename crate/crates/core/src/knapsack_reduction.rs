//! Counting 0/1 knapsack solutions with an optimal transport oracle.
//!
//! For weights `w` (all even) and an odd capacity `b`, let μ be uniform on
//! `{0,1}^K`, `y1 = 0` and `y2 = 2b·w/‖w‖²`. Then `t ↦ W(μ, ν_t)` is convex
//! and piecewise affine on the breakpoints `i / 2^K`, and the number of
//! feasible subsets is the largest `i` whose slope
//! `a_i = W(i/I) - W((i-1)/I)` is non-positive. A bisection over `i` finds it
//! with at most `2K + 1` oracle evaluations.

use std::collections::HashMap;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};

use crate::dp_solver::ot_exact;
use crate::error::{Error, Result};
use crate::grid::DEFAULT_GRID_CAP;
use crate::model::{ProductDistribution, Rational, TwoPointTarget};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnapsackInstance {
    pub weights: Vec<u64>,
    pub capacity: u64,
}

impl KnapsackInstance {
    pub fn new(weights: Vec<u64>, capacity: u64) -> Self {
        KnapsackInstance { weights, capacity }
    }
}

/// `(2w, 2b + 1)`: same feasible subsets, but no subset hits the capacity
/// exactly. Weights and capacity must stay below `2^62`.
pub fn parity_normalize(inst: &KnapsackInstance) -> KnapsackInstance {
    KnapsackInstance {
        weights: inst.weights.iter().map(|w| 2 * w).collect(),
        capacity: 2 * inst.capacity + 1,
    }
}

/// The transport instance built from a knapsack instance; only t varies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionTarget {
    pub mu: ProductDistribution,
    pub y1: Vec<Rational>,
    pub y2: Vec<Rational>,
}

impl ReductionTarget {
    pub fn at(&self, t: Rational) -> TwoPointTarget {
        TwoPointTarget {
            y1: self.y1.clone(),
            y2: self.y2.clone(),
            t,
        }
    }
}

/// μ uniform on `{0,1}^K`, `y1 = 0`, `y2 = (2b / Σ w_k²) · w`.
pub fn reduction_target(inst: &KnapsackInstance) -> Result<ReductionTarget> {
    if inst.weights.iter().all(|&w| w == 0) {
        return Err(Error::ZeroWeights);
    }
    let norm_sq: BigInt = inst.weights.iter().map(|&w| BigInt::from(w) * BigInt::from(w)).sum();
    let scale = Rational::new(BigInt::from(2) * BigInt::from(inst.capacity), norm_sq);
    let y2 = inst
        .weights
        .iter()
        .map(|&w| &scale * Rational::from_integer(BigInt::from(w)))
        .collect();
    let k = inst.weights.len();
    Ok(ReductionTarget {
        mu: ProductDistribution::uniform_binary(k),
        y1: vec![Rational::zero(); k],
        y2,
    })
}

/// Anything that evaluates `W(μ, ν_t)`, possibly approximately.
pub trait WassersteinOracle {
    fn wasserstein(&mut self, mu: &ProductDistribution, target: &TwoPointTarget) -> Result<Rational>;
}

impl<F> WassersteinOracle for F
where
    F: FnMut(&ProductDistribution, &TwoPointTarget) -> Result<Rational>,
{
    fn wasserstein(&mut self, mu: &ProductDistribution, target: &TwoPointTarget) -> Result<Rational> {
        self(mu, target)
    }
}

/// The exact dynamic-programming solver.
#[derive(Debug, Clone, Copy)]
pub struct ExactDpOracle {
    pub grid_cap: usize,
}

impl Default for ExactDpOracle {
    fn default() -> Self {
        ExactDpOracle {
            grid_cap: DEFAULT_GRID_CAP,
        }
    }
}

impl WassersteinOracle for ExactDpOracle {
    fn wasserstein(&mut self, mu: &ProductDistribution, target: &TwoPointTarget) -> Result<Rational> {
        let value = ot_exact(mu, target, self.grid_cap)?;
        Ok(value.value.as_exact().expect("dp solver is exact").clone())
    }
}

/// Wraps an oracle and adds `±magnitude` to every answer, flipping the sign
/// on each call. Starting with `+` biases every freshly evaluated slope
/// upward, starting with `-` biases it downward.
#[derive(Debug, Clone)]
pub struct NoisyOracle<O> {
    pub inner: O,
    pub magnitude: Rational,
    positive_next: bool,
}

impl<O> NoisyOracle<O> {
    pub fn new(inner: O, magnitude: Rational, start_positive: bool) -> Self {
        NoisyOracle {
            inner,
            magnitude,
            positive_next: start_positive,
        }
    }
}

impl<O: WassersteinOracle> WassersteinOracle for NoisyOracle<O> {
    fn wasserstein(&mut self, mu: &ProductDistribution, target: &TwoPointTarget) -> Result<Rational> {
        let exact = self.inner.wasserstein(mu, target)?;
        let offset = if self.positive_next {
            self.magnitude.clone()
        } else {
            -self.magnitude.clone()
        };
        self.positive_next = !self.positive_next;
        Ok(exact + offset)
    }
}

/// Memoized evaluation of `W(i / I)` and the slopes built from it.
struct SlopeProbe<'a, O> {
    reduction: &'a ReductionTarget,
    oracle: &'a mut O,
    breakpoints: BigUint,
    memo: HashMap<BigUint, Rational>,
}

impl<O: WassersteinOracle> SlopeProbe<'_, O> {
    fn value(&mut self, i: &BigUint) -> Result<Rational> {
        if let Some(v) = self.memo.get(i) {
            return Ok(v.clone());
        }
        let t = Rational::new(BigInt::from(i.clone()), BigInt::from(self.breakpoints.clone()));
        let v = self.oracle.wasserstein(&self.reduction.mu, &self.reduction.at(t))?;
        self.memo.insert(i.clone(), v.clone());
        Ok(v)
    }

    fn slope(&mut self, i: &BigUint) -> Result<Rational> {
        let upper = self.value(i)?;
        let lower = self.value(&(i - 1u32))?;
        Ok(upper - lower)
    }
}

/// `W(i/I) - W((i-1)/I)` with `I = 2^K`, for `1 ≤ i ≤ I`.
pub fn slope<O: WassersteinOracle>(i: &BigUint, reduction: &ReductionTarget, oracle: &mut O) -> Result<Rational> {
    let breakpoints = BigUint::one() << reduction.mu.dim();
    if i.is_zero() || i > &breakpoints {
        return Err(Error::InvalidArgument(format!("slope index {i} outside 1..={breakpoints}")));
    }
    SlopeProbe {
        reduction,
        oracle,
        breakpoints,
        memo: HashMap::new(),
    }
    .slope(i)
}

/// One visited breakpoint of the bisection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Probe {
    pub index: BigUint,
    pub slope: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionOutcome {
    pub count: BigUint,
    /// Distinct oracle evaluations.
    pub oracle_calls: usize,
    pub probes: Vec<Probe>,
}

/// Number of subsets with total weight at most the capacity, obtained by
/// bisection on the slopes of `t ↦ W(μ, ν_t)`.
pub fn count_via_ot<O: WassersteinOracle>(inst: &KnapsackInstance, oracle: &mut O) -> Result<ReductionOutcome> {
    let trivial = |count: BigUint| ReductionOutcome {
        count,
        oracle_calls: 0,
        probes: Vec::new(),
    };
    if inst.weights.iter().all(|&w| w == 0) {
        return Ok(trivial(BigUint::one() << inst.weights.len()));
    }
    if inst.capacity == 0 {
        let zeros = inst.weights.iter().filter(|&&w| w == 0).count();
        return Ok(trivial(BigUint::one() << zeros));
    }

    let normalized = parity_normalize(inst);
    let reduction = reduction_target(&normalized)?;
    let k = inst.weights.len();
    let breakpoints = BigUint::one() << k;
    let mut probe = SlopeProbe {
        reduction: &reduction,
        oracle,
        breakpoints: breakpoints.clone(),
        memo: HashMap::new(),
    };
    let mut probes = Vec::with_capacity(k + 1);

    // invariant: a_lo ≤ 0 (a_0 = -∞) and either hi = I or a_hi > 0
    let mut lo = BigUint::zero();
    let mut hi = breakpoints.clone();
    for _ in 0..k {
        let mid: BigUint = (&lo + &hi) >> 1;
        let a = probe.slope(&mid)?;
        let feasible = !a.is_positive();
        probes.push(Probe { index: mid.clone(), slope: a });
        if feasible {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    debug_assert!((&hi - &lo).is_one());
    // every subset may be feasible, in which case a_I ≤ 0 as well
    let count = if hi == breakpoints {
        let a = probe.slope(&hi)?;
        let feasible = !a.is_positive();
        probes.push(Probe { index: hi.clone(), slope: a });
        if feasible {
            hi
        } else {
            lo
        }
    } else {
        lo
    };
    Ok(ReductionOutcome {
        count,
        oracle_calls: probe.memo.len(),
        probes,
    })
}

/// Standard counting DP over capacities `0..=b`.
pub fn count_dp(inst: &KnapsackInstance) -> BigUint {
    let cap = usize::try_from(inst.capacity).expect("capacity fits in memory");
    let mut ways = vec![BigUint::zero(); cap + 1];
    ways[0] = BigUint::one();
    for &w in &inst.weights {
        let Ok(w) = usize::try_from(w) else { continue };
        if w > cap {
            continue;
        }
        for c in (w..=cap).rev() {
            let (head, tail) = ways.split_at_mut(c);
            if w == 0 {
                tail[0] = &tail[0] * 2u32;
            } else {
                tail[0] += &head[c - w];
            }
        }
    }
    ways.into_iter().sum()
}

/// Whether `x` (a 0/1 vector) fits.
pub fn fits(inst: &KnapsackInstance, subset: &[bool]) -> bool {
    let total: BigUint = inst
        .weights
        .iter()
        .zip(subset)
        .filter(|(_, &chosen)| chosen)
        .map(|(&w, _)| BigUint::from(w))
        .sum();
    total <= BigUint::from(inst.capacity)
}
