#![allow(dead_code)]

use std::collections::BTreeSet;

use num_bigint::BigInt;
use otdp::model::{integer, rational};
use otdp::{Marginal, ProductDistribution, Rational, TwoPointTarget};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

/// Uniform point of `Z/m ∩ [-bound, bound]`.
pub fn lattice_value(rng: &mut ChaCha8Rng, m: i64, bound: i64) -> Rational {
    rational(rng.gen_range(-bound * m..=bound * m), m)
}

/// `n` distinct values drawn by `draw`.
pub fn distinct(rng: &mut ChaCha8Rng, n: usize, mut draw: impl FnMut(&mut ChaCha8Rng) -> Rational) -> Vec<Rational> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v = draw(rng);
        if seen.insert(v.clone()) {
            out.push(v);
        }
    }
    out
}

/// Positive probabilities with denominators dividing their integer total.
pub fn probabilities(rng: &mut ChaCha8Rng, n: usize, max_weight: i64) -> Vec<Rational> {
    let weights: Vec<i64> = (0..n).map(|_| rng.gen_range(1..=max_weight)).collect();
    let total: i64 = weights.iter().sum();
    weights.iter().map(|&w| rational(w, total)).collect()
}

pub fn product(
    rng: &mut ChaCha8Rng,
    k: usize,
    max_l: usize,
    max_weight: i64,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> Rational,
) -> ProductDistribution {
    let marginals = (0..k)
        .map(|_| {
            let l = rng.gen_range(1..=max_l);
            let support = distinct(rng, l, &mut draw);
            Marginal::new(support, probabilities(rng, l, max_weight)).unwrap()
        })
        .collect();
    ProductDistribution::new(marginals).unwrap()
}

/// `a / d` with `d ≤ max_denom` and `0 ≤ a ≤ d`.
pub fn mixing_weight(rng: &mut ChaCha8Rng, max_denom: i64) -> Rational {
    let d = rng.gen_range(1..=max_denom);
    rational(rng.gen_range(0..=d), d)
}

/// Mixing weight strictly between 0 and 1.
pub fn interior_weight(rng: &mut ChaCha8Rng, max_denom: i64) -> Rational {
    let d = rng.gen_range(2..=max_denom);
    rational(rng.gen_range(1..d), d)
}

pub fn target(
    rng: &mut ChaCha8Rng,
    k: usize,
    t: Rational,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> Rational,
) -> TwoPointTarget {
    let y1 = (0..k).map(|_| draw(rng)).collect();
    let y2 = (0..k).map(|_| draw(rng)).collect();
    TwoPointTarget::new(y1, y2, t).unwrap()
}

/// Every atom of μ as (point, probability), by direct nested enumeration.
pub fn atoms(mu: &ProductDistribution) -> Vec<(Vec<Rational>, Rational)> {
    let mut out = vec![(Vec::new(), integer(1))];
    for m in &mu.marginals {
        out = out
            .into_iter()
            .flat_map(|(point, prob)| {
                m.iter().map(move |(x, p)| {
                    let mut next = point.clone();
                    next.push(x.clone());
                    (next, &prob * p)
                })
            })
            .collect();
    }
    out
}

pub fn sq_dist(a: &[Rational], b: &[Rational]) -> Rational {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `W(μ, ν_t)` for squared cost from the primal: fill y1 with mass t from
/// the atoms where moving to y1 instead of y2 saves the most.
pub fn primal_wasserstein(mu: &ProductDistribution, target: &TwoPointTarget) -> Rational {
    let mut rows: Vec<(Rational, Rational, Rational)> = atoms(mu)
        .into_iter()
        .map(|(x, p)| (sq_dist(&x, &target.y1), sq_dist(&x, &target.y2), p))
        .collect();
    rows.sort_by(|a, b| (&a.0 - &a.1).cmp(&(&b.0 - &b.1)));
    let mut left = target.t.clone();
    let mut total = integer(0);
    for (c1, c2, p) in rows {
        let to_y1 = if left > p { p.clone() } else { left.clone() };
        left -= &to_y1;
        total += &to_y1 * c1 + (&p - &to_y1) * c2;
    }
    total
}

pub fn big(v: i64) -> BigInt {
    BigInt::from(v)
}
