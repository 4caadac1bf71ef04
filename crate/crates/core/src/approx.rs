//! ε-approximation by snapping every coordinate to the lattice `Z/M` with
//! `M = ⌈8KU/ε⌉` and solving the snapped instance exactly.

use std::collections::HashSet;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{Signed, Zero};

use crate::dp_solver::ot_exact;
use crate::error::{Error, Result};
use crate::model::{
    compute_u, render_rational, validate_instance, Marginal, OtValue, ProductDistribution, Rational,
    TwoPointTarget,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundingReport {
    /// Lattice resolution: coordinates are snapped to multiples of 1/M.
    pub m: BigUint,
    pub u: BigUint,
    /// Largest |x̃ - x| over all snapped coordinates.
    pub max_coordinate_shift: Rational,
    /// `8KU/M`.
    pub guaranteed_error: Rational,
}

fn big(v: &BigUint) -> Rational {
    Rational::from_integer(BigInt::from(v.clone()))
}

/// `8 K U · shift`.
pub fn error_bound(k: usize, u: &BigUint, shift: &Rational) -> Rational {
    Rational::from_integer(BigInt::from(8 * k)) * big(u) * shift
}

/// Nearest point of `Z/M`, exact halves rounded away from zero.
fn snap(x: &Rational, m: &Rational) -> Rational {
    (x * m).round() / m
}

fn snap_marginal(marginal: &Marginal, m: &Rational, shift: &mut Rational) -> Result<Marginal> {
    let snapped: Vec<Rational> = marginal.support.iter().map(|x| snap(x, m)).collect();
    for (x, s) in marginal.support.iter().zip(&snapped) {
        *shift = shift.clone().max((x - s).abs());
    }
    let distinct = snapped.iter().collect::<HashSet<_>>().len() == snapped.len();
    if distinct {
        Marginal::new(snapped, marginal.probs.clone())
    } else {
        Marginal::merged(snapped.into_iter().zip(marginal.probs.iter().cloned()))
    }
}

/// Snaps all support and target coordinates to `Z/M`. Probabilities and t
/// are untouched; support points that collide are merged.
pub fn round_to_lattice(
    mu: &ProductDistribution,
    target: &TwoPointTarget,
    m: &BigUint,
) -> Result<(ProductDistribution, TwoPointTarget, RoundingReport)> {
    validate_instance(mu, target)?;
    if m.is_zero() {
        return Err(Error::InvalidArgument("lattice resolution M must be positive".into()));
    }
    let scale = big(m);
    let mut shift = Rational::zero();
    let marginals = mu
        .marginals
        .iter()
        .map(|marginal| snap_marginal(marginal, &scale, &mut shift))
        .collect::<Result<Vec<_>>>()?;
    let mut snap_all = |ys: &[Rational]| -> Vec<Rational> {
        ys.iter()
            .map(|y| {
                let s = snap(y, &scale);
                shift = shift.clone().max((y - &s).abs());
                s
            })
            .collect()
    };
    let y1 = snap_all(&target.y1);
    let y2 = snap_all(&target.y2);
    let u = compute_u(mu, target);
    let report = RoundingReport {
        guaranteed_error: error_bound(mu.dim(), &u, &scale.recip()),
        m: m.clone(),
        u,
        max_coordinate_shift: shift,
    };
    Ok((
        ProductDistribution::new(marginals)?,
        TwoPointTarget::new(y1, y2, target.t.clone())?,
        report,
    ))
}

/// `⌈8KU/ε⌉`.
pub fn lattice_resolution(k: usize, u: &BigUint, eps: &Rational) -> BigUint {
    let ratio = error_bound(k, u, &Rational::from_integer(BigInt::from(1))) / eps;
    let (q, r) = ratio.numer().div_rem(ratio.denom());
    let ceil = if r.is_zero() { q } else { q + 1 };
    ceil.to_biguint().expect("positive")
}

/// W(μ, ν_t) to within `eps`, from the exact value of the snapped instance.
pub fn ot_approx(
    mu: &ProductDistribution,
    target: &TwoPointTarget,
    eps: &Rational,
    cap: usize,
) -> Result<(OtValue, RoundingReport)> {
    if !eps.is_positive() {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {}",
            render_rational(eps)
        )));
    }
    validate_instance(mu, target)?;
    let u = compute_u(mu, target);
    let m = lattice_resolution(mu.dim(), &u, eps);
    let (mu_r, target_r, report) = round_to_lattice(mu, target, &m)?;
    let value = ot_exact(&mu_r, &target_r, cap)?;
    Ok((value, report))
}
