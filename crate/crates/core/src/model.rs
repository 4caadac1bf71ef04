//! Instance data: exact rationals, product distributions with independent
//! marginals, and the two-point target `t δ_{y1} + (1 - t) δ_{y2}`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Reduced arbitrary-precision rational. Every exact quantity in the crate
/// uses this type.
pub type Rational = BigRational;

pub fn rational(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn integer(value: i64) -> Rational {
    Rational::from_integer(BigInt::from(value))
}

/// Parses `"a/b"` or `"a"`. A single leading minus (ASCII `-` or U+2212) is
/// allowed on the numerator; the denominator must be a positive integer.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let bad = || Error::Parse(text.to_string());
    let trimmed = text.trim();
    let (negative, body) = if let Some(rest) = trimmed.strip_prefix('-') {
        (true, rest)
    } else if let Some(rest) = trimmed.strip_prefix('\u{2212}') {
        (true, rest)
    } else {
        (false, trimmed)
    };
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    let (numer, denom) = match body.split_once('/') {
        Some((n, d)) => (n, d),
        None => (body, "1"),
    };
    if !digits(numer) || !digits(denom) {
        return Err(bad());
    }
    let mut numer: BigInt = numer.parse().map_err(|_| bad())?;
    let denom: BigInt = denom.parse().map_err(|_| bad())?;
    if denom.is_zero() {
        return Err(bad());
    }
    if negative {
        numer = -numer;
    }
    Ok(Rational::new(numer, denom))
}

/// Renders as `"a/b"`, or `"a"` when the value is an integer.
pub fn render_rational(value: &Rational) -> String {
    if value.is_integer() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

/// Correctly rounded binary64 value (round half to even).
pub fn rational_to_f64(value: &Rational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

/// A univariate discrete distribution `Σ_l probs[l] δ_{support[l]}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Marginal {
    pub support: Vec<Rational>,
    pub probs: Vec<Rational>,
}

impl Marginal {
    pub fn new(support: Vec<Rational>, probs: Vec<Rational>) -> Result<Self> {
        let marginal = Marginal { support, probs };
        marginal.validate(0)?;
        Ok(marginal)
    }

    /// Builds a marginal from (point, probability) pairs, merging repeated
    /// points by summing their probabilities. Output support is sorted.
    pub fn merged<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Rational, Rational)>,
    {
        let mut acc: BTreeMap<Rational, Rational> = BTreeMap::new();
        for (point, prob) in pairs {
            *acc.entry(point).or_insert_with(Rational::zero) += prob;
        }
        let (support, probs) = acc.into_iter().unzip();
        Marginal::new(support, probs)
    }

    pub fn uniform(support: Vec<Rational>) -> Result<Self> {
        let n = support.len() as i64;
        if n == 0 {
            return Err(Error::BadProbabilities("empty marginal".into()));
        }
        let probs = vec![rational(1, n); support.len()];
        Marginal::new(support, probs)
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Rational, &Rational)> {
        self.support.iter().zip(self.probs.iter())
    }

    fn validate(&self, index: usize) -> Result<()> {
        if self.support.len() != self.probs.len() {
            return Err(Error::DimensionMismatch(format!(
                "marginal {index} has {} support points but {} probabilities",
                self.support.len(),
                self.probs.len()
            )));
        }
        if let Some(p) = self.probs.iter().find(|p| p.is_negative()) {
            return Err(Error::BadProbabilities(format!(
                "marginal {index} has negative probability {}",
                render_rational(p)
            )));
        }
        let total: Rational = self.probs.iter().sum();
        if !total.is_one() {
            return Err(Error::BadProbabilities(format!(
                "marginal {index} probabilities sum to {}",
                render_rational(&total)
            )));
        }
        let mut seen = HashSet::with_capacity(self.support.len());
        for x in &self.support {
            if !seen.insert(x) {
                return Err(Error::DuplicateSupport(render_rational(x), index));
            }
        }
        Ok(())
    }
}

/// `μ = ⊗_k μ_k`: K independent marginals, possibly of different sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductDistribution {
    pub marginals: Vec<Marginal>,
}

impl ProductDistribution {
    pub fn new(marginals: Vec<Marginal>) -> Result<Self> {
        let mu = ProductDistribution { marginals };
        mu.validate()?;
        Ok(mu)
    }

    /// Uniform distribution on `{0,1}^k`.
    pub fn uniform_binary(k: usize) -> Self {
        let bit = Marginal {
            support: vec![integer(0), integer(1)],
            probs: vec![rational(1, 2), rational(1, 2)],
        };
        ProductDistribution { marginals: vec![bit; k] }
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    /// `Π_k L_k`, the number of implicit atoms.
    pub fn atom_count(&self) -> BigUint {
        self.marginals
            .iter()
            .fold(BigUint::one(), |acc, m| acc * BigUint::from(m.len()))
    }

    /// Coordinates and probability of the atom addressed by one support
    /// index per marginal.
    pub fn atom(&self, indices: &[usize]) -> Result<(Vec<Rational>, Rational)> {
        if indices.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} atom indices for a {}-dimensional distribution",
                indices.len(),
                self.dim()
            )));
        }
        let mut point = Vec::with_capacity(indices.len());
        let mut prob = Rational::one();
        for (k, (&l, m)) in indices.iter().zip(&self.marginals).enumerate() {
            if l >= m.len() {
                return Err(Error::InvalidArgument(format!(
                    "index {l} out of range for marginal {k} of size {}",
                    m.len()
                )));
            }
            point.push(m.support[l].clone());
            prob *= &m.probs[l];
        }
        Ok((point, prob))
    }

    /// Probability that `x` equals `point` under μ (zero when it is not an atom).
    pub fn prob_of(&self, point: &[Rational]) -> Rational {
        if point.len() != self.dim() {
            return Rational::zero();
        }
        let mut prob = Rational::one();
        for (x, m) in point.iter().zip(&self.marginals) {
            match m.support.iter().position(|s| s == x) {
                Some(l) => prob *= &m.probs[l],
                None => return Rational::zero(),
            }
        }
        prob
    }

    fn validate(&self) -> Result<()> {
        if self.marginals.is_empty() {
            return Err(Error::DimensionMismatch("K must be at least 1".into()));
        }
        for (k, m) in self.marginals.iter().enumerate() {
            m.validate(k)?;
        }
        Ok(())
    }
}

/// `ν_t = t δ_{y1} + (1 - t) δ_{y2}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwoPointTarget {
    pub y1: Vec<Rational>,
    pub y2: Vec<Rational>,
    pub t: Rational,
}

impl TwoPointTarget {
    pub fn new(y1: Vec<Rational>, y2: Vec<Rational>, t: Rational) -> Result<Self> {
        let target = TwoPointTarget { y1, y2, t };
        target.validate()?;
        Ok(target)
    }

    pub fn with_t(&self, t: Rational) -> Self {
        TwoPointTarget {
            y1: self.y1.clone(),
            y2: self.y2.clone(),
            t,
        }
    }

    pub fn dim(&self) -> usize {
        self.y1.len()
    }

    fn validate(&self) -> Result<()> {
        if self.y1.len() != self.y2.len() {
            return Err(Error::DimensionMismatch(format!(
                "y1 has length {} but y2 has length {}",
                self.y1.len(),
                self.y2.len()
            )));
        }
        if self.t.is_negative() || self.t > Rational::one() {
            return Err(Error::BadT(render_rational(&self.t)));
        }
        Ok(())
    }
}

/// Checks every data invariant of the pair and that dimensions agree.
pub fn validate_instance(mu: &ProductDistribution, target: &TwoPointTarget) -> Result<()> {
    mu.validate()?;
    target.validate()?;
    if target.dim() != mu.dim() {
        return Err(Error::DimensionMismatch(format!(
            "distribution has K = {} but targets have dimension {}",
            mu.dim(),
            target.dim()
        )));
    }
    Ok(())
}

/// Largest absolute integer appearing in the reduced encoding of the
/// instance (support coordinates, probabilities, target coordinates, t).
/// Never less than 1.
pub fn compute_u(mu: &ProductDistribution, target: &TwoPointTarget) -> BigUint {
    let marginal_values = mu
        .marginals
        .iter()
        .flat_map(|m| m.support.iter().chain(m.probs.iter()));
    let target_values = target
        .y1
        .iter()
        .chain(target.y2.iter())
        .chain(std::iter::once(&target.t));
    marginal_values
        .chain(target_values)
        .map(|r| r.numer().magnitude().max(r.denom().magnitude()).clone())
        .fold(BigUint::one(), |acc, v| acc.max(v))
}

pub(crate) fn dot(a: &[Rational], b: &[Rational]) -> Rational {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn squared_distance(a: &[Rational], b: &[Rational]) -> Rational {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            &d * &d
        })
        .sum()
}

/// Solver output value, exact or binary64.
#[derive(Debug, Clone, PartialEq)]
pub enum OtScalar {
    Exact(Rational),
    Float(f64),
}

impl OtScalar {
    pub fn as_exact(&self) -> Option<&Rational> {
        match self {
            OtScalar::Exact(r) => Some(r),
            OtScalar::Float(_) => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            OtScalar::Exact(r) => rational_to_f64(r),
            OtScalar::Float(f) => *f,
        }
    }
}

impl fmt::Display for OtScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OtScalar::Exact(r) => f.write_str(&render_rational(r)),
            OtScalar::Float(x) => write!(f, "{x}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Diagnostics {
    /// Cardinality N of the single-coordinate loss grid.
    pub grid_n: Option<usize>,
    /// Cardinality K(N-1)+1 of the Minkowski-sum grid.
    pub minkowski_size: Option<usize>,
    /// Zero-based position of the critical index on the Minkowski grid.
    pub critical_index: Option<usize>,
}

/// Optimal transport distance together with how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct OtValue {
    pub value: OtScalar,
    pub diagnostics: Diagnostics,
}

impl OtValue {
    pub fn exact(value: Rational) -> Self {
        OtValue {
            value: OtScalar::Exact(value),
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.value, OtScalar::Exact(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(s: &str) -> Rational {
        parse_rational(s).unwrap()
    }

    fn two_atom_instance(t: &str) -> (ProductDistribution, TwoPointTarget) {
        let mu = ProductDistribution::new(vec![Marginal::new(
            vec![r("0"), r("1")],
            vec![r("1/2"), r("1/2")],
        )
        .unwrap()])
        .unwrap();
        let target = TwoPointTarget::new(vec![r("1")], vec![r("2")], r(t)).unwrap();
        (mu, target)
    }

    #[test]
    fn parse_and_render() {
        assert_eq!(r("2/4"), rational(1, 2));
        assert_eq!(r("-3"), integer(-3));
        assert_eq!(r("\u{2212}7/5"), rational(-7, 5));
        assert_eq!(render_rational(&rational(5, 2)), "5/2");
        assert_eq!(render_rational(&rational(4, 2)), "2");
        assert_eq!(render_rational(&rational(-1, 3)), "-1/3");
        for bad in ["", "1/0", "1/-2", "a", "1.5", "--1", "1/", "/2"] {
            assert!(parse_rational(bad).is_err(), "{bad:?} should not parse");
        }
    }

    #[test]
    fn correctly_rounded_decimal() {
        assert_eq!(rational_to_f64(&rational(1, 3)), 1.0 / 3.0);
        assert_eq!(rational_to_f64(&rational(5, 2)), 2.5);
    }

    #[test]
    fn validates_two_atom_instance() {
        let (mu, target) = two_atom_instance("0");
        validate_instance(&mu, &target).unwrap();
    }

    #[test]
    fn rejects_bad_instances() {
        assert!(matches!(
            Marginal::new(vec![r("0"), r("1")], vec![r("1/2"), r("1/3")]),
            Err(Error::BadProbabilities(_))
        ));
        assert!(matches!(
            Marginal::new(vec![r("0"), r("1")], vec![r("3/2"), r("-1/2")]),
            Err(Error::BadProbabilities(_))
        ));
        assert!(matches!(
            Marginal::new(vec![r("1"), r("2/2")], vec![r("1/2"), r("1/2")]),
            Err(Error::DuplicateSupport(_, _))
        ));
        let mu = ProductDistribution::uniform_binary(2);
        let target = TwoPointTarget {
            y1: vec![r("0"); 3],
            y2: vec![r("0"); 3],
            t: r("1/2"),
        };
        assert!(matches!(
            validate_instance(&mu, &target),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            TwoPointTarget::new(vec![r("0")], vec![r("1")], r("3/2")),
            Err(Error::BadT(_))
        ));
        assert!(matches!(
            ProductDistribution::new(vec![]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn u_examples() {
        let mu = ProductDistribution::new(vec![Marginal::new(
            vec![r("1/2"), r("3")],
            vec![r("1/4"), r("3/4")],
        )
        .unwrap()])
        .unwrap();
        let target = TwoPointTarget::new(vec![r("1/2")], vec![r("3")], r("1")).unwrap();
        assert_eq!(compute_u(&mu, &target), BigUint::from(4u32));

        let mu = ProductDistribution::new(vec![Marginal::new(vec![r("0")], vec![r("1")]).unwrap()])
            .unwrap();
        let target = TwoPointTarget::new(vec![r("1")], vec![r("0")], r("0")).unwrap();
        assert_eq!(compute_u(&mu, &target), BigUint::one());

        let mu = ProductDistribution::new(vec![Marginal::new(vec![r("7/5")], vec![r("1")]).unwrap()])
            .unwrap();
        let target = TwoPointTarget::new(vec![r("-9/2")], vec![r("-9/2")], r("1/3")).unwrap();
        assert_eq!(compute_u(&mu, &target), BigUint::from(9u32));
    }

    #[test]
    fn u_ignores_unreduced_spelling() {
        let build = |s: &str| {
            let mu = ProductDistribution::new(vec![Marginal::new(vec![r(s)], vec![r("1")]).unwrap()])
                .unwrap();
            let target = TwoPointTarget::new(vec![r("0")], vec![r("0")], r("0")).unwrap();
            compute_u(&mu, &target)
        };
        assert_eq!(build("2/4"), build("1/2"));
    }

    #[test]
    fn atom_lookup() {
        let mu = ProductDistribution::uniform_binary(2);
        let (point, prob) = mu.atom(&[1, 0]).unwrap();
        assert_eq!(point, vec![integer(1), integer(0)]);
        assert_eq!(prob, rational(1, 4));
        assert_eq!(mu.prob_of(&point), rational(1, 4));
        assert!(mu.prob_of(&[integer(2), integer(0)]).is_zero());
        assert!(mu.atom(&[2, 0]).is_err());
    }

    #[test]
    fn merged_marginal_sums_collisions() {
        let m = Marginal::merged(vec![
            (integer(1), rational(1, 4)),
            (integer(0), rational(1, 4)),
            (integer(1), rational(1, 2)),
        ])
        .unwrap();
        assert_eq!(m.support, vec![integer(0), integer(1)]);
        assert_eq!(m.probs, vec![rational(1, 4), rational(3, 4)]);
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(n in -10_000i64..10_000, d in 1i64..10_000) {
            let value = rational(n, d);
            prop_assert_eq!(parse_rational(&render_rational(&value)).unwrap(), value);
        }

        #[test]
        fn arithmetic_is_exact(an in -1000i64..1000, ad in 1i64..1000, bn in -1000i64..1000, bd in 1i64..1000) {
            let a = rational(an, ad);
            let b = rational(bn, bd);
            prop_assert_eq!(&(&a + &b) - &b, a.clone());
            if !b.is_zero() {
                prop_assert_eq!(&(&a * &b) / &b, a);
            }
        }

        #[test]
        fn decimal_matches_float_division(n in -(1i64 << 52)..(1i64 << 52), d in 1i64..(1i64 << 52)) {
            // both operands are exact binary64 values, so IEEE division is the
            // correctly rounded quotient
            prop_assert_eq!(rational_to_f64(&rational(n, d)), n as f64 / d as f64);
        }
    }
}
