//! The hard-core tree recurrence F_i(x) = 1/(1 + λ ∏_{children} x_{t(w)}),
//! evaluated exactly and with directed rounding onto the decimal grid
//! {0, 10^-s, ..., 1}, plus a finite-tree dynamic program used as an oracle.

use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::branching::BranchingMatrix;
use crate::error::{invalid, Error, Result};
use crate::rational::{format_exact, format_fixed, parse_rational, pow10, Rational};

pub const DEFAULT_SCALE: u32 = 7;

/// A positive exact activity.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Activity(Rational);

impl Activity {
    pub fn new(value: Rational) -> Result<Self> {
        if !value.is_positive() {
            return Err(invalid(format!("activity must be positive, got {}", format_exact(&value))));
        }
        Ok(Activity(value))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::new(parse_rational(text)?)
    }

    pub fn value(&self) -> &Rational {
        &self.0
    }

    pub fn to_f64(&self) -> f64 {
        crate::rational::to_f64(&self.0)
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", format_exact(&self.0))
    }
}

impl Serialize for Activity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format_exact(&self.0))
    }
}

impl<'de> Deserialize<'de> for Activity {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Activity::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Point of the grid {0, 10^-s, ..., 1}, stored as its numerator.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridScalar {
    pub numerator: BigUint,
    pub scale: u32,
}

impl GridScalar {
    pub fn new(numerator: BigUint, scale: u32) -> Result<Self> {
        if numerator > pow10(scale).to_biguint().expect("positive") {
            return Err(invalid("grid value exceeds 1"));
        }
        Ok(GridScalar { numerator, scale })
    }

    pub fn to_rational(&self) -> Rational {
        BigRational::new(BigInt::from(self.numerator.clone()), pow10(self.scale))
    }
}

impl fmt::Display for GridScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", format_fixed(&self.numerator, self.scale))
    }
}

/// Vector of grid values, one per non-transient type.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GridVector {
    scale: u32,
    values: Vec<BigUint>,
}

impl GridVector {
    pub fn new(scale: u32, values: Vec<BigUint>) -> Result<Self> {
        let one = pow10(scale).to_biguint().expect("positive");
        if values.iter().any(|v| v > &one) {
            return Err(invalid("grid coordinate exceeds 1"));
        }
        Ok(GridVector { scale, values })
    }

    pub fn zeros(dim: usize, scale: u32) -> Self {
        GridVector { scale, values: vec![BigUint::zero(); dim] }
    }

    pub fn ones(dim: usize, scale: u32) -> Self {
        let one = pow10(scale).to_biguint().expect("positive");
        GridVector { scale, values: vec![one; dim] }
    }

    pub fn from_numerators(scale: u32, values: &[u64]) -> Result<Self> {
        Self::new(scale, values.iter().map(|&v| BigUint::from(v)).collect())
    }

    /// Parses fixed-point strings; each must denote a point of the grid.
    pub fn parse<S: AsRef<str>>(scale: u32, coords: &[S]) -> Result<Self> {
        let unit = BigRational::from_integer(pow10(scale));
        let values = coords
            .iter()
            .map(|c| {
                let r = parse_rational(c.as_ref())? * &unit;
                if !r.is_integer() || r.is_negative() {
                    return Err(invalid(format!("{:?} is not on the 10^-{scale} grid", c.as_ref())));
                }
                Ok(r.to_integer().to_biguint().expect("non-negative"))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(scale, values)
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn numerators(&self) -> &[BigUint] {
        &self.values
    }

    pub fn get(&self, i: usize) -> GridScalar {
        GridScalar { numerator: self.values[i].clone(), scale: self.scale }
    }

    pub fn to_rationals(&self) -> Vec<Rational> {
        let den = pow10(self.scale);
        self.values
            .iter()
            .map(|v| BigRational::new(BigInt::from(v.clone()), den.clone()))
            .collect()
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.values.iter().map(|v| format_fixed(v, self.scale)).collect()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.to_rationals().iter().map(crate::rational::to_f64).collect()
    }

    pub fn le(&self, other: &GridVector) -> bool {
        self.scale == other.scale && self.values.iter().zip(&other.values).all(|(a, b)| a <= b)
    }

    pub fn lt(&self, other: &GridVector) -> bool {
        self.scale == other.scale && self.values.iter().zip(&other.values).all(|(a, b)| a < b)
    }

    /// Moves every coordinate by `units` grid steps, clamped to [0, 1].
    pub fn shifted(&self, units: i64) -> GridVector {
        let one = BigInt::from(pow10(self.scale));
        let values = self
            .values
            .iter()
            .map(|v| {
                let x = BigInt::from(v.clone()) + units;
                let x = if x.is_negative() { BigInt::zero() } else if x > one { one.clone() } else { x };
                x.to_biguint().expect("clamped")
            })
            .collect();
        GridVector { scale: self.scale, values }
    }

    pub fn hull(&self, other: &GridVector) -> (GridVector, GridVector) {
        let lo = self.values.iter().zip(&other.values).map(|(a, b)| a.min(b).clone()).collect();
        let hi = self.values.iter().zip(&other.values).map(|(a, b)| a.max(b).clone()).collect();
        (GridVector { scale: self.scale, values: lo }, GridVector { scale: self.scale, values: hi })
    }
}

impl fmt::Display for GridVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.to_strings().join(", "))
    }
}

impl Serialize for GridVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_strings().serialize(s)
    }
}

impl<'de> Deserialize<'de> for GridVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let coords = Vec::<String>::deserialize(d)?;
        let scale = coords
            .first()
            .map(|c| c.split_once('.').map_or(0, |(_, f)| f.len()) as u32)
            .unwrap_or(DEFAULT_SCALE);
        if coords.iter().any(|c| c.split_once('.').map_or(0, |(_, f)| f.len()) as u32 != scale) {
            return Err(serde::de::Error::custom("grid coordinates must share one fixed-point width"));
        }
        GridVector::parse(scale, &coords).map_err(serde::de::Error::custom)
    }
}

/// Coordinate-wise box [lo, hi].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cuboid {
    pub lo: GridVector,
    pub hi: GridVector,
}

impl Cuboid {
    pub fn new(lo: GridVector, hi: GridVector) -> Result<Self> {
        if lo.dim() != hi.dim() || !lo.le(&hi) {
            return Err(invalid("cuboid needs lo <= hi coordinate-wise"));
        }
        Ok(Cuboid { lo, hi })
    }

    pub fn disjoint(&self, other: &Cuboid) -> bool {
        (0..self.lo.dim()).any(|i| {
            self.hi.numerators()[i] < other.lo.numerators()[i] || other.hi.numerators()[i] < self.lo.numerators()[i]
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rounding {
    Up,
    Down,
}

impl Rounding {
    pub fn other(self) -> Rounding {
        match self {
            Rounding::Up => Rounding::Down,
            Rounding::Down => Rounding::Up,
        }
    }
}

/// The recurrence restricted to the non-transient types of a matrix.
#[derive(Clone, Debug)]
pub struct Recurrence {
    lambda: Activity,
    children: Vec<Vec<usize>>,
    kept: Vec<usize>,
    labels: Vec<String>,
}

impl Recurrence {
    pub fn new(m: &BranchingMatrix, lambda: Activity) -> Self {
        let (r, kept) = m.recurrent_part();
        let children = (0..r.types()).map(|i| r.children(i)).collect();
        let labels = (0..r.types()).map(|i| r.label(i)).collect();
        Recurrence { lambda, children, kept, labels }
    }

    pub fn dim(&self) -> usize {
        self.children.len()
    }

    pub fn lambda(&self) -> &Activity {
        &self.lambda
    }

    pub fn children(&self) -> &[Vec<usize>] {
        &self.children
    }

    /// Original matrix index of each coordinate.
    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn eval_exact(&self, x: &[Rational]) -> Vec<Rational> {
        assert_eq!(x.len(), self.dim(), "vector length must match the type count");
        let one = Rational::one();
        self.children
            .iter()
            .map(|kids| {
                let prod: Rational = kids.iter().map(|&j| x[j].clone()).product();
                (&one + self.lambda.value() * prod).recip()
            })
            .collect()
    }

    /// F scaled by 10^s as an exact fraction (numerator, denominator) per type.
    fn scaled_fractions(&self, x: &GridVector) -> Vec<(BigUint, BigUint)> {
        assert_eq!(x.dim(), self.dim(), "vector length must match the type count");
        let p = self.lambda.value().numer().to_biguint().expect("positive activity");
        let q = self.lambda.value().denom().to_biguint().expect("positive activity");
        let unit = pow10(x.scale()).to_biguint().expect("positive");
        self.children
            .iter()
            .map(|kids| {
                // F_i * 10^s = q * 10^{s(Δ+1)} / (q * 10^{sΔ} + p * ∏ n_j)
                let delta = kids.len() as u32;
                let unit_delta = unit.pow(delta);
                let prod: BigUint = kids.iter().map(|&j| x.numerators()[j].clone()).product();
                let num = &q * &unit_delta * &unit;
                let den = &q * &unit_delta + &p * prod;
                (num, den)
            })
            .collect()
    }

    pub fn eval_rounded(&self, x: &GridVector, rounding: Rounding) -> GridVector {
        let values = self
            .scaled_fractions(x)
            .into_iter()
            .map(|(num, den)| {
                let (quot, rem) = num.div_rem(&den);
                match rounding {
                    Rounding::Down => quot,
                    Rounding::Up if rem.is_zero() => quot,
                    Rounding::Up => quot + 1u32,
                }
            })
            .collect();
        GridVector { scale: x.scale(), values }
    }

    pub fn eval_down(&self, x: &GridVector) -> GridVector {
        self.eval_rounded(x, Rounding::Down)
    }

    pub fn eval_up(&self, x: &GridVector) -> GridVector {
        self.eval_rounded(x, Rounding::Up)
    }

    /// Value of F on the grid vector, compared exactly against `bound`:
    /// returns, per coordinate, the sign of F_i(x) - bound_i.
    pub fn compare_exact(&self, x: &GridVector, bound: &GridVector) -> Vec<std::cmp::Ordering> {
        self.scaled_fractions(x)
            .into_iter()
            .zip(bound.numerators())
            .map(|((num, den), b)| num.cmp(&(b * den)))
            .collect()
    }

    /// Applies `first` then the other rounding, `rounds` times, stopping early
    /// once a round leaves the vector unchanged (every later round would too).
    pub fn iterate_alternating(&self, start: &GridVector, rounds: usize, first: Rounding) -> AlternatingRun {
        let mut x = start.clone();
        for done in 0..rounds {
            let next = self.eval_rounded(&self.eval_rounded(&x, first), first.other());
            if next == x {
                return AlternatingRun { value: x, rounds: done, stationary: true };
            }
            x = next;
        }
        AlternatingRun { value: x, rounds, stationary: false }
    }

    /// Iterates for at least `min_rounds` rounds and then until stationary,
    /// giving up after `max_rounds`.
    pub fn iterate_to_stationary(&self, start: &GridVector, min_rounds: usize, max_rounds: usize, first: Rounding) -> AlternatingRun {
        let run = self.iterate_alternating(start, max_rounds, first);
        if run.stationary {
            AlternatingRun { rounds: run.rounds.max(min_rounds), ..run }
        } else {
            run
        }
    }
}

#[derive(Clone, Debug)]
pub struct AlternatingRun {
    pub value: GridVector,
    /// Number of rounds the value stands for; once stationary, any larger count gives the same value.
    pub rounds: usize,
    pub stationary: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// Level L occupied when L is even, unoccupied when L is odd.
    Odd,
    /// Level L occupied when L is odd, unoccupied when L is even.
    Even,
    /// Level L unconstrained: the truncated tree simply ends there.
    Free,
}

#[derive(Clone, Copy, Debug)]
pub enum MarginalMode {
    /// Exact fractions, refusing once a numerator exceeds `max_bits`.
    Exact { max_bits: u64 },
    /// Outward-rounded enclosure on the dyadic grid 2^-bits.
    Enclosure { bits: u32 },
}

/// Root unoccupancy probabilities of the depth-L truncation of the tree
/// generated from each non-transient type, by bottom-up dynamic programming on
/// types (all vertices of a type at one level share a value). Returns
/// `(lo, hi)` per type; in exact mode lo == hi.
pub fn finite_tree_marginal(
    m: &BranchingMatrix,
    lambda: &Activity,
    depth: usize,
    boundary: Boundary,
    mode: MarginalMode,
) -> Result<Vec<(Rational, Rational)>> {
    let (r, _) = m.recurrent_part();
    let children: Vec<Vec<usize>> = (0..r.types()).map(|i| r.children(i)).collect();
    let t = children.len();
    let p = BigInt::from(lambda.value().numer().clone());
    let q = BigInt::from(lambda.value().denom().clone());
    let leaf = match boundary {
        Boundary::Odd if depth % 2 == 0 => Some(BigInt::zero()),
        Boundary::Odd => Some(BigInt::one()),
        Boundary::Even if depth % 2 == 0 => Some(BigInt::one()),
        Boundary::Even => Some(BigInt::zero()),
        Boundary::Free => None,
    };
    // level values as unreduced fractions (num, den); enclosure keeps (lo, hi)
    type Frac = (BigInt, BigInt);
    let step = |xs: &[(Frac, Frac)], kids: &[usize], pick_lo: bool| -> Frac {
        // F is antitone, so the lower output uses upper inputs and vice versa
        let mut n = BigInt::one();
        let mut d = BigInt::one();
        for &j in kids {
            let (a, b) = if pick_lo { &xs[j].1 } else { &xs[j].0 };
            n *= a;
            d *= b;
        }
        (&q * &d, &q * &d + &p * &n)
    };
    let mut level: Vec<(Frac, Frac)> = match &leaf {
        Some(v) => vec![((v.clone(), BigInt::one()), (v.clone(), BigInt::one())); t],
        None => {
            let f = (q.clone(), &q + &p);
            vec![(f.clone(), f); t]
        }
    };
    for _ in 0..depth {
        let mut next = Vec::with_capacity(t);
        for kids in &children {
            let lo = step(&level, kids, true);
            let hi = step(&level, kids, false);
            next.push((lo, hi));
        }
        level = match mode {
            MarginalMode::Exact { max_bits } => {
                if next.iter().any(|(lo, _)| lo.1.bits() > max_bits) {
                    return Err(Error::ResourceLimit { what: "finite-tree marginal bits".into(), cap: max_bits as usize });
                }
                next
            }
            MarginalMode::Enclosure { bits } => {
                let unit = BigInt::one() << bits;
                next.into_iter()
                    .map(|(lo, hi)| {
                        let l = (&lo.0 * &unit).div_floor(&lo.1);
                        let h = -((-(&hi.0 * &unit)).div_floor(&hi.1));
                        ((l, unit.clone()), (h, unit.clone()))
                    })
                    .collect()
            }
        };
    }
    Ok(level
        .into_iter()
        .map(|((ln, ld), (hn, hd))| (fraction(ln, ld), fraction(hn, hd)))
        .collect())
}

fn fraction(n: BigInt, d: BigInt) -> Rational {
    debug_assert!(d.sign() == Sign::Plus);
    BigRational::new(n, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};

    fn dh_reduced() -> BranchingMatrix {
        BranchingMatrix::from_rows([[1, 2], [1, 1]])
    }

    fn dg_reduced() -> BranchingMatrix {
        BranchingMatrix::from_rows([[1, 2, 0], [0, 1, 1], [1, 1, 0]])
    }

    #[test]
    fn activity_must_be_positive() {
        assert!(Activity::parse("0").is_err());
        assert!(Activity::parse("-1").is_err());
        assert_eq!(Activity::parse("3.3").unwrap().value(), &rat(33, 10));
    }

    #[test]
    fn fixed_point_of_never_go_south_at_three() {
        let f = Recurrence::new(&dh_reduced(), Activity::parse("3").unwrap());
        assert_eq!(f.eval_exact(&[rat(2, 3), rat(1, 2)]), vec![rat(2, 3), rat(1, 2)]);
    }

    #[test]
    fn zeros_map_to_ones() {
        let f = Recurrence::new(&dg_reduced(), Activity::parse("3.4").unwrap());
        assert_eq!(f.eval_exact(&[int(0), int(0), int(0)]), vec![int(1); 3]);
        assert_eq!(f.eval_exact(&[int(1), int(1), int(1)]), vec![rat(5, 22); 3]);
        let z = GridVector::zeros(3, 7);
        assert_eq!(f.eval_down(&z), GridVector::ones(3, 7));
        assert_eq!(f.eval_up(&z), GridVector::ones(3, 7));
    }

    #[test]
    fn rounding_matches_reference_vectors() {
        let f = Recurrence::new(&dg_reduced(), Activity::parse("3.3").unwrap());
        let xl = GridVector::parse(7, &["0.6234082", "0.5418325", "0.4728517"]).unwrap();
        let xr = GridVector::parse(7, &["0.6234525", "0.5418642", "0.4728841"]).unwrap();
        assert_eq!(f.eval_down(&xr), xl);
        assert_eq!(f.eval_up(&xl), xr);
    }

    #[test]
    fn grid_strings_round_trip() {
        let v = GridVector::parse(7, &["0.6234082", "1.0000000", "0.0000000"]).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, r#"["0.6234082","1.0000000","0.0000000"]"#);
        assert_eq!(serde_json::from_str::<GridVector>(&json).unwrap(), v);
        assert!(GridVector::parse(7, &["0.12345678"]).is_err());
        assert!(GridVector::parse(7, &["1.5"]).is_err());
    }

    #[test]
    fn marginal_at_depth_zero() {
        let m = dh_reduced();
        let l = Activity::parse("3").unwrap();
        let odd = finite_tree_marginal(&m, &l, 0, Boundary::Odd, MarginalMode::Exact { max_bits: 1 << 20 }).unwrap();
        assert!(odd.iter().all(|(lo, hi)| lo == &int(0) && hi == &int(0)));
        let free = finite_tree_marginal(&m, &l, 0, Boundary::Free, MarginalMode::Exact { max_bits: 1 << 20 }).unwrap();
        assert!(free.iter().all(|(lo, _)| lo == &rat(1, 4)));
    }

    #[test]
    fn exact_mode_respects_bit_cap() {
        let m = dh_reduced();
        let l = Activity::parse("3").unwrap();
        let r = finite_tree_marginal(&m, &l, 12, Boundary::Even, MarginalMode::Exact { max_bits: 64 });
        assert!(matches!(r, Err(Error::ResourceLimit { .. })));
    }
}
