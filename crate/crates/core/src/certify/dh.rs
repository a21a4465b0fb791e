use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rational::{format_exact, int, pow10, rat, to_f64, Rational};

/// a + b·√d with rational a, b and a fixed positive rational d.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuadSurd {
    pub a: Rational,
    pub b: Rational,
    pub d: Rational,
}

impl QuadSurd {
    pub fn rational(a: Rational, d: &Rational) -> Self {
        QuadSurd { a, b: Rational::zero(), d: d.clone() }
    }

    /// √d itself; folded into the rational part when d is a perfect square, so
    /// that the field operations never divide by a zero norm.
    pub fn sqrt_d(d: &Rational) -> Self {
        match rational_sqrt(d) {
            Some(s) => QuadSurd { a: s, b: Rational::zero(), d: d.clone() },
            None => QuadSurd { a: Rational::zero(), b: Rational::one(), d: d.clone() },
        }
    }

    pub fn conjugate(&self) -> Self {
        QuadSurd { a: self.a.clone(), b: -&self.b, d: self.d.clone() }
    }

    /// a^2 - b^2 d
    pub fn norm(&self) -> Rational {
        &self.a * &self.a - &self.b * &self.b * &self.d
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    /// Exact sign, decided by comparing a^2 with b^2 d when the parts disagree.
    pub fn signum(&self) -> Ordering {
        let sa = self.a.cmp(&Rational::zero());
        let sb = self.b.cmp(&Rational::zero());
        if sb == Ordering::Equal {
            return sa;
        }
        if sa == Ordering::Equal || sa == sb {
            return sb;
        }
        let a2 = &self.a * &self.a;
        let b2d = &self.b * &self.b * &self.d;
        match a2.cmp(&b2d) {
            Ordering::Greater => sa,
            Ordering::Less => sb,
            Ordering::Equal => Ordering::Equal,
        }
    }

    pub fn recip(&self) -> Self {
        let n = self.norm();
        assert!(!n.is_zero(), "inverting zero in the quadratic field");
        QuadSurd { a: &self.a / &n, b: -&self.b / &n, d: self.d.clone() }
    }

    /// The value as an exact rational when √d is rational or b = 0.
    pub fn as_rational(&self) -> Option<Rational> {
        if self.b.is_zero() {
            return Some(self.a.clone());
        }
        rational_sqrt(&self.d).map(|s| &self.a + &self.b * s)
    }

    /// Rational interval containing the value, from an enclosure of √d.
    pub fn enclose(&self, sqrt_lo: &Rational, sqrt_hi: &Rational) -> (Rational, Rational) {
        let x = &self.b * sqrt_lo;
        let y = &self.b * sqrt_hi;
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        (&self.a + lo, &self.a + hi)
    }

    pub fn to_f64(&self) -> f64 {
        to_f64(&self.a) + to_f64(&self.b) * to_f64(&self.d).sqrt()
    }
}

impl fmt::Display for QuadSurd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.as_rational() {
            Some(r) => write!(f, "{}", format_exact(&r)),
            None => write!(f, "{} + {}*sqrt({})", format_exact(&self.a), format_exact(&self.b), format_exact(&self.d)),
        }
    }
}

fn rational_sqrt(d: &Rational) -> Option<Rational> {
    if d.is_negative() {
        return None;
    }
    let n = d.numer().sqrt();
    let m = d.denom().sqrt();
    (&n * &n == *d.numer() && &m * &m == *d.denom()).then(|| BigRational::new(n, m))
}

impl Add for &QuadSurd {
    type Output = QuadSurd;
    fn add(self, o: &QuadSurd) -> QuadSurd {
        QuadSurd { a: &self.a + &o.a, b: &self.b + &o.b, d: self.d.clone() }
    }
}

impl Sub for &QuadSurd {
    type Output = QuadSurd;
    fn sub(self, o: &QuadSurd) -> QuadSurd {
        QuadSurd { a: &self.a - &o.a, b: &self.b - &o.b, d: self.d.clone() }
    }
}

impl Mul for &QuadSurd {
    type Output = QuadSurd;
    fn mul(self, o: &QuadSurd) -> QuadSurd {
        QuadSurd {
            a: &self.a * &o.a + &self.b * &o.b * &self.d,
            b: &self.a * &o.b + &self.b * &o.a,
            d: self.d.clone(),
        }
    }
}

impl Mul<&Rational> for &QuadSurd {
    type Output = QuadSurd;
    fn mul(self, r: &Rational) -> QuadSurd {
        QuadSurd { a: &self.a * r, b: &self.b * r, d: self.d.clone() }
    }
}

impl Div for &QuadSurd {
    type Output = QuadSurd;
    fn div(self, o: &QuadSurd) -> QuadSurd {
        self * &o.recip()
    }
}

impl Neg for &QuadSurd {
    type Output = QuadSurd;
    fn neg(self) -> QuadSurd {
        QuadSurd { a: -&self.a, b: -&self.b, d: self.d.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Below1,
    Equal1,
    Above1,
}

#[derive(Clone, Debug)]
pub struct DhClosedForm {
    pub lambda: Rational,
    pub x0: QuadSurd,
    pub y0: QuadSurd,
    pub trace: QuadSurd,
    pub det: QuadSurd,
    pub classification: Classification,
    /// Spectral radius of the Jacobian at the fixed point, for display only.
    pub rho_approx: f64,
}

/// Fixed point (x0, y0) of x = 1/(1+λxy^2), y = 1/(1+λxy) in Q(√(8λ+1)) and the
/// exact position of the spectral radius of its Jacobian relative to 1.
pub fn dh_closed_form(lambda: &Rational) -> Result<DhClosedForm> {
    if lambda <= &int(1) {
        return Err(invalid(format!("closed form needs lambda > 1, got {}", format_exact(lambda))));
    }
    let d = lambda * int(8) + int(1);
    let s = QuadSurd::sqrt_d(&d);
    let c = |r: Rational| QuadSurd::rational(r, &d);
    let x0 = &(&c(lambda * int(4) - int(1)) + &s) * &(lambda * int(8)).recip();
    let y0 = &(&s - &c(int(3))) * &(int(2) * (lambda - int(1))).recip();
    let y2 = &y0 * &y0;
    let trace = &(&(&x0 * &y2) * &(&x0 + &c(int(1)))) * lambda;
    let x3 = &(&x0 * &x0) * &x0;
    let det = -&(&(&x3 * &(&y2 * &y2)) * &(lambda * lambda));
    // ρ = tr/2 + sqrt(tr^2/4 - det) with det < 0; for tr/2 <= 1, ρ vs 1 has the sign of tr - det - 1
    let half_excess = (&(&trace * &rat(1, 2)) - &c(int(1))).signum();
    let classification = if half_excess == Ordering::Greater {
        Classification::Above1
    } else {
        match (&(&trace - &det) - &c(int(1))).signum() {
            Ordering::Greater => Classification::Above1,
            Ordering::Equal => Classification::Equal1,
            Ordering::Less => Classification::Below1,
        }
    };
    let (t, dt) = (trace.to_f64(), det.to_f64());
    let rho_approx = t / 2.0 + (t * t / 4.0 - dt).sqrt();
    Ok(DhClosedForm { lambda: lambda.clone(), x0, y0, trace, det, classification, rho_approx })
}

impl DhClosedForm {
    /// F(x0, y0) - (x0, y0) evaluated in the quadratic field; both must vanish.
    pub fn residual(&self) -> (QuadSurd, QuadSurd) {
        let one = QuadSurd::rational(int(1), &self.x0.d);
        let f1 = (&one + &(&(&(&self.x0 * &self.y0) * &self.y0) * &self.lambda)).recip();
        let f2 = (&one + &(&(&self.x0 * &self.y0) * &self.lambda)).recip();
        (&f1 - &self.x0, &f2 - &self.y0)
    }

    /// Interval evaluation of the same residual from an enclosure of √(8λ+1) of
    /// width at most 10^-digits. Returns the enclosures of both residuals.
    pub fn residual_enclosure(&self, digits: u32) -> [(Rational, Rational); 2] {
        let (lo, hi) = sqrt_enclosure(&self.x0.d, digits);
        let x = self.x0.enclose(&lo, &hi);
        let y = self.y0.enclose(&lo, &hi);
        let l = &self.lambda;
        // products of positive intervals and the antitone map t -> 1/(1+λt)
        let f = |plo: Rational, phi: Rational| ((int(1) + l * phi).recip(), (int(1) + l * plo).recip());
        let f1 = f(&x.0 * &y.0 * &y.0, &x.1 * &y.1 * &y.1);
        let f2 = f(&x.0 * &y.0, &x.1 * &y.1);
        [(&f1.0 - &x.1, &f1.1 - &x.0), (&f2.0 - &y.1, &f2.1 - &y.0)]
    }
}

/// Rational lo <= √d <= hi with hi - lo <= 10^-digits.
pub fn sqrt_enclosure(d: &Rational, digits: u32) -> (Rational, Rational) {
    // √(n/m) = √(n m)/m; scale by 10^digits and take integer square roots
    let scale = pow10(digits);
    let nm = d.numer() * d.denom();
    let scaled = &nm * &scale * &scale;
    let r = scaled.sqrt();
    let den = d.denom() * &scale;
    let lo = BigRational::new(r.clone(), den.clone());
    let exact = &r * &r == scaled;
    let hi = if exact { lo.clone() } else { BigRational::new(r + BigInt::one(), den) };
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::parse_rational;

    #[test]
    fn sign_of_surds() {
        let d = int(2);
        let q = |a: i64, b: i64| QuadSurd { a: int(a), b: int(b), d: d.clone() };
        assert_eq!(q(3, -2).signum(), Ordering::Greater); // 3 - 2.83
        assert_eq!(q(2, -2).signum(), Ordering::Less);
        assert_eq!(q(-1, 1).signum(), Ordering::Greater);
        assert_eq!(q(0, 0).signum(), Ordering::Equal);
    }

    #[test]
    fn closed_form_at_three() {
        let r = dh_closed_form(&int(3)).unwrap();
        assert_eq!(r.x0.as_rational(), Some(rat(2, 3)));
        assert_eq!(r.y0.as_rational(), Some(rat(1, 2)));
        assert_eq!(r.classification, Classification::Equal1);
    }

    #[test]
    fn classification_around_three() {
        for (l, c) in [("2", Classification::Below1), ("2.9", Classification::Below1), ("3.1", Classification::Above1), ("4", Classification::Above1)] {
            assert_eq!(dh_closed_form(&parse_rational(l).unwrap()).unwrap().classification, c, "lambda {l}");
        }
        assert!(dh_closed_form(&int(1)).is_err());
    }

    #[test]
    fn fixed_point_identity_in_field() {
        let r = dh_closed_form(&parse_rational("2.48").unwrap()).unwrap();
        let (a, b) = r.residual();
        assert!(a.is_zero() && b.is_zero());
        for (lo, hi) in r.residual_enclosure(30) {
            assert!(lo <= int(0) && hi >= int(0));
            assert!(hi - lo < parse_rational("1e-25").unwrap());
        }
    }
}
