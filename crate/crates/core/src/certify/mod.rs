//! Weak spatial mixing certificates: contraction via a Jacobian majorant and a
//! Collatz–Wielandt bound, non-uniqueness via a pair of swapped cuboids, and the
//! closed-form analysis of the never-go-South tree.

mod dh;
mod threshold;
mod wsm;

pub use dh::{dh_closed_form, Classification, DhClosedForm, QuadSurd};
pub use threshold::{threshold_estimate, ThresholdEstimate, ThresholdOptions};
pub use wsm::{
    verify_wsm_fails, verify_wsm_holds, wsm_certify, wsm_refute, RefuteOptions, RefuteSeeds, WsmCertifyOptions,
    WsmFailsCert, WsmFailure, WsmHoldsCert,
};

use std::fmt;

use num_traits::{One, Signed, Zero};

use crate::branching::BranchingMatrix;
use crate::error::{invalid, Result};
use crate::rational::{round_up_significant, to_f64, Rational};

/// c * ∏ x_k^{e_k}
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Monomial {
    pub coeff: u32,
    pub exponents: Vec<u32>,
}

impl Monomial {
    pub fn eval(&self, y: &[Rational]) -> Rational {
        let mut v = Rational::from_integer(self.coeff.into());
        for (k, &e) in self.exponents.iter().enumerate() {
            for _ in 0..e {
                v *= &y[k];
            }
        }
        v
    }

    pub fn eval_f64(&self, y: &[f64]) -> f64 {
        self.exponents
            .iter()
            .enumerate()
            .fold(self.coeff as f64, |acc, (k, &e)| acc * y[k].powi(e as i32))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeff != 1 || self.exponents.iter().all(|&e| e == 0) {
            write!(f, "{}", self.coeff)?;
        }
        for (k, &e) in self.exponents.iter().enumerate() {
            match e {
                0 => {}
                1 => write!(f, "x{}", k + 1)?,
                _ => write!(f, "x{}^{}", k + 1, e)?,
            }
        }
        Ok(())
    }
}

/// Entry-wise majorant of |J_F| on a cuboid with upper corner y: the entry
/// (i, j) is (∂/∂x_j of the child product of i) times y_i^2, to be scaled by λ.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JacobianMajorant {
    entries: Vec<Vec<Option<Monomial>>>,
}

impl JacobianMajorant {
    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> Option<&Monomial> {
        self.entries[i][j].as_ref()
    }

    pub fn eval(&self, y: &[Rational]) -> Vec<Vec<Rational>> {
        self.entries
            .iter()
            .map(|row| row.iter().map(|e| e.as_ref().map_or_else(Rational::zero, |m| m.eval(y))).collect())
            .collect()
    }

    pub fn eval_f64(&self, y: &[f64]) -> Vec<Vec<f64>> {
        self.entries
            .iter()
            .map(|row| row.iter().map(|e| e.as_ref().map_or(0.0, |m| m.eval_f64(y))).collect())
            .collect()
    }
}

impl fmt::Display for JacobianMajorant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.entries {
            let cells: Vec<String> = row.iter().map(|e| e.as_ref().map_or("0".into(), |m| m.to_string())).collect();
            writeln!(f, "{}", cells.join("  "))?;
        }
        Ok(())
    }
}

/// Majorant for the recurrence on the non-transient types of `m`.
pub fn jacobian_majorant(m: &BranchingMatrix) -> JacobianMajorant {
    let (r, _) = m.recurrent_part();
    let t = r.types();
    let entries = (0..t)
        .map(|i| {
            (0..t)
                .map(|j| {
                    let c = r.entry(i, j);
                    if c == 0 {
                        return None;
                    }
                    let mut exponents: Vec<u32> = r.row(i).to_vec();
                    exponents[j] -= 1;
                    exponents[i] += 2;
                    Some(Monomial { coeff: c, exponents })
                })
                .collect()
        })
        .collect();
    JacobianMajorant { entries }
}

/// max_i (Av)_i / v_i, an upper bound on the spectral radius of a non-negative A.
pub fn perron_bound(a: &[Vec<Rational>], v: &[Rational]) -> Result<Rational> {
    if v.len() != a.len() || a.iter().any(|row| row.len() != v.len()) {
        return Err(invalid("matrix and test vector dimensions differ"));
    }
    if v.iter().any(|x| !x.is_positive()) {
        return Err(invalid("test vector must be strictly positive"));
    }
    if a.iter().flatten().any(|x| x.is_negative()) {
        return Err(invalid("matrix must be non-negative"));
    }
    let mut best = Rational::zero();
    for (row, vi) in a.iter().zip(v) {
        let av: Rational = row.iter().zip(v).map(|(x, y)| x * y).sum();
        let ratio = av / vi;
        if ratio > best {
            best = ratio;
        }
    }
    Ok(best)
}

/// Approximate Perron vector by power iteration on A + εJ, raised by 1% of its
/// maximum and rounded up to six significant digits. The vector carries no
/// claim; whatever it yields must be checked with [`perron_bound`].
pub fn find_test_vector(a: &[Vec<Rational>]) -> Vec<Rational> {
    let t = a.len();
    if t == 0 {
        return Vec::new();
    }
    let af: Vec<Vec<f64>> = a.iter().map(|row| row.iter().map(to_f64).collect()).collect();
    let scale = af.iter().flatten().fold(0.0f64, |m, &x| m.max(x));
    let eps = if scale > 0.0 { scale * 1e-9 } else { 1.0 };
    let mut v = vec![1.0f64; t];
    for _ in 0..5000 {
        let mut w: Vec<f64> = (0..t)
            .map(|i| (0..t).map(|j| (af[i][j] + eps) * v[j]).sum::<f64>())
            .collect();
        let norm = w.iter().fold(0.0f64, |m, &x| m.max(x));
        if norm <= 0.0 || !norm.is_finite() {
            break;
        }
        w.iter_mut().for_each(|x| *x /= norm);
        let delta = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        if delta < 1e-15 {
            break;
        }
    }
    let top = v.iter().fold(0.0f64, |m, &x| m.max(x));
    let candidates: Vec<Vec<Rational>> = [0.0, 0.01]
        .iter()
        .map(|margin| v.iter().map(|&x| round_up_significant(x + margin * top, 6)).collect())
        .collect();
    candidates
        .into_iter()
        .filter(|c: &Vec<Rational>| c.iter().all(|x| x.is_positive()))
        .min_by(|x, y| {
            let bx = perron_bound(a, x).unwrap_or_else(|_| Rational::from_integer(1_000_000_000.into()));
            let by = perron_bound(a, y).unwrap_or_else(|_| Rational::from_integer(1_000_000_000.into()));
            bx.cmp(&by)
        })
        .unwrap_or_else(|| vec![Rational::one(); t])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, parse_rational, rat};

    #[test]
    fn majorant_of_three_state_machine() {
        let m = BranchingMatrix::from_rows([[1, 2, 0], [0, 1, 1], [1, 1, 0]]);
        let j = jacobian_majorant(&m);
        assert_eq!(j.entry(0, 1).unwrap().to_string(), "2x1^3x2");
        assert_eq!(j.entry(0, 0).unwrap().to_string(), "x1^2x2^2");
        assert_eq!(j.entry(1, 2).unwrap().to_string(), "x2^3");
        assert!(j.entry(0, 2).is_none());
    }

    #[test]
    fn majorant_of_single_type() {
        let j = jacobian_majorant(&BranchingMatrix::from_rows([[3]]));
        assert_eq!(j.entry(0, 0).unwrap(), &Monomial { coeff: 3, exponents: vec![4] });
    }

    #[test]
    fn perron_bound_basics() {
        let id = vec![vec![int(1), int(0)], vec![int(0), int(1)]];
        assert_eq!(perron_bound(&id, &[int(1), int(1)]).unwrap(), int(1));
        assert!(perron_bound(&id, &[int(1), int(0)]).is_err());
        let a = vec![vec![int(1), int(2)], vec![int(2), int(1)]];
        assert_eq!(perron_bound(&a, &[rat(1, 2), rat(1, 2)]).unwrap(), int(3));
    }

    #[test]
    fn test_vector_for_zero_matrix() {
        let z = vec![vec![int(0); 3]; 3];
        let v = find_test_vector(&z);
        assert_eq!(perron_bound(&z, &v).unwrap(), int(0));
    }

    #[test]
    fn test_vector_is_nearly_optimal() {
        let a = vec![vec![int(1), int(2)], vec![int(2), int(1)]];
        let v = find_test_vector(&a);
        let b = perron_bound(&a, &v).unwrap();
        assert!(b >= int(3) && b < parse_rational("3.001").unwrap());
    }
}
