//! Piecewise-linear potential LP for strong spatial mixing: interval grids,
//! acceptable tuples, constraint generation with interval refinement, and an
//! exact verifier that is the only path to a certified claim.

mod generate;
mod grid;
mod lp;
mod pipeline;
mod verify;

pub use generate::{
    rationalize, refine_intervals, scan_violations, solve_with_generation, GenerationOptions, GenerationOutcome,
    GenerationReport, RefineOptions, RefinementStep,
};
pub use grid::{make_grid, IntervalGrid, PiecewisePotential, PotentialFile};
pub use lp::{
    emit_constraints, open_backend, ExternalBackend, LpBackend, LpInstance, LpRow, LpSolution, LpStatus, RowTag,
    SOLVER_ENV,
};
#[cfg(feature = "highs")]
pub use lp::HighsBackend;
pub use pipeline::{ssm_certify, ssm_threshold_sweep, SsmOptions, SsmOutcome, SsmStatus, SweepRow};
pub use verify::{verify_potential, verify_ssm_cert, SsmPotentialCert, SsmViolation};

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::One;

use crate::branching::BranchingMatrix;
use crate::rational::Rational;
use crate::recurrence::Activity;

pub const DEFAULT_M_BIG: f64 = 1e6;
pub const DEFAULT_D0: usize = 20;
pub const DEFAULT_MAX_D: usize = 400;
pub const DEFAULT_BATCH: usize = 5000;
pub const DEFAULT_DIGITS: u32 = 9;

/// The recurrent types of a branching matrix with their child multisets.
#[derive(Clone, Debug)]
pub struct LpSystem {
    pub lambda: Activity,
    /// Sorted child types of each recurrent type, in recurrent indices.
    pub children: Vec<Vec<usize>>,
    /// Original index of each recurrent type.
    pub kept: Vec<usize>,
    pub labels: Vec<String>,
}

impl LpSystem {
    pub fn new(m: &BranchingMatrix, lambda: Activity) -> Self {
        let (r, kept) = m.recurrent_part();
        let children = (0..r.types()).map(|i| r.children(i)).collect();
        let labels = (0..r.types()).map(|i| r.label(i)).collect();
        LpSystem { lambda, children, kept, labels }
    }

    pub fn types(&self) -> usize {
        self.children.len()
    }
}

/// Type i with parent interval k_0 and child intervals (k_1, ..., k_Δ).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AcceptableTuple {
    pub ty: usize,
    pub k0: usize,
    pub ks: Vec<usize>,
}

impl fmt::Display for AcceptableTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}_{}", self.ty, self.k0)?;
        for k in &self.ks {
            write!(f, "_{k}")?;
        }
        Ok(())
    }
}

/// Breakpoints of one type as numerators over a common denominator.
pub(crate) struct IntGrid {
    pub num: Vec<BigInt>,
    pub den: BigInt,
}

impl IntGrid {
    pub(crate) fn new(points: &[Rational]) -> Self {
        let den = points.iter().fold(BigInt::one(), |acc, p| acc.lcm(p.denom()));
        let num = points.iter().map(|p| p.numer() * (&den / p.denom())).collect();
        IntGrid { num, den }
    }
}

/// Exact image bounds of α_i over a child box, as fractions q·D / (q·D + p·N).
pub(crate) struct ExactImage {
    p: BigInt,
    q: BigInt,
    grids: Vec<IntGrid>,
}

impl ExactImage {
    pub(crate) fn new(lambda: &Activity, grid: &IntervalGrid) -> Self {
        let l = lambda.value();
        ExactImage {
            p: l.numer().clone(),
            q: l.denom().clone(),
            grids: (0..grid.types()).map(|t| IntGrid::new(grid.points(t))).collect(),
        }
    }

    /// Range of k_0 whose interval meets the image of the child box, or None.
    pub(crate) fn parent_range(&self, i: usize, children: &[usize], ks: &[usize]) -> Option<(usize, usize)> {
        let mut den = BigInt::one();
        let mut nlo = BigInt::one();
        let mut nhi = BigInt::one();
        for (&c, &k) in children.iter().zip(ks) {
            let g = &self.grids[c];
            den *= &g.den;
            nlo *= &g.num[k];
            nhi *= &g.num[k + 1];
        }
        let g = &self.grids[i];
        let qd = &self.q * &den;
        // X_k <= qD/(qD + p·nlo)  <=>  num_k (qD + p·nlo) <= D_i qD
        let hi_den = &qd + &self.p * &nlo;
        let lo_den = &qd + &self.p * &nhi;
        let rhs = &g.den * &qd;
        let d = g.num.len() - 1;
        let below_hi = |k: usize| &g.num[k] * &hi_den <= rhs;
        let above_lo = |k: usize| &g.num[k] * &lo_den >= rhs;
        // largest k0 < d with X_{k0} <= hi, smallest k0 with X_{k0+1} >= lo
        let kmax = partition(d, below_hi)?;
        let kmin = first_true(d, |k| above_lo(k + 1))?;
        (kmin <= kmax).then_some((kmin, kmax))
    }
}

/// Last index in 0..n where a monotone true-then-false predicate holds.
fn partition(n: usize, pred: impl Fn(usize) -> bool) -> Option<usize> {
    let (mut lo, mut hi) = (0usize, n);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo.checked_sub(1)
}

/// First index in 0..n where a monotone false-then-true predicate holds.
fn first_true(n: usize, pred: impl Fn(usize) -> bool) -> Option<usize> {
    let (mut lo, mut hi) = (0usize, n);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    (lo < n).then_some(lo)
}

/// Advances `ks` to the next child tuple in lexicographic order. With
/// `canonical`, slots holding the same child type stay non-decreasing.
pub(crate) fn next_tuple(ks: &mut [usize], children: &[usize], sizes: &[usize], canonical: bool) -> bool {
    let n = ks.len();
    for j in (0..n).rev() {
        if ks[j] + 1 < sizes[j] {
            ks[j] += 1;
            for l in j + 1..n {
                ks[l] = if canonical && children[l] == children[l - 1] { ks[l - 1] } else { 0 };
            }
            return true;
        }
    }
    false
}

/// Streams every i-acceptable tuple: types ascending, child tuples in full
/// lexicographic order, k_0 ascending. Exact rational arithmetic throughout.
pub fn enumerate_acceptable(sys: &LpSystem, grid: &IntervalGrid, mut f: impl FnMut(&AcceptableTuple)) {
    for_each_acceptable(sys, grid, false, &mut f)
}

/// As [`enumerate_acceptable`] but keeps one representative of each tuple
/// up to permuting slots of equal child type; the LP rows of such tuples
/// coincide.
pub fn enumerate_canonical(sys: &LpSystem, grid: &IntervalGrid, mut f: impl FnMut(&AcceptableTuple)) {
    for_each_acceptable(sys, grid, true, &mut f)
}

fn for_each_acceptable(sys: &LpSystem, grid: &IntervalGrid, canonical: bool, f: &mut dyn FnMut(&AcceptableTuple)) {
    let img = ExactImage::new(&sys.lambda, grid);
    for (i, ch) in sys.children.iter().enumerate() {
        let sizes: Vec<usize> = ch.iter().map(|&c| grid.intervals(c)).collect();
        let mut t = AcceptableTuple { ty: i, k0: 0, ks: vec![0; ch.len()] };
        loop {
            if let Some((lo, hi)) = img.parent_range(i, ch, &t.ks) {
                for k0 in lo..=hi {
                    t.k0 = k0;
                    f(&t);
                }
            }
            if !next_tuple(&mut t.ks, ch, &sizes, canonical) {
                break;
            }
        }
    }
}

/// Number of tuples each type contributes, canonical or not.
pub fn count_acceptable(sys: &LpSystem, grid: &IntervalGrid, canonical: bool) -> u64 {
    let mut n = 0u64;
    for_each_acceptable(sys, grid, canonical, &mut |_| n += 1);
    n
}
