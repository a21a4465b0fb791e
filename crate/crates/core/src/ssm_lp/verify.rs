use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::branching::{BranchingMatrix, MatrixFile};
use crate::error::Error;
use crate::rational::{format_exact, int, parse_rational, Rational};
use crate::recurrence::Activity;

use super::grid::{IntervalGrid, PiecewisePotential, PotentialFile};
use super::{next_tuple, AcceptableTuple, ExactImage, LpSystem};

/// Exact witness that the LP system is strictly feasible at λ.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SsmPotentialCert {
    pub kind: String,
    pub matrix_id: String,
    pub matrix: MatrixFile,
    pub lambda: Activity,
    /// Breakpoints per recurrent type.
    pub grid: Vec<Vec<String>>,
    pub potential: PotentialFile,
    /// Smallest slack over all checked inequalities.
    pub margin: String,
    /// Tag of a row attaining the margin.
    pub tightest: String,
    /// Contraction rows checked, one per tuple up to permuting equal child types.
    pub tuples_checked: u64,
    /// Search parameters used to find the potential; not needed to check it.
    #[serde(default)]
    pub search: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SsmViolation {
    Malformed(String),
    /// b - a Y <= 0 on the named interval.
    Positivity { tag: String, slack: Rational },
    /// A contraction row fails; the tag names (i, k_0, k_1, ...).
    Contraction { tag: String, slack: Rational },
    MarginMismatch { claimed: String, actual: String },
}

impl fmt::Display for SsmViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SsmViolation::Malformed(m) => write!(f, "malformed certificate: {m}"),
            SsmViolation::Positivity { tag, slack } => write!(f, "positivity row {tag} fails (slack {})", format_exact(slack)),
            SsmViolation::Contraction { tag, slack } => write!(f, "contraction row {tag} fails (slack {})", format_exact(slack)),
            SsmViolation::MarginMismatch { claimed, actual } => write!(f, "claimed margin {claimed} but actual {actual}"),
        }
    }
}

impl From<Error> for SsmViolation {
    fn from(e: Error) -> Self {
        SsmViolation::Malformed(e.to_string())
    }
}

impl SsmViolation {
    pub fn tag(&self) -> Option<&str> {
        match self {
            SsmViolation::Positivity { tag, .. } | SsmViolation::Contraction { tag, .. } => Some(tag),
            _ => None,
        }
    }
}

/// Worst child sum seen for one (type, k_0) and the first tuple attaining it.
type Worst = Option<(BigInt, Vec<usize>)>;

struct Exact<'a> {
    sys: &'a LpSystem,
    image: ExactImage,
    /// (b - a X_k)·D as integers over one common denominator D
    child: Vec<Vec<BigInt>>,
    /// S < T_{i,k0} = (b - a Y)·D / (1 - X) is the contraction row; (num, den)
    bound: Vec<Vec<(BigInt, BigInt)>>,
    sizes: Vec<usize>,
}

impl<'a> Exact<'a> {
    fn new(sys: &'a LpSystem, grid: &IntervalGrid, p: &PiecewisePotential) -> Self {
        let t = grid.types();
        let child_r: Vec<Vec<Rational>> = (0..t)
            .map(|c| (0..grid.intervals(c)).map(|k| &p.b[c][k] - &p.a[c][k] * grid.lo(c, k)).collect())
            .collect();
        let den = child_r.iter().flatten().fold(BigInt::one(), |acc, r| acc.lcm(r.denom()));
        let child = child_r
            .iter()
            .map(|row| row.iter().map(|r| r.numer() * (&den / r.denom())).collect())
            .collect();
        let dr = Rational::from_integer(den);
        let bound = (0..t)
            .map(|i| {
                (0..grid.intervals(i))
                    .map(|k| {
                        let r = &p.b[i][k] - &p.a[i][k] * grid.hi(i, k);
                        let u = int(1) - grid.lo(i, k);
                        let b = r * &dr / u;
                        (b.numer().clone(), b.denom().clone())
                    })
                    .collect()
            })
            .collect();
        Exact {
            sys,
            image: ExactImage::new(&sys.lambda, grid),
            child,
            bound,
            sizes: (0..t).map(|c| grid.intervals(c)).collect(),
        }
    }

    fn blocks(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, ch) in self.sys.children.iter().enumerate() {
            match ch.first() {
                None => out.push((i, 0)),
                Some(&c) => out.extend((0..self.sizes[c]).map(|k| (i, k))),
            }
        }
        out
    }

    /// Canonical child tuples of type i with first slot k1, in order, with
    /// their exact k_0 range and child sum.
    fn walk(&self, i: usize, k1: usize, mut visit: impl FnMut(&[usize], (usize, usize), &BigInt) -> bool) {
        let ch = &self.sys.children[i];
        let n = ch.len();
        let sizes: Vec<usize> = ch.iter().map(|&c| self.sizes[c]).collect();
        let mut ks = vec![0usize; n];
        if n > 0 {
            ks[0] = k1;
            for l in 1..n {
                ks[l] = if ch[l] == ch[l - 1] { ks[l - 1] } else { 0 };
            }
        }
        loop {
            if let Some(range) = self.image.parent_range(i, ch, &ks) {
                let s: BigInt = ch.iter().zip(&ks).map(|(&c, &k)| &self.child[c][k]).sum();
                if !visit(&ks, range, &s) {
                    return;
                }
            }
            if n == 0 || !next_tuple(&mut ks, ch, &sizes, true) || ks[0] != k1 {
                return;
            }
        }
    }

    fn violates(&self, i: usize, k0: usize, s: &BigInt) -> bool {
        let (num, den) = &self.bound[i][k0];
        s * den >= *num
    }
}

/// Checks every positivity row and every contraction row strictly, in exact
/// arithmetic, and returns the certificate with the smallest slack. The only
/// path to an SSM claim; shares no arithmetic with the LP search.
pub fn verify_potential(
    m: &BranchingMatrix,
    matrix_id: &str,
    lambda: &Activity,
    grid: &IntervalGrid,
    p: &PiecewisePotential,
) -> Result<SsmPotentialCert, SsmViolation> {
    let sys = LpSystem::new(m, lambda.clone());
    if grid.types() != sys.types() {
        return Err(SsmViolation::Malformed(format!("grid has {} types, matrix has {} recurrent types", grid.types(), sys.types())));
    }
    if !p.matches(grid) {
        return Err(SsmViolation::Malformed("potential does not match the grid".into()));
    }
    if p.a.iter().chain(&p.b).flatten().any(|x| x.is_negative()) {
        return Err(SsmViolation::Malformed("negative coefficient".into()));
    }
    let mut margin: Option<(Rational, String)> = None;
    for t in 0..grid.types() {
        for k in 0..grid.intervals(t) {
            let slack = &p.b[t][k] - &p.a[t][k] * grid.hi(t, k);
            if !slack.is_positive() {
                return Err(SsmViolation::Positivity { tag: format!("P{t}_{k}"), slack });
            }
            if margin.as_ref().is_none_or(|m| slack < m.0) {
                margin = Some((slack, format!("P{t}_{k}")));
            }
        }
    }

    let ex = Exact::new(&sys, grid, p);
    let parts: Vec<(usize, Vec<Worst>, u64)> = ex
        .blocks()
        .into_par_iter()
        .map(|(i, k1)| {
            let mut worst: Vec<Worst> = vec![None; grid.intervals(i)];
            let mut count = 0u64;
            ex.walk(i, k1, |ks, (lo, hi), s| {
                for w in &mut worst[lo..=hi] {
                    count += 1;
                    if w.as_ref().is_none_or(|(best, _)| s > best) {
                        *w = Some((s.clone(), ks.to_vec()));
                    }
                }
                true
            });
            (i, worst, count)
        })
        .collect();
    let mut worst: Vec<Vec<Worst>> = (0..grid.types()).map(|t| vec![None; grid.intervals(t)]).collect();
    let mut checked = 0u64;
    for (i, part, count) in parts {
        checked += count;
        for (k0, w) in part.into_iter().enumerate() {
            if let Some((s, ks)) = w {
                if worst[i][k0].as_ref().is_none_or(|(best, _)| &s > best) {
                    worst[i][k0] = Some((s, ks));
                }
            }
        }
    }

    for i in 0..grid.types() {
        let bad = (0..grid.intervals(i)).any(|k0| worst[i][k0].as_ref().is_some_and(|(s, _)| ex.violates(i, k0, s)));
        if bad {
            return Err(first_violation(&ex, grid, p, i));
        }
        for k0 in 0..grid.intervals(i) {
            if let Some((_, ks)) = &worst[i][k0] {
                let slack = contraction_slack(grid, p, &sys, i, k0, ks);
                debug_assert!(slack.is_positive());
                if margin.as_ref().is_none_or(|m| slack < m.0) {
                    margin = Some((slack, AcceptableTuple { ty: i, k0, ks: ks.clone() }.to_string()));
                }
            }
        }
    }

    let margin = margin.unwrap_or_else(|| (Rational::zero(), String::new()));
    Ok(SsmPotentialCert {
        kind: "ssm-potential".into(),
        matrix_id: matrix_id.into(),
        matrix: m.to_file(),
        lambda: lambda.clone(),
        grid: grid.to_file(),
        potential: p.to_file(),
        margin: format_exact(&margin.0),
        tightest: margin.1,
        tuples_checked: checked,
        search: serde_json::Value::Null,
    })
}

/// (b_{i,k0} - a_{i,k0} Y_{k0}) - (1 - X_{k0}) Σ_j (b_j - a_j X_{k_j}), exactly.
fn contraction_slack(grid: &IntervalGrid, p: &PiecewisePotential, sys: &LpSystem, i: usize, k0: usize, ks: &[usize]) -> Rational {
    let s: Rational = sys.children[i]
        .iter()
        .zip(ks)
        .map(|(&c, &k)| &p.b[c][k] - &p.a[c][k] * grid.lo(c, k))
        .sum();
    (&p.b[i][k0] - &p.a[i][k0] * grid.hi(i, k0)) - (int(1) - grid.lo(i, k0)) * s
}

/// First failing row of type i in stream order.
fn first_violation(ex: &Exact<'_>, grid: &IntervalGrid, p: &PiecewisePotential, i: usize) -> SsmViolation {
    let mut found: Option<AcceptableTuple> = None;
    let first_slot = ex.sys.children[i].first().map_or(1, |&c| ex.sizes[c]);
    for k1 in 0..first_slot {
        ex.walk(i, k1, |ks, (lo, hi), s| {
            if let Some(k0) = (lo..=hi).find(|&k0| ex.violates(i, k0, s)) {
                found = Some(AcceptableTuple { ty: i, k0, ks: ks.to_vec() });
                return false;
            }
            true
        });
        if found.is_some() {
            break;
        }
    }
    let t = found.expect("a violated row exists");
    let slack = contraction_slack(grid, p, ex.sys, i, t.k0, &t.ks);
    SsmViolation::Contraction { tag: t.to_string(), slack }
}

/// Re-checks a certificate from scratch, including its claimed margin.
pub fn verify_ssm_cert(cert: &SsmPotentialCert) -> Result<SsmPotentialCert, SsmViolation> {
    if cert.kind != "ssm-potential" {
        return Err(SsmViolation::Malformed(format!("unexpected kind {}", cert.kind)));
    }
    let m = BranchingMatrix::from_file(cert.matrix.clone())?;
    let grid = IntervalGrid::from_file(&cert.lambda, &cert.grid)?;
    let p = PiecewisePotential::from_file(&cert.potential)?;
    let mut out = verify_potential(&m, &cert.matrix_id, &cert.lambda, &grid, &p)?;
    let claimed = parse_rational(&cert.margin)?;
    let actual = parse_rational(&out.margin)?;
    if claimed != actual {
        return Err(SsmViolation::MarginMismatch { claimed: cert.margin.clone(), actual: out.margin });
    }
    out.search = cert.search.clone();
    Ok(out)
}
