use std::cmp::Ordering;
use std::fmt;

use num_traits::One;
use serde::{Deserialize, Serialize};

use super::{find_test_vector, jacobian_majorant, perron_bound};
use crate::branching::{BranchingMatrix, MatrixFile};
use crate::error::{Error, Result};
use crate::rational::{format_exact, parse_rational, Rational};
use crate::recurrence::{Activity, Cuboid, GridVector, Recurrence, Rounding, DEFAULT_SCALE};

#[derive(Clone, Debug)]
pub struct WsmCertifyOptions {
    pub rounds: usize,
    pub scale: u32,
    /// Keep iterating past `rounds` until the rounded iteration is stationary,
    /// up to `rounds * stationary_factor` rounds.
    pub stationary_factor: usize,
    pub test_vector: Option<Vec<Rational>>,
}

impl Default for WsmCertifyOptions {
    fn default() -> Self {
        WsmCertifyOptions { rounds: 1000, scale: DEFAULT_SCALE, stationary_factor: 100, test_vector: None }
    }
}

/// Contraction certificate: x_L = (F↓F↑)^rounds(0), F(x_L) ≤ x_R,
/// x_L ≤ F(x_R), and λ·max_i (M(x_R)v)_i / v_i = lambda_bound < 1.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WsmHoldsCert {
    pub kind: String,
    pub matrix_id: String,
    pub matrix: MatrixFile,
    pub lambda: Activity,
    pub scale: u32,
    pub rounds: usize,
    pub x_l: GridVector,
    pub x_r: GridVector,
    pub test_vector: Vec<String>,
    /// max_i (M(x_R)v)_i / v_i, exact.
    pub bound: String,
    /// λ times `bound`, exact.
    pub lambda_bound: String,
}

/// Non-uniqueness certificate: F maps C_L into C_R and C_R into C_L, and the two are disjoint.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WsmFailsCert {
    pub kind: String,
    pub matrix_id: String,
    pub matrix: MatrixFile,
    pub lambda: Activity,
    pub scale: u32,
    pub c_l: Cuboid,
    pub c_r: Cuboid,
}

/// Why a certificate could not be produced. None of these is evidence either way.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WsmFailure {
    NotStationary { rounds: usize },
    OrderViolated { check: String, coordinate: usize },
    BoundTooLarge { lambda_bound: String },
    ChainViolated { inequality: String, coordinate: usize },
    NotDisjoint,
    NoPeriodTwo,
    Invalid(String),
}

impl fmt::Display for WsmFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WsmFailure::NotStationary { rounds } => {
                write!(f, "rounded iteration did not become stationary within {rounds} rounds")
            }
            WsmFailure::OrderViolated { check, coordinate } => write!(f, "{check} fails at coordinate {coordinate}"),
            WsmFailure::BoundTooLarge { lambda_bound } => {
                write!(f, "lambda times the Perron bound is {lambda_bound}, not below 1")
            }
            WsmFailure::ChainViolated { inequality, coordinate } => {
                write!(f, "chain inequality {inequality} fails at coordinate {coordinate}")
            }
            WsmFailure::NotDisjoint => write!(f, "the two cuboids intersect"),
            WsmFailure::NoPeriodTwo => write!(f, "alternating iteration shows no period-two separation"),
            WsmFailure::Invalid(m) => write!(f, "{m}"),
        }
    }
}

impl From<Error> for WsmFailure {
    fn from(e: Error) -> Self {
        WsmFailure::Invalid(e.to_string())
    }
}

fn first_violation(signs: &[Ordering], ok: impl Fn(Ordering) -> bool) -> Option<usize> {
    signs.iter().position(|&s| !ok(s))
}

/// Emits a contraction certificate when every check passes. The iteration runs
/// at least `rounds` rounds and then continues until stationary; x_R = F↑(x_L).
pub fn wsm_certify(
    m: &BranchingMatrix,
    matrix_id: &str,
    lambda: &Activity,
    opts: &WsmCertifyOptions,
) -> std::result::Result<WsmHoldsCert, WsmFailure> {
    let f = Recurrence::new(m, lambda.clone());
    let zero = GridVector::zeros(f.dim(), opts.scale);
    let cap = opts.rounds.saturating_mul(opts.stationary_factor.max(1));
    let run = f.iterate_to_stationary(&zero, opts.rounds, cap, Rounding::Up);
    if !run.stationary {
        return Err(WsmFailure::NotStationary { rounds: cap });
    }
    let x_l = run.value;
    let x_r = f.eval_up(&x_l);
    let cert_rounds = run.rounds;
    let v = match &opts.test_vector {
        Some(v) => v.clone(),
        None => find_test_vector(&jacobian_majorant(m).eval(&x_r.to_rationals())),
    };
    let cert = WsmHoldsCert {
        kind: "wsm-holds".into(),
        matrix_id: matrix_id.into(),
        matrix: m.to_file(),
        lambda: lambda.clone(),
        scale: opts.scale,
        rounds: cert_rounds,
        x_l,
        x_r,
        test_vector: v.iter().map(format_exact).collect(),
        bound: String::new(),
        lambda_bound: String::new(),
    };
    let (bound, lambda_bound) = check_contraction(&f, &cert, &v)?;
    Ok(WsmHoldsCert { bound: format_exact(&bound), lambda_bound: format_exact(&lambda_bound), ..cert })
}

fn check_contraction(f: &Recurrence, cert: &WsmHoldsCert, v: &[Rational]) -> std::result::Result<(Rational, Rational), WsmFailure> {
    if !cert.x_l.le(&cert.x_r) {
        let i = (0..cert.x_l.dim()).find(|&i| cert.x_l.numerators()[i] > cert.x_r.numerators()[i]).unwrap_or(0);
        return Err(WsmFailure::OrderViolated { check: "x_L <= x_R".into(), coordinate: i });
    }
    if let Some(i) = first_violation(&f.compare_exact(&cert.x_l, &cert.x_r), |s| s != Ordering::Greater) {
        return Err(WsmFailure::OrderViolated { check: "F(x_L) <= x_R".into(), coordinate: i });
    }
    // F(x_R) >= x_L, i.e. not F(x_R) < x_L
    if let Some(i) = first_violation(&f.compare_exact(&cert.x_r, &cert.x_l), |s| s != Ordering::Less) {
        return Err(WsmFailure::OrderViolated { check: "x_L <= F(x_R)".into(), coordinate: i });
    }
    let majorant = jacobian_majorant(&BranchingMatrix::from_file(cert.matrix.clone())?).eval(&cert.x_r.to_rationals());
    let bound = perron_bound(&majorant, v)?;
    let lambda_bound = f.lambda().value() * &bound;
    if lambda_bound >= Rational::one() {
        return Err(WsmFailure::BoundTooLarge { lambda_bound: format_exact(&lambda_bound) });
    }
    Ok((bound, lambda_bound))
}

/// Re-checks a contraction certificate from its stored fields alone.
pub fn verify_wsm_holds(cert: &WsmHoldsCert) -> std::result::Result<(), WsmFailure> {
    if cert.kind != "wsm-holds" {
        return Err(WsmFailure::Invalid(format!("unexpected kind {:?}", cert.kind)));
    }
    let m = BranchingMatrix::from_file(cert.matrix.clone())?;
    let f = Recurrence::new(&m, cert.lambda.clone());
    if cert.x_l.dim() != f.dim() || cert.x_r.dim() != f.dim() || cert.x_l.scale() != cert.scale || cert.x_r.scale() != cert.scale {
        return Err(WsmFailure::Invalid("vector dimensions or scales do not match the matrix".into()));
    }
    let replay = f.iterate_alternating(&GridVector::zeros(f.dim(), cert.scale), cert.rounds, Rounding::Up);
    let differ = |a: &GridVector, b: &GridVector| (0..a.dim()).find(|&i| a.numerators()[i] != b.numerators()[i]);
    if let Some(i) = differ(&replay.value, &cert.x_l) {
        return Err(WsmFailure::OrderViolated { check: "x_L = (F_down F_up)^N(0)".into(), coordinate: i });
    }
    if let Some(i) = differ(&f.eval_up(&cert.x_l), &cert.x_r) {
        return Err(WsmFailure::OrderViolated { check: "x_R = F_up(x_L)".into(), coordinate: i });
    }
    let v = cert
        .test_vector
        .iter()
        .map(|s| parse_rational(s))
        .collect::<Result<Vec<_>>>()?;
    let (bound, lambda_bound) = check_contraction(&f, cert, &v)?;
    if format_exact(&bound) != cert.bound || format_exact(&lambda_bound) != cert.lambda_bound {
        return Err(WsmFailure::Invalid("stored bound differs from the recomputed value".into()));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub enum RefuteSeeds {
    /// Use these cuboids as they are.
    Cuboids(Cuboid, Cuboid),
    /// Inflate two points by the slack.
    Points(GridVector, GridVector),
    /// Seeds from a long alternating iteration, inflated adaptively.
    Auto,
}

#[derive(Clone, Debug)]
pub struct RefuteOptions {
    pub scale: u32,
    /// Grid units added on each side of a seed point.
    pub slack: u64,
    /// Alternating rounds used to find period-two seeds.
    pub seed_rounds: usize,
    /// Inflation attempts in auto mode.
    pub attempts: usize,
}

impl Default for RefuteOptions {
    fn default() -> Self {
        RefuteOptions { scale: DEFAULT_SCALE, slack: 20, seed_rounds: 10_000, attempts: 200 }
    }
}

/// Checks x_LL < F↓(x_RR) < F↑(x_RL) < x_LR and x_RL < F↓(x_LR) < F↑(x_LL) < x_RR,
/// plus disjointness. Returns the first violation.
fn check_chains(f: &Recurrence, c_l: &Cuboid, c_r: &Cuboid) -> std::result::Result<(), WsmFailure> {
    if !c_l.disjoint(c_r) {
        return Err(WsmFailure::NotDisjoint);
    }
    let chain = |name: &str, a: &GridVector, b: &GridVector| -> std::result::Result<(), WsmFailure> {
        match (0..a.dim()).find(|&i| a.numerators()[i] >= b.numerators()[i]) {
            Some(i) => Err(WsmFailure::ChainViolated { inequality: name.into(), coordinate: i }),
            None => Ok(()),
        }
    };
    let down_rr = f.eval_down(&c_r.hi);
    let up_rl = f.eval_up(&c_r.lo);
    chain("x_LL < F_down(x_RR)", &c_l.lo, &down_rr)?;
    chain("F_down(x_RR) < F_up(x_RL)", &down_rr, &up_rl)?;
    chain("F_up(x_RL) < x_LR", &up_rl, &c_l.hi)?;
    let down_lr = f.eval_down(&c_l.hi);
    let up_ll = f.eval_up(&c_l.lo);
    chain("x_RL < F_down(x_LR)", &c_r.lo, &down_lr)?;
    chain("F_down(x_LR) < F_up(x_LL)", &down_lr, &up_ll)?;
    chain("F_up(x_LL) < x_RR", &up_ll, &c_r.hi)?;
    Ok(())
}

fn inflate(p: &GridVector, slack: u64) -> Cuboid {
    Cuboid { lo: p.shifted(-(slack as i64)), hi: p.shifted(slack as i64) }
}

/// |DF(x)| in floating point: entry (i, j) is F_i (1 - F_i) n_ij / x_j.
fn jacobian_abs(f: &Recurrence, x: &[f64]) -> Vec<Vec<f64>> {
    let lambda = f.lambda().to_f64();
    f.children()
        .iter()
        .map(|kids| {
            let prod: f64 = kids.iter().map(|&j| x[j]).product();
            let fi = 1.0 / (1.0 + lambda * prod);
            let mut row = vec![0.0; x.len()];
            for &j in kids {
                row[j] += fi * (1.0 - fi) / x[j].max(1e-300);
            }
            row
        })
        .collect()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// Box shapes for a period-two pair (a, b): u is the Perron vector of
/// |DF(b)| |DF(a)|, and w = |DF(a)| u / sqrt(rho), so F maps each box
/// strictly inside the other to first order when rho < 1.
fn perron_shape(f: &Recurrence, a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (ja, jb) = (jacobian_abs(f, a), jacobian_abs(f, b));
    let n = a.len();
    let mut u = vec![1.0; n];
    let mut rho = 1.0;
    for _ in 0..500 {
        // the small shift keeps the iterate positive on reducible matrices
        let next: Vec<f64> = mat_vec(&jb, &mat_vec(&ja, &u)).iter().zip(&u).map(|(x, y)| x + 1e-9 * y).collect();
        let top = next.iter().cloned().fold(0.0, f64::max);
        if !(top > 0.0) {
            return (vec![1.0; n], vec![1.0; n]);
        }
        rho = top;
        u = next.iter().map(|x| x / top).collect();
    }
    let scale = rho.max(1e-12).sqrt();
    let w: Vec<f64> = mat_vec(&ja, &u).iter().map(|x| (x / scale).max(1e-6)).collect();
    (u.iter().map(|x| x.max(1e-6)).collect(), w)
}

/// The grid cuboid centred at p with half-widths t·shape grid units.
fn shaped(p: &GridVector, shape: &[f64], t: f64) -> Cuboid {
    let units: Vec<i64> = shape.iter().map(|s| (t * s).ceil().max(1.0) as i64).collect();
    let lo = GridVector::new(p.scale(), shift_each(p, &units, -1)).expect("clamped");
    let hi = GridVector::new(p.scale(), shift_each(p, &units, 1)).expect("clamped");
    Cuboid { lo, hi }
}

fn shift_each(p: &GridVector, units: &[i64], sign: i64) -> Vec<num_bigint::BigUint> {
    (0..p.dim())
        .map(|i| p.shifted(sign * units[i]).numerators()[i].clone())
        .collect()
}

/// Searches for two disjoint cuboids swapped by F. Success proves that F^2 has
/// two distinct fixed points, so weak spatial mixing fails.
pub fn wsm_refute(
    m: &BranchingMatrix,
    matrix_id: &str,
    lambda: &Activity,
    seeds: &RefuteSeeds,
    opts: &RefuteOptions,
) -> std::result::Result<WsmFailsCert, WsmFailure> {
    let f = Recurrence::new(m, lambda.clone());
    let make = |c_l: Cuboid, c_r: Cuboid| WsmFailsCert {
        kind: "wsm-fails".into(),
        matrix_id: matrix_id.into(),
        matrix: m.to_file(),
        lambda: lambda.clone(),
        scale: c_l.lo.scale(),
        c_l,
        c_r,
    };
    match seeds {
        RefuteSeeds::Cuboids(c_l, c_r) => {
            if c_l.lo.dim() != f.dim() || c_r.lo.dim() != f.dim() {
                return Err(WsmFailure::Invalid("cuboid dimension does not match the matrix".into()));
            }
            check_chains(&f, c_l, c_r)?;
            Ok(make(c_l.clone(), c_r.clone()))
        }
        RefuteSeeds::Points(a, b) => {
            let (c_l, c_r) = (inflate(a, opts.slack), inflate(b, opts.slack));
            check_chains(&f, &c_l, &c_r)?;
            Ok(make(c_l, c_r))
        }
        RefuteSeeds::Auto => {
            let zero = GridVector::zeros(f.dim(), opts.scale);
            let a = f.iterate_alternating(&zero, opts.seed_rounds, Rounding::Up).value;
            let b = f.eval_up(&a);
            let gap = (0..a.dim())
                .map(|i| {
                    let (x, y) = (&a.numerators()[i], &b.numerators()[i]);
                    if x > y { x - y } else { y - x }
                })
                .max()
                .unwrap_or_default();
            if gap <= num_bigint::BigUint::from(4 * opts.slack.max(1)) {
                return Err(WsmFailure::NoPeriodTwo);
            }
            let (u, w) = perron_shape(&f, &a.to_f64(), &b.to_f64());
            let mut last = WsmFailure::NoPeriodTwo;
            // half-widths t·u around the left seed and t·w around the right one
            let mut t = opts.slack.max(1) as f64;
            for _ in 0..opts.attempts.max(1) {
                let (c_l, c_r) = (shaped(&a, &u, t), shaped(&b, &w, t));
                match check_chains(&f, &c_l, &c_r) {
                    Ok(()) => return Ok(make(c_l, c_r)),
                    Err(WsmFailure::NotDisjoint) => return Err(last),
                    Err(e) => last = e,
                }
                t *= 1.1;
            }
            Err(last)
        }
    }
}

/// Re-checks a non-uniqueness certificate from its stored fields alone.
pub fn verify_wsm_fails(cert: &WsmFailsCert) -> std::result::Result<(), WsmFailure> {
    if cert.kind != "wsm-fails" {
        return Err(WsmFailure::Invalid(format!("unexpected kind {:?}", cert.kind)));
    }
    let m = BranchingMatrix::from_file(cert.matrix.clone())?;
    let f = Recurrence::new(&m, cert.lambda.clone());
    for v in [&cert.c_l.lo, &cert.c_l.hi, &cert.c_r.lo, &cert.c_r.hi] {
        if v.dim() != f.dim() || v.scale() != cert.scale {
            return Err(WsmFailure::Invalid("cuboid dimension or scale does not match".into()));
        }
    }
    if !cert.c_l.lo.le(&cert.c_l.hi) || !cert.c_r.lo.le(&cert.c_r.hi) {
        return Err(WsmFailure::Invalid("cuboid corners out of order".into()));
    }
    check_chains(&f, &cert.c_l, &cert.c_r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dg() -> BranchingMatrix {
        BranchingMatrix::from_rows([[1, 2, 0], [0, 1, 1], [1, 1, 0]])
    }

    #[test]
    fn tampered_vector_is_rejected() {
        let lambda = Activity::parse("3.3").unwrap();
        let mut cert = wsm_certify(&dg(), "dg", &lambda, &WsmCertifyOptions::default()).unwrap();
        assert!(verify_wsm_holds(&cert).is_ok());
        cert.x_r = cert.x_r.shifted(-1);
        assert!(verify_wsm_holds(&cert).is_err());
    }

    #[test]
    fn refutation_impossible_below_threshold() {
        let lambda = Activity::parse("3.3").unwrap();
        assert!(wsm_refute(&dg(), "dg", &lambda, &RefuteSeeds::Auto, &RefuteOptions::default()).is_err());
    }
}
