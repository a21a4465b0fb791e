use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::time::Instant;

use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rational::{round_to_decimal, Rational};

use super::grid::{IntervalGrid, PiecewisePotential};
use super::lp::{LpBackend, LpInstance, LpStatus};
use super::{next_tuple, AcceptableTuple, LpSystem, DEFAULT_BATCH, DEFAULT_M_BIG};

/// Floating copy of the grid and of a candidate point, shared by the scans.
struct FloatView<'a> {
    sys: &'a LpSystem,
    lambda: f64,
    xs: Vec<Vec<f64>>,
    /// b - a X_k per (type, interval)
    child: Vec<Vec<f64>>,
    /// b - a Y_k
    parent: Vec<Vec<f64>>,
}

impl<'a> FloatView<'a> {
    fn new(sys: &'a LpSystem, grid: &IntervalGrid, a: &[Vec<f64>], b: &[Vec<f64>]) -> Self {
        let xs: Vec<Vec<f64>> = (0..grid.types()).map(|t| grid.points_f64(t)).collect();
        let child = (0..grid.types())
            .map(|t| (0..grid.intervals(t)).map(|k| b[t][k] - a[t][k] * xs[t][k]).collect())
            .collect();
        let parent = (0..grid.types())
            .map(|t| (0..grid.intervals(t)).map(|k| b[t][k] - a[t][k] * xs[t][k + 1]).collect())
            .collect();
        FloatView { sys, lambda: sys.lambda.to_f64(), xs, child, parent }
    }

    fn blocks(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, ch) in self.sys.children.iter().enumerate() {
            match ch.first() {
                None => out.push((i, 0)),
                Some(&c) => out.extend((0..self.xs[c].len() - 1).map(|k| (i, k))),
            }
        }
        out
    }

    /// Visits every canonical tuple of type i whose first child slot is k1,
    /// with the row value lhs - rhs (without v). The acceptable k_0 range is
    /// widened by a relative 1e-12 so rounding never drops a tuple.
    fn scan_block(&self, i: usize, k1: usize, mut visit: impl FnMut(&[usize], usize, f64)) {
        let ch = &self.sys.children[i];
        let n = ch.len();
        let sizes: Vec<usize> = ch.iter().map(|&c| self.xs[c].len() - 1).collect();
        let mut ks = vec![0usize; n];
        if n > 0 {
            ks[0] = k1;
            for l in 1..n {
                ks[l] = if ch[l] == ch[l - 1] { ks[l - 1] } else { 0 };
            }
        }
        let xi = &self.xs[i];
        let d = xi.len() - 1;
        loop {
            let (mut plo, mut phi, mut s) = (1.0f64, 1.0f64, 0.0f64);
            for (&c, &k) in ch.iter().zip(&ks) {
                plo *= self.xs[c][k];
                phi *= self.xs[c][k + 1];
                s += self.child[c][k];
            }
            let hi = (1.0 + 1e-12) / (1.0 + self.lambda * plo);
            let lo = (1.0 - 1e-12) / (1.0 + self.lambda * phi);
            let kmax = xi[..d].partition_point(|&x| x <= hi);
            let kmin = xi[1..].partition_point(|&y| y < lo);
            for k0 in kmin..kmax {
                visit(&ks, k0, (1.0 - xi[k0]) * s - self.parent[i][k0]);
            }
            if n == 0 || !next_tuple(&mut ks, ch, &sizes, true) || ks[0] != k1 {
                break;
            }
        }
    }
}

#[derive(Clone, Debug)]
struct Ranked {
    viol: f64,
    tuple: AcceptableTuple,
}

impl PartialEq for Ranked {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Ranked {
    /// Larger violation first, then smaller tag.
    fn cmp(&self, o: &Self) -> Ordering {
        o.viol.total_cmp(&self.viol).then_with(|| self.tuple.cmp(&o.tuple))
    }
}

/// The `limit` rows with largest lhs - rhs - v > tol, most violated first,
/// ties broken by tag order; skips tuples in `exclude`. Also returns the
/// largest row value seen.
pub fn scan_violations(
    sys: &LpSystem,
    grid: &IntervalGrid,
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    v: f64,
    tol: f64,
    limit: usize,
    exclude: &HashSet<AcceptableTuple>,
) -> (Vec<(f64, AcceptableTuple)>, f64) {
    let view = FloatView::new(sys, grid, a, b);
    let parts: Vec<(BinaryHeap<Ranked>, f64)> = view
        .blocks()
        .into_par_iter()
        .map(|(i, k1)| {
            // max-heap under Ranked's order keeps the weakest kept row on top
            let mut heap: BinaryHeap<Ranked> = BinaryHeap::new();
            let mut worst = f64::NEG_INFINITY;
            view.scan_block(i, k1, |ks, k0, val| {
                worst = worst.max(val);
                let viol = val - v;
                if viol <= tol || limit == 0 {
                    return;
                }
                if heap.len() == limit {
                    let top = heap.peek().expect("full heap");
                    if viol < top.viol {
                        return;
                    }
                }
                let tuple = AcceptableTuple { ty: i, k0, ks: ks.to_vec() };
                if exclude.contains(&tuple) {
                    return;
                }
                heap.push(Ranked { viol, tuple });
                if heap.len() > limit {
                    heap.pop();
                }
            });
            (heap, worst)
        })
        .collect();
    let worst = parts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let mut all: Vec<Ranked> = parts.into_iter().flat_map(|p| p.0.into_vec()).collect();
    all.sort();
    all.truncate(limit);
    (all.into_iter().map(|r| (r.viol, r.tuple)).collect(), worst)
}

#[derive(Clone, Debug)]
pub struct GenerationOptions {
    pub batch: usize,
    pub m_big: f64,
    /// A candidate needs v below -eps.
    pub eps: f64,
    /// Rows count as violated when they exceed v by more than this.
    pub tol: f64,
    pub max_rounds: usize,
    pub deadline: Option<Instant>,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        GenerationOptions {
            batch: DEFAULT_BATCH,
            m_big: DEFAULT_M_BIG,
            eps: 1e-6,
            tol: 1e-9,
            max_rounds: 10_000,
            deadline: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationOutcome {
    /// Every row holds at the point and v < -eps.
    Candidate,
    /// The restricted LP already has v >= -eps, so the full LP does too.
    NoCandidate,
    /// Deadline or round limit reached first.
    Stopped,
}

/// Result of constraint generation on one grid: the last LP point (the full
/// LP optimum when the outcome is a candidate).
#[derive(Clone, Debug)]
pub struct GenerationReport {
    pub outcome: GenerationOutcome,
    pub v: f64,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub rounds: usize,
    pub rows: usize,
}

/// Restricted LP → full scan at the optimum → add the `batch` most violated
/// rows → repeat. Solver failures dump the restricted instance as MPS.
pub fn solve_with_generation(
    sys: &LpSystem,
    grid: &IntervalGrid,
    backend: &mut dyn LpBackend,
    opts: &GenerationOptions,
) -> Result<GenerationReport> {
    let mut lp = LpInstance::new(sys, grid, opts.m_big);
    let mut in_lp: HashSet<AcceptableTuple> = HashSet::new();
    let mut rounds = 0;
    loop {
        rounds += 1;
        let sol = match backend.solve(&lp) {
            Ok(s) if s.status == LpStatus::Optimal => s,
            Ok(s) => {
                let path = lp.dump("ssm_lp_failed")?;
                return Err(Error::Solver(format!("{} returned {:?}; instance dumped to {}", backend.name(), s.status, path.display())));
            }
            Err(e) => {
                let path = lp.dump("ssm_lp_failed")?;
                return Err(Error::Solver(format!("{e}; instance dumped to {}", path.display())));
            }
        };
        let v = sol.values[lp.v_col()];
        let a: Vec<Vec<f64>> = (0..grid.types())
            .map(|t| (0..grid.intervals(t)).map(|k| sol.values[lp.a_col(t, k)].max(0.0)).collect())
            .collect();
        let b: Vec<Vec<f64>> = (0..grid.types())
            .map(|t| (0..grid.intervals(t)).map(|k| sol.values[lp.b_col(t, k)].max(0.0)).collect())
            .collect();
        let report = |outcome| GenerationReport { outcome, v, a: a.clone(), b: b.clone(), rounds, rows: lp.rows.len() };
        if v >= -opts.eps {
            return Ok(report(GenerationOutcome::NoCandidate));
        }
        let tol = opts.tol * (1.0 + v.abs());
        let (worst, _) = scan_violations(sys, grid, &a, &b, v, tol, opts.batch, &in_lp);
        log::debug!("generation round {rounds}: v = {v:.3e}, rows {}, adding {}", lp.rows.len(), worst.len());
        if worst.is_empty() {
            return Ok(report(GenerationOutcome::Candidate));
        }
        if rounds >= opts.max_rounds || opts.deadline.is_some_and(|d| Instant::now() >= d) {
            return Ok(report(GenerationOutcome::Stopped));
        }
        for (_, t) in worst {
            lp.push_tuple(&t);
            in_lp.insert(t);
        }
    }
}

#[derive(Clone, Debug)]
pub struct RefineOptions {
    pub top_n: usize,
    /// Intervals narrower than twice this are never split.
    pub min_width: f64,
    /// Rows within this of violation also contribute to prices.
    pub target: f64,
    pub max_intervals: usize,
}

/// One refinement round as recorded in the trace.
#[derive(Clone, Debug, Serialize)]
pub struct RefinementStep {
    pub round: usize,
    pub v: f64,
    pub rows: usize,
    pub generation_rounds: usize,
    pub intervals: Vec<usize>,
    pub splits: Vec<(usize, usize)>,
    pub seconds: f64,
}

/// Prices every interval by the summed violation of the rows touching it,
/// scaled by its width, and splits the top_n highest-priced intervals.
pub fn refine_intervals(
    sys: &LpSystem,
    grid: &IntervalGrid,
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    opts: &RefineOptions,
) -> (IntervalGrid, Vec<Vec<usize>>, Vec<(usize, usize)>) {
    let view = FloatView::new(sys, grid, a, b);
    let zero = || (0..grid.types()).map(|t| vec![0.0f64; grid.intervals(t)]).collect::<Vec<_>>();
    let parts: Vec<Vec<Vec<f64>>> = view
        .blocks()
        .into_par_iter()
        .map(|(i, k1)| {
            let mut price = zero();
            let ch = &sys.children[i];
            view.scan_block(i, k1, |ks, k0, val| {
                let w = val + opts.target;
                if w > 0.0 {
                    price[i][k0] += w;
                    for (&c, &k) in ch.iter().zip(ks) {
                        price[c][k] += w;
                    }
                }
            });
            price
        })
        .collect();
    let mut price = zero();
    for p in parts {
        for (t, row) in p.into_iter().enumerate() {
            for (k, x) in row.into_iter().enumerate() {
                price[t][k] += x;
            }
        }
    }
    let mut ranked: Vec<(f64, usize, usize)> = Vec::new();
    for t in 0..grid.types() {
        if grid.intervals(t) >= opts.max_intervals {
            continue;
        }
        let xs = &view.xs[t];
        for k in 0..grid.intervals(t) {
            let w = xs[k + 1] - xs[k];
            if price[t][k] > 0.0 && w >= 2.0 * opts.min_width {
                ranked.push((price[t][k] * w, t, k));
            }
        }
    }
    ranked.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let mut per_type = vec![0usize; grid.types()];
    let mut splits = Vec::new();
    for &(_, t, k) in &ranked {
        if splits.len() >= opts.top_n {
            break;
        }
        if grid.intervals(t) + per_type[t] < opts.max_intervals {
            per_type[t] += 1;
            splits.push((t, k));
        }
    }
    splits.sort();
    let (g, parent) = grid.split(&splits);
    (g, parent, splits)
}

/// Scales the point so its largest coefficient is 1 and rounds every
/// coefficient to `digits` decimals.
pub fn rationalize(a: &[Vec<f64>], b: &[Vec<f64>], digits: u32) -> PiecewisePotential {
    let top = a.iter().chain(b).flatten().fold(0.0f64, |m, &x| m.max(x));
    let scale = if top > 0.0 { top } else { 1.0 };
    let f = |v: &[Vec<f64>]| -> Vec<Vec<Rational>> {
        v.iter()
            .map(|r| {
                r.iter()
                    .map(|&x| {
                        let q = round_to_decimal(x / scale, digits);
                        if q < Rational::zero() {
                            Rational::zero()
                        } else {
                            q
                        }
                    })
                    .collect()
            })
            .collect()
    };
    PiecewisePotential { a: f(a), b: f(b) }
}
