use std::time::{Duration, Instant};

use serde::Serialize;

use crate::branching::BranchingMatrix;
use crate::error::Result;
use crate::recurrence::Activity;

use super::generate::{
    rationalize, refine_intervals, solve_with_generation, GenerationOptions, GenerationOutcome, RefineOptions,
    RefinementStep,
};
use super::grid::make_grid;
use super::lp::LpBackend;
use super::verify::{verify_potential, SsmPotentialCert, SsmViolation};
use super::{LpSystem, DEFAULT_BATCH, DEFAULT_D0, DEFAULT_DIGITS, DEFAULT_MAX_D, DEFAULT_M_BIG};

/// Search parameters; all are reported in the certificate.
#[derive(Clone, Debug, Serialize)]
pub struct SsmOptions {
    pub d0: usize,
    pub max_d: usize,
    pub batch: usize,
    pub m_big: f64,
    /// Decimal digits kept when rationalizing; more are tried if rounding
    /// destroys the margin.
    pub digits: Vec<u32>,
    /// Intervals split per refinement round; 0 means a quarter of all intervals.
    pub top_n: usize,
    pub min_width: f64,
    pub eps: f64,
    pub max_refinements: usize,
    #[serde(skip)]
    pub budget: Option<Duration>,
}

impl Default for SsmOptions {
    fn default() -> Self {
        SsmOptions {
            d0: DEFAULT_D0,
            max_d: DEFAULT_MAX_D,
            batch: DEFAULT_BATCH,
            m_big: DEFAULT_M_BIG,
            digits: vec![DEFAULT_DIGITS, 12, 15],
            top_n: 0,
            min_width: 1e-7,
            eps: 1e-6,
            max_refinements: 1000,
            budget: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SsmStatus {
    Certified,
    /// The LP found no potential within the refinement limits. This says
    /// nothing about whether SSM holds.
    NotCertified,
    Timeout,
}

#[derive(Clone, Debug)]
pub struct SsmOutcome {
    pub status: SsmStatus,
    pub cert: Option<SsmPotentialCert>,
    pub trace: Vec<RefinementStep>,
    /// Why the last rationalized candidate was rejected, if one was.
    pub last_rejection: Option<SsmViolation>,
    pub seconds: f64,
}

/// Solve, rationalize, verify exactly, and refine the grid until a
/// certificate is found or the limits are reached.
pub fn ssm_certify(
    m: &BranchingMatrix,
    matrix_id: &str,
    lambda: &Activity,
    backend: &mut dyn LpBackend,
    opts: &SsmOptions,
) -> Result<SsmOutcome> {
    let start = Instant::now();
    let deadline = opts.budget.map(|b| start + b);
    let sys = LpSystem::new(m, lambda.clone());
    let mut grid = make_grid(lambda, opts.d0, sys.types())?;
    let gen_opts = GenerationOptions { batch: opts.batch, m_big: opts.m_big, eps: opts.eps, deadline, ..Default::default() };
    let mut trace = Vec::new();
    let mut last_rejection = None;
    let finish = |status, cert, trace, last_rejection| {
        Ok(SsmOutcome { status, cert, trace, last_rejection, seconds: start.elapsed().as_secs_f64() })
    };
    for round in 0..=opts.max_refinements {
        let report = solve_with_generation(&sys, &grid, backend, &gen_opts)?;
        log::info!(
            "lambda {}: round {round}, intervals {}, v = {:.3e}, rows {}, {:?}",
            lambda,
            grid.total_intervals(),
            report.v,
            report.rows,
            report.outcome
        );
        if report.outcome == GenerationOutcome::Candidate {
            for &digits in &opts.digits {
                let p = rationalize(&report.a, &report.b, digits);
                match verify_potential(m, matrix_id, lambda, &grid, &p) {
                    Ok(mut cert) => {
                        cert.search = serde_json::to_value(opts).unwrap_or_default();
                        if let serde_json::Value::Object(o) = &mut cert.search {
                            o.insert("digits_used".into(), digits.into());
                            o.insert("refinement_rounds".into(), round.into());
                        }
                        trace.push(step(round, &report, &grid, Vec::new(), start));
                        return finish(SsmStatus::Certified, Some(cert), trace, None);
                    }
                    Err(e) => {
                        log::info!("rationalized candidate with {digits} digits rejected: {e}");
                        last_rejection = Some(e);
                    }
                }
            }
        }
        if report.outcome == GenerationOutcome::Stopped || deadline.is_some_and(|d| Instant::now() >= d) {
            trace.push(step(round, &report, &grid, Vec::new(), start));
            return finish(SsmStatus::Timeout, None, trace, last_rejection);
        }
        let top_n = if opts.top_n > 0 { opts.top_n } else { (grid.total_intervals() / 4).max(4) };
        let refine = RefineOptions { top_n, min_width: opts.min_width, target: opts.eps, max_intervals: opts.max_d };
        let (next, _, splits) = refine_intervals(&sys, &grid, &report.a, &report.b, &refine);
        trace.push(step(round, &report, &grid, splits.clone(), start));
        if splits.is_empty() {
            return finish(SsmStatus::NotCertified, None, trace, last_rejection);
        }
        grid = next;
    }
    finish(SsmStatus::NotCertified, None, trace, last_rejection)
}

fn step(
    round: usize,
    r: &super::generate::GenerationReport,
    grid: &super::grid::IntervalGrid,
    splits: Vec<(usize, usize)>,
    start: Instant,
) -> RefinementStep {
    RefinementStep {
        round,
        v: r.v,
        rows: r.rows,
        generation_rounds: r.rounds,
        intervals: (0..grid.types()).map(|t| grid.intervals(t)).collect(),
        splits,
        seconds: start.elapsed().as_secs_f64(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub lambda: Activity,
    pub status: SsmStatus,
    pub margin: Option<String>,
    pub intervals: usize,
    pub rounds: usize,
    pub seconds: f64,
}

/// Runs the pipeline for each λ in ascending order, each under `opts.budget`.
/// Returns the table and the largest certified λ.
pub fn ssm_threshold_sweep(
    m: &BranchingMatrix,
    matrix_id: &str,
    lambdas: &[Activity],
    backend: &mut dyn LpBackend,
    opts: &SsmOptions,
) -> Result<(Vec<SweepRow>, Option<Activity>)> {
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(|a, b| a.value().cmp(b.value()));
    let mut rows = Vec::new();
    let mut best = None;
    for l in sorted {
        let out = ssm_certify(m, matrix_id, &l, backend, opts)?;
        if out.status == SsmStatus::Certified {
            best = Some(l.clone());
        }
        rows.push(SweepRow {
            lambda: l,
            status: out.status,
            margin: out.cert.as_ref().map(|c| c.margin.clone()),
            intervals: out.trace.last().map_or(0, |s| s.intervals.iter().sum()),
            rounds: out.trace.len(),
            seconds: out.seconds,
        });
    }
    Ok((rows, best))
}
