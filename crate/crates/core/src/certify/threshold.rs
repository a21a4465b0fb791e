use num_traits::Signed;
use rayon::prelude::*;
use serde::Serialize;

use super::wsm::{wsm_certify, wsm_refute, RefuteOptions, RefuteSeeds, WsmCertifyOptions};
use crate::branching::BranchingMatrix;
use crate::error::{invalid, Result};
use crate::rational::{format_exact, Rational};
use crate::recurrence::Activity;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ProbeOutcome {
    Holds,
    Fails,
    Undecided,
}

#[derive(Clone, Debug, Serialize)]
pub struct Probe {
    pub lambda: String,
    pub outcome: ProbeOutcome,
}

#[derive(Clone, Debug)]
pub struct ThresholdOptions {
    pub certify: WsmCertifyOptions,
    pub refute: RefuteOptions,
    /// Interior probes per bracketing step, evaluated in parallel.
    pub probes_per_step: usize,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        ThresholdOptions { certify: WsmCertifyOptions::default(), refute: RefuteOptions::default(), probes_per_step: 4 }
    }
}

/// Bracket [lo, hi] for the weak spatial mixing threshold. `lo_certified`
/// says a contraction certificate exists at lo; `hi_certified` says a swapped
/// cuboid pair exists at hi. An uncertified end is just the caller's endpoint.
#[derive(Clone, Debug, Serialize)]
pub struct ThresholdEstimate {
    #[serde(serialize_with = "ser_rational")]
    pub lo: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub hi: Rational,
    pub lo_certified: bool,
    pub hi_certified: bool,
    pub probes: Vec<Probe>,
}

fn ser_rational<S: serde::Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_exact(r))
}

impl ThresholdEstimate {
    pub fn width(&self) -> Rational {
        &self.hi - &self.lo
    }

    pub fn contains(&self, x: &Rational) -> bool {
        &self.lo <= x && x <= &self.hi
    }
}

fn probe(m: &BranchingMatrix, lambda: &Rational, opts: &ThresholdOptions) -> ProbeOutcome {
    let Ok(a) = Activity::new(lambda.clone()) else {
        return ProbeOutcome::Undecided;
    };
    if wsm_certify(m, "probe", &a, &opts.certify).is_ok() {
        return ProbeOutcome::Holds;
    }
    if wsm_refute(m, "probe", &a, &RefuteSeeds::Auto, &opts.refute).is_ok() {
        return ProbeOutcome::Fails;
    }
    ProbeOutcome::Undecided
}

/// Shrinks [lambda_lo, lambda_hi] by k-section until its width is at most
/// `tol`. Undecided probes cannot move an end, so the returned bracket may be
/// wider than `tol`; it is an estimate, not a certified threshold.
pub fn threshold_estimate(
    m: &BranchingMatrix,
    lambda_lo: &Rational,
    lambda_hi: &Rational,
    tol: &Rational,
    opts: &ThresholdOptions,
) -> Result<ThresholdEstimate> {
    if lambda_lo >= lambda_hi || !lambda_lo.is_positive() {
        return Err(invalid("need 0 < lambda_lo < lambda_hi"));
    }
    if !tol.is_positive() {
        return Err(invalid("tolerance must be positive"));
    }
    let mut probes = Vec::new();
    let ends: Vec<ProbeOutcome> = [lambda_lo, lambda_hi].par_iter().map(|l| probe(m, l, opts)).collect();
    probes.push(Probe { lambda: format_exact(lambda_lo), outcome: ends[0] });
    probes.push(Probe { lambda: format_exact(lambda_hi), outcome: ends[1] });
    let mut lo = lambda_lo.clone();
    let mut hi = lambda_hi.clone();
    let mut lo_certified = ends[0] == ProbeOutcome::Holds;
    let mut hi_certified = ends[1] == ProbeOutcome::Fails;
    let k = opts.probes_per_step.max(1) as i64;
    while &(&hi - &lo) > tol {
        let points: Vec<Rational> = (1..=k).map(|i| &lo + (&hi - &lo) * Rational::new(i.into(), (k + 1).into())).collect();
        let outcomes: Vec<ProbeOutcome> = points.par_iter().map(|l| probe(m, l, opts)).collect();
        let mut new_lo = lo.clone();
        let mut new_hi = hi.clone();
        for (p, o) in points.iter().zip(&outcomes) {
            probes.push(Probe { lambda: format_exact(p), outcome: *o });
            match o {
                ProbeOutcome::Holds if p > &new_lo => new_lo = p.clone(),
                _ => {}
            }
        }
        for (p, o) in points.iter().zip(&outcomes) {
            if *o == ProbeOutcome::Fails {
                if p <= &new_lo {
                    // a refutation below a contraction certificate would mean an unsound certificate
                    return Err(invalid(format!(
                        "holds at {} but fails at {}: certificates contradict",
                        format_exact(&new_lo),
                        format_exact(p)
                    )));
                }
                if p < &new_hi {
                    new_hi = p.clone();
                }
            }
        }
        if new_lo == lo && new_hi == hi {
            break;
        }
        if new_lo != lo {
            lo_certified = true;
        }
        if new_hi != hi {
            hi_certified = true;
        }
        lo = new_lo;
        hi = new_hi;
    }
    Ok(ThresholdEstimate { lo, hi, lo_certified, hi_certified, probes })
}
