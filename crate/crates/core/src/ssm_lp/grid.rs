use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rational::{format_exact, int, parse_rational, to_f64, Rational};
use crate::recurrence::Activity;

/// Per-type breakpoints X_0 = 1/(1+λ) < X_1 < ... < X_d = 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntervalGrid {
    points: Vec<Vec<Rational>>,
}

impl IntervalGrid {
    pub fn new(lambda: &Activity, points: Vec<Vec<Rational>>) -> Result<Self> {
        let start = (int(1) + lambda.value()).recip();
        for (t, p) in points.iter().enumerate() {
            if p.len() < 2 {
                return Err(invalid(format!("type {t} needs at least one interval")));
            }
            if p[0] != start || p[p.len() - 1] != int(1) {
                return Err(invalid(format!("type {t} breakpoints must run from 1/(1+lambda) to 1")));
            }
            if p.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid(format!("type {t} breakpoints are not strictly increasing")));
            }
        }
        Ok(IntervalGrid { points })
    }

    pub fn types(&self) -> usize {
        self.points.len()
    }

    pub fn intervals(&self, t: usize) -> usize {
        self.points[t].len() - 1
    }

    pub fn total_intervals(&self) -> usize {
        (0..self.types()).map(|t| self.intervals(t)).sum()
    }

    pub fn points(&self, t: usize) -> &[Rational] {
        &self.points[t]
    }

    pub fn lo(&self, t: usize, k: usize) -> &Rational {
        &self.points[t][k]
    }

    pub fn hi(&self, t: usize, k: usize) -> &Rational {
        &self.points[t][k + 1]
    }

    pub fn width(&self, t: usize, k: usize) -> Rational {
        self.hi(t, k) - self.lo(t, k)
    }

    pub fn points_f64(&self, t: usize) -> Vec<f64> {
        self.points[t].iter().map(to_f64).collect()
    }

    /// Splits the listed intervals at their midpoints. Returns the new grid and,
    /// per type, the old interval each new interval came from.
    pub fn split(&self, splits: &[(usize, usize)]) -> (IntervalGrid, Vec<Vec<usize>>) {
        let mut marked: Vec<Vec<bool>> = (0..self.types()).map(|t| vec![false; self.intervals(t)]).collect();
        for &(t, k) in splits {
            marked[t][k] = true;
        }
        let mut points = Vec::with_capacity(self.types());
        let mut parent = Vec::with_capacity(self.types());
        for t in 0..self.types() {
            let mut p = vec![self.points[t][0].clone()];
            let mut par = Vec::new();
            for k in 0..self.intervals(t) {
                if marked[t][k] {
                    p.push((self.lo(t, k) + self.hi(t, k)) / int(2));
                    par.push(k);
                }
                p.push(self.hi(t, k).clone());
                par.push(k);
            }
            points.push(p);
            parent.push(par);
        }
        (IntervalGrid { points }, parent)
    }

    pub fn to_file(&self) -> Vec<Vec<String>> {
        self.points.iter().map(|p| p.iter().map(format_exact).collect()).collect()
    }

    pub fn from_file(lambda: &Activity, file: &[Vec<String>]) -> Result<Self> {
        let points = file
            .iter()
            .map(|p| p.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        IntervalGrid::new(lambda, points)
    }
}

/// Uniform grid X_k = 1/(1+λ) + kλ/(d(1+λ)), k = 0..d, for every type.
pub fn make_grid(lambda: &Activity, d: usize, types: usize) -> Result<IntervalGrid> {
    if d == 0 {
        return Err(invalid("need at least one interval"));
    }
    let l = lambda.value();
    let denom = int(1) + l;
    let pts: Vec<Rational> = (0..=d)
        .map(|k| denom.recip() + l * Rational::from_integer(k.into()) / (Rational::from_integer(d.into()) * &denom))
        .collect();
    debug_assert!(pts[d] == Rational::one());
    IntervalGrid::new(lambda, vec![pts; types])
}

/// Coefficients (a, b) of Ψ_t(x) = b - a x on each interval of each type.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PiecewisePotential {
    pub a: Vec<Vec<Rational>>,
    pub b: Vec<Vec<Rational>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PotentialFile {
    pub a: Vec<Vec<String>>,
    pub b: Vec<Vec<String>>,
}

impl PiecewisePotential {
    pub fn zeros(grid: &IntervalGrid) -> Self {
        let z: Vec<Vec<Rational>> = (0..grid.types()).map(|t| vec![int(0); grid.intervals(t)]).collect();
        PiecewisePotential { a: z.clone(), b: z }
    }

    pub fn matches(&self, grid: &IntervalGrid) -> bool {
        self.a.len() == grid.types()
            && self.b.len() == grid.types()
            && (0..grid.types()).all(|t| self.a[t].len() == grid.intervals(t) && self.b[t].len() == grid.intervals(t))
    }

    pub fn eval(&self, grid: &IntervalGrid, t: usize, x: &Rational) -> Option<Rational> {
        let p = grid.points(t);
        if x < &p[0] || x > &p[p.len() - 1] {
            return None;
        }
        let k = p.partition_point(|q| q <= x).saturating_sub(1).min(grid.intervals(t) - 1);
        Some(&self.b[t][k] - &self.a[t][k] * x)
    }

    pub fn eval_f64(&self, grid_f64: &[Vec<f64>], t: usize, x: f64) -> f64 {
        let p = &grid_f64[t];
        let k = p.partition_point(|&q| q <= x).saturating_sub(1).min(p.len() - 2);
        to_f64(&self.b[t][k]) - to_f64(&self.a[t][k]) * x
    }

    /// Copies each parent's coefficients onto its split children.
    pub fn inherit(&self, parent: &[Vec<usize>]) -> Self {
        PiecewisePotential {
            a: parent.iter().enumerate().map(|(t, par)| par.iter().map(|&k| self.a[t][k].clone()).collect()).collect(),
            b: parent.iter().enumerate().map(|(t, par)| par.iter().map(|&k| self.b[t][k].clone()).collect()).collect(),
        }
    }

    pub fn to_file(&self) -> PotentialFile {
        let f = |v: &Vec<Vec<Rational>>| v.iter().map(|r| r.iter().map(format_exact).collect()).collect();
        PotentialFile { a: f(&self.a), b: f(&self.b) }
    }

    pub fn from_file(file: &PotentialFile) -> Result<Self> {
        let f = |v: &Vec<Vec<String>>| {
            v.iter()
                .map(|r| r.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()
        };
        let p = PiecewisePotential { a: f(&file.a)?, b: f(&file.b)? };
        if p.a.iter().chain(&p.b).flatten().any(|x| x.is_negative()) {
            return Err(invalid("potential coefficients must be non-negative"));
        }
        Ok(p)
    }
}
