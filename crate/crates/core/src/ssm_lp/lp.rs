use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

use super::grid::IntervalGrid;
use super::{AcceptableTuple, LpSystem, DEFAULT_M_BIG};

/// Environment variable naming an external LP solver command.
pub const SOLVER_ENV: &str = "SSMCERT_LP_SOLVER";

static EPOCH: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RowTag {
    /// Contraction row of an acceptable tuple.
    Tuple(AcceptableTuple),
    /// b_{t,k} - a_{t,k} Y_k > 0.
    Positivity { ty: usize, k: usize },
}

impl RowTag {
    pub fn name(&self) -> String {
        match self {
            RowTag::Tuple(t) => t.to_string(),
            RowTag::Positivity { ty, k } => format!("P{ty}_{k}"),
        }
    }

    /// Inverse of [`RowTag::name`].
    pub fn parse(name: &str) -> Option<RowTag> {
        let (head, rest) = name.split_at(1.min(name.len()));
        let nums: Vec<usize> = rest.split('_').map(|s| s.parse().ok()).collect::<Option<_>>()?;
        match head {
            "P" if nums.len() == 2 => Some(RowTag::Positivity { ty: nums[0], k: nums[1] }),
            "T" if nums.len() >= 2 => Some(RowTag::Tuple(AcceptableTuple { ty: nums[0], k0: nums[1], ks: nums[2..].to_vec() })),
            _ => None,
        }
    }
}

/// One constraint Σ coeff·var <= upper.
#[derive(Clone, Debug, PartialEq)]
pub struct LpRow {
    pub tag: RowTag,
    pub coeffs: Vec<(usize, f64)>,
    pub upper: f64,
}

/// Variables a_{t,k}, b_{t,k} (interleaved per type) and the violation v;
/// objective min v. Box bounds 0 <= a, b <= M_big are column bounds.
#[derive(Clone, Debug)]
pub struct LpInstance {
    /// Changes whenever the column layout changes; backends rebuild on a new epoch.
    pub epoch: u64,
    pub offsets: Vec<usize>,
    pub m_big: f64,
    pub v_lower: f64,
    pub v_upper: f64,
    pub rows: Vec<LpRow>,
    xs: Vec<Vec<f64>>,
    children: Vec<Vec<usize>>,
}

impl LpInstance {
    /// Columns and positivity rows only.
    pub fn new(sys: &LpSystem, grid: &IntervalGrid, m_big: f64) -> Self {
        let mut offsets = vec![0];
        for t in 0..grid.types() {
            offsets.push(offsets[t] + 2 * grid.intervals(t));
        }
        let mut lp = LpInstance {
            epoch: EPOCH.fetch_add(1, Ordering::Relaxed),
            offsets,
            m_big,
            v_lower: -1.0,
            v_upper: f64::INFINITY,
            rows: Vec::new(),
            xs: (0..grid.types()).map(|t| grid.points_f64(t)).collect(),
            children: sys.children.clone(),
        };
        for t in 0..grid.types() {
            for k in 0..grid.intervals(t) {
                let row = lp.row_for(&RowTag::Positivity { ty: t, k });
                lp.rows.push(row);
            }
        }
        lp
    }

    pub fn num_cols(&self) -> usize {
        self.offsets[self.offsets.len() - 1] + 1
    }

    pub fn a_col(&self, t: usize, k: usize) -> usize {
        self.offsets[t] + 2 * k
    }

    pub fn b_col(&self, t: usize, k: usize) -> usize {
        self.offsets[t] + 2 * k + 1
    }

    pub fn v_col(&self) -> usize {
        self.num_cols() - 1
    }

    pub fn col_name(&self, c: usize) -> String {
        if c == self.v_col() {
            return "V".into();
        }
        let t = self.offsets.partition_point(|&o| o <= c) - 1;
        let k = (c - self.offsets[t]) / 2;
        format!("{}{t}_{k}", if (c - self.offsets[t]) % 2 == 0 { "A" } else { "B" })
    }

    /// Regenerates a row from its tag. Contraction rows read
    /// (1 - X_{k0}) Σ_j (b_j - a_j X_{k_j}) - (b_{i,k0} - a_{i,k0} Y_{k0}) - v <= 0;
    /// positivity rows read a Y_k - b <= -1.
    pub fn row_for(&self, tag: &RowTag) -> LpRow {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        let upper = match tag {
            RowTag::Positivity { ty, k } => {
                *acc.entry(self.a_col(*ty, *k)).or_default() += self.xs[*ty][k + 1];
                *acc.entry(self.b_col(*ty, *k)).or_default() -= 1.0;
                -1.0
            }
            RowTag::Tuple(t) => {
                let u = 1.0 - self.xs[t.ty][t.k0];
                for (&c, &k) in self.children[t.ty].iter().zip(&t.ks) {
                    *acc.entry(self.b_col(c, k)).or_default() += u;
                    *acc.entry(self.a_col(c, k)).or_default() -= u * self.xs[c][k];
                }
                *acc.entry(self.b_col(t.ty, t.k0)).or_default() -= 1.0;
                *acc.entry(self.a_col(t.ty, t.k0)).or_default() += self.xs[t.ty][t.k0 + 1];
                acc.insert(self.v_col(), -1.0);
                0.0
            }
        };
        LpRow { tag: tag.clone(), coeffs: acc.into_iter().filter(|&(_, x)| x != 0.0).collect(), upper }
    }

    pub fn push_tuple(&mut self, t: &AcceptableTuple) {
        let row = self.row_for(&RowTag::Tuple(t.clone()));
        self.rows.push(row);
    }

    /// Free-format MPS with named rows and columns.
    pub fn to_mps(&self) -> String {
        let n = self.num_cols();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, x) in &row.coeffs {
                cols[c].push((r, x));
            }
        }
        let names: Vec<String> = self.rows.iter().map(|r| r.tag.name()).collect();
        let mut s = String::from("NAME ssm_lp\nROWS\n N OBJ\n");
        for name in &names {
            let _ = writeln!(s, " L {name}");
        }
        s.push_str("COLUMNS\n");
        for (c, entries) in cols.iter().enumerate() {
            let cname = self.col_name(c);
            if c == self.v_col() {
                let _ = writeln!(s, " {cname} OBJ 1");
            }
            for &(r, x) in entries {
                let _ = writeln!(s, " {cname} {} {x:e}", names[r]);
            }
        }
        s.push_str("RHS\n");
        for (r, row) in self.rows.iter().enumerate() {
            if row.upper != 0.0 {
                let _ = writeln!(s, " RHS {} {:e}", names[r], row.upper);
            }
        }
        s.push_str("BOUNDS\n");
        for c in 0..n - 1 {
            let _ = writeln!(s, " UP BND {} {:e}", self.col_name(c), self.m_big);
        }
        let _ = writeln!(s, " LO BND V {:e}", self.v_lower);
        if self.v_upper.is_finite() {
            let _ = writeln!(s, " UP BND V {:e}", self.v_upper);
        }
        s.push_str("ENDATA\n");
        s
    }

    /// Writes the instance next to the system temp dir for post-mortem.
    pub fn dump(&self, stem: &str) -> Result<PathBuf> {
        let path = std::env::temp_dir().join(format!("{stem}_{}_{}.mps", std::process::id(), self.epoch));
        std::fs::write(&path, self.to_mps())?;
        Ok(path)
    }
}

/// Rows for the given tuples plus all positivity rows.
pub fn emit_constraints<'a>(
    sys: &LpSystem,
    grid: &IntervalGrid,
    tuples: impl IntoIterator<Item = &'a AcceptableTuple>,
) -> LpInstance {
    let mut lp = LpInstance::new(sys, grid, DEFAULT_M_BIG);
    for t in tuples {
        lp.push_tuple(t);
    }
    lp
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Other(String),
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub values: Vec<f64>,
}

/// An LP solver. Backends may keep state between calls on the same epoch and
/// only load rows appended since the previous call.
pub trait LpBackend: Send {
    fn name(&self) -> String;
    fn solve(&mut self, lp: &LpInstance) -> Result<LpSolution>;
}

/// The external solver named by [`SOLVER_ENV`] if set, otherwise HiGHS.
pub fn open_backend() -> Result<Box<dyn LpBackend>> {
    if let Ok(cmd) = std::env::var(SOLVER_ENV) {
        if !cmd.trim().is_empty() {
            return Ok(Box::new(ExternalBackend::new(cmd)));
        }
    }
    #[cfg(feature = "highs")]
    {
        Ok(Box::new(HighsBackend::default()))
    }
    #[cfg(not(feature = "highs"))]
    {
        Err(Error::Solver(format!("no LP solver: set {SOLVER_ENV} or build with the highs feature")))
    }
}

/// Runs `<command> <instance.mps> <solution.txt>`. The solution file holds a
/// status word (optimal, infeasible, ...) on its first line and then one
/// `column-name value` pair per line; missing columns read as zero.
pub struct ExternalBackend {
    command: String,
    calls: u64,
}

impl ExternalBackend {
    pub fn new(command: impl Into<String>) -> Self {
        ExternalBackend { command: command.into(), calls: 0 }
    }
}

impl LpBackend for ExternalBackend {
    fn name(&self) -> String {
        format!("external:{}", self.command)
    }

    fn solve(&mut self, lp: &LpInstance) -> Result<LpSolution> {
        self.calls += 1;
        let stem = format!("ssm_lp_ext_{}_{}", std::process::id(), self.calls);
        let dir = std::env::temp_dir();
        let mps = dir.join(format!("{stem}.mps"));
        let sol = dir.join(format!("{stem}.sol"));
        std::fs::write(&mps, lp.to_mps())?;
        let status = Command::new(&self.command).arg(&mps).arg(&sol).status()?;
        if !status.success() {
            return Err(Error::Solver(format!("{} exited with {status}; instance kept at {}", self.command, mps.display())));
        }
        let parsed = parse_solution(lp, &sol);
        let _ = std::fs::remove_file(&mps);
        let _ = std::fs::remove_file(&sol);
        parsed
    }
}

fn parse_solution(lp: &LpInstance, path: &Path) -> Result<LpSolution> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let status = match lines.next().map(|l| l.trim().to_ascii_lowercase()) {
        Some(s) if s == "optimal" => LpStatus::Optimal,
        Some(s) if s == "infeasible" => LpStatus::Infeasible,
        Some(s) => LpStatus::Other(s),
        None => return Err(Error::Solver("empty solution file".into())),
    };
    let index: BTreeMap<String, usize> = (0..lp.num_cols()).map(|c| (lp.col_name(c), c)).collect();
    let mut values = vec![0.0; lp.num_cols()];
    for line in lines {
        let mut it = line.split_whitespace();
        let (Some(name), Some(val)) = (it.next(), it.next()) else { continue };
        if let (Some(&c), Ok(x)) = (index.get(name), val.parse::<f64>()) {
            values[c] = x;
        }
    }
    let objective = values[lp.v_col()];
    Ok(LpSolution { status, objective, values })
}

#[cfg(feature = "highs")]
pub use highs_backend::HighsBackend;

#[cfg(feature = "highs")]
mod highs_backend {
    use highs::{Col, HighsModelStatus, Model, RowProblem, Sense};

    use super::*;

    /// In-process HiGHS with warm starts across row additions.
    #[derive(Default)]
    pub struct HighsBackend {
        model: Option<Model>,
        cols: Vec<Col>,
        epoch: u64,
        loaded: usize,
        v_upper: f64,
    }

    // The HiGHS handle is owned exclusively and never shared between threads.
    unsafe impl Send for HighsBackend {}

    impl HighsBackend {
        fn load(&mut self, lp: &LpInstance) {
            let mut pb = RowProblem::default();
            let n = lp.num_cols();
            self.cols = (0..n)
                .map(|c| {
                    if c == lp.v_col() {
                        pb.add_column(1.0, lp.v_lower..=lp.v_upper)
                    } else {
                        pb.add_column(0.0, 0.0..=lp.m_big)
                    }
                })
                .collect();
            for row in &lp.rows {
                pb.add_row(..=row.upper, row.coeffs.iter().map(|&(c, x)| (self.cols[c], x)));
            }
            let mut model = pb.optimise(Sense::Minimise);
            model.make_quiet();
            model.set_option("presolve", "off");
            self.model = Some(model);
            self.epoch = lp.epoch;
            self.loaded = lp.rows.len();
            self.v_upper = lp.v_upper;
        }
    }

    impl LpBackend for HighsBackend {
        fn name(&self) -> String {
            "highs".into()
        }

        fn solve(&mut self, lp: &LpInstance) -> Result<LpSolution> {
            if self.model.is_none() || self.epoch != lp.epoch || self.loaded > lp.rows.len() || self.v_upper != lp.v_upper {
                self.load(lp);
            }
            let mut model = self.model.take().expect("model loaded");
            for row in &lp.rows[self.loaded..] {
                model.add_row(..=row.upper, row.coeffs.iter().map(|&(c, x)| (self.cols[c], x)));
            }
            self.loaded = lp.rows.len();
            let solved = model
                .try_solve()
                .map_err(|e| Error::Solver(format!("HiGHS returned {e:?}")))?;
            let status = match solved.status() {
                HighsModelStatus::Optimal => LpStatus::Optimal,
                HighsModelStatus::Infeasible => LpStatus::Infeasible,
                s => LpStatus::Other(format!("{s:?}")),
            };
            let values = solved.get_solution().columns().to_vec();
            let objective = solved.objective_value();
            self.model = Some(Model::from(solved));
            Ok(LpSolution { status, objective, values })
        }
    }
}
