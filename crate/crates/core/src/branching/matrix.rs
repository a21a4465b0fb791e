use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Square non-negative integer matrix: a vertex of type `i` has at most
/// `rows[i][j]` children of type `j`. Type 0 is the root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BranchingMatrix {
    rows: Vec<Vec<u32>>,
    labels: Vec<String>,
    transient: Vec<usize>,
}

impl BranchingMatrix {
    /// Builds a matrix and derives the transient set from the root (type 0).
    pub fn new(rows: Vec<Vec<u32>>) -> Result<Self> {
        let t = rows.len();
        if t == 0 {
            return Err(invalid("branching matrix needs at least one type"));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != t) {
            return Err(invalid(format!("row {bad} has {} entries, expected {t}", rows[bad].len())));
        }
        let mut m = BranchingMatrix { rows, labels: Vec::new(), transient: Vec::new() };
        m.transient = m.derive_transient();
        Ok(m)
    }

    pub fn from_rows<const T: usize>(rows: [[u32; T]; T]) -> Self {
        Self::new(rows.iter().map(|r| r.to_vec()).collect()).expect("square by construction")
    }

    pub fn with_labels<S: Into<String>>(mut self, labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() != self.types() {
            return Err(invalid(format!("{} labels for {} types", labels.len(), self.types())));
        }
        self.labels = labels;
        Ok(self)
    }

    /// Overrides the derived transient set.
    pub fn with_transient(mut self, mut transient: Vec<usize>) -> Result<Self> {
        transient.sort_unstable();
        transient.dedup();
        if transient.iter().any(|&i| i >= self.types()) {
            return Err(invalid("transient index out of range"));
        }
        self.transient = transient;
        Ok(self)
    }

    pub fn types(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.rows[i]
    }

    pub fn entry(&self, i: usize, j: usize) -> u32 {
        self.rows[i][j]
    }

    pub fn degree(&self, i: usize) -> u32 {
        self.rows[i].iter().sum()
    }

    pub fn max_degree(&self) -> u32 {
        (0..self.types()).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    pub fn labels(&self) -> Option<&[String]> {
        (!self.labels.is_empty()).then_some(self.labels.as_slice())
    }

    pub fn label(&self, i: usize) -> String {
        self.labels.get(i).cloned().unwrap_or_else(|| format!("{i}"))
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn transient(&self) -> &[usize] {
        &self.transient
    }

    pub fn is_transient(&self, i: usize) -> bool {
        self.transient.binary_search(&i).is_ok()
    }

    /// Child types of `i` as a sorted multiset.
    pub fn children(&self, i: usize) -> Vec<usize> {
        self.rows[i]
            .iter()
            .enumerate()
            .flat_map(|(j, &c)| std::iter::repeat(j).take(c as usize))
            .collect()
    }

    pub fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.types()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            for (j, &c) in self.rows[i].iter().enumerate() {
                if c > 0 && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen
    }

    /// Types that occur only finitely often along any branch: those not
    /// reachable from a type lying on a cycle.
    fn derive_transient(&self) -> Vec<usize> {
        let t = self.types();
        let mut recurrent_source = vec![false; t];
        for i in 0..t {
            let reach = self.reachable_from_children(i);
            if reach[i] {
                recurrent_source[i] = true;
            }
        }
        let mut recurrent = vec![false; t];
        for i in (0..t).filter(|&i| recurrent_source[i]) {
            for (j, r) in self.reachable_from(i).into_iter().enumerate() {
                recurrent[j] |= r;
            }
        }
        (0..t).filter(|&i| !recurrent[i]).collect()
    }

    fn reachable_from_children(&self, i: usize) -> Vec<bool> {
        let mut seen = vec![false; self.types()];
        let mut queue: VecDeque<usize> = self.rows[i]
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(j, _)| j)
            .collect();
        for &j in &queue {
            seen[j] = true;
        }
        while let Some(k) = queue.pop_front() {
            for (j, &c) in self.rows[k].iter().enumerate() {
                if c > 0 && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen
    }

    /// Checks the data-model invariants: every non-transient type is reachable
    /// from the root.
    pub fn validate(&self) -> Result<()> {
        let reach = self.reachable_from(0);
        if let Some(i) = (0..self.types()).find(|&i| !reach[i] && !self.is_transient(i)) {
            return Err(invalid(format!("type {} is not reachable from the root", self.label(i))));
        }
        Ok(())
    }

    /// The sub-matrix on non-transient types, plus the original index of each kept type.
    pub fn recurrent_part(&self) -> (BranchingMatrix, Vec<usize>) {
        let keep: Vec<usize> = (0..self.types()).filter(|&i| !self.is_transient(i)).collect();
        let rows = keep
            .iter()
            .map(|&i| keep.iter().map(|&j| self.rows[i][j]).collect())
            .collect();
        let mut m = BranchingMatrix { rows, labels: Vec::new(), transient: Vec::new() };
        if !self.labels.is_empty() {
            m.labels = keep.iter().map(|&i| self.labels[i].clone()).collect();
        }
        (m, keep)
    }

    /// Restricts to the types reachable from the root, renumbered in BFS order.
    pub fn reachable_part(&self) -> BranchingMatrix {
        let reach = self.reachable_from(0);
        let keep: Vec<usize> = (0..self.types()).filter(|&i| reach[i]).collect();
        let rows = keep
            .iter()
            .map(|&i| keep.iter().map(|&j| self.rows[i][j]).collect())
            .collect();
        let mut m = BranchingMatrix::new(rows).expect("square");
        if !self.labels.is_empty() {
            m.labels = keep.iter().map(|&i| self.labels[i].clone()).collect();
        }
        m
    }

    pub fn to_file(&self) -> MatrixFile {
        MatrixFile {
            scale: "counts".to_string(),
            t: self.types(),
            labels: self.labels.clone(),
            rows: self.rows.clone(),
            transient: self.transient.clone(),
        }
    }

    pub fn from_file(file: MatrixFile) -> Result<Self> {
        if file.scale != "counts" {
            return Err(Error::Artifact(format!("unsupported matrix scale {:?}", file.scale)));
        }
        if file.rows.len() != file.t {
            return Err(Error::Artifact(format!("t = {} but {} rows", file.t, file.rows.len())));
        }
        let mut m = BranchingMatrix::new(file.rows)?;
        if !file.labels.is_empty() {
            m = m.with_labels(file.labels)?;
        }
        m.with_transient(file.transient)
    }
}

impl fmt::Display for BranchingMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, row) in self.rows.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            writeln!(f, "{:>6} | {}", self.label(i), cells.join(" "))?;
        }
        Ok(())
    }
}

/// On-disk matrix representation. Field order is part of the format.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub scale: String,
    pub t: usize,
    #[serde(default)]
    pub labels: Vec<String>,
    pub rows: Vec<Vec<u32>>,
    #[serde(default)]
    pub transient: Vec<usize>,
}
