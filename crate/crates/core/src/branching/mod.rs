//! Branching matrices, consistent partitions and the reductions they induce.

mod matrix;
mod tree_hash;

pub use matrix::{BranchingMatrix, MatrixFile};
pub use tree_hash::{same_tree_to_depth, TreeInterner};

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rational::{to_f64, Rational};

/// Disjoint non-empty blocks covering `0..t`. Blocks are kept sorted, and
/// ordered by their smallest member.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
}

impl Partition {
    pub fn new(t: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut blocks: Vec<Vec<usize>> = blocks
            .into_iter()
            .map(|mut b| {
                b.sort_unstable();
                b
            })
            .collect();
        if blocks.iter().any(|b| b.is_empty()) {
            return Err(invalid("partition has an empty block"));
        }
        blocks.sort_by_key(|b| b[0]);
        let mut block_of = vec![usize::MAX; t];
        for (k, b) in blocks.iter().enumerate() {
            for &i in b {
                if i >= t {
                    return Err(invalid(format!("type {i} out of range for {t} types")));
                }
                if block_of[i] != usize::MAX {
                    return Err(invalid(format!("type {i} appears in two blocks")));
                }
                block_of[i] = k;
            }
        }
        if let Some(missing) = block_of.iter().position(|&b| b == usize::MAX) {
            return Err(invalid(format!("type {missing} is not covered by the partition")));
        }
        Ok(Partition { blocks, block_of })
    }

    pub fn discrete(t: usize) -> Self {
        Partition { blocks: (0..t).map(|i| vec![i]).collect(), block_of: (0..t).collect() }
    }

    /// Partition from a block label per type; blocks are numbered by first occurrence.
    pub fn from_labels<K: Eq + std::hash::Hash + Clone>(labels: &[K]) -> Self {
        let mut ids: HashMap<K, usize> = HashMap::new();
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for (i, k) in labels.iter().enumerate() {
            let id = *ids.entry(k.clone()).or_insert_with(|| {
                blocks.push(Vec::new());
                blocks.len() - 1
            });
            blocks[id].push(i);
        }
        Partition::new(labels.len(), blocks).expect("labels cover every type once")
    }

    /// Partition of labeled types, given as blocks of labels.
    pub fn from_label_blocks(m: &BranchingMatrix, blocks: &[&[&str]]) -> Result<Self> {
        let blocks = blocks
            .iter()
            .map(|b| {
                b.iter()
                    .map(|l| m.index_of(l).ok_or_else(|| invalid(format!("unknown type label {l:?}"))))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Partition::new(m.types(), blocks)
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn types(&self) -> usize {
        self.block_of.len()
    }

    pub fn block_of(&self, i: usize) -> usize {
        self.block_of[i]
    }

    pub fn type_map(&self) -> &[usize] {
        &self.block_of
    }

    /// Partition of the original types obtained by grouping the blocks of `self`
    /// according to `outer`, a partition of the blocks.
    pub fn compose(&self, outer: &Partition) -> Result<Partition> {
        if outer.types() != self.len() {
            return Err(invalid("outer partition must partition the blocks"));
        }
        let labels: Vec<usize> = (0..self.types()).map(|i| outer.block_of(self.block_of(i))).collect();
        Ok(Partition::from_labels(&labels))
    }
}

impl Serialize for Partition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.blocks.serialize(s)
    }
}

/// Deserialized partitions are validated against the type count later, via
/// [`Partition::new`]; this raw form only checks the JSON shape.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartitionFile(pub Vec<Vec<usize>>);

impl PartitionFile {
    pub fn into_partition(self, t: usize) -> Result<Partition> {
        Partition::new(t, self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub block: usize,
    pub target: usize,
    pub first: usize,
    pub second: usize,
    pub first_sum: u64,
    pub second_sum: u64,
}

impl From<Violation> for Error {
    fn from(v: Violation) -> Self {
        Error::InconsistentPartition { block: v.block, target: v.target, first: v.first, second: v.second }
    }
}

fn block_sums(m: &BranchingMatrix, c: &Partition, s: usize) -> Vec<u64> {
    let mut sums = vec![0u64; c.len()];
    for (j, &cnt) in m.row(s).iter().enumerate() {
        sums[c.block_of(j)] += cnt as u64;
    }
    sums
}

/// Checks that every two types of a block have equal row sums over every block.
/// Returns the first violation in (block, type, target block) order.
pub fn check_consistent(m: &BranchingMatrix, c: &Partition) -> Result<Option<Violation>> {
    if c.types() != m.types() {
        return Err(invalid(format!("partition covers {} types, matrix has {}", c.types(), m.types())));
    }
    let found: Vec<Option<Violation>> = c
        .blocks()
        .par_iter()
        .enumerate()
        .map(|(k, block)| {
            let first = block[0];
            let reference = block_sums(m, c, first);
            for &s in &block[1..] {
                let sums = block_sums(m, c, s);
                if let Some(target) = (0..c.len()).find(|&b| sums[b] != reference[b]) {
                    return Some(Violation {
                        block: k,
                        target,
                        first,
                        second: s,
                        first_sum: reference[target],
                        second_sum: sums[target],
                    });
                }
            }
            None
        })
        .collect();
    Ok(found.into_iter().flatten().next())
}

#[derive(Clone, Debug)]
pub struct ReductionResult {
    pub reduced: BranchingMatrix,
    pub partition: Partition,
    pub type_map: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
pub struct ReductionFile {
    pub original: MatrixFile,
    pub reduced: MatrixFile,
    pub partition: Vec<Vec<usize>>,
    pub type_map: Vec<usize>,
}

impl ReductionResult {
    pub fn to_file(&self, original: &BranchingMatrix) -> ReductionFile {
        ReductionFile {
            original: original.to_file(),
            reduced: self.reduced.to_file(),
            partition: self.partition.blocks().to_vec(),
            type_map: self.type_map.clone(),
        }
    }
}

/// The k-by-k matrix of block sums, read off the first member of each block.
pub fn reduce(m: &BranchingMatrix, c: &Partition) -> Result<ReductionResult> {
    if let Some(v) = check_consistent(m, c)? {
        return Err(v.into());
    }
    let rows: Vec<Vec<u32>> = c
        .blocks()
        .iter()
        .map(|b| block_sums(m, c, b[0]).into_iter().map(|x| x as u32).collect())
        .collect();
    let mut reduced = BranchingMatrix::new(rows)?;
    if let Some(labels) = m.labels() {
        let names: Vec<String> = c
            .blocks()
            .iter()
            .map(|b| b.iter().map(|&i| labels[i].as_str()).collect::<Vec<_>>().join(","))
            .collect();
        reduced = reduced.with_labels(names)?;
    }
    Ok(ReductionResult { reduced, partition: c.clone(), type_map: c.type_map().to_vec() })
}

/// Splits every block of `start` by block-sum signatures until stable: the
/// coarsest consistent partition that refines `start`.
pub fn refine_to_consistent(m: &BranchingMatrix, start: &Partition) -> Partition {
    let mut current = start.clone();
    loop {
        let labels: Vec<(usize, Vec<u64>)> =
            (0..m.types()).map(|s| (current.block_of(s), block_sums(m, &current, s))).collect();
        let next = Partition::from_labels(&labels);
        if next.len() == current.len() {
            return next;
        }
        current = next;
    }
}

/// Coarsest consistent partition of all types.
pub fn coarsest_partition(m: &BranchingMatrix) -> Partition {
    refine_to_consistent(m, &Partition::from_labels(&vec![0u8; m.types()]))
}

/// Floating-point iteration of the recurrence over all types, from the all-ones vector.
pub fn fixed_point_values(m: &BranchingMatrix, lambda: f64, iterations: usize) -> Vec<f64> {
    let children: Vec<Vec<usize>> = (0..m.types()).map(|i| m.children(i)).collect();
    let mut x = vec![1.0f64; m.types()];
    for _ in 0..iterations {
        x = children
            .iter()
            .map(|kids| 1.0 / (1.0 + lambda * kids.iter().map(|&j| x[j]).product::<f64>()))
            .collect();
    }
    x
}

/// Groups types whose fixed-point values agree within `cluster_tol` (single
/// linkage on the sorted values), then refines to the coarsest consistent
/// partition below the proposal, so the result always passes `check_consistent`.
pub fn propose_partition(m: &BranchingMatrix, lambda: &Rational, iterations: usize, cluster_tol: &Rational) -> Result<Partition> {
    use num_traits::Signed;
    if !lambda.is_positive() {
        return Err(invalid("lambda must be positive"));
    }
    if iterations == 0 {
        return Err(invalid("need at least one iteration"));
    }
    let values = fixed_point_values(m, to_f64(lambda), iterations);
    let tol = to_f64(cluster_tol);
    let mut order: Vec<usize> = (0..m.types()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut cluster = vec![0usize; m.types()];
    let mut id = 0;
    for w in 0..order.len() {
        if w > 0 && values[order[w]] - values[order[w - 1]] > tol {
            id += 1;
        }
        cluster[order[w]] = id;
    }
    let proposal = Partition::from_labels(&cluster);
    if check_consistent(m, &proposal)?.is_none() {
        return Ok(proposal);
    }
    log::debug!("clustered partition of size {} is inconsistent; refining", proposal.len());
    Ok(refine_to_consistent(m, &proposal))
}

/// Summary of the block structure used in reports.
pub fn block_sizes(c: &Partition) -> BTreeMap<usize, usize> {
    let mut out = BTreeMap::new();
    for b in c.blocks() {
        *out.entry(b.len()).or_insert(0) += 1;
    }
    out
}
