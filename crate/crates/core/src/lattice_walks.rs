//! Self-avoiding walk machines on the square lattice: cycle-free branching
//! matrices, the named hand-built machines, and brute-force finite SAW trees
//! used as an oracle for containment checks.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::branching::BranchingMatrix;
use crate::error::{invalid, Error, Result};

pub const DEFAULT_CAP: usize = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    N,
    E,
    S,
    W,
}

pub type Site = (i32, i32);

impl Direction {
    /// Expansion order used everywhere a deterministic traversal is needed.
    pub const ALL: [Direction; 4] = [Direction::N, Direction::E, Direction::W, Direction::S];

    pub fn opposite(self) -> Direction {
        match self {
            Direction::N => Direction::S,
            Direction::S => Direction::N,
            Direction::E => Direction::W,
            Direction::W => Direction::E,
        }
    }

    pub fn delta(self) -> Site {
        match self {
            Direction::N => (0, 1),
            Direction::E => (1, 0),
            Direction::S => (0, -1),
            Direction::W => (-1, 0),
        }
    }

    pub fn step(self, (x, y): Site) -> Site {
        let (dx, dy) = self.delta();
        (x + dx, y + dy)
    }

    /// Quarter turn clockwise.
    pub fn rotate(self) -> Direction {
        match self {
            Direction::N => Direction::E,
            Direction::E => Direction::S,
            Direction::S => Direction::W,
            Direction::W => Direction::N,
        }
    }

    /// Mirror across the vertical axis.
    pub fn reflect(self) -> Direction {
        match self {
            Direction::E => Direction::W,
            Direction::W => Direction::E,
            d => d,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Direction::N => 'N',
            Direction::E => 'E',
            Direction::S => 'S',
            Direction::W => 'W',
        }
    }

    pub fn from_char(c: char) -> Option<Direction> {
        match c {
            'N' => Some(Direction::N),
            'E' => Some(Direction::E),
            'S' => Some(Direction::S),
            'W' => Some(Direction::W),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

pub fn parse_steps(text: &str) -> Result<Vec<Direction>> {
    text.chars()
        .map(|c| Direction::from_char(c).ok_or_else(|| invalid(format!("bad direction {c:?} in {text:?}"))))
        .collect()
}

pub fn steps_to_string(steps: &[Direction]) -> String {
    steps.iter().map(|d| d.as_char()).collect()
}

/// A total order on the four directions; position 0 is the smallest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Permutation([Direction; 4]);

impl Permutation {
    pub fn new(order: [Direction; 4]) -> Result<Self> {
        let distinct: HashSet<Direction> = order.iter().copied().collect();
        if distinct.len() != 4 {
            return Err(invalid("ordering must list each direction exactly once"));
        }
        Ok(Permutation(order))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let steps = parse_steps(text)?;
        let arr: [Direction; 4] = steps
            .try_into()
            .map_err(|_| invalid(format!("ordering {text:?} must have four letters")))?;
        Self::new(arr)
    }

    pub fn rank(&self, d: Direction) -> usize {
        self.0.iter().position(|&x| x == d).expect("permutation holds every direction")
    }

    pub fn directions(&self) -> [Direction; 4] {
        self.0
    }

    /// All 24 orderings in lexicographic order of `Direction::ALL` positions.
    pub fn all() -> Vec<Permutation> {
        let mut out = Vec::with_capacity(24);
        let d = Direction::ALL;
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    if a == b || b == c || a == c {
                        continue;
                    }
                    let e = 6 - a - b - c;
                    out.push(Permutation([d[a], d[b], d[c], d[e]]));
                }
            }
        }
        out
    }
}

impl Default for Permutation {
    /// North smallest, then East, West, South.
    fn default() -> Self {
        Permutation(Direction::ALL)
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", steps_to_string(&self.0))
    }
}

/// Per-vertex orderings of the incident edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NeighborOrdering {
    Homogeneous(Permutation),
    PerVertex { default: Permutation, sites: BTreeMap<Site, Permutation> },
}

impl NeighborOrdering {
    pub fn rank(&self, site: Site, d: Direction) -> usize {
        match self {
            NeighborOrdering::Homogeneous(p) => p.rank(d),
            NeighborOrdering::PerVertex { default, sites } => sites.get(&site).unwrap_or(default).rank(d),
        }
    }

    pub fn homogeneous(&self) -> Option<Permutation> {
        match self {
            NeighborOrdering::Homogeneous(p) => Some(*p),
            NeighborOrdering::PerVertex { .. } => None,
        }
    }

    /// Independent uniformly random ordering at every site of the box.
    pub fn random_in_box<R: rand::Rng>(radius: i32, rng: &mut R) -> Self {
        let all = Permutation::all();
        let mut sites = BTreeMap::new();
        for x in -radius..=radius {
            for y in -radius..=radius {
                sites.insert((x, y), all[rng.gen_range(0..all.len())]);
            }
        }
        NeighborOrdering::PerVertex { default: Permutation::default(), sites }
    }
}

impl Default for NeighborOrdering {
    fn default() -> Self {
        NeighborOrdering::Homogeneous(Permutation::default())
    }
}

/// A suffix of a walk, stored as its steps; the walk's current site is the end
/// of the last step and earlier sites are recovered relative to it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WalkState {
    steps: Vec<Direction>,
}

impl WalkState {
    pub fn origin() -> Self {
        WalkState { steps: Vec::new() }
    }

    pub fn from_steps(steps: Vec<Direction>) -> Self {
        WalkState { steps }
    }

    pub fn steps(&self) -> &[Direction] {
        &self.steps
    }

    pub fn is_origin(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn label(&self) -> String {
        if self.steps.is_empty() {
            "O".to_string()
        } else {
            steps_to_string(&self.steps)
        }
    }

    /// Sites of the stored history, starting at (0, 0).
    pub fn sites(&self) -> Vec<Site> {
        walk_sites(&self.steps)
    }
}

pub fn walk_sites(steps: &[Direction]) -> Vec<Site> {
    let mut p = Vec::with_capacity(steps.len() + 1);
    p.push((0, 0));
    for &d in steps {
        p.push(d.step(*p.last().unwrap()));
    }
    p
}

/// How states of the cycle-free machine are identified.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateKey {
    /// Shortest suffix whose sites can still close a cycle of length at most ell.
    RelevantSuffix,
    /// The last ell - 1 steps, with no pruning.
    FullWindow,
}

#[derive(Clone, Debug)]
pub struct CycleFreeOptions {
    pub ell: usize,
    pub trim_boundary: bool,
    pub ordering: NeighborOrdering,
    pub key: StateKey,
    /// Quotient by the lattice symmetries; defaults to on exactly when trimming is off,
    /// since a fixed ordering of the directions is not symmetry invariant.
    pub symmetry: Option<bool>,
    pub state_cap: usize,
}

impl CycleFreeOptions {
    pub fn new(ell: usize, trim_boundary: bool) -> Self {
        CycleFreeOptions {
            ell,
            trim_boundary,
            ordering: NeighborOrdering::default(),
            key: StateKey::RelevantSuffix,
            symmetry: None,
            state_cap: DEFAULT_CAP,
        }
    }
}

pub fn build_cycle_free_matrix(ell: usize, trim_boundary: bool, ordering: &NeighborOrdering) -> Result<BranchingMatrix> {
    let mut opts = CycleFreeOptions::new(ell, trim_boundary);
    opts.ordering = ordering.clone();
    build_cycle_free_matrix_with(&opts)
}

struct Expansion {
    children: Vec<Vec<Direction>>,
    dead: bool,
}

struct CycleFreeBuilder<'a> {
    opts: &'a CycleFreeOptions,
    order: Option<Permutation>,
    symmetry: bool,
    memo: HashMap<Vec<Direction>, Expansion>,
}

impl CycleFreeBuilder<'_> {
    fn shortest_path(&self, from: Site, to: Site, blocked: &HashSet<Site>, limit: usize) -> Option<usize> {
        if from == to {
            return Some(0);
        }
        let mut seen = HashSet::from([from]);
        let mut frontier = vec![from];
        for dist in 1..=limit {
            let mut next = Vec::new();
            for &p in &frontier {
                for d in Direction::ALL {
                    let q = d.step(p);
                    if q == to {
                        return Some(dist);
                    }
                    if !blocked.contains(&q) && seen.insert(q) {
                        next.push(q);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        None
    }

    fn canonical(&self, steps: &[Direction]) -> Vec<Direction> {
        let ell = self.opts.ell;
        let n = steps.len();
        let keep = match self.opts.key {
            StateKey::FullWindow => n.min(ell - 1),
            StateKey::RelevantSuffix => {
                let p = walk_sites(steps);
                let mut keep = 0;
                for j in 2..=n.min(ell) {
                    let blocked: HashSet<Site> = p[n - j + 1..n].iter().copied().collect();
                    if let Some(m) = self.shortest_path(p[n], p[n - j], &blocked, ell - j) {
                        if m >= 1 && j + m <= ell {
                            keep = j;
                        }
                    }
                }
                if n > 0 {
                    keep.max(1)
                } else {
                    0
                }
            }
        };
        let suffix = steps[n - keep..].to_vec();
        if self.symmetry {
            symmetric_minimum(&suffix)
        } else {
            suffix
        }
    }

    fn expand(&mut self, state: &[Direction]) -> &Expansion {
        if !self.memo.contains_key(state) {
            let e = self.compute(state);
            self.memo.insert(state.to_vec(), e);
        }
        &self.memo[state]
    }

    fn compute(&self, state: &[Direction]) -> Expansion {
        let pos = walk_sites(state);
        let n = state.len();
        let mut children = Vec::new();
        let mut dead = false;
        for d in Direction::ALL {
            if n > 0 && d == state[n - 1].opposite() {
                continue;
            }
            let q = d.step(pos[n]);
            let closed = (4..=self.opts.ell)
                .step_by(2)
                .take_while(|&c| c <= n + 1)
                .map(|c| n + 1 - c)
                .find(|&idx| pos[idx] == q);
            match closed {
                Some(idx) => {
                    if let Some(order) = self.order {
                        if order.rank(state[idx]) < order.rank(d.opposite()) {
                            dead = true;
                        }
                    }
                }
                None => {
                    let mut next = state.to_vec();
                    next.push(d);
                    children.push(self.canonical(&next));
                }
            }
        }
        Expansion { children, dead }
    }
}

fn symmetric_minimum(steps: &[Direction]) -> Vec<Direction> {
    let mut best: Option<Vec<Direction>> = None;
    let mut cur = steps.to_vec();
    for _ in 0..4 {
        for reflect in [false, true] {
            let t: Vec<Direction> = if reflect { cur.iter().map(|d| d.reflect()).collect() } else { cur.clone() };
            let better = match &best {
                None => true,
                Some(b) => steps_to_string(&t) < steps_to_string(b),
            };
            if better {
                best = Some(t);
            }
        }
        cur = cur.iter().map(|d| d.rotate()).collect();
    }
    best.unwrap_or_default()
}

/// Builds M'_ell (no trimming) or M_ell (trimming parents of occupied leaves).
/// Types are numbered in breadth-first discovery order from the origin, which is type 0.
pub fn build_cycle_free_matrix_with(opts: &CycleFreeOptions) -> Result<BranchingMatrix> {
    if opts.ell < 4 || opts.ell % 2 != 0 {
        return Err(invalid(format!("cycle cutoff must be an even integer >= 4, got {}", opts.ell)));
    }
    if opts.ell > 10 {
        return Err(invalid(format!("cycle cutoff {} is beyond the supported range 4..=10", opts.ell)));
    }
    let order = if opts.trim_boundary {
        Some(
            opts.ordering
                .homogeneous()
                .ok_or_else(|| invalid("boundary trimming needs a homogeneous ordering"))?,
        )
    } else {
        None
    };
    let mut b = CycleFreeBuilder {
        opts,
        order,
        symmetry: opts.symmetry.unwrap_or(!opts.trim_boundary),
        memo: HashMap::new(),
    };

    let origin: Vec<Direction> = Vec::new();
    let mut index: HashMap<Vec<Direction>, usize> = HashMap::from([(origin.clone(), 0)]);
    let mut states = vec![origin.clone()];
    let mut child_lists: Vec<Vec<usize>> = Vec::new();
    let mut queue = VecDeque::from([origin]);
    while let Some(s) = queue.pop_front() {
        let children = if s.is_empty() {
            // the origin keeps no history, so its children are the one-step walks
            Direction::ALL.iter().map(|&d| b.canonical(&[d])).collect()
        } else {
            b.expand(&s).children.clone()
        };
        let mut row = Vec::new();
        for c in children {
            if b.expand(&c).dead {
                continue;
            }
            let id = match index.get(&c) {
                Some(&id) => id,
                None => {
                    if states.len() >= opts.state_cap {
                        return Err(Error::ResourceLimit { what: "cycle-free machine states".into(), cap: opts.state_cap });
                    }
                    index.insert(c.clone(), states.len());
                    states.push(c.clone());
                    queue.push_back(c);
                    states.len() - 1
                }
            };
            row.push(id);
        }
        child_lists.push(row);
    }
    let t = states.len();
    let rows = child_lists
        .iter()
        .map(|kids| {
            let mut r = vec![0u32; t];
            for &k in kids {
                r[k] += 1;
            }
            r
        })
        .collect();
    let labels = states.iter().map(|s| WalkState::from_steps(s.clone()).label());
    BranchingMatrix::new(rows)?.with_labels(labels)
}

/// The hand-built machines: never-go-South, its two-letter refinement, and the
/// 17-state machine that allows the NNEESEEN / NNWWSWWN detours.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NamedMachine {
    DH,
    DG,
    DPrime,
}

impl NamedMachine {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "D_H" | "DH" | "dh" => Ok(NamedMachine::DH),
            "D_G" | "DG" | "dg" => Ok(NamedMachine::DG),
            "D_prime" | "D'" | "Dprime" | "dprime" => Ok(NamedMachine::DPrime),
            other => Err(invalid(format!("unknown machine {other:?} (expected D_H, D_G or D_prime)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NamedMachine::DH => "D_H",
            NamedMachine::DG => "D_G",
            NamedMachine::DPrime => "D_prime",
        }
    }

    fn rules(self) -> &'static [(&'static str, &'static [&'static str])] {
        match self {
            NamedMachine::DH => &[
                ("O", &["N", "E", "W"]),
                ("N", &["N", "E", "W"]),
                ("E", &["N", "E"]),
                ("W", &["N", "W"]),
            ],
            NamedMachine::DG => &[
                ("O", &["N", "E", "W"]),
                ("N", &["NN", "NE", "NW"]),
                ("W", &["WN", "WW"]),
                ("E", &["EN", "EE"]),
                ("NN", &["NN", "NE", "NW"]),
                ("NW", &["WN", "WW"]),
                ("NE", &["EN", "EE"]),
                ("WW", &["WN", "WW"]),
                ("EE", &["EN", "EE"]),
                ("WN", &["NW", "NN"]),
                ("EN", &["NE", "NN"]),
            ],
            NamedMachine::DPrime => &[
                ("O", &["N", "E", "W"]),
                ("N", &["E", "W", "NN"]),
                ("E", &["N", "E"]),
                ("W", &["N", "W"]),
                ("NN", &["NN", "NNE", "NNW"]),
                ("NNE", &["N", "NEE"]),
                ("NEE", &["N", "E", "EES"]),
                ("EES", &["ESE"]),
                ("ESE", &["SEE"]),
                ("SEE", &["EEN"]),
                ("EEN", &["N", "E"]),
                ("NNW", &["N", "NWW"]),
                ("NWW", &["N", "W", "WWS"]),
                ("WWS", &["WSW"]),
                ("WSW", &["SWW"]),
                ("SWW", &["WWN"]),
                ("WWN", &["N", "W"]),
            ],
        }
    }
}

pub fn build_named_machine(machine: NamedMachine) -> BranchingMatrix {
    let rules = machine.rules();
    let labels: Vec<&str> = rules.iter().map(|(l, _)| *l).collect();
    let t = labels.len();
    let rows = rules
        .iter()
        .map(|(_, kids)| {
            let mut r = vec![0u32; t];
            for k in *kids {
                r[labels.iter().position(|l| l == k).expect("rule targets are states")] += 1;
            }
            r
        })
        .collect();
    BranchingMatrix::new(rows)
        .and_then(|m| m.with_labels(labels))
        .expect("rule tables are well formed")
}

/// Finite tree of self-avoiding walks in the box [-r, r]^2, truncated at a depth.
/// Node 0 is the root; each node stores the step that reaches it.
#[derive(Clone, Debug)]
pub struct SawTree {
    pub nodes: Vec<SawNode>,
}

#[derive(Clone, Debug)]
pub struct SawNode {
    pub parent: Option<usize>,
    pub step: Option<Direction>,
    pub depth: usize,
    pub children: Vec<usize>,
}

impl SawTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn walk(&self, mut node: usize) -> Vec<Direction> {
        let mut steps = Vec::new();
        while let Some(d) = self.nodes[node].step {
            steps.push(d);
            node = self.nodes[node].parent.expect("non-root has a parent");
        }
        steps.reverse();
        steps
    }

    pub fn walks(&self) -> HashSet<Vec<Direction>> {
        (0..self.nodes.len()).map(|i| self.walk(i)).collect()
    }
}

/// Enumerates the SAW tree with cycle-closing leaves resolved by `ordering`.
/// A closing leaf is occupied when the edge leaving the revisited site along the
/// walk is smaller than the closing edge; occupied leaves delete their parent,
/// unoccupied leaves are dropped. Leaves one level below `depth` are still
/// resolved so that every returned node is a node of the full tree.
pub fn enumerate_saw_tree(radius: i32, depth: usize, ordering: &NeighborOrdering, node_cap: usize) -> Result<SawTree> {
    if radius < 0 {
        return Err(invalid("box radius must be non-negative"));
    }
    if depth > 2 * radius as usize {
        return Err(invalid(format!("depth {depth} exceeds twice the box radius {radius}")));
    }
    let inside = |(x, y): Site| x.abs() <= radius && y.abs() <= radius;
    let mut tree = SawTree { nodes: vec![SawNode { parent: None, step: None, depth: 0, children: Vec::new() }] };

    // returns whether the walk survives (no occupied closing leaf)
    fn survives(sites: &[Site], steps: &[Direction], ordering: &NeighborOrdering, inside: &dyn Fn(Site) -> bool) -> bool {
        let cur = *sites.last().unwrap();
        let back = steps.last().map(|d| d.opposite());
        for d in Direction::ALL {
            if Some(d) == back {
                continue;
            }
            let q = d.step(cur);
            if !inside(q) {
                continue;
            }
            if let Some(i) = sites.iter().position(|&s| s == q) {
                if ordering.rank(q, steps[i]) < ordering.rank(q, d.opposite()) {
                    return false;
                }
            }
        }
        true
    }

    let mut stack: Vec<(usize, Vec<Site>, Vec<Direction>)> = vec![(0, vec![(0, 0)], Vec::new())];
    if !survives(&[(0, 0)], &[], ordering, &inside) {
        return Ok(SawTree { nodes: Vec::new() });
    }
    while let Some((id, sites, steps)) = stack.pop() {
        if steps.len() == depth {
            continue;
        }
        let cur = *sites.last().unwrap();
        let back = steps.last().map(|d| d.opposite());
        for d in Direction::ALL {
            if Some(d) == back {
                continue;
            }
            let q = d.step(cur);
            if !inside(q) || sites.contains(&q) {
                continue;
            }
            let mut s2 = sites.clone();
            s2.push(q);
            let mut w2 = steps.clone();
            w2.push(d);
            if !survives(&s2, &w2, ordering, &inside) {
                continue;
            }
            if tree.nodes.len() >= node_cap {
                return Err(Error::ResourceLimit { what: "SAW tree nodes".into(), cap: node_cap });
            }
            let child = tree.nodes.len();
            tree.nodes.push(SawNode { parent: Some(id), step: Some(d), depth: w2.len(), children: Vec::new() });
            tree.nodes[id].children.push(child);
            stack.push((child, s2, w2));
        }
    }
    Ok(tree)
}

/// All walks of the tree generated by a labeled machine, to `depth` steps. The
/// step into a type is the last letter of its label; the root carries no step.
pub fn machine_walks(m: &BranchingMatrix, depth: usize, cap: usize) -> Result<Vec<Vec<Direction>>> {
    let labels = m.labels().ok_or_else(|| invalid("machine walks need walk labels"))?;
    let steps: Vec<Option<Direction>> = labels.iter().map(|l| l.chars().last().and_then(Direction::from_char)).collect();
    if steps.iter().skip(1).any(Option::is_none) {
        return Err(invalid("every non-root label must end in a direction"));
    }
    let mut out = vec![Vec::new()];
    let mut frontier: Vec<(usize, Vec<Direction>)> = vec![(0, Vec::new())];
    for _ in 0..depth {
        let mut next = Vec::new();
        for (ty, walk) in &frontier {
            for c in m.children(*ty) {
                let mut w = walk.clone();
                w.push(steps[c].expect("checked above"));
                if out.len() >= cap {
                    return Err(Error::ResourceLimit { what: "machine walks".into(), cap });
                }
                out.push(w.clone());
                next.push((c, w));
            }
        }
        frontier = next;
    }
    Ok(out)
}

/// Machine walks of length at most `depth` that stay inside the box and are
/// missing from the SAW tree.
pub fn missing_from_saw_tree(m: &BranchingMatrix, tree: &SawTree, radius: i32, depth: usize) -> Result<Vec<Vec<Direction>>> {
    let present = tree.walks();
    let walks = machine_walks(m, depth, DEFAULT_CAP)?;
    Ok(walks
        .into_iter()
        .filter(|w| walk_sites(w).iter().all(|&(x, y)| x.abs() <= radius && y.abs() <= radius))
        .filter(|w| !present.contains(w))
        .collect())
}
