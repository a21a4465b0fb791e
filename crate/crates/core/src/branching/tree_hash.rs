use std::collections::HashMap;

use super::BranchingMatrix;

/// Interns unlabeled rooted trees: a tree is identified by the sorted multiset
/// of its subtrees' ids, so equal ids mean isomorphic trees.
#[derive(Default, Debug)]
pub struct TreeInterner {
    ids: HashMap<Vec<u32>, u32>,
}

impl TreeInterner {
    pub fn new() -> Self {
        Self::default()
    }

    fn intern(&mut self, mut children: Vec<u32>) -> u32 {
        children.sort_unstable();
        let next = self.ids.len() as u32;
        *self.ids.entry(children).or_insert(next)
    }

    /// Ids of the depth-`depth` truncations of the trees generated from every type.
    pub fn truncations(&mut self, m: &BranchingMatrix, depth: usize) -> Vec<u32> {
        let children: Vec<Vec<usize>> = (0..m.types()).map(|i| m.children(i)).collect();
        let leaf = self.intern(Vec::new());
        let mut ids = vec![leaf; m.types()];
        for _ in 0..depth {
            ids = children
                .iter()
                .map(|kids| kids.iter().map(|&j| ids[j]).collect::<Vec<_>>())
                .map(|kid_ids| self.intern(kid_ids))
                .collect();
        }
        ids
    }
}

/// Whether the trees generated from type `ra` of `a` and type `rb` of `b`
/// coincide up to depth `depth` as unlabeled rooted trees.
pub fn same_tree_to_depth(a: &BranchingMatrix, ra: usize, b: &BranchingMatrix, rb: usize, depth: usize) -> bool {
    let mut interner = TreeInterner::new();
    let ia = interner.truncations(a, depth);
    let ib = interner.truncations(b, depth);
    ia[ra] == ib[rb]
}
