mod common;

use common::cyclic_matrix;
use proptest::prelude::*;
use ssm_core::branching::{check_consistent, coarsest_partition, reduce, refine_to_consistent, same_tree_to_depth, BranchingMatrix, Partition};

fn with_labels(max_t: usize) -> impl Strategy<Value = (BranchingMatrix, Vec<usize>)> {
    cyclic_matrix(max_t, 3).prop_flat_map(|m| {
        let t = m.types();
        (Just(m), prop::collection::vec(0..3usize, t))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn reduce_succeeds_exactly_on_consistent_partitions((m, labels) in with_labels(6)) {
        let c = Partition::from_labels(&labels);
        let consistent = check_consistent(&m, &c).unwrap().is_none();
        match reduce(&m, &c) {
            Ok(r) => {
                prop_assert!(consistent);
                // re-expand reduced rows along the type map and compare block sums
                for i in 0..m.types() {
                    let bi = r.type_map[i];
                    for b in 0..r.partition.len() {
                        let sum: u32 = r.partition.blocks()[b].iter().map(|&j| m.entry(i, j)).sum();
                        prop_assert_eq!(sum, r.reduced.entry(bi, b));
                    }
                }
            }
            Err(_) => prop_assert!(!consistent),
        }
    }

    #[test]
    fn reduced_trees_match_to_depth_six((m, labels) in with_labels(6)) {
        let c = refine_to_consistent(&m, &Partition::from_labels(&labels));
        let r = reduce(&m, &c).unwrap();
        for i in 0..m.types() {
            prop_assert!(same_tree_to_depth(&m, i, &r.reduced, r.type_map[i], 6));
        }
    }

    #[test]
    fn discrete_reduction_is_identity((m, labels) in with_labels(6)) {
        let r = reduce(&m, &refine_to_consistent(&m, &Partition::from_labels(&labels))).unwrap();
        let again = reduce(&r.reduced, &Partition::discrete(r.reduced.types())).unwrap();
        prop_assert_eq!(again.reduced.rows(), r.reduced.rows());
    }

    #[test]
    fn composed_partitions_reduce_alike((m, labels) in with_labels(6)) {
        let c1 = refine_to_consistent(&m, &Partition::from_labels(&labels));
        let r1 = reduce(&m, &c1).unwrap();
        let c2 = coarsest_partition(&r1.reduced);
        prop_assert!(check_consistent(&r1.reduced, &c2).unwrap().is_none());
        let composed = c1.compose(&c2).unwrap();
        prop_assert!(check_consistent(&m, &composed).unwrap().is_none());
        let direct = reduce(&m, &composed).unwrap();
        let stepwise = reduce(&r1.reduced, &c2).unwrap();
        prop_assert_eq!(direct.reduced.rows(), stepwise.reduced.rows());
    }
}
