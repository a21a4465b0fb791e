#![allow(dead_code)]

use num_bigint::BigUint;
use proptest::prelude::*;
use ssm_core::branching::BranchingMatrix;
use ssm_core::rational::{rat, Rational};
use ssm_core::recurrence::{Activity, GridVector};

/// Small matrices with a cycle through every type, so nothing is transient.
pub fn cyclic_matrix(max_t: usize, max_deg: u32) -> impl Strategy<Value = BranchingMatrix> {
    (1..=max_t).prop_flat_map(move |t| {
        prop::collection::vec(prop::collection::vec(0..=max_deg, t), t).prop_map(move |mut rows| {
            for (i, row) in rows.iter_mut().enumerate() {
                let next = (i + 1) % t;
                if row[next] == 0 {
                    row[next] = 1;
                }
                while row.iter().sum::<u32>() > max_deg.max(1) {
                    let j = (0..t).filter(|&j| j != next || row[j] > 1).find(|&j| row[j] > 0).unwrap();
                    row[j] -= 1;
                }
            }
            BranchingMatrix::new(rows).unwrap()
        })
    })
}

/// λ = n/10 for n in lo..hi.
pub fn activity(lo: i64, hi: i64) -> impl Strategy<Value = Activity> {
    (lo..hi).prop_map(|n| Activity::new(rat(n, 10)).unwrap())
}

pub fn grid_vector(dim: usize, scale: u32) -> impl Strategy<Value = GridVector> {
    let one = 10u64.pow(scale);
    prop::collection::vec(0..=one, dim).prop_map(move |v| GridVector::new(scale, v.into_iter().map(BigUint::from).collect()).unwrap())
}

pub fn ratio(num: u64, den: u64) -> Rational {
    rat(num as i64, den as i64)
}
