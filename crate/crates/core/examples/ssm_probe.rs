use std::time::Duration;

use ssm_core::branching::{coarsest_partition, reduce, BranchingMatrix};
use ssm_core::lattice_walks::{build_cycle_free_matrix, NeighborOrdering};
use ssm_core::recurrence::Activity;
use ssm_core::ssm_lp::{open_backend, ssm_certify, SsmOptions};

fn main() {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let m = match args[1].as_str() {
        "t4" => BranchingMatrix::from_rows([[3]]),
        name if name.starts_with('m') => {
            let ell: usize = name[1..].parse().unwrap();
            let m = build_cycle_free_matrix(ell, true, &NeighborOrdering::default()).unwrap();
            reduce(&m, &coarsest_partition(&m)).unwrap().reduced
        }
        path => BranchingMatrix::from_file(serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()).unwrap(),
    };
    let l = Activity::parse(&args[2]).unwrap();
    let mut opts = SsmOptions::default();
    if let Some(b) = args.get(3) {
        opts.budget = Some(Duration::from_secs(b.parse().unwrap()));
    }
    if let Some(t) = args.get(4) {
        opts.top_n = t.parse().unwrap();
    }
    let mut backend = open_backend().unwrap();
    let out = ssm_certify(&m, "probe", &l, backend.as_mut(), &opts).unwrap();
    for s in &out.trace {
        println!("{} v={:.3e} rows={} gen={} total={} {:.1}s", s.round, s.v, s.rows, s.generation_rounds, s.intervals.iter().sum::<usize>(), s.seconds);
    }
    println!("{:?} {:.1}s margin {:?} rej {:?}", out.status, out.seconds, out.cert.as_ref().map(|c| &c.margin), out.last_rejection);
}
