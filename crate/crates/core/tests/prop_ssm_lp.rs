mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use common::{activity, cyclic_matrix};
use num_traits::{One, Signed, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssm_core::branching::BranchingMatrix;
use ssm_core::rational::{int, parse_rational, rat, Rational};
use ssm_core::recurrence::Activity;
use ssm_core::ssm_lp::{
    enumerate_acceptable, enumerate_canonical, make_grid, ssm_certify, verify_potential, AcceptableTuple,
    HighsBackend, IntervalGrid, LpInstance, LpSystem, PiecewisePotential, RowTag, SsmOptions, SsmPotentialCert,
    SsmStatus, SsmViolation, DEFAULT_M_BIG,
};

/// All tuples by brute force: every child box, every parent interval meeting
/// the closed image [F(hi), F(lo)].
fn brute_force(sys: &LpSystem, grid: &IntervalGrid) -> BTreeSet<AcceptableTuple> {
    let l = sys.lambda.value();
    let mut out = BTreeSet::new();
    for (i, ch) in sys.children.iter().enumerate() {
        let n: usize = ch.iter().map(|&c| grid.intervals(c)).product();
        for mut code in 0..n {
            let mut ks = vec![0; ch.len()];
            for (j, &c) in ch.iter().enumerate().rev() {
                ks[j] = code % grid.intervals(c);
                code /= grid.intervals(c);
            }
            let plo: Rational = ch.iter().zip(&ks).map(|(&c, &k)| grid.lo(c, k).clone()).product();
            let phi: Rational = ch.iter().zip(&ks).map(|(&c, &k)| grid.hi(c, k).clone()).product();
            let img_lo = (int(1) + l * phi).recip();
            let img_hi = (int(1) + l * plo).recip();
            for k0 in 0..grid.intervals(i) {
                if grid.lo(i, k0) <= &img_hi && grid.hi(i, k0) >= &img_lo {
                    out.insert(AcceptableTuple { ty: i, k0, ks: ks.clone() });
                }
            }
        }
    }
    out
}

fn collect(sys: &LpSystem, grid: &IntervalGrid, canonical: bool) -> Vec<AcceptableTuple> {
    let mut v = Vec::new();
    if canonical {
        enumerate_canonical(sys, grid, |t| v.push(t.clone()));
    } else {
        enumerate_acceptable(sys, grid, |t| v.push(t.clone()));
    }
    v
}

/// Number of distinct tuples reached by permuting slots of equal child type.
fn orbit_size(children: &[usize], ks: &[usize]) -> u64 {
    let mut groups: BTreeMap<usize, BTreeMap<usize, u64>> = BTreeMap::new();
    for (&c, &k) in children.iter().zip(ks) {
        *groups.entry(c).or_default().entry(k).or_default() += 1;
    }
    let fact = |n: u64| (1..=n).product::<u64>();
    groups
        .values()
        .map(|m| fact(m.values().sum()) / m.values().map(|&x| fact(x)).product::<u64>())
        .product()
}

fn small_system() -> impl Strategy<Value = (BranchingMatrix, Activity, usize)> {
    (cyclic_matrix(3, 3), activity(5, 40), 2usize..6)
}

type CertCache = Mutex<HashMap<(Vec<Vec<u32>>, String), Option<SsmPotentialCert>>>;

/// Certified potentials for small matrices, memoized since the input space is small.
fn certified() -> impl Strategy<Value = SsmPotentialCert> {
    static CACHE: OnceLock<CertCache> = OnceLock::new();
    (cyclic_matrix(3, 2), activity(3, 15)).prop_filter_map("not certified in budget", |(m, l)| {
        let key = (m.rows().to_vec(), l.to_string());
        let cache = CACHE.get_or_init(Default::default);
        if let Some(hit) = cache.lock().unwrap().get(&key) {
            return hit.clone();
        }
        let opts = SsmOptions { d0: 4, max_refinements: 8, budget: Some(Duration::from_secs(20)), ..Default::default() };
        let out = ssm_certify(&m, "random", &l, &mut HighsBackend::default(), &opts).unwrap();
        let cert = (out.status == SsmStatus::Certified).then(|| out.cert.unwrap());
        cache.lock().unwrap().insert(key, cert.clone());
        cert
    })
}

fn restore(cert: &SsmPotentialCert) -> (BranchingMatrix, IntervalGrid, PiecewisePotential) {
    let m = BranchingMatrix::from_file(cert.matrix.clone()).unwrap();
    let grid = IntervalGrid::from_file(&cert.lambda, &cert.grid).unwrap();
    let p = PiecewisePotential::from_file(&cert.potential).unwrap();
    (m, grid, p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn enumeration_matches_brute_force((m, l, d) in small_system()) {
        let sys = LpSystem::new(&m, l.clone());
        let grid = make_grid(&l, d, sys.types()).unwrap();
        let fast = collect(&sys, &grid, false);
        let set: BTreeSet<_> = fast.iter().cloned().collect();
        prop_assert_eq!(set.len(), fast.len(), "duplicates in stream");
        prop_assert_eq!(set, brute_force(&sys, &grid));
    }

    #[test]
    fn canonical_orbits_cover_full_enumeration((m, l, d) in small_system()) {
        let sys = LpSystem::new(&m, l.clone());
        let grid = make_grid(&l, d, sys.types()).unwrap();
        let full: BTreeSet<_> = collect(&sys, &grid, false).into_iter().collect();
        let canon = collect(&sys, &grid, true);
        let mut covered = 0u64;
        for t in &canon {
            prop_assert!(full.contains(t));
            covered += orbit_size(&sys.children[t.ty], &t.ks);
        }
        prop_assert_eq!(covered, full.len() as u64);
    }

    #[test]
    fn rows_regenerate_from_tags((m, l, d) in small_system(), seed in any::<u64>()) {
        let sys = LpSystem::new(&m, l.clone());
        let grid = make_grid(&l, d, sys.types()).unwrap();
        let lp = LpInstance::new(&sys, &grid, DEFAULT_M_BIG);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f64> = (0..lp.num_cols()).map(|_| rng.gen_range(0.0..2.0)).collect();
        let xs: Vec<Vec<f64>> = (0..grid.types()).map(|t| grid.points_f64(t)).collect();
        let a = |t: usize, k: usize| vals[lp.a_col(t, k)];
        let b = |t: usize, k: usize| vals[lp.b_col(t, k)];
        for t in collect(&sys, &grid, false) {
            let tag = RowTag::Tuple(t.clone());
            prop_assert_eq!(RowTag::parse(&tag.name()), Some(tag.clone()));
            let row = lp.row_for(&tag);
            let lhs: f64 = row.coeffs.iter().map(|&(c, x)| x * vals[c]).sum();
            let s: f64 = sys.children[t.ty].iter().zip(&t.ks).map(|(&c, &k)| b(c, k) - a(c, k) * xs[c][k]).sum();
            let direct = (1.0 - xs[t.ty][t.k0]) * s - (b(t.ty, t.k0) - a(t.ty, t.k0) * xs[t.ty][t.k0 + 1]) - vals[lp.v_col()];
            prop_assert!((lhs - direct).abs() <= 1e-9 * (1.0 + direct.abs()), "{}: {} vs {}", tag.name(), lhs, direct);
        }
        for r in &lp.rows {
            prop_assert_eq!(RowTag::parse(&r.tag.name()), Some(r.tag.clone()));
            prop_assert_eq!(&lp.row_for(&r.tag), r);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, max_global_rejects: 10_000, ..ProptestConfig::default() })]

    #[test]
    fn splitting_keeps_certificates(cert in certified(), seed in any::<u64>()) {
        let (m, grid, p) = restore(&cert);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let splits: Vec<(usize, usize)> = (0..grid.types())
            .flat_map(|t| (0..grid.intervals(t)).map(move |k| (t, k)))
            .filter(|_| rng.gen_bool(0.5))
            .collect();
        let (fine, parent) = grid.split(&splits);
        let q = p.inherit(&parent);
        let out = verify_potential(&m, "split", &cert.lambda, &fine, &q);
        prop_assert!(out.is_ok(), "{:?}", out.err());
        let before = parse_rational(&cert.margin).unwrap();
        let after = parse_rational(&out.unwrap().margin).unwrap();
        prop_assert!(after >= before, "margin fell from {} to {}", before, after);
    }

    #[test]
    fn tightest_row_tamper_is_rejected(cert in certified()) {
        let (m, grid, mut p) = restore(&cert);
        let margin = parse_rational(&cert.margin).unwrap();
        let sys = LpSystem::new(&m, cert.lambda.clone());
        let bump = &margin + rat(1, 1000);
        match RowTag::parse(&cert.tightest).unwrap() {
            RowTag::Positivity { ty, k } => p.b[ty][k] -= bump,
            RowTag::Tuple(t) => {
                // slack = Ψ_i(Y) - (1 - X) Σ Ψ_c(X_c); move one b along its net coefficient
                let u = int(1) - grid.lo(t.ty, t.k0);
                let mut net: BTreeMap<(usize, usize), Rational> = BTreeMap::new();
                *net.entry((t.ty, t.k0)).or_insert_with(Rational::zero) += int(1);
                for (&c, &k) in sys.children[t.ty].iter().zip(&t.ks) {
                    *net.entry((c, k)).or_insert_with(Rational::zero) -= &u;
                }
                let ((ty, k), coef) = net.into_iter().find(|(_, c)| !c.is_zero()).unwrap();
                let step = &bump / coef.abs() + rat(1, 1000);
                if coef.is_positive() {
                    p.b[ty][k] -= step;
                } else {
                    p.b[ty][k] += step;
                }
            }
        }
        let out = verify_potential(&m, "tampered", &cert.lambda, &grid, &p);
        prop_assert!(
            matches!(out, Err(SsmViolation::Positivity { .. } | SsmViolation::Contraction { .. } | SsmViolation::Malformed(_))),
            "tamper on {} accepted", cert.tightest
        );
    }

    #[test]
    fn certified_potentials_contract_at_random_points(cert in certified(), seed in any::<u64>()) {
        let (m, grid, p) = restore(&cert);
        let sys = LpSystem::new(&m, cert.lambda.clone());
        let l = cert.lambda.value().clone();
        let lo = (int(1) + &l).recip();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || &lo + (int(1) - &lo) * rat(rng.gen_range(0..=1000), 1000);
        for _ in 0..10_000 / sys.types() {
            for (i, ch) in sys.children.iter().enumerate() {
                let alpha: Vec<Rational> = ch.iter().map(|_| draw()).collect();
                let prod: Rational = alpha.iter().cloned().fold(Rational::one(), |a, b| a * b);
                let ai = (int(1) + &l * prod).recip();
                let psi_i = p.eval(&grid, i, &ai).unwrap();
                let sum: Rational = ch.iter().zip(&alpha).map(|(&c, x)| p.eval(&grid, c, x).unwrap()).sum();
                prop_assert!((int(1) - &ai) * sum < psi_i, "type {} at {:?}", i, alpha);
            }
        }
    }
}
