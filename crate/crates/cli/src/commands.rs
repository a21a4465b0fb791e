use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use ssm_core::branching::{coarsest_partition, propose_partition, reduce, BranchingMatrix, MatrixFile, PartitionFile};
use ssm_core::certify::{
    verify_wsm_fails, verify_wsm_holds, wsm_certify, wsm_refute, RefuteOptions, RefuteSeeds, WsmCertifyOptions,
    WsmFailsCert, WsmHoldsCert,
};
use ssm_core::lattice_walks::{
    build_cycle_free_matrix, build_named_machine, enumerate_saw_tree, missing_from_saw_tree, steps_to_string,
    NamedMachine, NeighborOrdering, Permutation, DEFAULT_CAP,
};
use ssm_core::rational::{parse_rational, Rational};
use ssm_core::recurrence::{Activity, Cuboid};
use ssm_core::ssm_lp::{
    open_backend, ssm_certify, ssm_threshold_sweep, verify_ssm_cert, SsmOptions, SsmPotentialCert, SsmStatus,
};

use crate::artifact::{write_atomic, Artifact, MatrixSource, RunConfig};
use crate::exit::{CliError, CliResult, Code};
use crate::{Cli, Cmd, LpArgs, SweepMode};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn run(cli: &Cli) -> CliResult<()> {
    let g = &cli.global;
    let mut cfg = RunConfig { scale: g.scale, budget_seconds: g.budget, jobs: rayon::current_num_threads(), version: VERSION.into(), ..Default::default() };
    match &cli.command {
        Cmd::Build { machine, cycle_free, trim, ordering, keep_transient, reduce: red, output } => {
            cfg.command = "build".into();
            cfg.outputs = vec![output.display().to_string()];
            let m = match (machine, cycle_free) {
                (Some(name), _) => {
                    cfg.matrix = MatrixSource::Named(name.clone());
                    let m = build_named_machine(NamedMachine::parse(name)?);
                    // the origin never recurs and is dropped unless asked for
                    if *keep_transient {
                        m
                    } else {
                        m.recurrent_part().0
                    }
                }
                (None, Some(ell)) => {
                    cfg.matrix = MatrixSource::CycleFree { ell: *ell, trim: *trim, ordering: ordering.clone() };
                    let order = NeighborOrdering::Homogeneous(Permutation::parse(ordering)?);
                    build_cycle_free_matrix(*ell, *trim, &order)?
                }
                (None, None) => return Err(CliError::usage("need --machine or --cycle-free")),
            };
            let payload = match red.as_deref() {
                None | Some("none") => json!({ "matrix": m.to_file() }),
                Some("auto") => {
                    let r = reduce(&m, &coarsest_partition(&m))?;
                    json!({ "matrix": r.reduced.to_file(), "reduction": r.to_file(&m) })
                }
                Some(other) => return Err(CliError::usage(format!("--reduce takes auto or none, got {other:?}"))),
            };
            let types = payload["matrix"]["t"].as_u64().unwrap_or(0);
            Artifact::new(&cfg, &payload)?.write(output)?;
            println!("wrote {types}-type matrix to {}", output.display());
            Ok(())
        }
        Cmd::Reduce { matrix, partition, propose, output } => {
            cfg.command = "reduce".into();
            cfg.outputs = vec![output.display().to_string()];
            let (m, _) = load_matrix(&matrix.matrix, &mut cfg)?;
            let c = match (partition, propose) {
                (Some(p), _) => {
                    let text = std::fs::read_to_string(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
                    let file: PartitionFile = serde_json::from_str(&text).map_err(|e| CliError::usage(e.to_string()))?;
                    file.into_partition(m.types())?
                }
                (None, Some(l)) => {
                    cfg.lambda = Some(l.clone());
                    let lam = parse_lambda(l)?;
                    propose_partition(&m, lam.value(), 1000, &Rational::new(1.into(), 1_000_000_000.into()))?
                }
                (None, None) => coarsest_partition(&m),
            };
            let r = reduce(&m, &c)?;
            Artifact::new(&cfg, &json!({ "matrix": r.reduced.to_file(), "reduction": r.to_file(&m) }))?.write(output)?;
            println!("reduced {} types to {}; wrote {}", m.types(), r.reduced.types(), output.display());
            Ok(())
        }
        Cmd::Certify { matrix, lambda, rounds, test_vector, output } => {
            cfg.command = "certify".into();
            cfg.rounds = Some(*rounds);
            cfg.lambda = Some(lambda.clone());
            cfg.outputs = vec![output.display().to_string()];
            let (m, id) = load_matrix(&matrix.matrix, &mut cfg)?;
            let l = parse_lambda(lambda)?;
            let v = test_vector.as_deref().map(parse_list).transpose()?;
            let opts = WsmCertifyOptions { rounds: *rounds, scale: g.scale, test_vector: v, ..Default::default() };
            let holds = wsm_certify(&m, &id, &l, &opts);
            let (verdict, payload) = match holds {
                Ok(cert) => {
                    println!("WSM-CERTIFIED lambda={lambda} lambda_bound={}", short(&cert.lambda_bound));
                    ("WSM-CERTIFIED", json!({ "verdict": "WSM-CERTIFIED", "certificate": cert }))
                }
                Err(why_not) => {
                    let ropts = RefuteOptions { scale: g.scale, ..Default::default() };
                    match wsm_refute(&m, &id, &l, &RefuteSeeds::Auto, &ropts) {
                        Ok(cert) => {
                            println!("WSM-REFUTED lambda={lambda}");
                            ("WSM-REFUTED", json!({ "verdict": "WSM-REFUTED", "certificate": cert }))
                        }
                        Err(no_refute) => {
                            println!("UNDECIDED lambda={lambda}: certify: {why_not}; refute: {no_refute}");
                            let reasons = json!({ "certify": why_not.to_string(), "refute": no_refute.to_string() });
                            ("UNDECIDED", json!({ "verdict": "UNDECIDED", "reasons": reasons }))
                        }
                    }
                }
            };
            Artifact::new(&cfg, &payload)?.write(output)?;
            undecided_exit(g.strict, verdict == "UNDECIDED")
        }
        Cmd::Refute { matrix, lambda, cuboids, slack, output } => {
            cfg.command = "refute".into();
            cfg.lambda = Some(lambda.clone());
            cfg.outputs = vec![output.display().to_string()];
            let (m, id) = load_matrix(&matrix.matrix, &mut cfg)?;
            let l = parse_lambda(lambda)?;
            let seeds = match cuboids {
                Some(p) => {
                    let v = read_json(p)?;
                    let get = |k: &str| -> CliResult<Cuboid> {
                        serde_json::from_value(v[k].clone()).map_err(|e| CliError::usage(format!("{k}: {e}")))
                    };
                    RefuteSeeds::Cuboids(get("c_l")?, get("c_r")?)
                }
                None => RefuteSeeds::Auto,
            };
            let opts = RefuteOptions { scale: g.scale, slack: *slack, ..Default::default() };
            let (undecided, payload) = match wsm_refute(&m, &id, &l, &seeds, &opts) {
                Ok(cert) => {
                    println!("WSM-REFUTED lambda={lambda}");
                    (false, json!({ "verdict": "WSM-REFUTED", "certificate": cert }))
                }
                Err(e) => {
                    println!("UNDECIDED lambda={lambda}: {e}");
                    (true, json!({ "verdict": "UNDECIDED", "reasons": { "refute": e.to_string() } }))
                }
            };
            Artifact::new(&cfg, &payload)?.write(output)?;
            undecided_exit(g.strict, undecided)
        }
        Cmd::Ssm { matrix, lambda, lp, trace, output } => {
            cfg.command = "ssm".into();
            cfg.lambda = Some(lambda.clone());
            cfg.d = Some(lp.d0);
            cfg.outputs = std::iter::once(output).chain(trace).map(|p| p.display().to_string()).collect();
            let (m, id) = load_matrix(&matrix.matrix, &mut cfg)?;
            let l = parse_lambda(lambda)?;
            let opts = ssm_options(lp, g.budget)?;
            let mut backend = open_backend()?;
            let out = ssm_certify(&m, &id, &l, backend.as_mut(), &opts)?;
            if let Some(path) = trace {
                write_trace(path, &out.trace)?;
            }
            let payload = match &out.cert {
                Some(cert) => {
                    println!("SSM-CERTIFIED lambda={lambda} margin={} ({:.1}s)", short(&cert.margin), out.seconds);
                    json!({ "verdict": "SSM-CERTIFIED", "certificate": cert })
                }
                None => {
                    let why = out.last_rejection.as_ref().map(|e| e.to_string());
                    println!("UNDECIDED lambda={lambda}: {:?} after {:.1}s", out.status, out.seconds);
                    json!({ "verdict": "UNDECIDED", "reasons": { "status": out.status, "last_rejection": why } })
                }
            };
            Artifact::new(&cfg, &payload)?.write(output)?;
            undecided_exit(g.strict, out.status != SsmStatus::Certified)
        }
        Cmd::Verify { file } => verify(file),
        Cmd::Sweep { matrix, mode, lambdas, from, to, step, rounds, lp, csv, output } => {
            cfg.command = "sweep".into();
            cfg.rounds = Some(*rounds);
            cfg.outputs = csv.iter().chain(output).map(|p| p.display().to_string()).collect();
            let (m, id) = load_matrix(&matrix.matrix, &mut cfg)?;
            let grid = lambda_grid(lambdas.as_deref(), from.as_deref(), to.as_deref(), step.as_deref())?;
            cfg.lambda = Some(grid.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(","));
            let rows = match mode {
                SweepMode::Wsm => wsm_sweep(&m, &id, &grid, *rounds, g.scale),
                SweepMode::Ssm => {
                    let opts = ssm_options(lp, g.budget)?;
                    let mut backend = open_backend()?;
                    let (rows, _) = ssm_threshold_sweep(&m, &id, &grid, backend.as_mut(), &opts)?;
                    rows.into_iter()
                        .map(|r| SweepRecord {
                            lambda: r.lambda.to_string(),
                            verdict: if r.status == SsmStatus::Certified { "SSM-CERTIFIED".into() } else { "UNDECIDED".into() },
                            detail: r.margin.map_or_else(|| format!("{:?}", r.status), |m| format!("margin {}", short(&m))),
                            seconds: r.seconds,
                        })
                        .collect()
                }
            };
            for r in &rows {
                println!("{} {} {} {:.1}s", r.lambda, r.verdict, r.detail, r.seconds);
            }
            if let Some(path) = csv {
                write_csv(path, &rows)?;
            }
            if let Some(path) = output {
                Artifact::new(&cfg, &json!({ "rows": rows }))?.write(path)?;
            }
            Ok(())
        }
        Cmd::SawCheck { machine, matrix, radius, depth, ordering, random, seed } => {
            let m = match (machine, matrix) {
                (Some(name), _) => build_named_machine(NamedMachine::parse(name)?),
                (None, Some(p)) => load_matrix(p, &mut cfg)?.0,
                (None, None) => return Err(CliError::usage("need --machine or --matrix")),
            };
            let orderings: Vec<NeighborOrdering> = match random {
                Some(k) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                    (0..*k).map(|_| NeighborOrdering::random_in_box(*radius, &mut rng)).collect()
                }
                None => vec![NeighborOrdering::Homogeneous(Permutation::parse(ordering)?)],
            };
            for (n, o) in orderings.iter().enumerate() {
                let tree = enumerate_saw_tree(*radius, *depth, o, DEFAULT_CAP)?;
                let missing = missing_from_saw_tree(&m, &tree, *radius, *depth)?;
                if let Some(w) = missing.first() {
                    println!("ordering {n}: {} walks missing, first {}", missing.len(), steps_to_string(w));
                    return Err(CliError::failed("machine walks missing from the SAW tree"));
                }
            }
            println!("all machine walks to depth {depth} found in {} SAW tree(s) of radius {radius}", orderings.len());
            Ok(())
        }
    }
}

fn undecided_exit(strict: bool, undecided: bool) -> CliResult<()> {
    if strict && undecided {
        Err(CliError::new(Code::Undecided, "undecided"))
    } else {
        Ok(())
    }
}

fn parse_lambda(s: &str) -> CliResult<Activity> {
    Activity::parse(s).map_err(|e| CliError::usage(format!("lambda {s:?}: {e}")))
}

fn parse_list(s: &str) -> CliResult<Vec<Rational>> {
    s.split(',').map(|x| parse_rational(x.trim()).map_err(CliError::from)).collect()
}

/// First digits of a long exact decimal, for display.
fn short(s: &str) -> String {
    match parse_rational(s) {
        Ok(r) => format!("{:.6e}", ssm_core::rational::to_f64(&r)),
        Err(_) => s.into(),
    }
}

fn read_json(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// Reads a matrix from a build or reduce artifact, a certificate, or a bare matrix file.
fn load_matrix(path: &Path, cfg: &mut RunConfig) -> CliResult<(BranchingMatrix, String)> {
    let v = read_json(path)?;
    let file = if let Some(p) = v.get("payload") {
        p.get("matrix").or_else(|| p.get("certificate").and_then(|c| c.get("matrix")))
    } else if v.get("rows").is_some() {
        Some(&v)
    } else {
        v.get("matrix")
    }
    .ok_or_else(|| CliError::usage(format!("{}: no matrix found", path.display())))?;
    let file: MatrixFile = serde_json::from_value(file.clone()).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    cfg.matrix = MatrixSource::File(path.display().to_string());
    let id = path.file_stem().map_or_else(|| "matrix".into(), |s| s.to_string_lossy().into_owned());
    Ok((BranchingMatrix::from_file(file)?, id))
}

fn ssm_options(lp: &LpArgs, budget: Option<u64>) -> CliResult<SsmOptions> {
    let digits = lp
        .digits
        .split(',')
        .map(|d| d.trim().parse::<u32>().map_err(|e| CliError::usage(format!("--digits: {e}"))))
        .collect::<CliResult<Vec<_>>>()?;
    if digits.is_empty() {
        return Err(CliError::usage("--digits needs at least one value"));
    }
    Ok(SsmOptions {
        d0: lp.d0,
        max_d: lp.max_d,
        batch: lp.batch,
        top_n: lp.top_n,
        digits,
        budget: budget.map(Duration::from_secs),
        ..Default::default()
    })
}

fn lambda_grid(list: Option<&str>, from: Option<&str>, to: Option<&str>, step: Option<&str>) -> CliResult<Vec<Activity>> {
    if let Some(list) = list {
        return list.split(',').map(|s| parse_lambda(s.trim())).collect();
    }
    let (Some(from), Some(to), Some(step)) = (from, to, step) else {
        return Err(CliError::usage("give --lambdas or all of --from, --to, --step"));
    };
    let (a, b) = (parse_lambda(from)?, parse_lambda(to)?);
    let h = parse_rational(step)?;
    if h <= Rational::from_integer(0.into()) {
        return Err(CliError::usage("--step must be positive"));
    }
    let mut out = Vec::new();
    let mut x = a.value().clone();
    while &x <= b.value() {
        out.push(Activity::new(x.clone())?);
        x += &h;
        if out.len() > 10_000 {
            return Err(CliError::new(Code::Resource, "more than 10000 sweep points"));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct SweepRecord {
    lambda: String,
    verdict: String,
    detail: String,
    seconds: f64,
}

fn wsm_sweep(m: &BranchingMatrix, id: &str, grid: &[Activity], rounds: usize, scale: u32) -> Vec<SweepRecord> {
    use rayon::prelude::*;
    grid.par_iter()
        .map(|l| {
            let start = std::time::Instant::now();
            let copts = WsmCertifyOptions { rounds, scale, ..Default::default() };
            let ropts = RefuteOptions { scale, ..Default::default() };
            let (verdict, detail) = match wsm_certify(m, id, l, &copts) {
                Ok(c) => ("WSM-CERTIFIED", format!("lambda_bound {}", short(&c.lambda_bound))),
                Err(e) => match wsm_refute(m, id, l, &RefuteSeeds::Auto, &ropts) {
                    Ok(_) => ("WSM-REFUTED", String::new()),
                    Err(_) => ("UNDECIDED", e.to_string()),
                },
            };
            SweepRecord { lambda: l.to_string(), verdict: verdict.into(), detail, seconds: start.elapsed().as_secs_f64() }
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &PathBuf, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(CliError::internal)?;
    }
    let bytes = w.into_inner().map_err(CliError::internal)?;
    write_atomic(path, &bytes)
}

#[derive(Serialize)]
struct TraceRecord {
    round: usize,
    v: f64,
    rows: usize,
    generation_rounds: usize,
    intervals: usize,
    per_type: String,
    splits: usize,
    seconds: f64,
}

fn write_trace(path: &PathBuf, trace: &[ssm_core::ssm_lp::RefinementStep]) -> CliResult<()> {
    let rows: Vec<TraceRecord> = trace
        .iter()
        .map(|s| TraceRecord {
            round: s.round,
            v: s.v,
            rows: s.rows,
            generation_rounds: s.generation_rounds,
            intervals: s.intervals.iter().sum(),
            per_type: s.intervals.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" "),
            splits: s.splits.len(),
            seconds: s.seconds,
        })
        .collect();
    write_csv(path, &rows)
}

/// Re-checks the certificate first so a tamper is reported by its first
/// violated condition, then the content hash.
fn verify(path: &Path) -> CliResult<()> {
    let v = read_json(path)?;
    let (cert, artifact) = match v.get("payload") {
        Some(p) => {
            let a: Artifact = serde_json::from_value(v.clone()).map_err(|e| CliError::usage(e.to_string()))?;
            let c = p.get("certificate").cloned().ok_or_else(|| {
                let verdict = p.get("verdict").and_then(Value::as_str).unwrap_or("no verdict");
                CliError::failed(format!("artifact holds no certificate ({verdict})"))
            })?;
            (c, Some(a))
        }
        None => (v, None),
    };
    let kind = cert.get("kind").and_then(Value::as_str).unwrap_or_default().to_string();
    let bad = |e: serde_json::Error| CliError::failed(format!("malformed {kind} certificate: {e}"));
    let summary = match kind.as_str() {
        "wsm-holds" => {
            let c: WsmHoldsCert = serde_json::from_value(cert).map_err(bad)?;
            verify_wsm_holds(&c).map_err(|e| CliError::failed(format!("INVALID: {e}")))?;
            format!("wsm-holds at lambda {} (lambda_bound {})", c.lambda, short(&c.lambda_bound))
        }
        "wsm-fails" => {
            let c: WsmFailsCert = serde_json::from_value(cert).map_err(bad)?;
            verify_wsm_fails(&c).map_err(|e| CliError::failed(format!("INVALID: {e}")))?;
            format!("wsm-fails at lambda {}", c.lambda)
        }
        "ssm-potential" => {
            let c: SsmPotentialCert = serde_json::from_value(cert).map_err(bad)?;
            let out = verify_ssm_cert(&c).map_err(|e| {
                let tag = e.tag().map(|t| format!(" [{t}]")).unwrap_or_default();
                CliError::failed(format!("INVALID{tag}: {e}"))
            })?;
            format!("ssm-potential at lambda {} (margin {}, {} tuples)", c.lambda, short(&out.margin), out.tuples_checked)
        }
        other => return Err(CliError::failed(format!("unknown certificate kind {other:?}"))),
    };
    if let Some(a) = artifact {
        if !a.hash_ok() {
            return Err(CliError::failed("INVALID: content hash does not match"));
        }
    }
    println!("VALID {summary}");
    Ok(())
}
