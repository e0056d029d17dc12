//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary
//! so the lines show up in `cargo test` output.

mod common;

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use fsvm_trend::config::RunConfig;
use fsvm_trend::dataset::{split, Dataset, Direction, NormMethod, SplitFractions, SplitOptions};
use fsvm_trend::evaluation::fit_model;
use fsvm_trend::fsvm::{train_fsvm, train_fsvm_weighted, FsvmModel, KernelSpec, MembershipSpec, TrainConfig};
use fsvm_trend::indicators::{addition_delivery, builtin_registry, IndicatorSpec};
use fsvm_trend::market_data::{parse_ohlcv_csv, validate_series, BarRule, DEFAULT_DATE_FORMAT};
use fsvm_trend::protocol::run_full;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

thread_local! {
    /// (origin, kkt violation, tolerance) of every model trained here.
    static TRAINED: RefCell<Vec<(String, f64, f64)>> = const { RefCell::new(Vec::new()) };
}

fn record(origin: &str, kkt: f64, tol: f64) {
    TRAINED.with(|t| t.borrow_mut().push((origin.to_string(), kkt, tol)));
}

fn recorded(origin: &str, model: FsvmModel, tol: f64) -> FsvmModel {
    record(origin, model.diagnostics.max_kkt_violation, tol);
    model
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fixture_config(out: &Path) -> RunConfig {
    let mut over = BTreeMap::new();
    over.insert("out".to_string(), out.to_string_lossy().into_owned());
    RunConfig::load(Some(&fixture_dir().join("full.conf")), &over).expect("fixture config loads")
}

fn solver_matches_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(7);
    let mut worst = 0.0f64;
    let mut in_smo = Duration::ZERO;
    for case in 0..50 {
        let n = r.random_range(2..=8);
        let d = r.random_range(1..=3);
        let (xs, ys) = random_problem(&mut r, n, d);
        let kernel = if case % 2 == 0 {
            KernelSpec::linear()
        } else {
            KernelSpec::rbf(r.random_range(0.1..2.0))
        };
        let kind = ["uniform", "time_decay", "class_center"][case % 3];
        let cfg = TrainConfig {
            c: r.random_range(0.1..10.0),
            kernel: kernel.clone(),
            membership: MembershipSpec::new(kind, r.random_range(0.2..=1.0)),
            tolerance: 1e-9,
            max_passes: 100_000,
            seed: case as u64,
        };
        let weights = cfg.membership.build().unwrap().weights(&xs, &ys).unwrap();
        let t0 = Instant::now();
        let model = recorded("oracle instance", train_fsvm(&xs, &ys, &cfg).map_err(|e| e.to_string())?, cfg.tolerance);
        in_smo += t0.elapsed();

        let k = gram(&kernel, &xs);
        let y = signs(&ys);
        let upper: Vec<f64> = weights.iter().map(|s| s * cfg.c).collect();
        let (_, w_oracle) = qp_oracle(&k, &y, &upper);
        let w_smo = dual_objective(&k, &y, &full_alpha(&model, n));
        let rel = (w_smo - w_oracle).abs() / w_oracle.abs().max(1e-12);
        worst = worst.max(rel);
        check(rel <= 1e-6, || {
            format!("case {case} (n={n}, d={d}, {kernel}, {kind}): smo {w_smo} vs oracle {w_oracle}, rel {rel:.2e}")
        })?;
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "50 instances, worst relative gap {worst:.2e}, {elapsed:.2?} total ({in_smo:.2?} in smo)"
    ))
}

fn analytic_cases() -> Outcome {
    let xs = vec![vec![-1.0], vec![1.0]];
    let ys = vec![Direction::Down, Direction::Up];
    let cfg = TrainConfig {
        c: 10.0,
        tolerance: 1e-12,
        ..TrainConfig::default()
    };
    let m = recorded("two-point", train_fsvm(&xs, &ys, &cfg).map_err(|e| e.to_string())?, cfg.tolerance);
    let a = full_alpha(&m, 2);
    check(
        (a[0] - 0.5).abs() <= 1e-8 && (a[1] - 0.5).abs() <= 1e-8 && m.bias.abs() <= 1e-8,
        || format!("alpha {a:?}, b {}", m.bias),
    )?;

    let xor = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
    let xy = vec![Direction::Down, Direction::Down, Direction::Up, Direction::Up];
    let cfg = TrainConfig {
        c: 10.0,
        kernel: KernelSpec::rbf(1.0),
        ..TrainConfig::default()
    };
    let m = recorded("xor", train_fsvm(&xor, &xy, &cfg).map_err(|e| e.to_string())?, cfg.tolerance);
    let correct = xor
        .iter()
        .zip(&xy)
        .filter(|(x, y)| m.predict_direction(x).unwrap().direction == **y)
        .count();
    check(correct == 4, || format!("xor: {correct}/4 correct"))?;
    check(m.alphas.len() == 4, || format!("xor: {} support vectors", m.alphas.len()))?;
    Ok(format!("alpha = [{:.10}, {:.10}], b = {:.1e}; xor 4/4", a[0], a[1], m.bias))
}

fn reduction_identity() -> Outcome {
    let mut r = rng(11);
    let (xs, ys) = random_problem(&mut r, 40, 3);
    let probes = random_problem(&mut r, 50, 3).0;
    let mut worst = 0.0f64;
    for kernel in [KernelSpec::linear(), KernelSpec::rbf(0.7)] {
        let base = TrainConfig {
            c: 2.0,
            kernel: kernel.clone(),
            tolerance: 1e-9,
            max_passes: 100_000,
            ..TrainConfig::default()
        };
        let plain = recorded("unweighted", train_fsvm_weighted(&xs, &ys, &vec![1.0; xs.len()], &base).unwrap(), base.tolerance);
        for kind in ["uniform", "time_decay", "class_center"] {
            let cfg = TrainConfig {
                membership: MembershipSpec::new(kind, 1.0),
                ..base.clone()
            };
            let fuzzy = recorded("floor one", train_fsvm(&xs, &ys, &cfg).unwrap(), cfg.tolerance);
            for p in &probes {
                let diff = (plain.decision_value(p).unwrap() - fuzzy.decision_value(p).unwrap()).abs();
                worst = worst.max(diff);
                check(diff <= 1e-6, || format!("{kernel} {kind}: decision values differ by {diff:.2e}"))?;
            }
        }
    }
    Ok(format!("50 probes x 3 schemes x 2 kernels, max |diff| {worst:.2e}"))
}

fn indicator_oracles() -> Outcome {
    let reg = builtin_registry();
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let bars = random_bars(&mut r, 150);
        let specs = [
            IndicatorSpec::new("sma", 1 + trial % 30),
            IndicatorSpec::new("impetus", 1 + trial % 10),
            IndicatorSpec::new("ad", 1),
        ];
        for spec in specs {
            let ind = reg.build(&spec.name, &spec).unwrap();
            let batch = ind.batch(&bars);
            let mut stream = ind.stream();
            for (t, bar) in bars.iter().enumerate() {
                match (stream.push(bar), batch[t]) {
                    (Some(a), Some(b)) => {
                        let diff = (a - b).abs();
                        worst = worst.max(diff);
                        check(diff <= 1e-12, || format!("{spec} at {t}: {a} vs {b}"))?;
                    }
                    (None, None) => {}
                    (a, b) => return Err(format!("{spec} at {t}: stream {a:?} batch {b:?}")),
                }
            }
        }
        for bar in &bars {
            let ad = addition_delivery(bar).map_err(|e| e.to_string())?;
            check((0.0..=100.0).contains(&ad), || format!("addition/delivery {ad} outside [0, 100]"))?;
        }
    }
    let table = "Date,Open,High,Low,Close,Volume,Adj Close\n\
                 30-09-1993,760,764,759,762,280000000,762\n\
                 01-10-1993,76,763,761,763,290020000,763\n";
    let series = parse_ohlcv_csv(table.as_bytes(), DEFAULT_DATE_FORMAT).map_err(|e| e.to_string())?;
    let report = validate_series(&series);
    check(
        report.flagged.len() == 1 && report.flagged[0].rule == BarRule::OpenBelowLow && report.flagged[0].row == 1,
        || format!("validation flagged {:?}", report.flagged),
    )?;
    Ok(format!("stream/batch max |diff| {worst:.1e}; addition/delivery in range; 01-10-1993 flagged `{}`", BarRule::OpenBelowLow))
}

fn split_invariants() -> Outcome {
    let mut r = rng(5);
    let mut cells = 0;
    for trial in 0..20u64 {
        let n = r.random_range(200..1500);
        let f = r.random_range(0.05..0.5);
        let years = r.random_range(1..8);
        let examples = random_examples(&mut r, n, years, 4);
        let options = SplitOptions {
            fractions: SplitFractions {
                parameter: f,
                ..SplitFractions::default()
            },
            ..SplitOptions::default()
        };
        let plan = split(&examples, &options, trial).map_err(|e| e.to_string())?;
        for s in &plan.strata {
            let got = plan
                .parameter_set
                .iter()
                .filter(|&&i| examples[i].year() == s.year && examples[i].label == s.label)
                .count() as f64;
            let target = f * s.total as f64;
            check((got - target).abs() <= 1.0, || {
                format!("dataset {trial}: cell ({}, {:?}) has {got}, target {target:.2}", s.year, s.label)
            })?;
            cells += 1;
        }
        check(plan == split(&examples, &options, trial).unwrap(), || format!("dataset {trial}: plans differ for equal seeds"))?;

        // leakage probe
        let ds = Dataset {
            columns: (0..4).map(|j| format!("f{j}")).collect(),
            examples,
        };
        if trial < 5 {
            let cfg = TrainConfig {
                c: 1.0,
                kernel: KernelSpec::rbf(0.5),
                membership: MembershipSpec::new("time_decay", 0.5),
                ..TrainConfig::default()
            };
            let before = recorded("leakage", fit_model(&ds, &plan.parameter_train, &cfg, NormMethod::MinMax).map_err(|e| e.to_string())?, cfg.tolerance);
            let mut tampered = ds.clone();
            for &i in plan.parameter_holdout.iter().chain(&plan.holdout_set).chain(&plan.train_set) {
                for v in tampered.examples[i].features.iter_mut() {
                    *v = -*v * 31.0 + 1.0;
                }
            }
            let after = fit_model(&tampered, &plan.parameter_train, &cfg, NormMethod::MinMax).unwrap();
            check(before == after, || format!("dataset {trial}: holdout perturbation changed the model"))?;
        }
    }
    Ok(format!("20 datasets, {cells} cells within +/-1; seeds reproducible; leakage probe clean"))
}

fn fixture_benchmark() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = fixture_config(dir.path());
    let start = Instant::now();
    let summary = run_full(&config).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    for g in &summary.grids {
        for row in &g.rows {
            record("grid", row.max_kkt_violation, row.config.tolerance);
        }
    }
    let report = summary.comparison.ok_or("no comparison report")?;
    for m in [&report.a, &report.b] {
        record("comparison", m.max_kkt_violation, m.config.tolerance);
    }
    let (na, f) = (&report.a, &report.b);
    check(na.name == "na-fsvm" && f.name == "fsvm", || format!("unexpected families {} / {}", na.name, f.name))?;
    check(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    check(na.holdout.accuracy >= 0.60, || format!("na-fsvm holdout {:.4}", na.holdout.accuracy))?;
    check(na.holdout.accuracy >= f.holdout.accuracy - 0.02, || {
        format!("na-fsvm {:.4} < fsvm {:.4} - 0.02", na.holdout.accuracy, f.holdout.accuracy)
    })?;
    Ok(format!(
        "na-fsvm {:.4} vs fsvm {:.4} holdout accuracy, {elapsed:.2?}",
        na.holdout.accuracy, f.holdout.accuracy
    ))
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn full_is_deterministic() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ca, cb) = (fixture_config(a.path()), fixture_config(b.path()));
    check(ca.hash().unwrap() == cb.hash().unwrap(), || "config hashes differ".into())?;
    run_full(&ca).map_err(|e| e.to_string())?;
    run_full(&cb).map_err(|e| e.to_string())?;
    let (fa, fb) = (read_dir_bytes(a.path()), read_dir_bytes(b.path()));
    check(fa.keys().eq(fb.keys()), || "different file sets".into())?;
    for (name, bytes) in &fa {
        check(fb[name] == *bytes, || format!("{name} differs between runs"))?;
    }
    Ok(format!("{} files byte-identical across two output directories", fa.len()))
}

fn kkt_suite() -> Outcome {
    TRAINED.with(|t| {
        let t = t.borrow();
        let mut by_origin: BTreeMap<&str, usize> = BTreeMap::new();
        for (origin, kkt, tol) in t.iter() {
            check(kkt <= tol, || format!("{origin} model: kkt {kkt:.3e} > tolerance {tol:e}"))?;
            *by_origin.entry(origin.as_str()).or_default() += 1;
        }
        check(!t.is_empty(), || "no models recorded".into())?;
        Ok(format!("{} models within tolerance {by_origin:?}", t.len()))
    })
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("solver-oracle equivalence", solver_matches_oracle),
        ("analytic cases", analytic_cases),
        ("reduction identity", reduction_identity),
        ("indicator oracles", indicator_oracles),
        ("split invariants", split_invariants),
        ("fixture benchmark", fixture_benchmark),
        ("determinism", full_is_deterministic),
        // last, so it sees every model trained above
        ("kkt suite", kkt_suite),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match std::panic::catch_unwind(run) {
            Ok(Ok(detail)) => println!("PASS  {name}: {detail}"),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL  {name}: panicked");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
