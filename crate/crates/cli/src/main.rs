use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use fsvm_trend::config::{RunConfig, KEYS};
use fsvm_trend::evaluation::{ComparisonReport, GridResult};
use fsvm_trend::fsvm::TrainConfig;
use fsvm_trend::protocol::{self, Artifacts};
use fsvm_trend::{Error, Result};

const SUBCOMMANDS: &[(&str, &str)] = &[
    ("ingest", "parse and validate the input CSV"),
    ("featurize", "compute indicators and labels from the ingested series"),
    ("split", "build the stratified split plan"),
    ("grid", "grid-search model_a and model_b on the parameter subset"),
    ("train", "train `model` on the comparison train set"),
    ("evaluate", "score the trained `model` on the comparison holdout"),
    ("compare", "train and score model_a against model_b"),
    ("full", "run every stage selected by `mode`"),
];

fn cli() -> Command {
    let mut cmd = Command::new("fsvm-trend")
        .about("Fuzzy SVM stock direction experiments")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .help("key = value config file"),
        )
        .arg(
            Arg::new("verbose")
                .long("verbose")
                .short('v')
                .global(true)
                .action(ArgAction::Count)
                .help("more log output (repeatable)"),
        );
    for (key, help, _) in KEYS {
        let mut arg = Arg::new(*key)
            .long(*key)
            .global(true)
            .value_name("VALUE")
            .help(*help);
        if key.contains('_') {
            arg = arg.alias(key.replace('_', "-"));
        }
        cmd = cmd.arg(arg);
    }
    for (name, about) in SUBCOMMANDS {
        cmd = cmd.subcommand(Command::new(*name).about(*about));
    }
    cmd
}

fn overrides(m: &ArgMatches) -> BTreeMap<String, String> {
    KEYS.iter()
        .filter_map(|(key, _, _)| m.get_one::<String>(key).map(|v| (key.to_string(), v.clone())))
        .collect()
}

/// Runs `body` against the output directory, removing its files on error.
fn with_artifacts<T>(config: &RunConfig, body: impl FnOnce(&mut Artifacts) -> Result<T>) -> Result<T> {
    let input = config.input_path()?;
    std::fs::metadata(input).map_err(|e| Error::io(input, e))?;
    let mut art = Artifacts::open(&config.out, config)?;
    match body(&mut art) {
        Ok(v) => {
            for path in art.written() {
                log::info!("wrote {}", path.display());
            }
            Ok(v)
        }
        Err(e) => {
            art.remove_written();
            Err(e)
        }
    }
}

fn require(path: PathBuf, stage: &str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::Config(format!("{} not found; run `{stage}` first", path.display())))
    }
}

/// Fixed `c`/`gamma`/`floor` if given, else the best row of the family's grid.
fn chosen_config(config: &RunConfig, dir: &Path, family: &str) -> Result<TrainConfig> {
    if let Some(cfg) = config.fixed_config(family)? {
        return Ok(cfg);
    }
    require(dir.join(protocol::grid_file(family, "json")), "grid")?;
    Ok(protocol::load_grid(dir, family)?.best_row().config.clone())
}

fn fmt_gamma(g: Option<f64>) -> String {
    g.map_or_else(|| "-".into(), |g| g.to_string())
}

fn print_grid(grid: &GridResult) {
    println!("grid {} ({} configs), top four:", grid.family, grid.rows.len());
    println!("  {:>8} {:>8} {:>6} {:>8} {:>8} {:>8} {:>5}", "C", "gamma", "floor", "train", "holdout", "mean", "SVs");
    for i in grid.top(4) {
        let r = &grid.rows[i];
        println!(
            "  {:>8} {:>8} {:>6} {:>8.4} {:>8.4} {:>8.4} {:>5}",
            r.config.c,
            fmt_gamma(r.config.gamma()),
            r.config.membership.floor,
            r.train_accuracy,
            r.holdout_accuracy,
            r.mean,
            r.support_vectors
        );
    }
}

fn print_comparison(report: &ComparisonReport) {
    println!("holdout accuracy by year:");
    let years: std::collections::BTreeSet<i32> = report
        .a
        .holdout
        .per_year
        .years
        .keys()
        .chain(report.b.holdout.per_year.years.keys())
        .copied()
        .collect();
    println!("  {:>6} {:>10} {:>10}", "year", report.a.name, report.b.name);
    for y in years {
        let cell = |m: &fsvm_trend::evaluation::ModelReport| {
            m.holdout.per_year.years.get(&y).map_or_else(|| "-".into(), |v| format!("{:.4}", v.accuracy))
        };
        println!("  {:>6} {:>10} {:>10}", y, cell(&report.a), cell(&report.b));
    }
    for m in [&report.a, &report.b] {
        println!(
            "{}: C={} gamma={} floor={} train {:.4} holdout {:.4} (n={}) SVs {} kkt {:.2e}",
            m.name,
            m.config.c,
            fmt_gamma(m.config.gamma()),
            m.config.membership.floor,
            m.train.accuracy,
            m.holdout.accuracy,
            m.holdout.n,
            m.support_vectors,
            m.max_kkt_violation
        );
    }
    println!("difference ({} - {}): {:+.4}", report.a.name, report.b.name, report.accuracy_difference);
}

fn run(sub: &str, config: &RunConfig) -> Result<()> {
    let dir = config.out.clone();
    match sub {
        "ingest" => {
            let report = with_artifacts(config, |art| Ok(protocol::stage_ingest(config, art)?.1))?;
            println!("{} rows, {} valid, {} flagged", report.total_rows, report.valid, report.flagged.len());
        }
        "featurize" => {
            let series_path = require(dir.join(protocol::SERIES_FILE), "ingest")?;
            let series = protocol::load_series(&series_path, &config.date_format)?;
            let ds = with_artifacts(config, |art| protocol::stage_featurize(config, art, &series))?;
            println!("{} examples x {} features", ds.len(), ds.columns.len());
        }
        "split" => {
            require(dir.join(protocol::DATASET_FILE), "featurize")?;
            let ds = protocol::load_dataset(&dir)?;
            let plan = with_artifacts(config, |art| protocol::stage_split(config, art, &ds))?;
            println!(
                "parameter {} (train {}, holdout {}), train {}, holdout {}",
                plan.parameter_set.len(),
                plan.parameter_train.len(),
                plan.parameter_holdout.len(),
                plan.train_set.len(),
                plan.holdout_set.len()
            );
        }
        "grid" | "train" | "evaluate" | "compare" => {
            require(dir.join(protocol::DATASET_FILE), "featurize")?;
            require(dir.join(protocol::SPLIT_PLAN_FILE), "split")?;
            let ds = protocol::load_dataset(&dir)?;
            let plan = protocol::load_plan(&dir)?;
            match sub {
                "grid" => {
                    let mut families = vec![config.model_a.clone()];
                    if config.model_b != config.model_a {
                        families.push(config.model_b.clone());
                    }
                    let grids = with_artifacts(config, |art| {
                        families
                            .iter()
                            .map(|f| protocol::stage_grid(config, art, &ds, &plan, f))
                            .collect::<Result<Vec<_>>>()
                    })?;
                    grids.iter().for_each(print_grid);
                }
                "train" => {
                    let tc = chosen_config(config, &dir, &config.model)?;
                    let model = with_artifacts(config, |art| protocol::stage_train(config, art, &ds, &plan, &config.model, &tc))?;
                    println!(
                        "{}: {} support vectors, {} iterations, kkt {:.2e}",
                        config.model,
                        model.alphas.len(),
                        model.diagnostics.iterations,
                        model.diagnostics.max_kkt_violation
                    );
                }
                "evaluate" => {
                    let path = require(dir.join(format!("model_{}.json", config.model)), "train")?;
                    let file = protocol::load_model(&path)?;
                    let report = with_artifacts(config, |art| protocol::stage_evaluate(art, &ds, &plan, &config.model, &file.model))?;
                    println!("{} holdout accuracy {:.4} (n={})", config.model, report.accuracy, report.n);
                }
                _ => {
                    let ca = chosen_config(config, &dir, &config.model_a)?;
                    let cb = chosen_config(config, &dir, &config.model_b)?;
                    let report = with_artifacts(config, |art| {
                        protocol::stage_compare(config, art, &ds, &plan, (&config.model_a, &ca), (&config.model_b, &cb))
                    })?;
                    print_comparison(&report);
                }
            }
        }
        "full" => {
            let summary = protocol::run_full(config)?;
            println!(
                "config {} seed {}: {} rows ({} flagged), {} examples",
                summary.config_hash,
                config.seed,
                summary.validation.total_rows,
                summary.validation.flagged.len(),
                summary.n_examples
            );
            let mut shown = Vec::new();
            for g in &summary.grids {
                if !shown.contains(&g.family) {
                    print_grid(g);
                    shown.push(g.family.clone());
                }
            }
            if let Some(report) = &summary.comparison {
                print_comparison(report);
            }
            println!("{} files in {}", summary.files.len(), dir.display());
        }
        other => unreachable!("unregistered subcommand {other}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let level = match matches.get_count("verbose") {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let (sub, _) = matches.subcommand().expect("subcommand is required");
    let config_file = matches.get_one::<String>("config").map(PathBuf::from);
    let result = RunConfig::load(config_file.as_deref(), &overrides(&matches)).and_then(|cfg| run(sub, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage_or_io() { 2 } else { 1 })
        }
    }
}
