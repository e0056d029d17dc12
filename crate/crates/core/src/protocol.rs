//! The end-to-end experiment: ingest, featurize, split, grid search, and
//! comparison, each stage persisting its artifact in the output directory
//! so any stage can be rerun from the previous one's files.
//!
//! Every artifact carries the config hash and seed: JSON documents as
//! top-level fields, CSV and data files as a leading `#` comment line.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, RunMode};
use crate::dataset::{label_direction, split, Dataset, SplitPlan};
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate, fit_model, run_comparison_stage, run_parameter_stage, write_accuracy_by_year, ComparisonReport,
    EvalReport, GridResult,
};
use crate::fsvm::{FsvmModel, TrainConfig};
use crate::indicators::compute_feature_matrix;
use crate::market_data::{parse_ohlcv_csv, validate_series, write_ohlcv_csv, FlaggedRow, PriceSeries, ValidationReport};

pub const SERIES_FILE: &str = "series.csv";
pub const VALIDATION_FILE: &str = "validation.jsonl";
pub const VALIDATION_SUMMARY_FILE: &str = "validation_summary.json";
pub const FEATURES_FILE: &str = "features.csv";
pub const DATASET_FILE: &str = "dataset.csv";
pub const SPLIT_PLAN_FILE: &str = "split_plan.json";
pub const DATASET_SPLIT_FILE: &str = "dataset_split.csv";
pub const COMPARISON_FILE: &str = "comparison.json";
pub const COMPARISON_PER_YEAR_FILE: &str = "comparison_per_year.csv";

pub fn grid_file(family: &str, ext: &str) -> String {
    format!("grid_{family}.{ext}")
}

/// A JSON body with the run's config hash and seed alongside it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub config_hash: String,
    pub seed: u64,
    #[serde(flatten)]
    pub body: T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub input: String,
    pub total_rows: usize,
    pub valid: usize,
    pub flagged: usize,
}

/// One line of `validation.jsonl`.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub enum ValidationLine<'a> {
    Summary(&'a ValidationSummary),
    Flagged(&'a FlaggedRow),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanFile {
    pub plan: SplitPlan,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridFile {
    pub grid: GridResult,
    /// Row indices of the four best configurations.
    pub top_four: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub role: String,
    pub family: String,
    pub model: FsvmModel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalFile {
    pub family: String,
    pub report: EvalReport,
}

/// Output directory that remembers what it wrote this run.
pub struct Artifacts {
    dir: PathBuf,
    config_hash: String,
    seed: u64,
    written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn open(dir: &Path, config: &RunConfig) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            config_hash: config.hash()?,
            seed: config.seed,
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn stamp_line(&self) -> String {
        format!("# config_hash={} seed={}\n", self.config_hash, self.seed)
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        if !self.written.contains(&path) {
            self.written.push(path);
        }
        Ok(())
    }

    /// Writes a `#`-stamped text artifact produced by `body`.
    pub fn write_text(&mut self, name: &str, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = self.stamp_line().into_bytes();
        body(&mut buf)?;
        self.put(name, &buf)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<()> {
        let stamped = Stamped {
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            body,
        };
        let mut buf = serde_json::to_vec_pretty(&stamped)?;
        buf.push(b'\n');
        self.put(name, &buf)
    }

    /// Deletes everything written through this handle.
    pub fn remove_written(&mut self) {
        for path in self.written.drain(..) {
            if let Err(e) = fs::remove_file(&path) {
                log::warn!("could not remove partial output {}: {e}", path.display());
            }
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Stamped<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

pub fn load_series(path: &Path, date_format: &str) -> Result<PriceSeries> {
    let symbol = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(parse_ohlcv_csv(open(path)?, date_format)?.with_symbol(symbol))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    Dataset::read_csv(open(&dir.join(DATASET_FILE))?)
}

pub fn load_plan(dir: &Path) -> Result<SplitPlan> {
    Ok(read_json::<PlanFile>(&dir.join(SPLIT_PLAN_FILE))?.body.plan)
}

pub fn load_grid(dir: &Path, family: &str) -> Result<GridResult> {
    Ok(read_json::<GridFile>(&dir.join(grid_file(family, "json")))?.body.grid)
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let file: Stamped<ModelFile> = read_json(path)?;
    if file.body.model.format_version != crate::fsvm::MODEL_FORMAT_VERSION {
        return Err(Error::Parameter(format!(
            "{}: unsupported model format version {}",
            path.display(),
            file.body.model.format_version
        )));
    }
    Ok(file.body)
}

/// Reads and validates the input series.
pub fn stage_ingest(config: &RunConfig, art: &mut Artifacts) -> Result<(PriceSeries, ValidationReport)> {
    let input = config.input_path()?;
    let series = load_series(input, &config.date_format)?;
    let report = validate_series(&series);
    for row in &report.flagged {
        log::warn!("bar {} ({}) flagged: {}", row.row, row.date, row.rule);
    }
    art.write_text(SERIES_FILE, |buf| {
        // csv writer output follows the stamp comment
        write_ohlcv_csv(&series, buf, &config.date_format)
    })?;
    let summary = ValidationSummary {
        input: input.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        total_rows: report.total_rows,
        valid: report.valid,
        flagged: report.flagged.len(),
    };
    // first line is the stamped summary, then one stamped line per flagged row
    let stamp = |body| Stamped {
        config_hash: art.config_hash.clone(),
        seed: art.seed,
        body,
    };
    let mut lines = serde_json::to_vec(&stamp(ValidationLine::Summary(&summary)))?;
    lines.push(b'\n');
    for row in &report.flagged {
        serde_json::to_writer(&mut lines, &stamp(ValidationLine::Flagged(row)))?;
        lines.push(b'\n');
    }
    art.put(VALIDATION_FILE, &lines)?;
    art.write_json(VALIDATION_SUMMARY_FILE, &summary)?;
    Ok((series, report))
}

/// Indicator matrix plus labeled dataset.
pub fn stage_featurize(config: &RunConfig, art: &mut Artifacts, series: &PriceSeries) -> Result<Dataset> {
    let matrix = compute_feature_matrix(series, &config.indicators)?;
    for s in &matrix.skipped {
        log::warn!("skipped flagged bar {} ({})", s.date, s.rule);
    }
    let labels = label_direction(series, config.tie_rule)?;
    let dataset = Dataset::from_features(&matrix, &labels);
    art.write_text(FEATURES_FILE, |buf| matrix.write_csv(buf))?;
    art.write_text(DATASET_FILE, |buf| dataset.write_csv(buf, None))?;
    Ok(dataset)
}

pub fn stage_split(config: &RunConfig, art: &mut Artifacts, dataset: &Dataset) -> Result<SplitPlan> {
    let plan = split(&dataset.examples, &config.split, config.seed)?;
    art.write_json(SPLIT_PLAN_FILE, &PlanFile { plan: plan.clone() })?;
    art.write_text(DATASET_SPLIT_FILE, |buf| dataset.write_csv(buf, Some(&plan)))?;
    Ok(plan)
}

pub fn stage_grid(config: &RunConfig, art: &mut Artifacts, dataset: &Dataset, plan: &SplitPlan, family: &str) -> Result<GridResult> {
    let grid = config.grid_for(family)?;
    let result = run_parameter_stage(dataset, plan, family, &grid, config.norm, config.jobs)?;
    art.write_text(&grid_file(family, "csv"), |buf| result.write_csv(buf))?;
    let top_four = result.top(4);
    art.write_json(
        &grid_file(family, "json"),
        &GridFile {
            grid: result.clone(),
            top_four,
        },
    )?;
    Ok(result)
}

/// Trains on the comparison train set and writes `model_<family>.json`.
pub fn stage_train(
    config: &RunConfig,
    art: &mut Artifacts,
    dataset: &Dataset,
    plan: &SplitPlan,
    family: &str,
    train_config: &TrainConfig,
) -> Result<FsvmModel> {
    let model = fit_model(dataset, &plan.train_set, train_config, config.norm)?;
    art.write_json(
        &format!("model_{family}.json"),
        &ModelFile {
            role: "train".into(),
            family: family.into(),
            model: model.clone(),
        },
    )?;
    Ok(model)
}

/// Scores the comparison holdout; writes `eval_<family>.json` and
/// `accuracy_by_year_<family>.dat`.
pub fn stage_evaluate(art: &mut Artifacts, dataset: &Dataset, plan: &SplitPlan, family: &str, model: &FsvmModel) -> Result<EvalReport> {
    let report = evaluate(model, dataset, &plan.holdout_set, "holdout")?;
    art.write_json(
        &format!("eval_{family}.json"),
        &EvalFile {
            family: family.into(),
            report: report.clone(),
        },
    )?;
    art.write_text(&format!("accuracy_by_year_{family}.dat"), |buf| write_accuracy_by_year(&report, buf))?;
    Ok(report)
}

pub fn stage_compare(
    config: &RunConfig,
    art: &mut Artifacts,
    dataset: &Dataset,
    plan: &SplitPlan,
    a: (&str, &TrainConfig),
    b: (&str, &TrainConfig),
) -> Result<ComparisonReport> {
    let outcome = run_comparison_stage(dataset, plan, a, b, config.norm)?;
    let report = outcome.report;
    art.write_json(COMPARISON_FILE, &report)?;
    art.write_text(COMPARISON_PER_YEAR_FILE, |buf| report.write_per_year_csv(buf))?;
    for (role, m, model) in [("a", &report.a, outcome.model_a), ("b", &report.b, outcome.model_b)] {
        art.write_json(
            &format!("model_{role}.json"),
            &ModelFile {
                role: role.into(),
                family: m.name.clone(),
                model,
            },
        )?;
        art.write_text(&format!("accuracy_by_year_{role}.dat"), |buf| {
            write_accuracy_by_year(&m.holdout, buf)
        })?;
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct ProtocolSummary {
    pub config_hash: String,
    pub validation: ValidationReport,
    pub n_examples: usize,
    pub plan: SplitPlan,
    pub grids: Vec<GridResult>,
    pub comparison: Option<ComparisonReport>,
    pub files: Vec<PathBuf>,
}

fn run_stages(config: &RunConfig, art: &mut Artifacts) -> Result<ProtocolSummary> {
    let (series, validation) = stage_ingest(config, art)?;
    let dataset = stage_featurize(config, art, &series)?;
    let plan = stage_split(config, art, &dataset)?;

    let mut grids = Vec::new();
    let mut comparison = None;
    match config.mode {
        RunMode::ParameterStage | RunMode::FullProtocol => {
            let ga = stage_grid(config, art, &dataset, &plan, &config.model_a)?;
            let gb = if config.model_b == config.model_a {
                ga.clone()
            } else {
                stage_grid(config, art, &dataset, &plan, &config.model_b)?
            };
            if config.mode == RunMode::FullProtocol {
                let (ca, cb) = (ga.best_row().config.clone(), gb.best_row().config.clone());
                comparison = Some(stage_compare(
                    config,
                    art,
                    &dataset,
                    &plan,
                    (&config.model_a, &ca),
                    (&config.model_b, &cb),
                )?);
            }
            grids.push(ga);
            grids.push(gb);
        }
        RunMode::Comparison => {
            let ca = config
                .fixed_config(&config.model_a)?
                .ok_or_else(|| Error::Config("comparison mode needs `c` (and `gamma`, `floor`)".into()))?;
            let cb = config.fixed_config(&config.model_b)?.expect("c is set");
            comparison = Some(stage_compare(
                config,
                art,
                &dataset,
                &plan,
                (&config.model_a, &ca),
                (&config.model_b, &cb),
            )?);
        }
    }

    Ok(ProtocolSummary {
        config_hash: art.config_hash.clone(),
        validation,
        n_examples: dataset.len(),
        plan,
        grids,
        comparison,
        files: art.written.clone(),
    })
}

/// Runs every stage into `config.out`. On failure, files written by this
/// run are removed before the error is returned.
pub fn run_full(config: &RunConfig) -> Result<ProtocolSummary> {
    // fail on a missing input before touching the output directory
    let input = config.input_path()?;
    fs::metadata(input).map_err(|e| Error::io(input, e))?;
    let mut art = Artifacts::open(&config.out, config)?;
    match run_stages(config, &mut art) {
        Ok(summary) => Ok(summary),
        Err(e) => {
            art.remove_written();
            Err(e)
        }
    }
}
