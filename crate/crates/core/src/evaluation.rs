//! Scoring, the parameter-setting grid search, and model-vs-model
//! comparison.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{apply_normalizer, fit_normalizer, Dataset, Direction, NormMethod, SplitPlan};
use crate::error::{Error, Result};
use crate::fsvm::{train_fsvm, FsvmModel, TrainConfig};

pub fn directional_accuracy(predicted: &[Direction], actual: &[Direction]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::Shape {
            expected: actual.len(),
            got: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::Parameter("accuracy of an empty sequence is undefined".into()));
    }
    let hits = predicted.iter().zip(actual).filter(|(p, a)| p == a).count();
    Ok(hits as f64 / actual.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YearAccuracy {
    pub accuracy: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerYearAccuracy {
    pub years: BTreeMap<i32, YearAccuracy>,
    /// Highest accuracy; the earliest year wins ties.
    pub best_year: Option<i32>,
    /// Lowest accuracy; the earliest year wins ties.
    pub worst_year: Option<i32>,
}

pub fn per_year_accuracy(predicted: &[Direction], actual: &[Direction], dates: &[NaiveDate]) -> Result<PerYearAccuracy> {
    if predicted.len() != actual.len() || dates.len() != actual.len() {
        return Err(Error::Shape {
            expected: actual.len(),
            got: if predicted.len() != actual.len() { predicted.len() } else { dates.len() },
        });
    }
    let mut counts: BTreeMap<i32, (usize, usize)> = BTreeMap::new();
    for ((p, a), d) in predicted.iter().zip(actual).zip(dates) {
        let entry = counts.entry(d.year()).or_default();
        entry.0 += usize::from(p == a);
        entry.1 += 1;
    }
    let years: BTreeMap<i32, YearAccuracy> = counts
        .into_iter()
        .map(|(y, (hits, n))| {
            (
                y,
                YearAccuracy {
                    accuracy: hits as f64 / n as f64,
                    n,
                },
            )
        })
        .collect();
    let mut best: Option<(i32, f64)> = None;
    let mut worst: Option<(i32, f64)> = None;
    for (&y, ya) in &years {
        if best.is_none_or(|(_, a)| ya.accuracy > a) {
            best = Some((y, ya.accuracy));
        }
        if worst.is_none_or(|(_, a)| ya.accuracy < a) {
            worst = Some((y, ya.accuracy));
        }
    }
    Ok(PerYearAccuracy {
        years,
        best_year: best.map(|b| b.0),
        worst_year: worst.map(|w| w.0),
    })
}

/// Residual RMS of the sigmoid confidences against 0/1 targets (Up = 1),
/// divided by the RMS of the targets.
pub fn relative_rms(confidences: &[f64], actual: &[Direction]) -> Result<f64> {
    if confidences.len() != actual.len() {
        return Err(Error::Shape {
            expected: actual.len(),
            got: confidences.len(),
        });
    }
    let targets: Vec<f64> = actual
        .iter()
        .map(|d| if *d == Direction::Up { 1.0 } else { 0.0 })
        .collect();
    let n = targets.len() as f64;
    let denom = (targets.iter().map(|t| t * t).sum::<f64>() / n).sqrt();
    if !(denom > 0.0) {
        return Err(Error::DegenerateDenominator);
    }
    let num = (confidences
        .iter()
        .zip(&targets)
        .map(|(c, t)| (c - t) * (c - t))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(num / denom)
}

/// Counts with Up as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn from_pairs(predicted: &[Direction], actual: &[Direction]) -> Self {
        let mut c = Confusion::default();
        for (p, a) in predicted.iter().zip(actual) {
            match (p, a) {
                (Direction::Up, Direction::Up) => c.tp += 1,
                (Direction::Down, Direction::Down) => c.tn += 1,
                (Direction::Up, Direction::Down) => c.fp += 1,
                (Direction::Down, Direction::Up) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Which rows were scored (`train`, `holdout`, ...).
    pub split: String,
    pub n: usize,
    pub accuracy: f64,
    pub per_year: PerYearAccuracy,
    /// `None` when every scored target is Down.
    pub relative_rms: Option<f64>,
    pub confusion: Confusion,
}

/// Scores `model` on the dataset rows at `indices` (raw features; the
/// model applies its own scaling).
pub fn evaluate(model: &FsvmModel, dataset: &Dataset, indices: &[usize], split: &str) -> Result<EvalReport> {
    let mut predicted = Vec::with_capacity(indices.len());
    let mut confidences = Vec::with_capacity(indices.len());
    let mut actual = Vec::with_capacity(indices.len());
    let mut dates = Vec::with_capacity(indices.len());
    for &i in indices {
        let ex = &dataset.examples[i];
        let p = model.predict_raw(&ex.features)?;
        predicted.push(p.direction);
        confidences.push(p.confidence);
        actual.push(ex.label);
        dates.push(ex.date);
    }
    let relative_rms = match relative_rms(&confidences, &actual) {
        Ok(v) => Some(v),
        Err(Error::DegenerateDenominator) => None,
        Err(e) => return Err(e),
    };
    Ok(EvalReport {
        split: split.to_string(),
        n: indices.len(),
        accuracy: directional_accuracy(&predicted, &actual)?,
        per_year: per_year_accuracy(&predicted, &actual, &dates)?,
        relative_rms,
        confusion: Confusion::from_pairs(&predicted, &actual),
    })
}

/// Fits scaling on `train` rows only, trains, and attaches the scaling to
/// the model. Rows are used in index order.
pub fn fit_model(dataset: &Dataset, train: &[usize], config: &TrainConfig, norm: NormMethod) -> Result<FsvmModel> {
    let stats = fit_normalizer(&dataset.examples, train, norm)?;
    let (raw, labels) = dataset.rows(train);
    let features = apply_normalizer(&stats, &raw)?;
    Ok(train_fsvm(&features, &labels, config)?.with_norm_stats(stats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub config: TrainConfig,
    pub train_accuracy: f64,
    pub holdout_accuracy: f64,
    pub mean: f64,
    pub support_vectors: usize,
    pub max_kkt_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub family: String,
    pub rows: Vec<GridRow>,
    pub best: usize,
}

/// Ranking order: higher mean first, then smaller C, then smaller gamma,
/// then grid position.
fn rank_order(rows: &[GridRow], a: usize, b: usize) -> Ordering {
    let (ra, rb) = (&rows[a], &rows[b]);
    rb.mean
        .total_cmp(&ra.mean)
        .then(ra.config.c.total_cmp(&rb.config.c))
        .then(
            ra.config
                .gamma()
                .unwrap_or(0.0)
                .total_cmp(&rb.config.gamma().unwrap_or(0.0)),
        )
        .then(a.cmp(&b))
}

impl GridResult {
    pub fn from_rows(family: &str, rows: Vec<GridRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Parameter("grid is empty".into()));
        }
        let best = (0..rows.len())
            .min_by(|&a, &b| rank_order(&rows, a, b))
            .expect("non-empty");
        Ok(Self {
            family: family.to_string(),
            rows,
            best,
        })
    }

    pub fn best_row(&self) -> &GridRow {
        &self.rows[self.best]
    }

    /// Row indices of the `k` best configurations, best first.
    pub fn top(&self, k: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.rows.len()).collect();
        order.sort_by(|&a, &b| rank_order(&self.rows, a, b));
        order.truncate(k);
        order
    }

    /// One row per configuration.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "family",
            "rank",
            "C",
            "kernel",
            "gamma",
            "membership",
            "floor",
            "train_accuracy",
            "holdout_accuracy",
            "mean",
            "support_vectors",
            "max_kkt_violation",
        ])?;
        let mut rank = vec![0; self.rows.len()];
        for (r, i) in self.top(self.rows.len()).into_iter().enumerate() {
            rank[i] = r + 1;
        }
        for (i, row) in self.rows.iter().enumerate() {
            w.write_record([
                self.family.clone(),
                rank[i].to_string(),
                row.config.c.to_string(),
                row.config.kernel.kind.clone(),
                row.config.gamma().map(|g| g.to_string()).unwrap_or_default(),
                row.config.membership.kind.clone(),
                row.config.membership.floor.to_string(),
                row.train_accuracy.to_string(),
                row.holdout_accuracy.to_string(),
                row.mean.to_string(),
                row.support_vectors.to_string(),
                row.max_kkt_violation.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if jobs > 0 {
        builder = builder.num_threads(jobs);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Trains every grid config on the parameter-stage train rows and scores
/// both parameter-stage subsets. Rows come back in grid order whatever the
/// completion order; `jobs = 0` uses every core.
pub fn run_parameter_stage(
    dataset: &Dataset,
    plan: &SplitPlan,
    family: &str,
    grid: &[TrainConfig],
    norm: NormMethod,
    jobs: usize,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::Parameter("grid is empty".into()));
    }
    if plan.parameter_train.is_empty() || plan.parameter_holdout.is_empty() {
        return Err(Error::Parameter(
            "parameter stage needs non-empty train and holdout subsets".into(),
        ));
    }
    let rows = with_pool(jobs, || {
        grid.par_iter()
            .map(|config| {
                let model = fit_model(dataset, &plan.parameter_train, config, norm)?;
                let train = evaluate(&model, dataset, &plan.parameter_train, "parameter_train")?;
                let holdout = evaluate(&model, dataset, &plan.parameter_holdout, "parameter_holdout")?;
                Ok(GridRow {
                    config: config.clone(),
                    train_accuracy: train.accuracy,
                    holdout_accuracy: holdout.accuracy,
                    mean: 0.5 * (train.accuracy + holdout.accuracy),
                    support_vectors: model.alphas.len(),
                    max_kkt_violation: model.diagnostics.max_kkt_violation,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    GridResult::from_rows(family, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub name: String,
    pub config: TrainConfig,
    pub train: EvalReport,
    pub holdout: EvalReport,
    pub support_vectors: usize,
    pub max_kkt_violation: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub a: ModelReport,
    pub b: ModelReport,
    /// Holdout accuracy of `a` minus that of `b`.
    pub accuracy_difference: f64,
}

impl ComparisonReport {
    /// `model,split,year,n,accuracy`, one row per model and year.
    pub fn write_per_year_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["model", "split", "year", "n", "accuracy"])?;
        for m in [&self.a, &self.b] {
            for (year, ya) in &m.holdout.per_year.years {
                w.write_record([
                    m.name.clone(),
                    m.holdout.split.clone(),
                    year.to_string(),
                    ya.n.to_string(),
                    ya.accuracy.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// `year accuracy` pairs, whitespace separated, for plotting.
pub fn write_accuracy_by_year<W: Write>(report: &EvalReport, mut out: W) -> Result<()> {
    let io = |e| Error::io("<dat>", e);
    writeln!(out, "# year accuracy").map_err(io)?;
    for (year, ya) in &report.per_year.years {
        writeln!(out, "{year} {}", ya.accuracy).map_err(io)?;
    }
    Ok(())
}

pub struct ComparisonOutcome {
    pub report: ComparisonReport,
    pub model_a: FsvmModel,
    pub model_b: FsvmModel,
}

fn model_report(name: &str, model: &FsvmModel, config: &TrainConfig, dataset: &Dataset, plan: &SplitPlan) -> Result<ModelReport> {
    Ok(ModelReport {
        name: name.to_string(),
        config: config.clone(),
        train: evaluate(model, dataset, &plan.train_set, "train")?,
        holdout: evaluate(model, dataset, &plan.holdout_set, "holdout")?,
        support_vectors: model.alphas.len(),
        max_kkt_violation: model.diagnostics.max_kkt_violation,
        converged: model.diagnostics.converged,
    })
}

/// Retrains both configs on the comparison train set and scores the
/// comparison holdout.
pub fn run_comparison_stage(
    dataset: &Dataset,
    plan: &SplitPlan,
    a: (&str, &TrainConfig),
    b: (&str, &TrainConfig),
    norm: NormMethod,
) -> Result<ComparisonOutcome> {
    if plan.train_set.is_empty() || plan.holdout_set.is_empty() {
        return Err(Error::Parameter("comparison needs non-empty train and holdout sets".into()));
    }
    let (model_a, model_b) = rayon::join(
        || fit_model(dataset, &plan.train_set, a.1, norm),
        || fit_model(dataset, &plan.train_set, b.1, norm),
    );
    let (model_a, model_b) = (model_a?, model_b?);
    let ra = model_report(a.0, &model_a, a.1, dataset, plan)?;
    let rb = model_report(b.0, &model_b, b.1, dataset, plan)?;
    Ok(ComparisonOutcome {
        report: ComparisonReport {
            accuracy_difference: ra.holdout.accuracy - rb.holdout.accuracy,
            a: ra,
            b: rb,
        },
        model_a,
        model_b,
    })
}
