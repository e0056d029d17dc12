//! Direction labels, stratified splits, and train-only feature scaling.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::FeatureMatrix;
use crate::market_data::PriceSeries;

/// Next-day movement of the close.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Up => 1.0,
            Direction::Down => -1.0,
        }
    }

    pub fn from_value(v: f64) -> Self {
        if v >= 0.0 {
            Direction::Up
        } else {
            Direction::Down
        }
    }
}

impl From<Direction> for i8 {
    fn from(d: Direction) -> i8 {
        match d {
            Direction::Up => 1,
            Direction::Down => -1,
        }
    }
}

impl TryFrom<i8> for Direction {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Direction::Up),
            -1 => Ok(Direction::Down),
            other => Err(format!("direction must be 1 or -1, got {other}")),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", i8::from(*self))
    }
}

/// How an unchanged close is labeled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieRule {
    #[default]
    Down,
    Up,
}

impl FromStr for TieRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "down" => Ok(TieRule::Down),
            "up" => Ok(TieRule::Up),
            other => Err(Error::Config(format!("tie rule must be `down` or `up`, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub date: NaiveDate,
    pub features: Vec<f64>,
    pub label: Direction,
}

impl LabeledExample {
    pub fn year(&self) -> i32 {
        self.date.year()
    }
}

/// Labels each VALID bar by comparing the next valid close with its own.
/// The last valid bar has no successor and gets no label.
pub fn label_direction(series: &PriceSeries, tie: TieRule) -> Result<Vec<(NaiveDate, Direction)>> {
    let bars = series.valid_bars();
    if bars.len() < 2 {
        return Err(Error::Parameter(format!(
            "labeling needs at least 2 valid bars, have {}",
            bars.len()
        )));
    }
    Ok(bars
        .windows(2)
        .map(|w| {
            let dir = if w[1].close > w[0].close {
                Direction::Up
            } else if w[1].close < w[0].close {
                Direction::Down
            } else {
                match tie {
                    TieRule::Down => Direction::Down,
                    TieRule::Up => Direction::Up,
                }
            };
            (w[0].date, dir)
        })
        .collect())
}

/// Feature rows joined with their direction labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub examples: Vec<LabeledExample>,
}

impl Dataset {
    /// Keeps feature rows that have a label (drops the final day).
    pub fn from_features(matrix: &FeatureMatrix, labels: &[(NaiveDate, Direction)]) -> Self {
        let by_date: HashMap<NaiveDate, Direction> = labels.iter().copied().collect();
        let examples = matrix
            .dates
            .iter()
            .zip(&matrix.values)
            .filter_map(|(date, row)| {
                by_date.get(date).map(|&label| LabeledExample {
                    date: *date,
                    features: row.clone(),
                    label,
                })
            })
            .collect();
        Self {
            columns: matrix.column_names(),
            examples,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn rows(&self, indices: &[usize]) -> (Vec<Vec<f64>>, Vec<Direction>) {
        indices
            .iter()
            .map(|&i| (self.examples[i].features.clone(), self.examples[i].label))
            .unzip()
    }

    /// `date,<features...>,label[,split]`; the split column is written
    /// when a plan is given.
    pub fn write_csv<W: Write>(&self, out: W, plan: Option<&SplitPlan>) -> Result<()> {
        let roles = plan.map(|p| p.roles(self.len()));
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string()];
        header.extend(self.columns.iter().cloned());
        header.push("label".into());
        if roles.is_some() {
            header.push("split".into());
        }
        w.write_record(&header)?;
        for (i, ex) in self.examples.iter().enumerate() {
            let mut rec = vec![ex.date.format("%Y-%m-%d").to_string()];
            rec.extend(ex.features.iter().map(f64::to_string));
            rec.push(ex.label.to_string());
            if let Some(roles) = &roles {
                rec.push(roles[i].map_or("", |r| r.as_str()).to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(source);
        let header = reader.headers()?.clone();
        let label_at = header
            .iter()
            .position(|h| h == "label")
            .ok_or_else(|| Error::Parse {
                row: 1,
                message: "missing `label` column".into(),
            })?;
        if header.get(0) != Some("date") || label_at < 2 {
            return Err(Error::Parse {
                row: 1,
                message: "expected `date,<features...>,label`".into(),
            });
        }
        let columns = header.iter().skip(1).take(label_at - 1).map(String::from).collect();
        let mut examples = Vec::new();
        for record in reader.records() {
            let record = record?;
            let row = record.position().map_or(0, |p| p.line() as usize);
            let bad = |message: String| Error::Parse { row, message };
            let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
                .map_err(|e| bad(format!("date `{}`: {e}", &record[0])))?;
            let features = (1..label_at)
                .map(|j| {
                    record[j]
                        .parse::<f64>()
                        .map_err(|_| bad(format!("feature `{}` is not a number", &record[j])))
                })
                .collect::<Result<Vec<_>>>()?;
            let label = record[label_at]
                .parse::<i8>()
                .ok()
                .and_then(|v| Direction::try_from(v).ok())
                .ok_or_else(|| bad(format!("label `{}` is not 1 or -1", &record[label_at])))?;
            examples.push(LabeledExample { date, features, label });
        }
        Ok(Self { columns, examples })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRole {
    Param,
    Train,
    Holdout,
}

impl SplitRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitRole::Param => "param",
            SplitRole::Train => "train",
            SplitRole::Holdout => "holdout",
        }
    }
}

/// How the comparison train/holdout sets are drawn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Per-year, per-class proportional random sampling.
    #[default]
    Stratified,
    /// Earlier dates train, later dates hold out.
    Chronological,
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "stratified" => Ok(SplitMode::Stratified),
            "chronological" => Ok(SplitMode::Chronological),
            other => Err(Error::Config(format!(
                "split mode must be `stratified` or `chronological`, got `{other}`"
            ))),
        }
    }
}

/// Whether the comparison sets exclude the parameter-setting subset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Overlap {
    #[default]
    Disjoint,
    Reuse,
}

impl FromStr for Overlap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "disjoint" => Ok(Overlap::Disjoint),
            "reuse" => Ok(Overlap::Reuse),
            other => Err(Error::Config(format!(
                "overlap must be `disjoint` or `reuse`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    /// Share of each (year, class) cell drawn into the parameter subset.
    pub parameter: f64,
    /// Share of the parameter subset used for training in that stage.
    pub parameter_train: f64,
    /// Share of the comparison pool used for training.
    pub train: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            parameter: 0.10,
            parameter_train: 0.5,
            train: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    pub fractions: SplitFractions,
    pub mode: SplitMode,
    pub overlap: Overlap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumCount {
    pub year: i32,
    pub label: Direction,
    pub total: usize,
    pub parameter: usize,
    /// Set when the cell had fewer than 2 examples and contributed nothing.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub too_small: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub fractions: SplitFractions,
    pub mode: SplitMode,
    pub overlap: Overlap,
    pub parameter_set: Vec<usize>,
    pub parameter_train: Vec<usize>,
    pub parameter_holdout: Vec<usize>,
    pub train_set: Vec<usize>,
    pub holdout_set: Vec<usize>,
    pub strata: Vec<StratumCount>,
}

impl SplitPlan {
    /// Role of each example; comparison roles win over `param` when the
    /// plan reuses the parameter subset.
    pub fn roles(&self, n: usize) -> Vec<Option<SplitRole>> {
        let mut roles = vec![None; n];
        for &i in &self.parameter_set {
            roles[i] = Some(SplitRole::Param);
        }
        for &i in &self.train_set {
            roles[i] = Some(SplitRole::Train);
        }
        for &i in &self.holdout_set {
            roles[i] = Some(SplitRole::Holdout);
        }
        roles
    }

    pub fn stratum(&self, year: i32, label: Direction) -> Option<&StratumCount> {
        self.strata.iter().find(|s| s.year == year && s.label == label)
    }
}

fn check_fraction(name: &str, f: f64) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} fraction must lie in (0, 1), got {f}")))
    }
}

/// Groups indices by (year, class), Up before Down within each year.
fn cells(examples: &[LabeledExample], indices: &[usize]) -> BTreeMap<(i32, Direction), Vec<usize>> {
    let mut out: BTreeMap<(i32, Direction), Vec<usize>> = BTreeMap::new();
    for &i in indices {
        let ex = &examples[i];
        out.entry((ex.year(), ex.label)).or_default().push(i);
    }
    for v in out.values_mut() {
        v.sort_unstable();
    }
    out
}

/// Draws `k` members of `pool` uniformly without replacement; returns
/// (chosen, rest), both sorted.
fn draw(pool: &[usize], k: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut shuffled = pool.to_vec();
    shuffled.shuffle(rng);
    let mut chosen = shuffled[..k].to_vec();
    let mut rest = shuffled[k..].to_vec();
    chosen.sort_unstable();
    rest.sort_unstable();
    (chosen, rest)
}

/// Train/holdout by cell, keeping at least one holdout example in every
/// non-empty cell.
fn stratified_partition(
    examples: &[LabeledExample],
    pool: &[usize],
    train_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut holdout = Vec::new();
    for members in cells(examples, pool).values() {
        let n = members.len();
        let k = ((train_fraction * n as f64).round() as usize).min(n.saturating_sub(1));
        let (t, h) = draw(members, k, rng);
        train.extend(t);
        holdout.extend(h);
    }
    train.sort_unstable();
    holdout.sort_unstable();
    (train, holdout)
}

fn chronological_partition(examples: &[LabeledExample], pool: &[usize], train_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let mut ordered = pool.to_vec();
    ordered.sort_by_key(|&i| (examples[i].date, i));
    let n = ordered.len();
    let k = ((train_fraction * n as f64).round() as usize).min(n.saturating_sub(1));
    let mut train = ordered[..k].to_vec();
    let mut holdout = ordered[k..].to_vec();
    train.sort_unstable();
    holdout.sort_unstable();
    (train, holdout)
}

fn partition(
    examples: &[LabeledExample],
    pool: &[usize],
    train_fraction: f64,
    mode: SplitMode,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    match mode {
        SplitMode::Stratified => stratified_partition(examples, pool, train_fraction, rng),
        SplitMode::Chronological => chronological_partition(examples, pool, train_fraction),
    }
}

/// Full two-stage plan: a stratified parameter-setting subset (itself cut
/// into train/holdout) plus the comparison train/holdout sets.
pub fn split(examples: &[LabeledExample], options: &SplitOptions, seed: u64) -> Result<SplitPlan> {
    let f = options.fractions;
    check_fraction("parameter", f.parameter)?;
    check_fraction("parameter-stage train", f.parameter_train)?;
    check_fraction("train", f.train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let all: Vec<usize> = (0..examples.len()).collect();
    let mut parameter_set = Vec::new();
    let mut remainder = Vec::new();
    let mut strata = Vec::new();
    for (&(year, label), members) in &cells(examples, &all) {
        let too_small = members.len() < 2;
        let k = if too_small {
            0
        } else {
            (f.parameter * members.len() as f64).floor() as usize
        };
        let (chosen, rest) = draw(members, k, &mut rng);
        strata.push(StratumCount {
            year,
            label,
            total: members.len(),
            parameter: chosen.len(),
            too_small,
        });
        parameter_set.extend(chosen);
        remainder.extend(rest);
    }
    parameter_set.sort_unstable();
    remainder.sort_unstable();

    let (parameter_train, parameter_holdout) =
        partition(examples, &parameter_set, f.parameter_train, options.mode, &mut rng);
    let pool = match options.overlap {
        Overlap::Disjoint => remainder,
        Overlap::Reuse => all,
    };
    let (train_set, holdout_set) = partition(examples, &pool, f.train, options.mode, &mut rng);

    Ok(SplitPlan {
        seed,
        fractions: f,
        mode: options.mode,
        overlap: options.overlap,
        parameter_set,
        parameter_train,
        parameter_holdout,
        train_set,
        holdout_set,
        strata,
    })
}

/// Stratified parameter-setting subset with default sub-fractions and
/// disjoint comparison sets.
pub fn stratified_parameter_split(examples: &[LabeledExample], fraction: f64, seed: u64) -> Result<SplitPlan> {
    let options = SplitOptions {
        fractions: SplitFractions {
            parameter: fraction,
            ..SplitFractions::default()
        },
        ..SplitOptions::default()
    };
    split(examples, &options, seed)
}

/// Train/holdout over all examples, proportional within each (year, class)
/// cell. The parameter subset is left empty.
pub fn comparison_split(examples: &[LabeledExample], train_fraction: f64, seed: u64) -> Result<SplitPlan> {
    check_fraction("train", train_fraction)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..examples.len()).collect();
    let (train_set, holdout_set) = stratified_partition(examples, &all, train_fraction, &mut rng);
    Ok(SplitPlan {
        seed,
        fractions: SplitFractions {
            train: train_fraction,
            ..SplitFractions::default()
        },
        mode: SplitMode::Stratified,
        overlap: Overlap::Reuse,
        parameter_set: Vec::new(),
        parameter_train: Vec::new(),
        parameter_holdout: Vec::new(),
        train_set,
        holdout_set,
        strata: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMethod {
    #[default]
    MinMax,
    ZScore,
}

impl FromStr for NormMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "minmax" => Ok(NormMethod::MinMax),
            "zscore" => Ok(NormMethod::ZScore),
            other => Err(Error::Config(format!(
                "normalization must be `minmax` or `zscore`, got `{other}`"
            ))),
        }
    }
}

/// Per-column affine scaling, `(x - location) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub method: NormMethod,
    pub location: Vec<f64>,
    pub scale: Vec<f64>,
}

impl NormStats {
    pub fn identity(dim: usize) -> Self {
        Self {
            method: NormMethod::MinMax,
            location: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.location.len()
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                got: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(self.location.iter().zip(&self.scale))
            .map(|(x, (loc, sc))| (x - loc) / sc)
            .collect())
    }

    pub fn invert(&self, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        features
            .iter()
            .map(|row| {
                if row.len() != self.dim() {
                    return Err(Error::Shape {
                        expected: self.dim(),
                        got: row.len(),
                    });
                }
                Ok(row
                    .iter()
                    .zip(self.location.iter().zip(&self.scale))
                    .map(|(x, (loc, sc))| x * sc + loc)
                    .collect())
            })
            .collect()
    }
}

/// Fits scaling statistics from the rows at `indices` only.
pub fn fit_normalizer(examples: &[LabeledExample], indices: &[usize], method: NormMethod) -> Result<NormStats> {
    let Some(&first) = indices.first() else {
        return Err(Error::Parameter("normalizer needs at least one training row".into()));
    };
    let dim = examples[first].features.len();
    let mut location = Vec::with_capacity(dim);
    let mut scale = Vec::with_capacity(dim);
    for j in 0..dim {
        let col: Vec<f64> = indices.iter().map(|&i| examples[i].features[j]).collect();
        let (loc, sc) = match method {
            NormMethod::MinMax => {
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi - lo)
            }
            NormMethod::ZScore => {
                let n = col.len() as f64;
                let mean = col.iter().sum::<f64>() / n;
                let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                (mean, var.sqrt())
            }
        };
        if !(sc > 1e-12 * loc.abs().max(1.0)) {
            return Err(Error::DegenerateFeature {
                column: format!("feature {j}"),
            });
        }
        location.push(loc);
        scale.push(sc);
    }
    Ok(NormStats { method, location, scale })
}

pub fn apply_normalizer(stats: &NormStats, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    features.iter().map(|row| stats.apply_row(row)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::OhlcvBar;

    fn series(closes: &[f64]) -> PriceSeries {
        let d0 = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
        let bars = closes
            .iter()
            .enumerate()
            .map(|(i, &c)| OhlcvBar {
                date: d0 + chrono::Days::new(i as u64),
                open: c,
                high: c,
                low: c,
                close: c,
                volume: 0,
                adj_close: None,
            })
            .collect();
        PriceSeries::new("T", bars).unwrap()
    }

    fn labels_of(closes: &[f64], tie: TieRule) -> Vec<Direction> {
        label_direction(&series(closes), tie)
            .unwrap()
            .into_iter()
            .map(|(_, d)| d)
            .collect()
    }

    fn example(year: i32, day: u32, label: Direction, x: f64) -> LabeledExample {
        LabeledExample {
            date: NaiveDate::from_yo_opt(year, day).unwrap(),
            features: vec![x, -x],
            label,
        }
    }

    #[test]
    fn labeling_examples() {
        use Direction::*;
        assert_eq!(labels_of(&[1.0, 2.0, 3.0], TieRule::Down), vec![Up, Up]);
        assert_eq!(labels_of(&[5.0, 5.0], TieRule::Down), vec![Down]);
        assert_eq!(labels_of(&[5.0, 5.0], TieRule::Up), vec![Up]);
        assert_eq!(labels_of(&[3.0, 1.0], TieRule::Down), vec![Down]);
        assert!(label_direction(&series(&[1.0]), TieRule::Down).is_err());
    }

    #[test]
    fn direction_serializes_as_sign() {
        assert_eq!(serde_json::to_string(&Direction::Down).unwrap(), "-1");
        assert_eq!(serde_json::from_str::<Direction>("1").unwrap(), Direction::Up);
        assert!(serde_json::from_str::<Direction>("0").is_err());
    }

    #[test]
    fn parameter_counts_per_year_class() {
        // 250 increases, 190 decreases in 1950 -> 25 / 19 at 10%
        let mut ex = Vec::new();
        for i in 0..440u32 {
            let label = if i < 250 { Direction::Up } else { Direction::Down };
            let date = NaiveDate::from_ymd_opt(1950, 1, 1).unwrap() + chrono::Days::new(i as u64 % 365);
            ex.push(LabeledExample {
                date: if i < 365 { date } else { NaiveDate::from_ymd_opt(1950, 12, 31).unwrap() },
                features: vec![i as f64],
                label,
            });
        }
        let plan = stratified_parameter_split(&ex, 0.10, 7).unwrap();
        assert_eq!(plan.stratum(1950, Direction::Up).unwrap().parameter, 25);
        assert_eq!(plan.stratum(1950, Direction::Down).unwrap().parameter, 19);
        assert_eq!(plan.parameter_set.len(), 44);
    }

    #[test]
    fn tiny_fraction_leaves_parameter_set_empty() {
        let ex: Vec<_> = (1..=20)
            .map(|d| example(2001, d, if d % 2 == 0 { Direction::Up } else { Direction::Down }, d as f64))
            .collect();
        let plan = stratified_parameter_split(&ex, 0.01, 1).unwrap();
        assert!(plan.parameter_set.is_empty());
        assert_eq!(plan.train_set.len() + plan.holdout_set.len(), 20);
    }

    #[test]
    fn singleton_cell_contributes_nothing() {
        let mut ex: Vec<_> = (1..=30).map(|d| example(2001, d, Direction::Up, d as f64)).collect();
        ex.push(example(2001, 40, Direction::Down, 0.0));
        let plan = stratified_parameter_split(&ex, 0.5, 3).unwrap();
        let down = plan.stratum(2001, Direction::Down).unwrap();
        assert!(down.too_small);
        assert_eq!(down.parameter, 0);
        assert_eq!(plan.stratum(2001, Direction::Up).unwrap().parameter, 15);
    }

    #[test]
    fn balanced_four_example_comparison() {
        use Direction::*;
        let ex = vec![
            example(2003, 1, Up, 1.0),
            example(2003, 2, Down, 2.0),
            example(2003, 3, Up, 3.0),
            example(2003, 4, Down, 4.0),
        ];
        let plan = comparison_split(&ex, 0.5, 11).unwrap();
        assert_eq!(plan.train_set.len(), 2);
        assert_eq!(plan.holdout_set.len(), 2);
        for set in [&plan.train_set, &plan.holdout_set] {
            let ups = set.iter().filter(|&&i| ex[i].label == Up).count();
            assert_eq!(ups, 1);
        }
    }

    #[test]
    fn near_one_train_fraction_keeps_holdout() {
        let ex: Vec<_> = (1..=9)
            .map(|d| example(2004, d, if d < 5 { Direction::Up } else { Direction::Down }, d as f64))
            .collect();
        let plan = comparison_split(&ex, 0.999, 2).unwrap();
        assert_eq!(plan.holdout_set.len(), 2);
        assert!(comparison_split(&ex, 1.0, 2).is_err());
        assert!(comparison_split(&ex, 0.0, 2).is_err());
    }

    #[test]
    fn chronological_mode_trains_on_earlier_dates() {
        let ex: Vec<_> = (1..=100)
            .map(|d| example(2005, d, if d % 3 == 0 { Direction::Up } else { Direction::Down }, d as f64))
            .collect();
        let options = SplitOptions {
            mode: SplitMode::Chronological,
            ..SplitOptions::default()
        };
        let plan = split(&ex, &options, 5).unwrap();
        let last_train = plan.train_set.iter().map(|&i| ex[i].date).max().unwrap();
        let first_hold = plan.holdout_set.iter().map(|&i| ex[i].date).min().unwrap();
        assert!(last_train < first_hold);
    }

    #[test]
    fn reuse_mode_covers_everything() {
        let ex: Vec<_> = (1..=60)
            .map(|d| example(2006, d, if d % 2 == 0 { Direction::Up } else { Direction::Down }, d as f64))
            .collect();
        let options = SplitOptions {
            overlap: Overlap::Reuse,
            ..SplitOptions::default()
        };
        let plan = split(&ex, &options, 9).unwrap();
        assert_eq!(plan.train_set.len() + plan.holdout_set.len(), 60);
        assert!(!plan.parameter_set.is_empty());
        assert!(plan.train_set.len() > plan.parameter_train.len());
    }

    #[test]
    fn minmax_fit_examples() {
        let ex = vec![example(2000, 1, Direction::Up, 0.0), example(2000, 2, Direction::Down, 10.0)];
        let stats = fit_normalizer(&ex, &[0, 1], NormMethod::MinMax).unwrap();
        assert_eq!(stats.location[0], 0.0);
        assert_eq!(stats.scale[0], 10.0);
        let feats: Vec<_> = ex.iter().map(|e| e.features.clone()).collect();
        let normed = apply_normalizer(&stats, &feats).unwrap();
        assert_eq!(normed[0], vec![0.0, 1.0]);
        assert_eq!(normed[1], vec![1.0, 0.0]);
    }

    #[test]
    fn zscore_refit_is_idempotent() {
        let ex: Vec<_> = (1..=7)
            .map(|d| example(2000, d, Direction::Up, (d * d) as f64))
            .collect();
        let idx: Vec<usize> = (0..7).collect();
        let stats = fit_normalizer(&ex, &idx, NormMethod::ZScore).unwrap();
        let feats: Vec<_> = ex.iter().map(|e| e.features.clone()).collect();
        let normed = apply_normalizer(&stats, &feats).unwrap();
        let re: Vec<_> = ex
            .iter()
            .zip(normed)
            .map(|(e, f)| LabeledExample { features: f, ..e.clone() })
            .collect();
        let again = fit_normalizer(&re, &idx, NormMethod::ZScore).unwrap();
        for j in 0..2 {
            assert!(again.location[j].abs() < 1e-12);
            assert!((again.scale[j] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_column_rejected() {
        let ex = vec![example(2000, 1, Direction::Up, 3.0), example(2000, 2, Direction::Up, 3.0)];
        let err = fit_normalizer(&ex, &[0, 1], NormMethod::MinMax).unwrap_err();
        assert!(matches!(err, Error::DegenerateFeature { ref column } if column == "feature 0"));
        assert!(fit_normalizer(&ex, &[0, 1], NormMethod::ZScore).is_err());
        assert!(fit_normalizer(&ex, &[], NormMethod::ZScore).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let stats = NormStats::identity(3);
        assert!(matches!(
            apply_normalizer(&stats, &[vec![1.0, 2.0]]),
            Err(Error::Shape { expected: 3, got: 2 })
        ));
        let m = vec![vec![1.0, 2.0, 3.0]];
        assert_eq!(apply_normalizer(&stats, &m).unwrap(), m);
    }

    #[test]
    fn dataset_csv_round_trip() {
        let ds = Dataset {
            columns: vec!["a_1".into(), "b_2".into()],
            examples: vec![example(2000, 1, Direction::Up, 0.1), example(2000, 2, Direction::Down, -2.5)],
        };
        let mut buf = Vec::new();
        ds.write_csv(&mut buf, None).unwrap();
        assert_eq!(Dataset::read_csv(buf.as_slice()).unwrap(), ds);

        let plan = comparison_split(&ds.examples, 0.5, 1).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf, Some(&plan)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().ends_with(",label,split"));
        assert_eq!(Dataset::read_csv(buf.as_slice()).unwrap(), ds);
    }
}
