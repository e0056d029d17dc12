//! Run configuration: flat `key = value` lines with `#` comments.
//!
//! Every key can also be set from the command line; later sources win.
//! The config hash covers every key that affects numeric output, with the
//! input file contributing its content digest rather than its path.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::dataset::{NormMethod, Overlap, SplitFractions, SplitMode, SplitOptions, TieRule};
use crate::error::{Error, Result};
use crate::fsvm::{family, GridAxes, SolverSettings, TrainConfig};
use crate::indicators::{default_specs, parse_spec_list, IndicatorSpec};
use crate::market_data::DEFAULT_DATE_FORMAT;

/// Which stages `full` runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum RunMode {
    ParameterStage,
    Comparison,
    #[default]
    FullProtocol,
}

impl FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "parameter-stage" => Ok(RunMode::ParameterStage),
            "comparison" => Ok(RunMode::Comparison),
            "full-protocol" => Ok(RunMode::FullProtocol),
            other => Err(Error::Config(format!(
                "mode must be parameter-stage, comparison or full-protocol, got `{other}`"
            ))),
        }
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunMode::ParameterStage => "parameter-stage",
            RunMode::Comparison => "comparison",
            RunMode::FullProtocol => "full-protocol",
        })
    }
}

/// (key, help, hashed). Unhashed keys never change numeric output.
pub const KEYS: &[(&str, &str, bool)] = &[
    ("input", "OHLCV CSV file to read", true),
    ("date_format", "strftime format of the Date column", true),
    ("indicators", "comma-separated name:window[:k=v] list", true),
    ("tie_rule", "label for an unchanged close: down | up", true),
    ("param_fraction", "share of each (year, class) cell in the parameter subset", true),
    ("param_train_fraction", "train share inside the parameter subset", true),
    ("train_fraction", "train share of the comparison pool", true),
    ("split_mode", "stratified | chronological", true),
    ("overlap", "comparison sets vs parameter subset: disjoint | reuse", true),
    ("seed", "seed for splits and solver tie-breaks", true),
    ("norm", "feature scaling: minmax | zscore", true),
    ("tolerance", "SMO KKT tolerance", true),
    ("max_passes", "SMO iteration budget per training row", true),
    ("grid_c", "comma-separated C values", true),
    ("grid_gamma", "comma-separated rbf gamma values", true),
    ("grid_floor", "comma-separated membership floors", true),
    ("model_a", "first model family to compare", true),
    ("model_b", "second model family to compare", true),
    ("model", "family for `train`/`evaluate`", true),
    ("c", "C for `train` and comparison mode", true),
    ("gamma", "rbf gamma for `train` and comparison mode", true),
    ("floor", "membership floor for `train` and comparison mode", true),
    ("mode", "parameter-stage | comparison | full-protocol", true),
    ("out", "output directory", false),
    ("jobs", "concurrent grid trainings (0 = all cores)", false),
];

fn is_known(key: &str) -> bool {
    KEYS.iter().any(|(k, _, _)| *k == key)
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
        let key = k.trim().to_string();
        if !is_known(&key) {
            return Err(Error::Config(format!("line {}: unknown key `{key}`", lineno + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

fn parse_list(key: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("{key}: `{p}` is not a number")))
        })
        .collect()
}

fn parse_value<T: FromStr>(key: &str, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{s}`")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub date_format: String,
    pub indicators: Vec<IndicatorSpec>,
    pub tie_rule: TieRule,
    pub split: SplitOptions,
    pub seed: u64,
    pub norm: NormMethod,
    pub solver: SolverSettings,
    pub grid: GridAxes,
    pub model_a: String,
    pub model_b: String,
    pub model: String,
    pub c: Option<f64>,
    pub gamma: Option<f64>,
    pub floor: Option<f64>,
    pub mode: RunMode,
    pub out: PathBuf,
    pub jobs: usize,
    raw: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_pairs(&BTreeMap::new()).expect("defaults are valid")
    }
}

impl RunConfig {
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = pairs.keys().find(|k| !is_known(k)) {
            return Err(Error::Config(format!("unknown key `{k}`")));
        }
        let get = |k: &str| pairs.get(k).map(String::as_str);
        let seed = get("seed").map(|v| parse_value("seed", v)).transpose()?.unwrap_or(42);
        let defaults = SplitFractions::default();
        let fractions = SplitFractions {
            parameter: get("param_fraction")
                .map(|v| parse_value("param_fraction", v))
                .transpose()?
                .unwrap_or(defaults.parameter),
            parameter_train: get("param_train_fraction")
                .map(|v| parse_value("param_train_fraction", v))
                .transpose()?
                .unwrap_or(defaults.parameter_train),
            train: get("train_fraction")
                .map(|v| parse_value("train_fraction", v))
                .transpose()?
                .unwrap_or(defaults.train),
        };
        let solver = SolverSettings {
            tolerance: get("tolerance").map(|v| parse_value("tolerance", v)).transpose()?.unwrap_or(1e-3),
            max_passes: get("max_passes").map(|v| parse_value("max_passes", v)).transpose()?.unwrap_or(1000),
            seed,
        };
        let axes = GridAxes::default();
        let grid = GridAxes {
            c: get("grid_c").map(|v| parse_list("grid_c", v)).transpose()?.unwrap_or(axes.c),
            gamma: get("grid_gamma").map(|v| parse_list("grid_gamma", v)).transpose()?.unwrap_or(axes.gamma),
            floor: get("grid_floor").map(|v| parse_list("grid_floor", v)).transpose()?.unwrap_or(axes.floor),
        };
        let cfg = Self {
            input: get("input").map(PathBuf::from),
            date_format: get("date_format").unwrap_or(DEFAULT_DATE_FORMAT).to_string(),
            indicators: get("indicators").map(parse_spec_list).transpose()?.unwrap_or_else(default_specs),
            tie_rule: get("tie_rule").map(str::parse).transpose()?.unwrap_or_default(),
            split: SplitOptions {
                fractions,
                mode: get("split_mode").map(str::parse).transpose()?.unwrap_or_default(),
                overlap: get("overlap").map(str::parse::<Overlap>).transpose()?.unwrap_or_default(),
            },
            seed,
            norm: get("norm").map(str::parse).transpose()?.unwrap_or_default(),
            solver,
            grid,
            model_a: get("model_a").unwrap_or("na-fsvm").to_string(),
            model_b: get("model_b").unwrap_or("fsvm").to_string(),
            model: get("model").unwrap_or("na-fsvm").to_string(),
            c: get("c").map(|v| parse_value("c", v)).transpose()?,
            gamma: get("gamma").map(|v| parse_value("gamma", v)).transpose()?,
            floor: get("floor").map(|v| parse_value("floor", v)).transpose()?,
            mode: get("mode").map(str::parse).transpose()?.unwrap_or_default(),
            out: PathBuf::from(get("out").unwrap_or("out")),
            jobs: get("jobs").map(|v| parse_value("jobs", v)).transpose()?.unwrap_or(0),
            raw: pairs.clone(),
        };
        for name in [&cfg.model_a, &cfg.model_b, &cfg.model] {
            family(name).map_err(|e| Error::Config(e.to_string()))?;
        }
        if cfg.split.mode == SplitMode::Chronological && cfg.split.overlap == Overlap::Reuse {
            log::info!("chronological split with reuse: the parameter subset overlaps the comparison sets");
        }
        Ok(cfg)
    }

    /// Reads an optional config file and layers `overrides` on top.
    pub fn load(file: Option<&Path>, overrides: &BTreeMap<String, String>) -> Result<Self> {
        let mut pairs = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let mut pairs = parse_pairs(&text)?;
                // relative input paths resolve against the config file
                if let Some(input) = pairs.get_mut("input") {
                    let p = Path::new(input.as_str());
                    if p.is_relative() {
                        if let Some(dir) = path.parent() {
                            *input = dir.join(p).to_string_lossy().into_owned();
                        }
                    }
                }
                pairs
            }
            None => BTreeMap::new(),
        };
        pairs.extend(overrides.iter().map(|(k, v)| (k.clone(), v.clone())));
        Self::from_pairs(&pairs)
    }

    pub fn input_path(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| Error::Config("no input file given (set `input`)".into()))
    }

    pub fn grid_for(&self, family_name: &str) -> Result<Vec<TrainConfig>> {
        Ok(family(family_name)?.grid(&self.grid, &self.solver))
    }

    /// A single config for `family_name` from the `c`/`gamma`/`floor`
    /// keys, if `c` is set.
    pub fn fixed_config(&self, family_name: &str) -> Result<Option<TrainConfig>> {
        let Some(c) = self.c else {
            return Ok(None);
        };
        let gamma = self.gamma.unwrap_or(1.0);
        let floor = self.floor.unwrap_or(1.0);
        Ok(Some(family(family_name)?.config(c, gamma, floor, &self.solver)))
    }

    /// Short hex digest of the effective settings. The input contributes
    /// its content digest, so moving the file keeps the hash.
    pub fn hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        let canonical = self.canonical_pairs();
        for (k, v) in &canonical {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        if let Some(path) = &self.input {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            h.update(b"input_sha256=");
            h.update(Sha256::digest(&bytes));
        }
        Ok(hex::encode(&h.finalize()[..8]))
    }

    /// Every hashed key with its effective (default-filled) value.
    pub fn canonical_pairs(&self) -> BTreeMap<&'static str, String> {
        let join = |xs: &[f64]| xs.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mut m = BTreeMap::new();
        m.insert("date_format", self.date_format.clone());
        m.insert(
            "indicators",
            self.indicators.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
        );
        m.insert("tie_rule", format!("{:?}", self.tie_rule).to_lowercase());
        m.insert("param_fraction", self.split.fractions.parameter.to_string());
        m.insert("param_train_fraction", self.split.fractions.parameter_train.to_string());
        m.insert("train_fraction", self.split.fractions.train.to_string());
        m.insert("split_mode", format!("{:?}", self.split.mode).to_lowercase());
        m.insert("overlap", format!("{:?}", self.split.overlap).to_lowercase());
        m.insert("seed", self.seed.to_string());
        m.insert("norm", format!("{:?}", self.norm).to_lowercase());
        m.insert("tolerance", self.solver.tolerance.to_string());
        m.insert("max_passes", self.solver.max_passes.to_string());
        m.insert("grid_c", join(&self.grid.c));
        m.insert("grid_gamma", join(&self.grid.gamma));
        m.insert("grid_floor", join(&self.grid.floor));
        m.insert("model_a", self.model_a.clone());
        m.insert("model_b", self.model_b.clone());
        m.insert("model", self.model.clone());
        for (k, v) in [("c", self.c), ("gamma", self.gamma), ("floor", self.floor)] {
            m.insert(k, v.map(|x| x.to_string()).unwrap_or_default());
        }
        m.insert("mode", self.mode.to_string());
        m
    }

    /// Keys exactly as supplied.
    pub fn raw_pairs(&self) -> &BTreeMap<String, String> {
        &self.raw
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let p = parse_pairs("# experiment\nseed = 7   # trailing\n\ntrain_fraction=0.75\n").unwrap();
        assert_eq!(p["seed"], "7");
        assert_eq!(p["train_fraction"], "0.75");
        let cfg = RunConfig::from_pairs(&p).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.solver.seed, 7);
        assert_eq!(cfg.split.fractions.train, 0.75);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(parse_pairs("colour = red").is_err());
        assert!(parse_pairs("seed 7").is_err());
        let mut p = BTreeMap::new();
        p.insert("seed".to_string(), "seven".to_string());
        assert!(RunConfig::from_pairs(&p).is_err());
        p.insert("seed".to_string(), "1".to_string());
        p.insert("model_a".to_string(), "mlp".to_string());
        assert!(RunConfig::from_pairs(&p).is_err());
    }

    #[test]
    fn defaults() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.indicators, default_specs());
        assert_eq!(cfg.grid, GridAxes::default());
        assert_eq!(cfg.model_a, "na-fsvm");
        assert_eq!(cfg.model_b, "fsvm");
        assert_eq!(cfg.mode, RunMode::FullProtocol);
        assert_eq!(cfg.date_format, "%d-%m-%Y");
    }

    #[test]
    fn hash_ignores_out_and_jobs() {
        let mut a = BTreeMap::new();
        a.insert("out".to_string(), "x".to_string());
        a.insert("jobs".to_string(), "3".to_string());
        let mut b = BTreeMap::new();
        b.insert("out".to_string(), "y".to_string());
        let ha = RunConfig::from_pairs(&a).unwrap().hash().unwrap();
        let hb = RunConfig::from_pairs(&b).unwrap().hash().unwrap();
        assert_eq!(ha, hb);
        b.insert("seed".to_string(), "43".to_string());
        assert_ne!(ha, RunConfig::from_pairs(&b).unwrap().hash().unwrap());
        assert_eq!(ha.len(), 16);
    }
}
