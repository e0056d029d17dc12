use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::OnceLock;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::kernel::{GramMatrix, Kernel, KernelSpec};
use super::membership::MembershipSpec;
use super::solver::{self, SmoSettings};
use crate::dataset::{Direction, NormStats};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(rename = "C")]
    pub c: f64,
    pub kernel: KernelSpec,
    pub membership: MembershipSpec,
    /// KKT tolerance.
    pub tolerance: f64,
    /// Iteration budget is `max_passes * n`.
    pub max_passes: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            kernel: KernelSpec::linear(),
            membership: MembershipSpec::uniform(),
            tolerance: 1e-3,
            max_passes: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Parameter(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Parameter(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_passes == 0 {
            return Err(Error::Parameter("max_passes must be >= 1".into()));
        }
        self.kernel.build()?;
        self.membership.build()?;
        Ok(())
    }

    pub fn gamma(&self) -> Option<f64> {
        self.kernel.gamma
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    pub iterations: usize,
    pub max_kkt_violation: f64,
    pub dual_objective: f64,
    pub converged: bool,
    /// Dual objective after every accepted step; empty unless requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
}

/// A trained classifier. Rows with a zero coefficient are not stored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FsvmModel {
    pub format_version: u32,
    pub kernel: KernelSpec,
    #[serde(rename = "C")]
    pub c: f64,
    pub norm_stats: NormStats,
    pub support_vectors: Vec<Vec<f64>>,
    /// Position of each support vector in the training rows.
    pub support_indices: Vec<usize>,
    pub alphas: Vec<f64>,
    pub labels: Vec<Direction>,
    pub memberships: Vec<f64>,
    pub bias: f64,
    pub diagnostics: TrainDiagnostics,
    #[serde(skip)]
    compiled: OnceLock<Arc<dyn Kernel>>,
}

impl PartialEq for FsvmModel {
    fn eq(&self, other: &Self) -> bool {
        self.format_version == other.format_version
            && self.kernel == other.kernel
            && self.c == other.c
            && self.norm_stats == other.norm_stats
            && self.support_vectors == other.support_vectors
            && self.support_indices == other.support_indices
            && self.alphas == other.alphas
            && self.labels == other.labels
            && self.memberships == other.memberships
            && self.bias == other.bias
            && self.diagnostics == other.diagnostics
    }
}

/// Sigmoid output and the direction it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub direction: Direction,
    pub confidence: f64,
    pub decision: f64,
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl FsvmModel {
    fn kernel_impl(&self) -> Result<&Arc<dyn Kernel>> {
        if let Some(k) = self.compiled.get() {
            return Ok(k);
        }
        let k: Arc<dyn Kernel> = Arc::from(self.kernel.build()?);
        Ok(self.compiled.get_or_init(|| k))
    }

    pub fn dim(&self) -> usize {
        self.norm_stats.dim()
    }

    pub fn with_norm_stats(mut self, stats: NormStats) -> Self {
        self.norm_stats = stats;
        self
    }

    /// `f(x) = sum_i a_i y_i k(x_i, x) + b` for an already-normalized `x`.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let kernel = self.kernel_impl()?;
        Ok(self
            .support_vectors
            .iter()
            .zip(self.alphas.iter().zip(&self.labels))
            .map(|(sv, (a, y))| a * y.sign() * kernel.eval_unchecked(sv, x))
            .sum::<f64>()
            + self.bias)
    }

    /// Direction is Up when the sigmoid confidence is at least 0.5, i.e.
    /// when the decision value is non-negative.
    pub fn predict_direction(&self, x: &[f64]) -> Result<Prediction> {
        let decision = self.decision_value(x)?;
        Ok(Prediction {
            direction: Direction::from_value(decision),
            confidence: sigmoid(decision),
            decision,
        })
    }

    /// Normalizes a raw feature row with the stored statistics, then
    /// predicts.
    pub fn predict_raw(&self, raw: &[f64]) -> Result<Prediction> {
        self.predict_direction(&self.norm_stats.apply_row(raw)?)
    }

    pub fn to_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn from_json<R: Read>(source: R) -> Result<Self> {
        let model: FsvmModel = serde_json::from_reader(source)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Parameter(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                model.format_version
            )));
        }
        model.kernel.build()?;
        Ok(model)
    }
}

fn check_training_set(features: &[Vec<f64>], labels: &[Direction]) -> Result<usize> {
    if features.len() != labels.len() {
        return Err(Error::Shape {
            expected: features.len(),
            got: labels.len(),
        });
    }
    let dim = features.first().map_or(0, Vec::len);
    if let Some(bad) = features.iter().find(|r| r.len() != dim) {
        return Err(Error::Shape {
            expected: dim,
            got: bad.len(),
        });
    }
    let ups = labels.iter().filter(|&&l| l == Direction::Up).count();
    if ups == 0 || ups == labels.len() {
        return Err(Error::Class(format!(
            "training needs both classes; got {ups} up and {} down",
            labels.len() - ups
        )));
    }
    Ok(dim)
}

/// Trains on normalized rows; memberships come from `config.membership`
/// evaluated over the rows in the given (chronological) order. The model
/// carries identity scaling until [`FsvmModel::with_norm_stats`] is used.
pub fn train_fsvm(features: &[Vec<f64>], labels: &[Direction], config: &TrainConfig) -> Result<FsvmModel> {
    check_training_set(features, labels)?;
    let memberships = config.membership.build()?.weights(features, labels)?;
    train_fsvm_weighted(features, labels, &memberships, config)
}

/// Like [`train_fsvm`] with explicit per-sample memberships in `(0, 1]`.
pub fn train_fsvm_weighted(
    features: &[Vec<f64>],
    labels: &[Direction],
    memberships: &[f64],
    config: &TrainConfig,
) -> Result<FsvmModel> {
    train_inner(features, labels, memberships, config, false)
}

/// Training that also records the dual objective after every SMO step.
pub fn train_fsvm_traced(
    features: &[Vec<f64>],
    labels: &[Direction],
    memberships: &[f64],
    config: &TrainConfig,
) -> Result<FsvmModel> {
    train_inner(features, labels, memberships, config, true)
}

fn train_inner(
    features: &[Vec<f64>],
    labels: &[Direction],
    memberships: &[f64],
    config: &TrainConfig,
    record_trace: bool,
) -> Result<FsvmModel> {
    config.validate()?;
    let dim = check_training_set(features, labels)?;
    if memberships.len() != features.len() {
        return Err(Error::Shape {
            expected: features.len(),
            got: memberships.len(),
        });
    }
    if let Some(bad) = memberships.iter().find(|&&s| !(s > 0.0 && s <= 1.0)) {
        return Err(Error::Parameter(format!("membership {bad} outside (0, 1]")));
    }
    let upper: Vec<f64> = memberships.iter().map(|s| s * config.c).collect();
    if upper.iter().all(|&u| u < f64::EPSILON) {
        return Err(Error::DegenerateBox);
    }

    let kernel = config.kernel.build()?;
    let y: Vec<f64> = labels.iter().map(|l| l.sign()).collect();
    let gram = GramMatrix::new(kernel.as_ref(), features);
    let settings = SmoSettings {
        tolerance: config.tolerance,
        max_iterations: config.max_passes.saturating_mul(features.len()),
        seed: config.seed,
        record_trace,
    };
    let sol = solver::solve(&gram, &y, &upper, &settings);
    if !sol.converged {
        log::warn!(
            "smo stopped after {} iterations without reaching tolerance {} (gap {:e})",
            sol.iterations,
            config.tolerance,
            sol.gap
        );
    }

    let support: Vec<usize> = (0..features.len()).filter(|&k| sol.alpha[k] > 0.0).collect();
    let mut model = FsvmModel {
        format_version: MODEL_FORMAT_VERSION,
        kernel: config.kernel.clone(),
        c: config.c,
        norm_stats: NormStats::identity(dim),
        support_vectors: support.iter().map(|&k| features[k].clone()).collect(),
        support_indices: support.clone(),
        alphas: support.iter().map(|&k| sol.alpha[k]).collect(),
        labels: support.iter().map(|&k| labels[k]).collect(),
        memberships: support.iter().map(|&k| memberships[k]).collect(),
        bias: sol.bias,
        diagnostics: TrainDiagnostics {
            iterations: sol.iterations,
            max_kkt_violation: 0.0,
            dual_objective: sol.objective,
            converged: sol.converged,
            objective_trace: sol.trace,
        },
        compiled: OnceLock::new(),
    };
    model.diagnostics.max_kkt_violation = kkt_max_violation(&model, features, labels, memberships, config.c)?;
    Ok(model)
}

/// Largest KKT residual of `model` over its training rows:
/// `a = 0` needs `y f >= 1`, `a = s C` needs `y f <= 1`, free needs
/// `y f = 1`. Returns the largest excess.
pub fn kkt_max_violation(
    model: &FsvmModel,
    features: &[Vec<f64>],
    labels: &[Direction],
    memberships: &[f64],
    c: f64,
) -> Result<f64> {
    let alpha_of: HashMap<usize, f64> = model
        .support_indices
        .iter()
        .copied()
        .zip(model.alphas.iter().copied())
        .collect();
    let mut worst = 0.0f64;
    for (k, (x, y)) in features.iter().zip(labels).enumerate() {
        let margin = y.sign() * model.decision_value(x)?;
        let a = alpha_of.get(&k).copied().unwrap_or(0.0);
        let ceiling = memberships[k] * c;
        let residual = if a <= 0.0 {
            (1.0 - margin).max(0.0)
        } else if a >= ceiling {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(residual);
    }
    Ok(worst)
}
