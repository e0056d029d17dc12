//! Fuzzy support vector machine: kernels, membership schemes, the SMO
//! solver, trained models, and the named model families used by the
//! comparison harness.

mod kernel;
mod membership;
mod model;
mod solver;

use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

pub use kernel::{builtin_kernels, kernel_eval, Kernel, KernelRegistry, KernelSpec, LinearKernel, RbfKernel, DENSE_CACHE_LIMIT};
pub use membership::{
    builtin_memberships, membership_class_center, membership_time_decay, ClassCenter, Membership, MembershipRegistry,
    MembershipSpec, TimeDecay, Uniform,
};
pub use model::{
    kkt_max_violation, sigmoid, train_fsvm, train_fsvm_traced, train_fsvm_weighted, FsvmModel, Prediction,
    TrainConfig, TrainDiagnostics, MODEL_FORMAT_VERSION,
};

use crate::error::Result;
use crate::registry::Registry;

/// Solver settings shared by every config a family produces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tolerance: f64,
    pub max_passes: usize,
    pub seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-3,
            max_passes: 1000,
            seed: 0,
        }
    }
}

/// Hyperparameter axes for the grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxes {
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
    pub floor: Vec<f64>,
}

impl Default for GridAxes {
    fn default() -> Self {
        Self {
            c: vec![0.1, 1.0, 10.0, 100.0],
            gamma: vec![0.01, 0.1, 1.0, 10.0],
            floor: vec![0.3, 0.5, 0.7, 1.0],
        }
    }
}

/// A model family: a kernel kind paired with a membership scheme, with
/// `C`, `gamma` and the membership floor left free.
pub trait ModelFamily: Send + Sync {
    fn name(&self) -> &str;

    fn uses_gamma(&self) -> bool;

    fn config(&self, c: f64, gamma: f64, floor: f64, solver: &SolverSettings) -> TrainConfig;

    /// Every point of `axes`, in `C`-major order. Families without a
    /// gamma axis collapse it.
    fn grid(&self, axes: &GridAxes, solver: &SolverSettings) -> Vec<TrainConfig> {
        let gammas: &[f64] = if self.uses_gamma() { &axes.gamma } else { &[0.0] };
        let mut out = Vec::new();
        for &c in &axes.c {
            for &g in gammas {
                for &f in &axes.floor {
                    out.push(self.config(c, g, f, solver));
                }
            }
        }
        out
    }
}

/// A family defined by kernel kind and membership kind names.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: String,
    pub kernel: String,
    pub membership: String,
}

impl ModelFamily for Preset {
    fn name(&self) -> &str {
        &self.name
    }

    fn uses_gamma(&self) -> bool {
        self.kernel != "linear"
    }

    fn config(&self, c: f64, gamma: f64, floor: f64, solver: &SolverSettings) -> TrainConfig {
        TrainConfig {
            c,
            kernel: KernelSpec {
                kind: self.kernel.clone(),
                gamma: self.uses_gamma().then_some(gamma),
            },
            membership: MembershipSpec::new(&self.membership, floor),
            tolerance: solver.tolerance,
            max_passes: solver.max_passes,
            seed: solver.seed,
        }
    }
}

pub type FamilyRegistry = Registry<(), Box<dyn ModelFamily>>;

/// `fsvm`: linear kernel with class-center memberships.
/// `na-fsvm`: radial-basis kernel with time-decay memberships.
/// `svm`: linear kernel, uniform memberships.
pub fn builtin_families() -> FamilyRegistry {
    fn preset(name: &str, kernel: &str, membership: &str) -> Box<dyn ModelFamily> {
        Box::new(Preset {
            name: name.into(),
            kernel: kernel.into(),
            membership: membership.into(),
        })
    }
    let mut reg = FamilyRegistry::new("model family");
    reg.register("fsvm", |_| Ok(preset("fsvm", "linear", "class_center")))
        .register("na-fsvm", |_| Ok(preset("na-fsvm", "rbf", "time_decay")))
        .register("svm", |_| Ok(preset("svm", "linear", "uniform")))
        .register("rbf-svm", |_| Ok(preset("rbf-svm", "rbf", "uniform")));
    reg
}

static FAMILIES: LazyLock<FamilyRegistry> = LazyLock::new(builtin_families);

pub fn family(name: &str) -> Result<Box<dyn ModelFamily>> {
    FAMILIES.build(name, &())
}

pub fn family_names() -> Vec<String> {
    FAMILIES.names().map(String::from).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grids() {
        let axes = GridAxes::default();
        let s = SolverSettings::default();
        assert_eq!(family("na-fsvm").unwrap().grid(&axes, &s).len(), 64);
        let lin = family("fsvm").unwrap().grid(&axes, &s);
        assert_eq!(lin.len(), 16);
        assert!(lin.iter().all(|c| c.kernel == KernelSpec::linear()));
        assert!(lin.iter().all(|c| c.membership.kind == "class_center"));
        assert!(lin.iter().all(|c| c.validate().is_ok()));
    }

    #[test]
    fn presets_map_to_kernels() {
        let s = SolverSettings::default();
        let cfg = family("na-fsvm").unwrap().config(10.0, 0.1, 0.5, &s);
        assert_eq!(cfg.kernel, KernelSpec::rbf(0.1));
        assert_eq!(cfg.membership, MembershipSpec::new("time_decay", 0.5));
        assert!(family("mlp").is_err());
    }
}
