use std::borrow::Cow;
use std::fmt;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::Registry;

/// Kernels with at most this many training rows get a dense Gram matrix;
/// larger problems recompute rows on demand.
pub const DENSE_CACHE_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

impl KernelSpec {
    pub fn linear() -> Self {
        Self {
            kind: "linear".into(),
            gamma: None,
        }
    }

    pub fn rbf(gamma: f64) -> Self {
        Self {
            kind: "rbf".into(),
            gamma: Some(gamma),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Kernel>> {
        KERNELS.build(&self.kind, self)
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.gamma {
            Some(g) => write!(f, "{}(gamma={g})", self.kind),
            None => f.write_str(&self.kind),
        }
    }
}

pub trait Kernel: fmt::Debug + Send + Sync {
    fn spec(&self) -> KernelSpec;

    /// Caller guarantees `x.len() == z.len()`.
    fn eval_unchecked(&self, x: &[f64], z: &[f64]) -> f64;

    fn eval(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        if x.len() != z.len() {
            return Err(Error::Shape {
                expected: x.len(),
                got: z.len(),
            });
        }
        Ok(self.eval_unchecked(x, z))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LinearKernel;

impl Kernel for LinearKernel {
    fn spec(&self) -> KernelSpec {
        KernelSpec::linear()
    }

    fn eval_unchecked(&self, x: &[f64], z: &[f64]) -> f64 {
        x.iter().zip(z).map(|(a, b)| a * b).sum()
    }
}

/// `exp(-gamma * |x - z|^2)`
#[derive(Debug, Clone, Copy)]
pub struct RbfKernel {
    gamma: f64,
}

impl RbfKernel {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Parameter(format!("rbf gamma must be positive, got {gamma}")));
        }
        Ok(Self { gamma })
    }
}

impl Kernel for RbfKernel {
    fn spec(&self) -> KernelSpec {
        KernelSpec::rbf(self.gamma)
    }

    fn eval_unchecked(&self, x: &[f64], z: &[f64]) -> f64 {
        let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
        (-self.gamma * d2).exp()
    }
}

pub type KernelRegistry = Registry<KernelSpec, Box<dyn Kernel>>;

pub fn builtin_kernels() -> KernelRegistry {
    let mut reg = KernelRegistry::new("kernel");
    reg.register("linear", |_| Ok(Box::new(LinearKernel)));
    reg.register("rbf", |spec| {
        let gamma = spec
            .gamma
            .ok_or_else(|| Error::Parameter("rbf kernel requires gamma".into()))?;
        Ok(Box::new(RbfKernel::new(gamma)?))
    });
    reg
}

static KERNELS: LazyLock<KernelRegistry> = LazyLock::new(builtin_kernels);

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], z: &[f64]) -> Result<f64> {
    spec.build()?.eval(x, z)
}

/// Gram-matrix access for the solver.
pub(crate) enum GramMatrix<'a> {
    Dense { n: usize, values: Vec<f64> },
    OnDemand { kernel: &'a dyn Kernel, rows: &'a [Vec<f64>], diag: Vec<f64> },
}

impl<'a> GramMatrix<'a> {
    pub(crate) fn new(kernel: &'a dyn Kernel, rows: &'a [Vec<f64>]) -> Self {
        let n = rows.len();
        if n <= DENSE_CACHE_LIMIT {
            let mut values = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let k = kernel.eval_unchecked(&rows[i], &rows[j]);
                    values[i * n + j] = k;
                    values[j * n + i] = k;
                }
            }
            GramMatrix::Dense { n, values }
        } else {
            let diag = rows.iter().map(|r| kernel.eval_unchecked(r, r)).collect();
            GramMatrix::OnDemand { kernel, rows, diag }
        }
    }

    pub(crate) fn diag(&self, i: usize) -> f64 {
        match self {
            GramMatrix::Dense { n, values } => values[i * n + i],
            GramMatrix::OnDemand { diag, .. } => diag[i],
        }
    }

    pub(crate) fn row(&self, i: usize) -> Cow<'_, [f64]> {
        match self {
            GramMatrix::Dense { n, values } => Cow::Borrowed(&values[i * n..(i + 1) * n]),
            GramMatrix::OnDemand { kernel, rows, .. } => {
                Cow::Owned(rows.iter().map(|r| kernel.eval_unchecked(&rows[i], r)).collect())
            }
        }
    }
}
