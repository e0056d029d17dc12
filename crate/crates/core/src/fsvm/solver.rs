//! SMO for the membership-weighted soft-margin dual
//!
//! ```text
//! max  W(a) = sum_i a_i - 1/2 sum_ij a_i a_j y_i y_j k(x_i, x_j)
//! s.t. 0 <= a_i <= s_i * C,   sum_i a_i y_i = 0
//! ```
//!
//! Each step picks the most violating index `i` on the "can move up" side
//! and pairs it with the partner maximizing `|E_i - E_j|`, then solves the
//! two-variable subproblem in closed form. `E_k = u_k - y_k` where `u_k` is
//! the bias-free decision value; the bias cancels in every difference so it
//! is only recovered at the end.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kernel::GramMatrix;

/// Curvature below this is treated as zero and the step goes to a bound.
const MIN_CURVATURE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub(crate) struct SmoSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
    pub record_trace: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct SmoSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    /// Largest `max_up(-E) - min_low(-E)` gap at exit.
    pub gap: f64,
    pub objective: f64,
    pub converged: bool,
    pub trace: Vec<f64>,
}

struct State<'a> {
    gram: &'a GramMatrix<'a>,
    y: &'a [f64],
    upper: &'a [f64],
    alpha: Vec<f64>,
    err: Vec<f64>,
}

impl State<'_> {
    fn in_up(&self, k: usize) -> bool {
        if self.y[k] > 0.0 {
            self.alpha[k] < self.upper[k]
        } else {
            self.alpha[k] > 0.0
        }
    }

    fn in_low(&self, k: usize) -> bool {
        if self.y[k] > 0.0 {
            self.alpha[k] > 0.0
        } else {
            self.alpha[k] < self.upper[k]
        }
    }

    /// (index with smallest E in the up set, index with largest E in the
    /// low set).
    fn extreme_pair(&self) -> (Option<usize>, Option<usize>) {
        let mut up: Option<usize> = None;
        let mut low: Option<usize> = None;
        for k in 0..self.y.len() {
            if self.in_up(k) && up.is_none_or(|u| self.err[k] < self.err[u]) {
                up = Some(k);
            }
            if self.in_low(k) && low.is_none_or(|l| self.err[k] > self.err[l]) {
                low = Some(k);
            }
        }
        (up, low)
    }

    fn objective(&self) -> f64 {
        // W = 1/2 sum a_k (1 - y_k E_k)
        0.5 * self
            .alpha
            .iter()
            .zip(self.y.iter().zip(&self.err))
            .map(|(a, (y, e))| a * (1.0 - y * e))
            .sum::<f64>()
    }

    /// Moves `a_i` in the direction that raises `y_i a_i` and `a_j` to keep
    /// the equality constraint. Returns false when no progress is possible.
    fn take_step(&mut self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        let (yi, yj) = (self.y[i], self.y[j]);
        let (ai, aj) = (self.alpha[i], self.alpha[j]);
        let (ci, cj) = (self.upper[i], self.upper[j]);
        let (lo, hi) = if yi != yj {
            ((ai - aj).max(0.0), ci.min(cj + ai - aj))
        } else {
            ((ai + aj - cj).max(0.0), ci.min(ai + aj))
        };
        if hi - lo <= 0.0 {
            return false;
        }

        let row_i = self.gram.row(i);
        let kij = row_i[j];
        let eta = self.gram.diag(i) + self.gram.diag(j) - 2.0 * kij;
        let pull = yi * (self.err[j] - self.err[i]);
        let mut ai_new = if eta > MIN_CURVATURE {
            (ai + pull / eta).clamp(lo, hi)
        } else if pull > 0.0 {
            hi
        } else if pull < 0.0 {
            lo
        } else {
            return false;
        };
        if ai_new < 1e-14 * ci {
            ai_new = 0.0;
        } else if ai_new > ci * (1.0 - 1e-14) {
            ai_new = ci;
        }
        let di = ai_new - ai;
        if di.abs() <= 1e-15 * (1.0 + ai.abs()) {
            return false;
        }
        let mut aj_new = aj - yi * yj * di;
        if aj_new < 1e-14 * cj {
            aj_new = 0.0;
        } else if aj_new > cj * (1.0 - 1e-14) {
            aj_new = cj;
        }
        let dj = aj_new - aj;

        self.alpha[i] = ai_new;
        self.alpha[j] = aj_new;
        let row_i = row_i.into_owned();
        let row_j = self.gram.row(j);
        let (si, sj) = (yi * di, yj * dj);
        for (k, e) in self.err.iter_mut().enumerate() {
            *e += si * row_i[k] + sj * row_j[k];
        }
        true
    }

    fn bias(&self) -> f64 {
        let free: Vec<f64> = (0..self.y.len())
            .filter(|&k| self.alpha[k] > 0.0 && self.alpha[k] < self.upper[k])
            .map(|k| -self.err[k])
            .collect();
        if !free.is_empty() {
            return free.iter().sum::<f64>() / free.len() as f64;
        }
        // b must lie in [max_up(-E), min_low(-E)]
        let (up, low) = self.extreme_pair();
        match (up, low) {
            (Some(u), Some(l)) => 0.5 * (-self.err[u] - self.err[l]),
            (Some(u), None) => -self.err[u],
            (None, Some(l)) => -self.err[l],
            (None, None) => 0.0,
        }
    }
}

/// Runs SMO on a precomputed Gram matrix. `y` holds +/-1 labels and
/// `upper` the per-sample ceilings `s_i * C`.
pub(crate) fn solve(gram: &GramMatrix<'_>, y: &[f64], upper: &[f64], settings: &SmoSettings) -> SmoSolution {
    let n = y.len();
    let mut state = State {
        gram,
        y,
        upper,
        alpha: vec![0.0; n],
        err: y.iter().map(|v| -v).collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut trace = Vec::new();
    if settings.record_trace {
        trace.push(state.objective());
    }

    let mut iterations = 0;
    let mut converged = false;
    let mut gap;
    loop {
        let (up, low) = state.extreme_pair();
        let (Some(i), Some(j)) = (up, low) else {
            gap = 0.0;
            converged = true;
            break;
        };
        gap = state.err[j] - state.err[i];
        if gap <= settings.tolerance {
            converged = true;
            break;
        }
        if iterations >= settings.max_iterations {
            break;
        }
        iterations += 1;

        let mut progressed = state.take_step(i, j);
        if !progressed {
            // seeded fallback over the remaining violating partners
            let mut partners: Vec<usize> = (0..n)
                .filter(|&k| k != j && state.in_low(k) && state.err[k] - state.err[i] > settings.tolerance)
                .collect();
            partners.shuffle(&mut rng);
            progressed = partners.into_iter().any(|k| state.take_step(i, k));
        }
        if !progressed {
            log::debug!("smo stalled after {iterations} iterations with gap {gap:e}");
            break;
        }
        if settings.record_trace {
            trace.push(state.objective());
        }
    }

    SmoSolution {
        bias: state.bias(),
        objective: state.objective(),
        alpha: state.alpha,
        iterations,
        gap,
        converged,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsvm::kernel::{LinearKernel, RbfKernel};

    fn settings(tol: f64) -> SmoSettings {
        SmoSettings {
            tolerance: tol,
            max_iterations: 100_000,
            seed: 0,
            record_trace: true,
        }
    }

    #[test]
    fn two_point_analytic_solution() {
        let rows = vec![vec![-1.0], vec![1.0]];
        let gram = GramMatrix::new(&LinearKernel, &rows);
        let sol = solve(&gram, &[-1.0, 1.0], &[10.0, 10.0], &settings(1e-3));
        assert!(sol.converged);
        assert!((sol.alpha[0] - 0.5).abs() < 1e-12);
        assert!((sol.alpha[1] - 0.5).abs() < 1e-12);
        assert!(sol.bias.abs() < 1e-12);
        assert!((sol.objective - 0.5).abs() < 1e-12);
    }

    #[test]
    fn objective_never_decreases() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let t = i as f64 * 0.37;
                vec![t.sin() * 2.0, (t * 1.3).cos()]
            })
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| if r[0] * r[1] > 0.1 { 1.0 } else { -1.0 }).collect();
        let k = RbfKernel::new(0.8).unwrap();
        let gram = GramMatrix::new(&k, &rows);
        let sol = solve(&gram, &y, &vec![5.0; 30], &settings(1e-6));
        assert!(sol.converged);
        for w in sol.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "{} -> {}", w[0], w[1]);
        }
        let balance: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(balance.abs() < 1e-8);
    }

    #[test]
    fn opposite_labels_on_identical_points() {
        // zero curvature pair: the step must go to a bound, not divide by 0
        let rows = vec![vec![0.5], vec![0.5], vec![2.0], vec![-2.0]];
        let y = [1.0, -1.0, 1.0, -1.0];
        let gram = GramMatrix::new(&LinearKernel, &rows);
        let sol = solve(&gram, &y, &[1.0; 4], &settings(1e-6));
        assert!(sol.converged, "gap {}", sol.gap);
        assert!(sol.alpha.iter().all(|a| a.is_finite()));
    }
}
