#![allow(dead_code)]

use chrono::{Duration, NaiveDate};
use fsvm_trend::dataset::{Direction, LabeledExample};
use fsvm_trend::fsvm::{kernel_eval, FsvmModel, KernelSpec};
use fsvm_trend::market_data::{OhlcvBar, PriceSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gram(spec: &KernelSpec, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    xs.iter()
        .map(|a| xs.iter().map(|b| kernel_eval(spec, a, b).unwrap()).collect())
        .collect()
}

/// `sum a - 1/2 sum_ij a_i a_j y_i y_j K_ij`, evaluated directly.
pub fn dual_objective(k: &[Vec<f64>], y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k[i][j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Full-length coefficient vector from a model's support set.
pub fn full_alpha(model: &FsvmModel, n: usize) -> Vec<f64> {
    let mut a = vec![0.0; n];
    for (&i, &v) in model.support_indices.iter().zip(&model.alphas) {
        a[i] = v;
    }
    a
}

/// Euclidean projection onto `{0 <= a <= upper, y . a = 0}` by bisection
/// on the multiplier of the equality constraint.
fn project(v: &[f64], y: &[f64], upper: &[f64]) -> Vec<f64> {
    let at = |lam: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .zip(upper)
            .map(|((vi, yi), ui)| (vi - lam * yi).clamp(0.0, *ui))
            .collect()
    };
    let residual = |a: &[f64]| a.iter().zip(y).map(|(ai, yi)| ai * yi).sum::<f64>();
    let span = v.iter().map(|x| x.abs()).fold(0.0, f64::max) + upper.iter().fold(0.0, |m: f64, u| m.max(*u)) + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        // residual is nonincreasing in lambda
        if residual(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * span {
            break;
        }
    }
    at(0.5 * (lo + hi))
}

/// Dense accelerated projected-gradient solve of the box-constrained dual
/// (minimizing its negation), with gradient-based restarts.
pub fn qp_oracle(k: &[Vec<f64>], y: &[f64], upper: &[f64]) -> (Vec<f64>, f64) {
    let n = y.len();
    let q: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| y[i] * y[j] * k[i][j]).collect()).collect();
    // Frobenius norm bounds the largest eigenvalue
    let lip = q.iter().flatten().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let grad = |a: &[f64]| -> Vec<f64> { (0..n).map(|i| q[i].iter().zip(a).map(|(qij, aj)| qij * aj).sum::<f64>() - 1.0).collect() };

    let mut x = project(&vec![0.0; n], y, upper);
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut best = (x.clone(), dual_objective(k, y, &x));
    let mut stale = 0;
    for _ in 0..200_000 {
        let g = grad(&z);
        let step: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - gi / lip).collect();
        let x_next = project(&step, y, upper);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let restart = g.iter().zip(x_next.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum::<f64>() > 0.0;
        let moved = x_next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if restart {
            t = 1.0;
            z = x_next.clone();
        } else {
            let m = (t - 1.0) / t_next;
            z = x_next.iter().zip(&x).map(|(a, b)| a + m * (a - b)).collect();
            t = t_next;
        }
        x = x_next;
        let w = dual_objective(k, y, &x);
        if w > best.1 + 1e-16 * best.1.abs() {
            best = (x.clone(), w);
            stale = 0;
        } else {
            stale += 1;
        }
        if (moved < 1e-15 && !restart) || stale > 2_000 {
            break;
        }
    }
    best
}

/// Random dataset of `n` rows with both classes present.
pub fn random_problem(r: &mut ChaCha8Rng, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<Direction>) {
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let mut ys: Vec<Direction> = (0..n)
        .map(|_| if r.random_bool(0.5) { Direction::Up } else { Direction::Down })
        .collect();
    ys[0] = Direction::Up;
    ys[n - 1] = Direction::Down;
    (xs, ys)
}

pub fn signs(labels: &[Direction]) -> Vec<f64> {
    labels.iter().map(|l| l.sign()).collect()
}

/// Valid random walk bars on consecutive days.
pub fn random_bars(r: &mut ChaCha8Rng, n: usize) -> Vec<OhlcvBar> {
    let start = NaiveDate::from_ymd_opt(2001, 3, 1).unwrap();
    let mut close = 50.0f64;
    (0..n)
        .map(|t| {
            let open = close * (1.0 + r.random_range(-0.02..0.02));
            close = (close * (1.0 + r.random_range(-0.03..0.03))).max(1.0);
            let high = open.max(close) * (1.0 + r.random_range(0.0..0.01));
            let low = open.min(close) * (1.0 - r.random_range(0.0..0.01));
            OhlcvBar {
                date: start + Duration::days(t as i64),
                open,
                high,
                low,
                close,
                volume: r.random_range(1_000..1_000_000),
                adj_close: None,
            }
        })
        .collect()
}

pub fn random_series(r: &mut ChaCha8Rng, n: usize) -> PriceSeries {
    PriceSeries::new("RND", random_bars(r, n)).unwrap()
}

/// Labeled examples spread over several years with random labels.
pub fn random_examples(r: &mut ChaCha8Rng, n: usize, years: i32, d: usize) -> Vec<LabeledExample> {
    let mut dates: Vec<NaiveDate> = (0..n)
        .map(|_| {
            let y = 1990 + r.random_range(0..years);
            NaiveDate::from_ymd_opt(y, 1, 1).unwrap() + Duration::days(r.random_range(0..360))
        })
        .collect();
    dates.sort();
    dates
        .into_iter()
        .map(|date| LabeledExample {
            date,
            features: (0..d).map(|_| r.random_range(-5.0..5.0)).collect(),
            label: if r.random_bool(0.45) { Direction::Up } else { Direction::Down },
        })
        .collect()
}
