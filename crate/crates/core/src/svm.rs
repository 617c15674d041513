//! Soft-margin kernel SVM trained by SMO, and one-vs-all multiclass.
//!
//! The solver follows the LIBSVM formulation: minimize
//! `1/2 a'Qa - e'a` with `Q_ij = y_i y_j K_ij`, `0 <= a_i <= C_i`,
//! `y'a = 0`, choosing the maximal violating pair each iteration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::linalg::Matrix;

const TAU: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmParams {
    pub c_reg: f64,
    /// Stop once the maximal KKT violation falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c_reg: 10.0,
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.c_reg > 0.0 && self.c_reg.is_finite(), "C_reg must be positive, got {}", self.c_reg);
        ensure!(self.tol > 0.0, "SVM tolerance must be positive");
        ensure!(self.max_iter >= 1, "SVM iteration cap must be positive");
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinarySvmModel {
    /// Dual coefficients, one per training item.
    pub alpha: Vec<f64>,
    /// Training labels, each +1 or -1.
    pub y: Vec<f64>,
    pub bias: f64,
    pub c_reg: f64,
    /// Per-item box bounds.
    pub upper: Vec<f64>,
    pub iterations: usize,
}

impl BinarySvmModel {
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// Indices with a positive coefficient.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.alpha[i] > 0.0).collect()
    }

    /// `sum_i a_i y_i k_row[i] + b`.
    pub fn decision(&self, k_row: &[f64]) -> Result<f64> {
        ensure!(
            k_row.len() == self.len(),
            "kernel row has {} entries but the model was trained on {}",
            k_row.len(),
            self.len()
        );
        Ok(self.decision_unchecked(k_row))
    }

    pub(crate) fn decision_unchecked(&self, k_row: &[f64]) -> f64 {
        let mut s = self.bias;
        for ((a, y), k) in self.alpha.iter().zip(&self.y).zip(k_row) {
            if *a != 0.0 {
                s += a * y * k;
            }
        }
        s
    }

    /// Dual objective `sum a - 1/2 a'Qa` on the training Gram matrix.
    pub fn dual_objective(&self, gram: &Matrix) -> f64 {
        dual_objective(gram, &self.y, &self.alpha)
    }

    /// Largest violation of the margin conditions on the training set:
    /// `y f >= 1` at the lower bound, `y f <= 1` at the upper bound and
    /// equality in between.
    pub fn kkt_violation(&self, gram: &Matrix) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.len() {
            if self.upper[i] == 0.0 {
                continue;
            }
            let m = self.y[i] * self.decision_unchecked(gram.row(i)) - 1.0;
            let v = if self.alpha[i] <= 0.0 {
                (-m).max(0.0)
            } else if self.alpha[i] >= self.upper[i] {
                m.max(0.0)
            } else {
                m.abs()
            };
            worst = worst.max(v);
        }
        worst
    }
}

/// Sign with zero mapped to +1.
pub fn label_of(score: f64) -> f64 {
    if score >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn dual_objective(gram: &Matrix, y: &[f64], alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        let row = gram.row(i);
        let mut s = 0.0;
        for j in 0..n {
            s += alpha[j] * y[j] * row[j];
        }
        quad += alpha[i] * y[i] * s;
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

fn check_labels(y: &[f64]) -> Result<()> {
    ensure!(y.len() >= 2, "SVM training needs at least 2 items");
    ensure!(y.iter().all(|&v| v == 1.0 || v == -1.0), "binary labels must be +1 or -1");
    ensure!(
        y.contains(&1.0) && y.contains(&-1.0),
        "binary training data contains a single class"
    );
    Ok(())
}

/// Trains on a precomputed Gram matrix. `sample_weights`, when given, must be
/// a probability vector and scales item `i`'s bound to `C_reg * L * P(i)`.
pub fn smo_train(gram: &Matrix, y: &[f64], params: &SvmParams, sample_weights: Option<&[f64]>) -> Result<BinarySvmModel> {
    solve(gram, y, params, sample_weights, None)
}

/// As [`smo_train`], also returning the dual objective after every iteration.
pub fn smo_train_traced(
    gram: &Matrix,
    y: &[f64],
    params: &SvmParams,
    sample_weights: Option<&[f64]>,
) -> Result<(BinarySvmModel, Vec<f64>)> {
    let mut trace = Vec::new();
    let m = solve(gram, y, params, sample_weights, Some(&mut trace))?;
    Ok((m, trace))
}

fn solve(
    gram: &Matrix,
    y: &[f64],
    params: &SvmParams,
    sample_weights: Option<&[f64]>,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<BinarySvmModel> {
    params.validate()?;
    check_labels(y)?;
    let n = y.len();
    ensure!(
        gram.rows() == n && gram.cols() == n,
        "Gram matrix is {}x{} but there are {n} labels",
        gram.rows(),
        gram.cols()
    );
    let upper: Vec<f64> = match sample_weights {
        None => vec![params.c_reg; n],
        Some(w) => {
            ensure!(w.len() == n, "{} sample weights for {n} items", w.len());
            ensure!(w.iter().all(|&p| p >= 0.0 && p.is_finite()), "sample weights must be nonnegative");
            w.iter().map(|p| params.c_reg * n as f64 * p).collect()
        }
    };
    ensure!(upper.iter().any(|&c| c > 0.0), "every sample weight is zero");

    let q = |i: usize, j: usize| y[i] * y[j] * gram[(i, j)];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yi: f64, c: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64, c: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    let mut iterations = 0;
    loop {
        let (mut i, mut gmax) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut gmin) = (usize::MAX, f64::INFINITY);
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t], upper[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if in_low(alpha[t], y[t], upper[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin <= params.tol {
            break;
        }
        if iterations >= params.max_iter {
            return Err(Error::Convergence(format!(
                "SMO reached {} iterations with KKT gap {:.3e} (tolerance {:.1e}); the kernel may not be positive semidefinite",
                iterations,
                gmax - gmin,
                params.tol
            )));
        }
        iterations += 1;

        let (ci, cj) = (upper[i], upper[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
        if let Some(tr) = trace.as_deref_mut() {
            // a'Qa = sum a_i (G_i + 1)
            tr.push(alpha.iter().zip(&grad).map(|(a, g)| 0.5 * a * (1.0 - g)).sum());
        }
    }

    let bias = -compute_rho(&alpha, &grad, y, &upper);
    Ok(BinarySvmModel {
        alpha,
        y: y.to_vec(),
        bias,
        c_reg: params.c_reg,
        upper,
        iterations,
    })
}

fn compute_rho(alpha: &[f64], grad: &[f64], y: &[f64], upper: &[f64]) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..alpha.len() {
        if upper[t] == 0.0 {
            continue;
        }
        let yg = y[t] * grad[t];
        if alpha[t] >= upper[t] {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            sum_free += yg;
            n_free += 1;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// `+1` for members of `class`, `-1` otherwise.
pub fn one_vs_rest_labels(labels: &[usize], class: usize) -> Vec<f64> {
    labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect()
}

/// Trains one binary model per class, class `k` against the rest. The
/// trainer receives the ±1 labels of each binary problem.
pub fn ova_train<M, F>(labels: &[usize], class_count: usize, trainer: F) -> Result<Vec<M>>
where
    M: Send,
    F: Fn(usize, &[f64]) -> Result<M> + Sync,
{
    ensure!(class_count >= 2, "one-vs-all needs at least 2 classes");
    for k in 0..class_count {
        ensure!(labels.contains(&k), "class {k} has no training items");
    }
    ensure!(labels.iter().all(|&l| l < class_count), "label out of range");
    (0..class_count)
        .into_par_iter()
        .map(|k| trainer(k, &one_vs_rest_labels(labels, k)))
        .collect()
}

/// Index of the largest score; ties go to the lowest index.
pub fn ova_predict(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = k;
        }
    }
    best
}
