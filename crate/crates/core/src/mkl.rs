//! SimpleMKL: reduced-gradient descent of the kernel weights on the simplex
//! with an SVM solved on the combined kernel at every evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::kernels::{check_simplex, combine_unchecked, KernelBank};
use crate::linalg::Matrix;
use crate::svm::{smo_train, BinarySvmModel, SvmParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MklParams {
    pub c_reg: f64,
    /// Stop when no weight moves by more than this.
    pub weight_tol: f64,
    /// Stop when the objective changes by less than this relative amount.
    pub objective_tol: f64,
    pub max_outer: usize,
    /// KKT tolerance of the inner SVM.
    pub svm_tol: f64,
    /// Rescale every kernel to trace `L` before learning.
    pub trace_normalize: bool,
}

impl Default for MklParams {
    fn default() -> Self {
        MklParams {
            c_reg: 10.0,
            weight_tol: 1e-4,
            objective_tol: 1e-4,
            max_outer: 200,
            svm_tol: 1e-3,
            trace_normalize: true,
        }
    }
}

impl MklParams {
    pub fn validate(&self) -> Result<()> {
        self.svm().validate()?;
        ensure!(self.weight_tol > 0.0, "MKL weight tolerance must be positive");
        ensure!(self.objective_tol > 0.0, "MKL objective tolerance must be positive");
        ensure!(self.max_outer >= 1, "MKL iteration cap must be positive");
        Ok(())
    }

    pub fn svm(&self) -> SvmParams {
        SvmParams {
            c_reg: self.c_reg,
            tol: self.svm_tol,
            ..SvmParams::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MklModel {
    /// Kernel weights on the simplex.
    pub weights: Vec<f64>,
    /// Factor applied to each raw kernel before weighting.
    pub scales: Vec<f64>,
    pub svm: BinarySvmModel,
    /// Objective after each accepted step, starting from uniform weights.
    pub objective_history: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
}

impl MklModel {
    /// Decision value from one kernel row per base kernel.
    pub fn decision(&self, k_rows: &[Vec<f64>]) -> Result<f64> {
        ensure!(
            k_rows.len() == self.weights.len(),
            "{} kernel rows for {} kernels",
            k_rows.len(),
            self.weights.len()
        );
        let n = self.svm.len();
        ensure!(
            k_rows.iter().all(|r| r.len() == n),
            "kernel rows must have one entry per training item ({n})"
        );
        let mut row = vec![0.0; n];
        for ((r, c), s) in k_rows.iter().zip(&self.weights).zip(&self.scales) {
            let f = c * s;
            if f != 0.0 {
                row.iter_mut().zip(r).for_each(|(o, v)| *o += f * v);
            }
        }
        Ok(self.svm.decision_unchecked(&row))
    }

    pub fn objective(&self) -> f64 {
        *self.objective_history.last().expect("history starts with the uniform objective")
    }
}

/// `-1/2 a'Y G Y a`, the partial derivative of the objective in each weight.
pub fn objective_gradient(bank: &KernelBank, svm: &BinarySvmModel) -> Vec<f64> {
    let sv: Vec<usize> = svm.support();
    (0..bank.len())
        .map(|m| {
            let g = bank.gram(m);
            let mut s = 0.0;
            for &i in &sv {
                let ai = svm.alpha[i] * svm.y[i];
                for &j in &sv {
                    s += ai * svm.alpha[j] * svm.y[j] * g[(i, j)];
                }
            }
            -0.5 * s
        })
        .collect()
}

fn solve_at(bank: &KernelBank, c: &[f64], y: &[f64], p: &MklParams) -> Result<(BinarySvmModel, f64, Matrix)> {
    let k = combine_unchecked(bank, c);
    let svm = smo_train(&k, y, &p.svm(), None)?;
    let j = svm.dual_objective(&k);
    Ok((svm, j, k))
}

/// Descent direction on the simplex from the gradient, pivoting on the
/// largest weight.
fn descent_direction(c: &[f64], grad: &[f64]) -> Vec<f64> {
    let mu = (0..c.len()).fold(0, |best, m| if c[m] > c[best] { m } else { best });
    let mut d = vec![0.0; c.len()];
    let mut pivot = 0.0;
    for m in 0..c.len() {
        if m == mu {
            continue;
        }
        let reduced = grad[m] - grad[mu];
        if c[m] > 0.0 || reduced < 0.0 {
            d[m] = -reduced;
            pivot += reduced;
        }
    }
    d[mu] = pivot;
    d
}

fn project(c: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = c.iter().map(|&v| if v > 1e-12 { v } else { 0.0 }).collect();
    let s: f64 = clipped.iter().sum();
    clipped.iter().map(|v| v / s).collect()
}

pub fn simple_mkl_train(bank: &KernelBank, y: &[f64], p: &MklParams) -> Result<MklModel> {
    p.validate()?;
    ensure!(y.len() == bank.size(), "{} labels for a kernel bank over {} items", y.len(), bank.size());
    let m_count = bank.len();
    let (normalized, scales) = if p.trace_normalize {
        bank.trace_normalized()
    } else {
        (bank.clone(), vec![1.0; m_count])
    };
    let bank = &normalized;

    let mut c = vec![1.0 / m_count as f64; m_count];
    let (mut svm, mut obj, _) = solve_at(bank, &c, y, p)?;
    let mut history = vec![obj];
    let mut converged = m_count == 1;
    let mut outer = 0;

    while !converged && outer < p.max_outer {
        outer += 1;
        let grad = objective_gradient(bank, &svm);
        let d = descent_direction(&c, &grad);
        if d.iter().all(|v| v.abs() <= 1e-15) {
            converged = true;
            break;
        }
        // largest step keeping every weight nonnegative
        let gamma_max = (0..m_count)
            .filter(|&m| d[m] < 0.0)
            .map(|m| -c[m] / d[m])
            .fold(f64::INFINITY, f64::min);
        if !gamma_max.is_finite() || gamma_max <= 0.0 {
            converged = true;
            break;
        }
        let mut gamma = gamma_max;
        let mut accepted = None;
        for _ in 0..30 {
            let trial = project(&c.iter().zip(&d).map(|(ci, di)| ci + gamma * di).collect::<Vec<_>>());
            let (s, j, _) = solve_at(bank, &trial, y, p)?;
            if j < obj {
                accepted = Some((trial, s, j));
                break;
            }
            gamma *= 0.5;
        }
        let Some((next, s, j)) = accepted else {
            converged = true;
            break;
        };
        debug_assert!(check_simplex(&next, m_count).is_ok());
        let dc = c.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let dj = (obj - j).abs();
        c = next;
        svm = s;
        obj = j;
        history.push(j);
        if dc < p.weight_tol || dj < p.objective_tol * obj.abs() {
            converged = true;
        }
    }

    Ok(MklModel {
        weights: c,
        scales,
        svm,
        objective_history: history,
        outer_iterations: outer,
        converged,
    })
}
