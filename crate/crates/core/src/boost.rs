//! Boosted MKL: AdaBoost by resampling over single-kernel SVM weak learners.
//! Each trial trains one SVM per base kernel on a resampled training set and
//! keeps the one with the smallest weighted error over all training items.
//!
//! A kept trial votes with weight `w_t = ln((1 - e_t) / e_t)`; the sample
//! distribution is then scaled by `exp(+-w_t / 2)` and renormalized, which
//! leaves misclassified items holding exactly half the mass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::kernels::KernelBank;
use crate::linalg::Matrix;
use crate::svm::{label_of, smo_train, BinarySvmModel, SvmParams};

const ERROR_FLOOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoostParams {
    /// Number of boosting trials `T`.
    pub trials: usize,
    pub c_reg: f64,
    pub svm_tol: f64,
    /// Redraws allowed when no kernel beats chance.
    pub max_retries: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            trials: 20,
            c_reg: 10.0,
            svm_tol: 1e-3,
            max_retries: 10,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.trials >= 1, "boosting needs at least one trial");
        self.svm().validate()
    }

    pub fn svm(&self) -> SvmParams {
        SvmParams {
            c_reg: self.c_reg,
            tol: self.svm_tol,
            ..SvmParams::default()
        }
    }
}

fn check_distribution(p: &[f64]) -> Result<()> {
    ensure!(!p.is_empty(), "empty probability vector");
    ensure!(p.iter().all(|&v| v >= 0.0 && v.is_finite()), "probabilities must be nonnegative");
    let s: f64 = p.iter().sum();
    ensure!((s - 1.0).abs() <= 1e-9, "probabilities sum to {s}, not 1");
    Ok(())
}

/// `n` i.i.d. draws from `p` by inverse CDF.
pub fn resample(p: &[f64], n: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    check_distribution(p)?;
    ensure!(n >= 1, "resample size must be positive");
    let mut cdf = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for &v in p {
        acc += v;
        cdf.push(acc);
    }
    let last = p.iter().rposition(|&v| v > 0.0).expect("distribution has mass");
    Ok((0..n)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            cdf.partition_point(|&c| c <= u).min(last)
        })
        .collect())
}

pub fn resample_seeded(p: &[f64], n: usize, seed: u64) -> Result<Vec<usize>> {
    resample(p, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostTrial {
    /// Base kernel of this trial's weak learner.
    pub kernel: usize,
    /// Training indices the weak SVM was fit on, with repeats.
    pub sample: Vec<usize>,
    pub svm: BinarySvmModel,
    /// Classifier weight `ln((1 - e) / e)`.
    pub weight: f64,
    /// Weighted training error after clamping.
    pub error: f64,
}

impl BoostTrial {
    /// Weak decision value from a kernel row over the full training set.
    pub fn decision(&self, k_row: &[f64]) -> f64 {
        let sub: Vec<f64> = self.sample.iter().map(|&i| k_row[i]).collect();
        self.svm.decision_unchecked(&sub)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub trials: Vec<BoostTrial>,
    pub kernel_count: usize,
    pub training_size: usize,
    /// Fewer than the requested trials were kept.
    pub stopped_early: bool,
}

impl BoostedModel {
    /// `sum_t w_t sign(c_t(x))`, one kernel row per base kernel.
    pub fn score(&self, k_rows: &[Vec<f64>]) -> Result<f64> {
        for t in &self.trials {
            let row = k_rows
                .get(t.kernel)
                .ok_or_else(|| Error::validation(format!("no kernel row for kernel {}", t.kernel)))?;
            ensure!(
                row.len() == self.training_size,
                "kernel row has {} entries, expected {}",
                row.len(),
                self.training_size
            );
        }
        Ok(self
            .trials
            .iter()
            .map(|t| t.weight * label_of(t.decision(&k_rows[t.kernel])))
            .sum())
    }

    /// Score divided by the total classifier weight, in `[-1, 1]`.
    pub fn normalized_score(&self, k_rows: &[Vec<f64>]) -> Result<f64> {
        let total: f64 = self.trials.iter().map(|t| t.weight).sum();
        Ok(self.score(k_rows)? / total)
    }

    pub fn predict(&self, k_rows: &[Vec<f64>]) -> Result<f64> {
        Ok(label_of(self.score(k_rows)?))
    }

    /// `prod_t 2 sqrt(e_t (1 - e_t))`.
    pub fn error_bound(&self) -> f64 {
        self.trials.iter().map(|t| 2.0 * (t.error * (1.0 - t.error)).sqrt()).product()
    }

    /// Fraction of training items the ensemble misclassifies.
    pub fn training_error(&self, bank: &KernelBank, y: &[f64]) -> f64 {
        let wrong = (0..y.len())
            .filter(|&i| {
                let rows: Vec<Vec<f64>> = (0..bank.len()).map(|m| bank.gram(m).row(i).to_vec()).collect();
                label_of(self.score(&rows).expect("training rows")) != y[i]
            })
            .count();
        wrong as f64 / y.len() as f64
    }
}

fn restrict(gram: &Matrix, sample: &[usize]) -> Matrix {
    Matrix::from_fn(sample.len(), sample.len(), |a, b| gram[(sample[a], sample[b])])
}

pub fn boost_train(bank: &KernelBank, y: &[f64], p: &BoostParams, seed: u64) -> Result<BoostedModel> {
    boost_train_traced(bank, y, p, seed).map(|(m, _)| m)
}

/// A weak SVM with its per-item correctness and weighted error.
type Candidate = (BinarySvmModel, Vec<bool>, f64);

/// As [`boost_train`], also returning `P_t` before each kept trial and the
/// final distribution.
pub fn boost_train_traced(bank: &KernelBank, y: &[f64], p: &BoostParams, seed: u64) -> Result<(BoostedModel, Vec<Vec<f64>>)> {
    p.validate()?;
    let l = bank.size();
    ensure!(y.len() == l, "{} labels for a kernel bank over {l} items", y.len());
    ensure!(y.iter().all(|&v| v == 1.0 || v == -1.0), "binary labels must be +1 or -1");
    ensure!(y.contains(&1.0) && y.contains(&-1.0), "binary training data contains a single class");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prob = vec![1.0 / l as f64; l];
    let mut history = Vec::new();
    let mut trials = Vec::new();
    let mut retries = 0;
    let mut last_error = String::new();

    while trials.len() < p.trials {
        let sample = resample(&prob, l, &mut rng)?;
        let ys: Vec<f64> = sample.iter().map(|&i| y[i]).collect();
        let usable = ys.contains(&1.0) && ys.contains(&-1.0);
        let best = if usable {
            let candidates: Vec<(BinarySvmModel, Vec<bool>, f64)> = (0..bank.len())
                .into_par_iter()
                .map(|m| {
                    let g = bank.gram(m);
                    let svm = smo_train(&restrict(g, &sample), &ys, &p.svm(), None)?;
                    let correct: Vec<bool> = (0..l)
                        .map(|i| {
                            let sub: Vec<f64> = sample.iter().map(|&j| g[(i, j)]).collect();
                            label_of(svm.decision_unchecked(&sub)) == y[i]
                        })
                        .collect();
                    let err: f64 = correct.iter().zip(&prob).filter(|(c, _)| !**c).map(|(_, p)| p).sum();
                    Ok((svm, correct, err))
                })
                .collect::<Result<_>>()?;
            let mut best: Option<(usize, Candidate)> = None;
            for (m, cand) in candidates.into_iter().enumerate() {
                if best.as_ref().is_none_or(|(_, b)| cand.2 < b.2) {
                    best = Some((m, cand));
                }
            }
            best
        } else {
            None
        };

        let Some((kernel, (svm, correct, raw_error))) = best.filter(|(_, c)| c.2 < 0.5) else {
            last_error = if usable {
                "no kernel reached a weighted error below 0.5".into()
            } else {
                "a resampled set contained a single class".into()
            };
            retries += 1;
            if retries > p.max_retries {
                break;
            }
            continue;
        };
        retries = 0;
        let error = raw_error.clamp(ERROR_FLOOR, 0.5 - ERROR_FLOOR);
        let weight = ((1.0 - error) / error).ln();
        history.push(prob.clone());
        // Half-weight exponents: after renormalization this is the AdaBoost.M1
        // update, under which the product bound on training error holds.
        let (up, down) = ((0.5 * weight).exp(), (-0.5 * weight).exp());
        for (pi, ok) in prob.iter_mut().zip(&correct) {
            *pi *= if *ok { down } else { up };
        }
        let z: f64 = prob.iter().sum();
        prob.iter_mut().for_each(|v| *v /= z);
        trials.push(BoostTrial {
            kernel,
            sample,
            svm,
            weight,
            error,
        });
    }
    history.push(prob);

    if trials.is_empty() {
        return Err(Error::Training(format!(
            "boosting kept no trial after {} draws: {last_error}",
            p.max_retries + 1
        )));
    }
    let stopped_early = trials.len() < p.trials;
    Ok((
        BoostedModel {
            trials,
            kernel_count: bank.len(),
            training_size: l,
            stopped_early,
        },
        history,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Channel, KernelSpec};
    use rand_distr::{Distribution, Normal};

    fn problem(seed: u64, n: usize, spread: f64) -> (KernelBank, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = if i % 2 == 0 { 1.0 } else { -1.0 };
            x.push(vec![label * 2.0 + spread * noise.sample(&mut rng), noise.sample(&mut rng)]);
            y.push(label);
        }
        let specs: Vec<KernelSpec> = (0..2)
            .map(|m| KernelSpec::gaussian(1.0, vec![Channel { offset: m, len: 1 }]))
            .collect();
        (KernelBank::build(&x, &specs).unwrap(), y)
    }

    #[test]
    fn resampling_rules() {
        let one_hot = [0.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        assert!(resample_seeded(&one_hot, 50, 3).unwrap().iter().all(|&i| i == 4));
        assert_eq!(resample_seeded(&[0.25; 4], 20, 9).unwrap(), resample_seeded(&[0.25; 4], 20, 9).unwrap());
        assert!(resample_seeded(&[0.5, 0.6], 3, 0).is_err());
        assert!(resample_seeded(&[1.5, -0.5], 3, 0).is_err());
        assert!(resample_seeded(&[1.0], 0, 0).is_err());
    }

    #[test]
    fn uniform_draw_frequencies() {
        let n = 100_000;
        let k = 5;
        let draws = resample_seeded(&vec![1.0 / k as f64; k], n, 20_240_601).unwrap();
        let p = 1.0 / k as f64;
        let band = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
        for i in 0..k {
            let f = draws.iter().filter(|&&d| d == i).count() as f64 / n as f64;
            assert!((f - p).abs() <= band, "index {i}: {f}");
        }
    }

    #[test]
    fn separable_kernel_is_chosen_first() {
        let (bank, y) = problem(1, 30, 0.1);
        let (model, history) = boost_train_traced(&bank, &y, &BoostParams { trials: 10, ..Default::default() }, 5).unwrap();
        assert_eq!(model.trials[0].kernel, 0);
        assert_eq!(model.trials[0].error, ERROR_FLOOR);
        assert_eq!(model.training_error(&bank, &y), 0.0);
        assert!(model.training_error(&bank, &y) <= model.error_bound());
        for p in &history {
            assert!(p.iter().all(|&v| v >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn bound_and_reweighting_on_noisy_data() {
        let (bank, y) = problem(2, 40, 1.5);
        let p = BoostParams { trials: 15, c_reg: 1.0, ..Default::default() };
        let (model, history) = boost_train_traced(&bank, &y, &p, 11).unwrap();
        assert!(model.training_error(&bank, &y) <= model.error_bound());
        for (t, trial) in model.trials.iter().enumerate() {
            assert!(trial.error > 0.0 && trial.error < 0.5);
            assert!(trial.weight > 0.0);
            let (before, after) = (&history[t], &history[t + 1]);
            let g = bank.gram(trial.kernel);
            for i in 0..y.len() {
                let row = g.row(i);
                if label_of(trial.decision(row)) != y[i] {
                    assert!(after[i] > before[i], "trial {t} item {i}");
                }
            }
            assert!((after.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (bank, y) = problem(3, 24, 1.0);
        let p = BoostParams { trials: 6, ..Default::default() };
        assert_eq!(boost_train(&bank, &y, &p, 42).unwrap(), boost_train(&bank, &y, &p, 42).unwrap());
    }

    #[test]
    fn one_trial_is_its_weak_learner() {
        let (bank, y) = problem(4, 20, 0.8);
        let model = boost_train(&bank, &y, &BoostParams { trials: 1, ..Default::default() }, 1).unwrap();
        let t = &model.trials[0];
        for i in 0..y.len() {
            let rows: Vec<Vec<f64>> = (0..2).map(|m| bank.gram(m).row(i).to_vec()).collect();
            assert_eq!(model.predict(&rows).unwrap(), label_of(t.decision(&rows[t.kernel])));
        }
    }

    #[test]
    fn weighted_votes() {
        let (bank, y) = problem(5, 20, 0.5);
        let mut model = boost_train(&bank, &y, &BoostParams { trials: 2, ..Default::default() }, 2).unwrap();
        let rows: Vec<Vec<f64>> = (0..2).map(|m| bank.gram(m).row(0).to_vec()).collect();
        // brute-force re-summation
        let expect: f64 = model
            .trials
            .iter()
            .map(|t| {
                let mut s = t.svm.bias;
                for (k, &j) in t.sample.iter().enumerate() {
                    s += t.svm.alpha[k] * t.svm.y[k] * rows[t.kernel][j];
                }
                t.weight * if s >= 0.0 { 1.0 } else { -1.0 }
            })
            .sum();
        assert!((model.score(&rows).unwrap() - expect).abs() <= 1e-12);
        assert!(model.score(&rows[..0]).is_err());

        // make the two trials disagree: the heavier one decides
        model.trials[1] = model.trials[0].clone();
        let vote = label_of(model.trials[0].decision(&rows[model.trials[0].kernel]));
        model.trials[1].svm.bias = -vote * 1e6;
        model.trials[0].weight = 2.0;
        model.trials[1].weight = 1.0;
        assert_eq!(model.predict(&rows).unwrap(), vote);
        model.trials[1].svm.bias = vote * 1e6;
        assert_eq!(model.score(&rows).unwrap(), 3.0 * vote);
    }

    #[test]
    fn single_class_is_rejected() {
        let (bank, _) = problem(6, 10, 0.5);
        assert!(boost_train(&bank, &[1.0; 10], &BoostParams::default(), 0).is_err());
    }
}
