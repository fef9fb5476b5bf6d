//! Ridge-regularized (multinomial) logistic regression fit by damped Newton
//! iterations. Class 0 is the reference category, so a binary model has a
//! single intercept and coefficient vector.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::RawDataset;
use crate::error::{Error, Result};
use crate::score::ScoreFunction;

/// Ridge penalty on the (non-intercept) coefficients of the mean negative
/// log-likelihood.
pub const RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// One intercept per non-reference class `1..=k`.
    pub intercepts: Vec<f64>,
    /// One coefficient vector per non-reference class.
    pub coefficients: Vec<Vec<f64>>,
}

impl LogisticModel {
    pub fn num_outputs(&self) -> usize {
        self.intercepts.len()
    }

    pub fn num_features(&self) -> usize {
        self.coefficients.first().map_or(0, Vec::len)
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        std::iter::once(0.0)
            .chain(
                self.intercepts
                    .iter()
                    .zip(&self.coefficients)
                    .map(|(b, w)| b + w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>()),
            )
            .collect()
    }

    /// Probabilities of classes `0..=k`.
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

struct Problem<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    k: usize,
    d: usize,
}

impl Problem<'_> {
    fn width(&self) -> usize {
        self.d + 1
    }

    fn unpack(&self, theta: &DVector<f64>) -> LogisticModel {
        let p = self.width();
        LogisticModel {
            intercepts: (0..self.k).map(|c| theta[c * p]).collect(),
            coefficients: (0..self.k)
                .map(|c| (1..p).map(|j| theta[c * p + j]).collect())
                .collect(),
        }
    }

    fn penalty(&self, theta: &DVector<f64>) -> f64 {
        let p = self.width();
        let sq: f64 = (0..self.k)
            .flat_map(|c| (1..p).map(move |j| c * p + j))
            .map(|i| theta[i] * theta[i])
            .sum();
        0.5 * RIDGE * sq
    }

    fn objective(&self, theta: &DVector<f64>) -> f64 {
        let model = self.unpack(theta);
        let nll: f64 = self
            .x
            .iter()
            .zip(self.y)
            .map(|(x, &y)| {
                let z = model.logits(x);
                log_sum_exp(&z) - z[y]
            })
            .sum();
        nll / self.x.len() as f64 + self.penalty(theta)
    }

    fn gradient_hessian(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let model = self.unpack(theta);
        let p = self.width();
        let dim = self.k * p;
        let n = self.x.len() as f64;
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        let mut xt = vec![1.0; p];
        for (x, &y) in self.x.iter().zip(self.y) {
            xt[1..].copy_from_slice(x);
            let prob = model.predict_proba(x);
            for c in 0..self.k {
                let pc = prob[c + 1];
                let resid = pc - if y == c + 1 { 1.0 } else { 0.0 };
                for a in 0..p {
                    grad[c * p + a] += resid * xt[a];
                }
                for c2 in 0..self.k {
                    let w = pc * (if c == c2 { 1.0 } else { 0.0 } - prob[c2 + 1]);
                    if w == 0.0 {
                        continue;
                    }
                    for a in 0..p {
                        for b in 0..p {
                            hess[(c * p + a, c2 * p + b)] += w * xt[a] * xt[b];
                        }
                    }
                }
            }
        }
        grad /= n;
        hess /= n;
        for c in 0..self.k {
            for j in 1..p {
                let i = c * p + j;
                grad[i] += RIDGE * theta[i];
                hess[(i, i)] += RIDGE;
            }
        }
        (grad, hess)
    }
}

fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let mut jitter = 0.0;
    for _ in 0..12 {
        let mut h = hess.clone();
        for i in 0..h.nrows() {
            h[(i, i)] += jitter;
        }
        if let Some(chol) = h.cholesky() {
            return Some(-chol.solve(grad));
        }
        jitter = if jitter == 0.0 { 1e-12 } else { jitter * 100.0 };
    }
    None
}

/// Fits a logistic model on the given rows and labels (`0..=k`, `k >= 1`).
pub fn fit_rows(x: &[Vec<f64>], y: &[usize], max_iter: usize, tol: f64) -> Result<LogisticModel> {
    if x.is_empty() {
        return Err(Error::Empty("no labeled rows to fit"));
    }
    let classes = y.iter().max().map_or(0, |m| m + 1);
    let distinct = (0..classes).filter(|c| y.contains(c)).count();
    if distinct < 2 {
        return Err(Error::DegenerateProportion(
            "logistic fit needs at least two distinct labels",
        ));
    }
    let prob = Problem {
        x,
        y,
        k: classes - 1,
        d: x[0].len(),
    };
    let mut theta = DVector::zeros(prob.k * prob.width());
    let mut value = prob.objective(&theta);
    let mut last_norm = f64::INFINITY;
    for _ in 0..max_iter {
        let (grad, hess) = prob.gradient_hessian(&theta);
        last_norm = grad.norm();
        if last_norm < tol {
            return Ok(prob.unpack(&theta));
        }
        let step = newton_direction(&hess, &grad).ok_or(Error::Singular("logistic Hessian"))?;
        let slope = grad.dot(&step);
        let mut t = 1.0;
        loop {
            let candidate = &theta + &step * t;
            let v = prob.objective(&candidate);
            if v <= value + 1e-4 * t * slope || t < 1e-10 {
                theta = candidate;
                value = v;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::NonConvergence {
        what: "logistic regression",
        iterations: max_iter,
        last: last_norm,
    })
}

/// Fits on the labeled rows of `data` and returns the probability score
/// `P(Y = j | x)`, `j = 1..=k`.
pub fn fit_logistic(data: &RawDataset, max_iter: usize, tol: f64) -> Result<ScoreFunction> {
    let rows = data.labeled_indices();
    let x: Vec<Vec<f64>> = rows.iter().map(|&i| data.row(i)).collect();
    let y: Vec<usize> = rows
        .iter()
        .map(|&i| data.labels()[i].expect("labeled rows carry labels"))
        .collect();
    fit_rows(&x, &y, max_iter, tol).map(ScoreFunction::Logistic)
}
