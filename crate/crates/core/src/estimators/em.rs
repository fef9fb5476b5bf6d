use super::{mean, ThetaEstimate};
use crate::data::ScoredDataset;
use crate::error::{Error, Result};

pub const EM_TOL: f64 = 1e-8;
pub const EM_MAX_ITER: usize = 10_000;

/// Prior-adjustment EM on posterior scores `g_i = P_train(Y = 1 | x_i)`.
///
/// Iterates `t <- mean_i a_i / (a_i + b_i)` with `a_i = t g_i / t_train` and
/// `b_i = (1 - t)(1 - g_i) / (1 - t_train)`, starting at `t = t_train`.
pub fn em_estimate(
    scores: &ScoredDataset,
    theta_train: f64,
    max_iter: usize,
    tol: f64,
) -> Result<ThetaEstimate> {
    if scores.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: scores.dim(),
        });
    }
    let g = scores.unlabeled().values();
    if g.is_empty() {
        return Err(Error::Empty("unlabeled group"));
    }
    if !(theta_train > 0.0 && theta_train < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "training prevalence must lie in (0, 1), got {theta_train}"
        )));
    }
    if let Some(bad) = g.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::InvalidArgument(format!(
            "EM needs probability scores in (0, 1), got {bad}"
        )));
    }
    let mut theta = theta_train;
    let mut change = f64::INFINITY;
    let mut posterior = vec![0.0; g.len()];
    for _ in 0..max_iter {
        for (p, &gi) in posterior.iter_mut().zip(g) {
            let a = theta * gi / theta_train;
            let b = (1.0 - theta) * (1.0 - gi) / (1.0 - theta_train);
            *p = a / (a + b);
        }
        let next = mean(&posterior);
        change = (next - theta).abs();
        theta = next;
        if change < tol {
            return Ok(ThetaEstimate {
                theta: theta.clamp(0.0, 1.0),
                theta_raw: theta,
                variance: None,
                ci: None,
                diagnostics: None,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "EM",
        iterations: max_iter,
        last: change,
    })
}
