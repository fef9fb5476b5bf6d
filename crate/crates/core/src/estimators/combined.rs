use serde::{Deserialize, Serialize};

use super::{clamp01, ThetaEstimate};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedEstimate {
    /// `w theta_R + (1 - w) theta_L`, clamped to `[0, 1]`.
    pub theta: f64,
    pub weight: f64,
    pub theta_ratio: f64,
    pub theta_labeled: f64,
    pub mse_ratio_hat: f64,
    pub mse_labeled_hat: f64,
    pub n_target_labels: usize,
}

/// `w = MSE_L / (MSE_L + MSE_R)`, with `w = 0.5` when both are zero.
pub fn combined_weight(mse_labeled: f64, mse_ratio: f64) -> f64 {
    let total = mse_labeled + mse_ratio;
    if total > 0.0 {
        mse_labeled / total
    } else {
        0.5
    }
}

/// Combines the ratio estimate with the sample mean of labels observed in
/// the target population.
pub fn combined_estimate(ratio: &ThetaEstimate, target_labels: &[usize]) -> Result<CombinedEstimate> {
    if target_labels.is_empty() {
        return Err(Error::Empty("target labels"));
    }
    if let Some(bad) = target_labels.iter().find(|&&y| y > 1) {
        return Err(Error::InvalidArgument(format!("target label {bad} is not binary")));
    }
    let mse_ratio_hat = ratio
        .variance
        .ok_or_else(|| Error::InvalidArgument("ratio estimate carries no variance".into()))?;
    let m = target_labels.len() as f64;
    let theta_labeled = target_labels.iter().sum::<usize>() as f64 / m;
    let mse_labeled_hat = theta_labeled * (1.0 - theta_labeled) / m;
    let weight = combined_weight(mse_labeled_hat, mse_ratio_hat);
    Ok(CombinedEstimate {
        theta: clamp01(weight * ratio.theta + (1.0 - weight) * theta_labeled),
        weight,
        theta_ratio: ratio.theta,
        theta_labeled,
        mse_ratio_hat,
        mse_labeled_hat,
        n_target_labels: target_labels.len(),
    })
}
