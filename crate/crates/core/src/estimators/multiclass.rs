use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::project_simplex;
use crate::data::ScoredDataset;
use crate::error::{Error, Result};

/// Default bound on the condition number of the stacked system.
pub const DEFAULT_MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexEstimate {
    /// Solution of the stacked linear system; entries may be negative.
    pub theta_raw: Vec<f64>,
    /// Euclidean projection of `theta_raw` onto the simplex.
    pub theta: Vec<f64>,
    /// `|theta_raw - theta|_2`
    pub residual: f64,
    /// Condition number of the stacked system.
    pub condition: f64,
}

/// Multiclass ratio estimator: solves `g_hat = G_hat theta`, `1' theta = 1`
/// as a least-squares problem on the stacked `(m + 1) x (k + 1)` matrix and
/// projects the solution onto the simplex.
///
/// `G_hat[i][j]` is the mean of score component `i` over labeled class `j`,
/// `g_hat[i]` its mean over the unlabeled group.
pub fn multiclass_ratio(scores: &ScoredDataset, max_condition: f64) -> Result<SimplexEstimate> {
    let m = scores.dim();
    let classes = scores.num_classes();
    if classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "multiclass estimator needs at least 2 classes, got {classes}"
        )));
    }
    if m + 1 < classes {
        return Err(Error::DimensionMismatch {
            expected: classes - 1,
            got: m,
        });
    }
    if scores.n_unlabeled() == 0 {
        return Err(Error::Empty("unlabeled group"));
    }
    if let Some(j) = (0..classes).find(|&j| scores.class_count(j) == 0) {
        return Err(Error::EmptyClassGroup { class: j });
    }

    let mut a = DMatrix::from_element(m + 1, classes, 1.0);
    let mut b = DVector::from_element(m + 1, 1.0);
    for i in 0..m {
        b[i] = scores.unlabeled().column_mean(i);
        for j in 0..classes {
            a[(i, j)] = scores.class(j).column_mean(i);
        }
    }

    let sv = a.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition < max_condition) {
        return Err(Error::IllConditioned { condition });
    }

    let solution = if a.is_square() {
        a.lu().solve(&b).ok_or(Error::Singular("multiclass system"))?
    } else {
        a.svd(true, true)
            .solve(&b, 0.0)
            .map_err(|_| Error::Singular("multiclass system"))?
    };
    let theta_raw: Vec<f64> = solution.iter().copied().collect();
    let theta = project_simplex(&theta_raw);
    let residual = theta_raw
        .iter()
        .zip(&theta)
        .map(|(r, p)| (r - p) * (r - p))
        .sum::<f64>()
        .sqrt();
    Ok(SimplexEstimate {
        theta_raw,
        theta,
        residual,
        condition,
    })
}
