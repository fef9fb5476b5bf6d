use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mercer kernel used by the RKHS selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelSpec {
    /// `K(x, x') = <x, x'>`
    Linear,
    /// `K(x, x') = exp(-|x - x'|^2 / (2 h^2))`
    Gaussian { bandwidth: f64 },
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gaussian bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(Self::Gaussian { bandwidth })
    }

    /// Parses `linear` or `gaussian`; the bandwidth is supplied separately.
    pub fn parse(name: &str, bandwidth: Option<f64>) -> Result<Option<Self>> {
        match name {
            "linear" => Ok(Some(Self::Linear)),
            "gaussian" | "gauss" => bandwidth.map(Self::gaussian).transpose(),
            other => Err(Error::InvalidArgument(format!("unknown kernel `{other}`"))),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Self::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
            Self::Gaussian { bandwidth } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * bandwidth * bandwidth)).exp()
            }
        }
    }
}

/// Median of pairwise Euclidean distances; the default Gaussian bandwidth.
pub fn median_pairwise_distance(rows: &[Vec<f64>]) -> f64 {
    let mut d: Vec<f64> = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i + 1..] {
            d.push(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let m = if d.len().is_multiple_of(2) {
        0.5 * (d[mid - 1] + d[mid])
    } else {
        d[mid]
    };
    if m > 0.0 {
        m
    } else {
        1.0
    }
}
