//! Covariate-dependent prevalence `theta(z) = P(Y = 1 | S = 0, z)`.
//!
//! The regression ratio estimator replaces the unlabeled mean of `g` by a
//! Nadaraya-Watson smooth of `g` on a scalar covariate `z`, keeping the
//! labeled class means as in the static estimator.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::RawDataset;
use crate::error::{Error, Result};
use crate::estimators::{mean, GroupStats};
use crate::score::{score_dataset, ScoreFunction};

/// Bandwidth multipliers of the rule-of-thumb value tried by leave-one-out
/// cross-validation.
const CV_MULTIPLIERS: [f64; 9] = [0.25, 0.35, 0.5, 0.7, 1.0, 1.4, 2.0, 2.8, 4.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Bandwidth {
    /// `sd(z) * n_U^{-1/5}` over the unlabeled covariates.
    Rule,
    Fixed(f64),
    /// Leave-one-out squared error over multiples of the rule value.
    CrossValidated,
}

/// Gaussian-kernel weighted mean of `g` at `query`. If every weight
/// underflows the value of the nearest `z` is returned.
pub fn nadaraya_watson(pairs: &[(f64, f64)], bandwidth: f64, query: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("regression pairs"));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {bandwidth}")));
    }
    Ok(nw_unchecked(pairs, bandwidth, query, None))
}

fn nw_unchecked(pairs: &[(f64, f64)], h: f64, query: f64, skip: Option<usize>) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &(z, g)) in pairs.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        let u = (query - z) / h;
        let w = (-0.5 * u * u).exp();
        num += w * g;
        den += w;
    }
    if den > 0.0 {
        return num / den;
    }
    pairs
        .iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != skip)
        .min_by(|a, b| (a.1 .0 - query).abs().total_cmp(&(b.1 .0 - query).abs()))
        .map_or(f64::NAN, |(_, &(_, g))| g)
}

/// Sample standard deviation of `z` times `n^{-1/5}`; 1 when the spread is
/// degenerate.
pub fn rule_bandwidth(z: &[f64]) -> f64 {
    let n = z.len() as f64;
    if z.len() < 2 {
        return 1.0;
    }
    let m = mean(z);
    let sd = (z.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd > 0.0 {
        sd * n.powf(-0.2)
    } else {
        1.0
    }
}

/// Leave-one-out choice among multiples of [`rule_bandwidth`]; ties go to the
/// smaller bandwidth.
pub fn cv_bandwidth(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument("cross-validation needs at least 2 pairs".into()));
    }
    let z: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let base = rule_bandwidth(&z);
    let scores: Vec<(f64, f64)> = CV_MULTIPLIERS
        .par_iter()
        .map(|&m| {
            let h = base * m;
            let sse: f64 = (0..pairs.len())
                .map(|i| {
                    let r = pairs[i].1 - nw_unchecked(pairs, h, pairs[i].0, Some(i));
                    r * r
                })
                .sum();
            (h, sse)
        })
        .collect();
    let best = scores
        .iter()
        .fold((f64::NAN, f64::INFINITY), |acc, &(h, s)| if s < acc.1 { (h, s) } else { acc });
    Ok(best.0)
}

fn resolve_bandwidth(pairs: &[(f64, f64)], bandwidth: Bandwidth) -> Result<f64> {
    match bandwidth {
        Bandwidth::Rule => Ok(rule_bandwidth(&pairs.iter().map(|p| p.0).collect::<Vec<_>>())),
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => Ok(h),
        Bandwidth::Fixed(h) => Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}"))),
        Bandwidth::CrossValidated => cv_bandwidth(pairs),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionCurve {
    pub grid: Vec<f64>,
    /// Clamped to `[0, 1]`.
    pub theta: Vec<f64>,
    pub theta_raw: Vec<f64>,
    pub bandwidth: f64,
}

impl RegressionCurve {
    /// Writes `z,theta` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["z", "theta"])?;
        for (z, t) in self.grid.iter().zip(&self.theta) {
            w.write_record([z.to_string(), t.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Mean squared deviation from `truth` over the grid.
    pub fn mise(&self, truth: impl Fn(f64) -> f64) -> f64 {
        let sq: f64 = self
            .grid
            .iter()
            .zip(&self.theta)
            .map(|(&z, &t)| (t - truth(z)).powi(2))
            .sum();
        sq / self.grid.len() as f64
    }

    pub fn sup_distance(&self, other: &RegressionCurve) -> f64 {
        self.theta
            .iter()
            .zip(&other.theta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Scalar scores of a binary problem with the unlabeled `(z, g)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionInput {
    pub pairs: Vec<(f64, f64)>,
    pub class0: Vec<f64>,
    pub class1: Vec<f64>,
}

impl RegressionInput {
    pub fn from_dataset(data: &RawDataset, g: &ScoreFunction) -> Result<Self> {
        let z = data
            .covariate()
            .ok_or_else(|| Error::MissingColumn("covariate".into()))?;
        let scores = score_dataset(data, g)?;
        let (unlabeled, class0, class1) = scores.binary_groups()?;
        let pairs = data
            .unlabeled_indices()
            .into_iter()
            .zip(unlabeled)
            .map(|(i, &g)| (z[i].expect("unlabeled rows carry a covariate"), g))
            .collect();
        Ok(Self {
            pairs,
            class0: class0.to_vec(),
            class1: class1.to_vec(),
        })
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Empty("regression grid"));
    }
    if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

fn smooth(pairs: &[(f64, f64)], grid: &[f64], bandwidth: Bandwidth) -> Result<(Vec<f64>, f64)> {
    check_grid(grid)?;
    if pairs.is_empty() {
        return Err(Error::Empty("unlabeled group"));
    }
    let h = resolve_bandwidth(pairs, bandwidth)?;
    let fitted = grid.par_iter().map(|&q| nw_unchecked(pairs, h, q, None)).collect();
    Ok((fitted, h))
}

pub fn ratio_curve(input: &RegressionInput, grid: &[f64], bandwidth: Bandwidth, min_denom: f64) -> Result<RegressionCurve> {
    if input.class0.is_empty() || input.class1.is_empty() {
        return Err(Error::Empty("labeled class group"));
    }
    let stats = GroupStats::from_groups(&input.class0, &input.class1);
    if !(stats.denominator.abs() > min_denom) {
        return Err(Error::Separability {
            denominator: stats.denominator,
        });
    }
    let (fitted, h) = smooth(&input.pairs, grid, bandwidth)?;
    let theta_raw: Vec<f64> = fitted.iter().map(|m| (m - stats.mu0) / stats.denominator).collect();
    Ok(RegressionCurve {
        grid: grid.to_vec(),
        theta: theta_raw.iter().map(|t| t.clamp(0.0, 1.0)).collect(),
        theta_raw,
        bandwidth: h,
    })
}

pub fn cc_curve(input: &RegressionInput, threshold: f64, grid: &[f64], bandwidth: Bandwidth) -> Result<RegressionCurve> {
    let hits: Vec<(f64, f64)> = input
        .pairs
        .iter()
        .map(|&(z, g)| (z, if g > threshold { 1.0 } else { 0.0 }))
        .collect();
    let (theta, h) = smooth(&hits, grid, bandwidth)?;
    Ok(RegressionCurve {
        grid: grid.to_vec(),
        theta: theta.clone(),
        theta_raw: theta,
        bandwidth: h,
    })
}

/// Regression ratio estimate of `theta(z)` on `grid`.
pub fn ratio_regress(
    data: &RawDataset,
    g: &ScoreFunction,
    grid: &[f64],
    bandwidth: Bandwidth,
    min_denom: f64,
) -> Result<RegressionCurve> {
    ratio_curve(&RegressionInput::from_dataset(data, g)?, grid, bandwidth, min_denom)
}

/// Smooth of `1(g > threshold)` on `z`, without correction.
pub fn cc_regress(
    data: &RawDataset,
    g: &ScoreFunction,
    threshold: f64,
    grid: &[f64],
    bandwidth: Bandwidth,
) -> Result<RegressionCurve> {
    cc_curve(&RegressionInput::from_dataset(data, g)?, threshold, grid, bandwidth)
}

/// `n` equally spaced midpoints of `[lo, hi]`.
pub fn midpoint_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / n as f64;
    (0..n).map(|i| lo + (i as f64 + 0.5) * step).collect()
}
