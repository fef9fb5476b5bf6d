//! Prevalence estimators.
//!
//! The binary ratio estimator is
//!
//! ```text
//! theta_UR = (mean_{A_0} g - mean_{A_{1,0}} g) / (mean_{A_{1,1}} g - mean_{A_{1,0}} g)
//! theta_R  = clamp(theta_UR, 0, 1)
//! ```
//!
//! With `g` a hard classifier this is the adjusted count; with `g` a
//! probability score it is the probability-average variant. The asymptotic
//! variance plug-ins use `sigma_U^2 = (1-t) s0^2 + t s1^2 + (mu1-mu0)^2 t (1-t)`.
//!
//! The variance formulas are large-sample results; applying them at a
//! finite `n` (and choosing between the two regimes with a fixed
//! `n_L / n` cut) is an approximation.

mod combined;
mod em;
mod multiclass;
mod simplex;

pub use combined::{combined_estimate, combined_weight, CombinedEstimate};
pub use em::{em_estimate, EM_MAX_ITER, EM_TOL};
pub use multiclass::{multiclass_ratio, SimplexEstimate, DEFAULT_MAX_CONDITION};
pub use simplex::project_simplex;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::ScoredDataset;
use crate::error::{Error, Result};

/// Default guard on `|mu1_hat - mu0_hat|`.
pub const DEFAULT_MIN_DENOM: f64 = 1e-8;

/// `n_L / n` below which [`Regime::Auto`] uses the sparse-label variance.
pub const SPARSE_LABEL_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn clipped(&self) -> Self {
        Self {
            lo: self.lo.clamp(0.0, 1.0),
            hi: self.hi.clamp(0.0, 1.0),
            level: self.level,
        }
    }
}

/// Labeled group moments. Variances use the `1/n_j` normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub mu0: f64,
    pub mu1: f64,
    pub var0: f64,
    pub var1: f64,
    pub denominator: f64,
}

impl GroupStats {
    pub fn from_groups(class0: &[f64], class1: &[f64]) -> Self {
        let (mu0, var0) = mean_var(class0);
        let (mu1, var1) = mean_var(class1);
        Self {
            mu0,
            mu1,
            var0,
            var1,
            denominator: mu1 - mu0,
        }
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean and `1/n` variance.
pub(crate) fn mean_var(values: &[f64]) -> (f64, f64) {
    let m = mean(values);
    let v = values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / values.len() as f64;
    (m, v)
}

pub(crate) fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    /// Trimmed estimate in `[0, 1]`.
    pub theta: f64,
    /// Untrimmed estimate; may fall outside `[0, 1]`.
    pub theta_raw: f64,
    /// Finite-sample variance proxy of `theta`.
    pub variance: Option<f64>,
    /// Normal-approximation interval, not clipped to `[0, 1]`.
    pub ci: Option<Interval>,
    pub diagnostics: Option<GroupStats>,
}

impl ThetaEstimate {
    fn point(theta_raw: f64) -> Self {
        Self {
            theta: clamp01(theta_raw),
            theta_raw,
            variance: None,
            ci: None,
            diagnostics: None,
        }
    }
}

/// Untrimmed and trimmed ratio estimate from group means.
pub fn ratio_from_means(mean_unlabeled: f64, stats: GroupStats, min_denom: f64) -> Result<ThetaEstimate> {
    if !(stats.denominator.abs() > min_denom) {
        return Err(Error::Separability {
            denominator: stats.denominator,
        });
    }
    let theta_raw = (mean_unlabeled - stats.mu0) / stats.denominator;
    Ok(ThetaEstimate {
        diagnostics: Some(stats),
        ..ThetaEstimate::point(theta_raw)
    })
}

pub fn ratio_estimate(scores: &ScoredDataset, min_denom: f64) -> Result<ThetaEstimate> {
    let (unlabeled, class0, class1) = scores.binary_groups()?;
    ratio_from_means(mean(unlabeled), GroupStats::from_groups(class0, class1), min_denom)
}

pub fn classify_and_count(scores: &ScoredDataset, threshold: f64) -> Result<ThetaEstimate> {
    let unlabeled = scores.unlabeled();
    if unlabeled.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: unlabeled.dim(),
        });
    }
    if unlabeled.is_empty() {
        return Err(Error::Empty("unlabeled group"));
    }
    let hits = unlabeled.values().iter().filter(|&&g| g > threshold).count();
    Ok(ThetaEstimate::point(hits as f64 / unlabeled.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Sparse when `n_L / n < 0.05`, dense otherwise.
    Auto,
    /// Labeled fraction bounded away from zero; variance `V / n`.
    Dense,
    /// Labeled fraction vanishing; variance `V' / n_L`.
    Sparse,
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "dense" => Ok(Self::Dense),
            "sparse" => Ok(Self::Sparse),
            other => Err(Error::InvalidArgument(format!("unknown regime `{other}`"))),
        }
    }
}

/// Sample sizes entering the variance plug-ins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounts {
    /// `n_U + n_L`
    pub n: usize,
    pub n_labeled: usize,
    pub n0: usize,
    pub n1: usize,
}

impl GroupCounts {
    pub fn of(scores: &ScoredDataset) -> Self {
        let n_labeled = scores.n_labeled();
        Self {
            n: scores.n_unlabeled() + n_labeled,
            n_labeled,
            n0: scores.class_count(0),
            n1: scores.class_count(1),
        }
    }
}

pub fn ratio_variance(est: &ThetaEstimate, counts: GroupCounts, regime: Regime) -> Result<ThetaEstimate> {
    let stats = est
        .diagnostics
        .ok_or_else(|| Error::InvalidArgument("estimate carries no group statistics".into()))?;
    let GroupCounts { n, n_labeled, n0, n1 } = counts;
    if n == 0 || n_labeled == 0 || n0 == 0 || n1 == 0 {
        return Err(Error::DegenerateProportion("empty group in variance plug-in"));
    }
    let p_l = n_labeled as f64 / n as f64;
    let p0 = n0 as f64 / n_labeled as f64;
    let p1 = n1 as f64 / n_labeled as f64;
    let t = est.theta;
    let d2 = stats.denominator * stats.denominator;
    let labeled_terms = (1.0 - t).powi(2) * stats.var0 / p0 + t * t * stats.var1 / p1;
    let sparse = match regime {
        Regime::Sparse => true,
        Regime::Dense => false,
        Regime::Auto => p_l < SPARSE_LABEL_FRACTION,
    };
    let variance = if sparse {
        labeled_terms / d2 / n_labeled as f64
    } else {
        if p_l >= 1.0 {
            return Err(Error::DegenerateProportion("no unlabeled instances (p_L = 1)"));
        }
        let var_u = (1.0 - t) * stats.var0 + t * stats.var1 + d2 * t * (1.0 - t);
        (var_u / (1.0 - p_l) + labeled_terms / p_l) / d2 / n as f64
    };
    Ok(ThetaEstimate {
        variance: Some(variance),
        ..est.clone()
    })
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn ratio_ci(est: &ThetaEstimate, level: f64) -> Result<ThetaEstimate> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {level}")));
    }
    let variance = est
        .variance
        .ok_or_else(|| Error::InvalidArgument("confidence interval needs a variance".into()))?;
    let half = normal_quantile(0.5 * (1.0 + level)) * variance.sqrt();
    Ok(ThetaEstimate {
        ci: Some(Interval {
            lo: est.theta - half,
            hi: est.theta + half,
            level,
        }),
        ..est.clone()
    })
}

/// Estimated MSE of the ratio estimator induced by `g` when labels are
/// scarce relative to the unlabeled sample.
pub fn empirical_mse(scores: &ScoredDataset, theta_hat: f64) -> Result<f64> {
    let (class0, class1) = scores.binary_classes()?;
    empirical_mse_from_stats(
        GroupStats::from_groups(class0, class1),
        class0.len(),
        class1.len(),
        theta_hat,
    )
}

pub(crate) fn empirical_mse_from_stats(stats: GroupStats, n0: usize, n1: usize, theta_hat: f64) -> Result<f64> {
    if stats.denominator == 0.0 {
        return Err(Error::Separability { denominator: 0.0 });
    }
    let n_l = (n0 + n1) as f64;
    let p0 = n0 as f64 / n_l;
    let p1 = n1 as f64 / n_l;
    let t = theta_hat;
    let inner = stats.var0 * (1.0 - t).powi(2) / p0 + stats.var1 * t * t / p1;
    Ok(inner / (n_l * stats.denominator * stats.denominator))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fixture() -> ScoredDataset {
        ScoredDataset::binary(vec![0.2, 0.8, 0.8, 0.6], vec![0.1, 0.3], vec![0.7, 0.9])
    }

    fn stats(mu0: f64, mu1: f64, var0: f64, var1: f64) -> GroupStats {
        GroupStats {
            mu0,
            mu1,
            var0,
            var1,
            denominator: mu1 - mu0,
        }
    }

    #[test]
    fn ratio_fixture_matches_arithmetic() {
        let est = ratio_estimate(&fixture(), DEFAULT_MIN_DENOM).unwrap();
        // (0.6 - 0.2) / (0.8 - 0.2)
        assert_abs_diff_eq!(est.theta_raw, 0.4 / 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(est.theta, 2.0 / 3.0, epsilon = 1e-12);
        let d = est.diagnostics.unwrap();
        assert_abs_diff_eq!(d.mu0, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(d.var1, 0.01, epsilon = 1e-15);
    }

    #[test]
    fn numerator_zero_and_clamp() {
        let s = ScoredDataset::binary(vec![0.1, 0.3], vec![0.1, 0.3], vec![0.7, 0.9]);
        assert_eq!(ratio_estimate(&s, 1e-8).unwrap().theta, 0.0);

        let est = ratio_from_means(0.9, stats(0.2, 0.8, 0.0, 0.0), 1e-8).unwrap();
        assert_abs_diff_eq!(est.theta_raw, 7.0 / 6.0, epsilon = 1e-12);
        assert_eq!(est.theta, 1.0);
    }

    #[test]
    fn separability_guard() {
        let s = ScoredDataset::binary(vec![0.5], vec![0.4, 0.6], vec![0.5, 0.5]);
        match ratio_estimate(&s, 1e-8) {
            Err(Error::Separability { denominator }) => assert!(denominator.abs() < 1e-12),
            other => panic!("expected separability error, got {other:?}"),
        }
        let empty = ScoredDataset::binary(vec![0.5], vec![], vec![1.0]);
        assert!(matches!(
            ratio_estimate(&empty, 1e-8),
            Err(Error::EmptyClassGroup { class: 0 })
        ));
    }

    #[test]
    fn classify_and_count_examples() {
        let s = fixture();
        assert_eq!(classify_and_count(&s, 0.5).unwrap().theta, 0.75);
        assert_eq!(classify_and_count(&s, 0.95).unwrap().theta, 0.0);
        assert_eq!(classify_and_count(&s, f64::NEG_INFINITY).unwrap().theta, 1.0);
        assert!(classify_and_count(&s, 0.5).unwrap().variance.is_none());
    }

    fn half_est() -> ThetaEstimate {
        ThetaEstimate {
            diagnostics: Some(stats(0.0, 1.0, 0.25, 0.25)),
            ..ThetaEstimate::point(0.5)
        }
    }

    const COUNTS: GroupCounts = GroupCounts {
        n: 400,
        n_labeled: 200,
        n0: 100,
        n1: 100,
    };

    #[test]
    fn dense_and_sparse_variance() {
        let dense = ratio_variance(&half_est(), COUNTS, Regime::Dense).unwrap();
        assert_abs_diff_eq!(dense.variance.unwrap(), 1.5 / 400.0, epsilon = 1e-15);
        let sparse = ratio_variance(&half_est(), COUNTS, Regime::Sparse).unwrap();
        assert_abs_diff_eq!(sparse.variance.unwrap(), 0.25 / 200.0, epsilon = 1e-15);
        // n_L / n = 0.5 -> dense
        let auto = ratio_variance(&half_est(), COUNTS, Regime::Auto).unwrap();
        assert_eq!(auto.variance, dense.variance);
        let few = GroupCounts {
            n: 10_000,
            n_labeled: 200,
            ..COUNTS
        };
        let auto = ratio_variance(&half_est(), few, Regime::Auto).unwrap();
        assert_abs_diff_eq!(auto.variance.unwrap(), 0.25 / 200.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_variance_labeled_terms() {
        let mut est = ThetaEstimate {
            diagnostics: Some(stats(0.0, 1.0, 0.0, 0.0)),
            ..ThetaEstimate::point(1.0)
        };
        let v = ratio_variance(&est, COUNTS, Regime::Sparse).unwrap();
        assert_eq!(v.variance, Some(0.0));
        est.theta = 0.0;
        let v = ratio_variance(&est, COUNTS, Regime::Dense).unwrap();
        assert_eq!(v.variance, Some(0.0));
    }

    #[test]
    fn degenerate_proportions() {
        let bad = GroupCounts { n0: 0, ..COUNTS };
        assert!(matches!(
            ratio_variance(&half_est(), bad, Regime::Dense),
            Err(Error::DegenerateProportion(_))
        ));
        let all_labeled = GroupCounts { n: 200, ..COUNTS };
        assert!(ratio_variance(&half_est(), all_labeled, Regime::Dense).is_err());
    }

    #[test]
    fn confidence_interval() {
        let est = ThetaEstimate {
            variance: Some(0.00375),
            ..ThetaEstimate::point(0.5)
        };
        let ci = ratio_ci(&est, 0.95).unwrap().ci.unwrap();
        assert_abs_diff_eq!(ci.lo, 0.3800, epsilon = 1e-3);
        assert_abs_diff_eq!(ci.hi, 0.6200, epsilon = 1e-3);
        assert_eq!(ci.level, 0.95);

        let zero = ThetaEstimate {
            variance: Some(0.0),
            ..ThetaEstimate::point(0.3)
        };
        let ci = ratio_ci(&zero, 0.95).unwrap().ci.unwrap();
        assert_eq!((ci.lo, ci.hi), (0.3, 0.3));

        let mut last = 0.0;
        for level in [0.5, 0.8, 0.9, 0.95, 0.99, 0.999, 0.9999] {
            let ci = ratio_ci(&est, level).unwrap().ci.unwrap();
            assert!(ci.hi - ci.lo > last);
            last = ci.hi - ci.lo;
        }
        assert!(ratio_ci(&ThetaEstimate::point(0.5), 0.95).is_err());
        assert!(ratio_ci(&est, 1.0).is_err());
    }

    #[test]
    fn empirical_mse_examples() {
        let s = stats(0.0, 1.0, 0.25, 0.25);
        let v = empirical_mse_from_stats(s, 50, 50, 0.5).unwrap();
        assert_abs_diff_eq!(v, 0.0025, epsilon = 1e-15);
        let doubled = empirical_mse_from_stats(s, 100, 100, 0.5).unwrap();
        assert_abs_diff_eq!(doubled, v / 2.0, epsilon = 1e-15);
        let z = empirical_mse_from_stats(stats(0.0, 1.0, 0.0, 0.0), 50, 50, 0.5).unwrap();
        assert_eq!(z, 0.0);
        assert!(empirical_mse_from_stats(stats(1.0, 1.0, 0.1, 0.1), 5, 5, 0.5).is_err());

        // groups {0, 0, 1, 1} / {0, 1, 1, 1}
        let scores = ScoredDataset::binary(vec![0.5], vec![0., 0., 1., 1.], vec![0., 1., 1., 1.]);
        let v = empirical_mse(&scores, 0.4).unwrap();
        let expected = (0.25 * 0.36 / 0.5 + 0.1875 * 0.16 / 0.5) / (8.0 * 0.0625);
        assert_abs_diff_eq!(v, expected, epsilon = 1e-14);
    }
}
