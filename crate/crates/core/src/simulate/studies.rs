//! Monte Carlo studies. Each replicate draws its data from a stream derived
//! from `(seed, cell, replicate)`, replicates run in parallel and records
//! are gathered in cell-then-replicate order, so reports are reproducible
//! bit for bit.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{ExperimentReport, Loss, Record};
use super::scenario::{generate, sine_theta, ScenarioSpec, Sizes};
use crate::data::{RawDataset, ScoredDataset, Scores};
use crate::error::{Error, Result};
use crate::estimators::{
    classify_and_count, combined_estimate, em_estimate, multiclass_ratio, ratio_ci, ratio_estimate, ratio_variance,
    GroupCounts, Regime, ThetaEstimate, DEFAULT_MAX_CONDITION, DEFAULT_MIN_DENOM, EM_MAX_ITER, EM_TOL,
};
use crate::kernel::KernelSpec;
use crate::logistic::fit_logistic;
use crate::regression::{cc_curve, midpoint_grid, ratio_curve, Bandwidth, RegressionInput};
use crate::rkhs::{default_bandwidth, select_g, GammaGrid};
use crate::rng::derive_seed;
use crate::score::{score_dataset, ScoreFunction};
use crate::shift_test::shift_test;

pub const DEFAULT_REPLICATES: usize = 100;
pub const DEFAULT_POWER_B: usize = 200;
pub const DEFAULT_THETAS: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];
pub const DEFAULT_LABEL_COUNTS: [usize; 5] = [10, 20, 30, 40, 50];
pub const DEFAULT_LADDER: [usize; 5] = [250, 500, 1000, 2000, 4000];

const LOGISTIC_MAX_ITER: usize = 200;
const LOGISTIC_TOL: f64 = 1e-8;
/// EM needs scores strictly inside `(0, 1)`.
const EM_SCORE_FLOOR: f64 = 1e-12;
const CC_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Classify and count with the logistic classifier.
    Cc,
    /// Ratio estimator on the hard logistic classifier (adjusted count).
    Ac,
    /// Ratio estimator on logistic probabilities.
    Ratio,
    /// Ratio estimator on the first raw feature.
    Raw,
    /// Prior-adjustment EM on logistic probabilities.
    Em,
    RkhsLinear,
    RkhsGauss,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Cc,
        Method::Ac,
        Method::Ratio,
        Method::Raw,
        Method::Em,
        Method::RkhsLinear,
        Method::RkhsGauss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cc => "cc",
            Method::Ac => "ac",
            Method::Ratio => "ratio",
            Method::Raw => "raw",
            Method::Em => "em",
            Method::RkhsLinear => "rkhs_linear",
            Method::RkhsGauss => "rkhs_gauss",
        }
    }

    fn needs_classifier(self) -> bool {
        !matches!(self, Method::Raw)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
            Error::InvalidArgument(format!("unknown method `{s}`; expected one of {}", names.join(", ")))
        })
    }
}

fn check_replicates(replicates: usize, min: usize) -> Result<()> {
    if replicates < min {
        return Err(Error::InvalidArgument(format!(
            "at least {min} replicates are required, got {replicates}"
        )));
    }
    Ok(())
}

fn binary_truth(spec: &ScenarioSpec) -> Result<f64> {
    spec.theta()
        .ok_or_else(|| Error::InvalidArgument(format!("scenario `{}` is not a binary prevalence scenario", spec.kind())))
}

/// Runs `f(cell, replicate)` over the full grid in parallel and concatenates
/// the records in grid order.
fn run_grid<F>(cells: usize, replicates: usize, f: F) -> Result<Vec<Record>>
where
    F: Fn(usize, usize) -> Result<Vec<Record>> + Sync,
{
    let chunks = (0..cells * replicates)
        .into_par_iter()
        .map(|i| f(i / replicates, i % replicates))
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

fn scalar_record(method: &str, param: f64, replicate: usize, estimate: Option<f64>, truth: Option<f64>) -> Record {
    Record {
        method: method.to_owned(),
        param,
        replicate,
        component: 0,
        estimate,
        truth,
        lo: None,
        hi: None,
    }
}

/// The scenario's own score when it has one, otherwise a logistic fit.
fn study_score(spec: &ScenarioSpec, data: &RawDataset) -> Result<ScoreFunction> {
    match spec.native_score() {
        Some(g) => Ok(g),
        None => fit_logistic(data, LOGISTIC_MAX_ITER, LOGISTIC_TOL),
    }
}

fn map_scores(scores: &ScoredDataset, f: impl Fn(f64) -> f64) -> ScoredDataset {
    let map = |s: &Scores| Scores::from_scalars(s.values().iter().map(|&v| f(v)).collect());
    ScoredDataset::new(map(scores.unlabeled()), scores.classes().iter().map(map).collect())
        .expect("mapping preserves shapes")
}

fn estimate_method(
    method: Method,
    data: &RawDataset,
    classifier: Option<&Result<(ScoreFunction, ScoredDataset)>>,
    seed: u64,
) -> Result<f64> {
    let fitted = || -> Result<&(ScoreFunction, ScoredDataset)> {
        match classifier.expect("classifier fit requested") {
            Ok(c) => Ok(c),
            Err(e) => Err(Error::InvalidArgument(format!("classifier fit failed: {e}"))),
        }
    };
    let theta = match method {
        Method::Raw => ratio_estimate(&score_dataset(data, &ScoreFunction::identity())?, DEFAULT_MIN_DENOM)?.theta,
        Method::Cc => classify_and_count(&fitted()?.1, CC_THRESHOLD)?.theta,
        Method::Ac => {
            let hard = map_scores(&fitted()?.1, |p| if p > CC_THRESHOLD { 1.0 } else { 0.0 });
            ratio_estimate(&hard, DEFAULT_MIN_DENOM)?.theta
        }
        Method::Ratio => ratio_estimate(&fitted()?.1, DEFAULT_MIN_DENOM)?.theta,
        Method::Em => {
            let probs = map_scores(&fitted()?.1, |p| p.clamp(EM_SCORE_FLOOR, 1.0 - EM_SCORE_FLOOR));
            let n0 = probs.class_count(0) as f64;
            let n1 = probs.class_count(1) as f64;
            em_estimate(&probs, n1 / (n0 + n1), EM_MAX_ITER, EM_TOL)?.theta
        }
        Method::RkhsLinear | Method::RkhsGauss => {
            let kernel = if method == Method::RkhsLinear {
                KernelSpec::Linear
            } else {
                KernelSpec::gaussian(default_bandwidth(data))?
            };
            let selection = select_g(data, &kernel, &GammaGrid::Default, seed, &fitted()?.0)?;
            ratio_estimate(&score_dataset(data, &selection.score_function())?, DEFAULT_MIN_DENOM)?.theta
        }
    };
    Ok(theta)
}

/// MSE of each method over a grid of prevalences.
pub fn run_mse_study(
    scenario: &ScenarioSpec,
    thetas: &[f64],
    methods: &[Method],
    replicates: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    check_replicates(replicates, 2)?;
    binary_truth(scenario)?;
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods requested".into()));
    }
    let specs = thetas
        .iter()
        .map(|&t| scenario.with_theta(t))
        .collect::<Result<Vec<_>>>()?;
    let classify = methods.iter().any(|m| m.needs_classifier());
    let records = run_grid(specs.len(), replicates, |cell, rep| {
        let spec = &specs[cell];
        let truth = thetas[cell];
        let data = generate(spec, derive_seed(seed, &[cell as u64, rep as u64]))?;
        let classifier = classify.then(|| {
            let g = fit_logistic(&data, LOGISTIC_MAX_ITER, LOGISTIC_TOL)?;
            let scores = score_dataset(&data, &g)?;
            Ok((g, scores))
        });
        Ok(methods
            .iter()
            .map(|&m| {
                let split_seed = derive_seed(seed, &[cell as u64, rep as u64, 1]);
                let est = estimate_method(m, &data, classifier.as_ref(), split_seed).ok();
                scalar_record(m.name(), truth, rep, est, Some(truth))
            })
            .collect())
    })?;
    Ok(ExperimentReport::new(
        "mse", scenario.clone(), "theta", seed, replicates, Loss::Sum, None, None, None, records,
    ))
}

fn ratio_with_ci(scores: &ScoredDataset, level: f64, regime: Regime) -> Result<ThetaEstimate> {
    let est = ratio_estimate(scores, DEFAULT_MIN_DENOM)?;
    let est = ratio_variance(&est, GroupCounts::of(scores), regime)?;
    ratio_ci(&est, level)
}

/// Fraction of replicates whose normal interval covers the true prevalence.
pub fn run_coverage_study(
    scenario: &ScenarioSpec,
    thetas: &[f64],
    level: f64,
    regime: Regime,
    replicates: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    check_replicates(replicates, 1)?;
    binary_truth(scenario)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {level}")));
    }
    let specs = thetas
        .iter()
        .map(|&t| scenario.with_theta(t))
        .collect::<Result<Vec<_>>>()?;
    let records = run_grid(specs.len(), replicates, |cell, rep| {
        let truth = thetas[cell];
        let data = generate(&specs[cell], derive_seed(seed, &[cell as u64, rep as u64]))?;
        let est = study_score(&specs[cell], &data)
            .and_then(|g| score_dataset(&data, &g))
            .and_then(|s| ratio_with_ci(&s, level, regime))
            .ok();
        let ci = est.as_ref().and_then(|e| e.ci);
        Ok(vec![Record {
            lo: ci.map(|c| c.lo),
            hi: ci.map(|c| c.hi),
            ..scalar_record("ratio", truth, rep, est.map(|e| e.theta), Some(truth))
        }])
    })?;
    Ok(ExperimentReport::new(
        "coverage",
        scenario.clone(),
        "theta",
        seed,
        replicates,
        Loss::Sum,
        None,
        Some(level),
        None,
        records,
    ))
}

/// Rejection rate of the shift test at level `alpha` along a `gamma` grid.
/// Records carry the p-value as the estimate.
#[allow(clippy::too_many_arguments)]
pub fn run_power_study(
    scenario: &ScenarioSpec,
    gammas: &[f64],
    alpha: f64,
    replicates: usize,
    b: usize,
    grid_size: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    check_replicates(replicates, 1)?;
    if scenario.laws().is_none() {
        return Err(Error::InvalidArgument(format!(
            "power studies need a shift family scenario, got `{}`",
            scenario.kind()
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let specs = gammas
        .iter()
        .map(|&g| scenario.with_gamma(g))
        .collect::<Result<Vec<_>>>()?;
    let records = run_grid(specs.len(), replicates, |cell, rep| {
        let path = [cell as u64, rep as u64];
        let data = generate(&specs[cell], derive_seed(seed, &path))?;
        let scores = score_dataset(&data, &ScoreFunction::identity())?;
        let result = shift_test(&scores, b, derive_seed(seed, &[path[0], path[1], 1]), grid_size)?;
        Ok(vec![scalar_record("shift_test", gammas[cell], rep, Some(result.p_value), None)])
    })?;
    Ok(ExperimentReport::new(
        "power",
        scenario.clone(),
        "gamma",
        seed,
        replicates,
        Loss::Sum,
        Some(alpha),
        None,
        scenario.null_gamma(),
        records,
    ))
}

/// Labeled-only, ratio and combined estimators as a function of the number
/// of target labels. The target labels are the true labels of the first `m`
/// unlabeled rows; with `m = 0` only the ratio arm is reported.
pub fn run_combined_study(
    scenario: &ScenarioSpec,
    label_counts: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    check_replicates(replicates, 1)?;
    let truth = binary_truth(scenario)?;
    let n_unlabeled = scenario.sizes().map_or(0, |s| s.n_unlabeled);
    if let Some(&m) = label_counts.iter().find(|&&m| m > n_unlabeled) {
        return Err(Error::InvalidArgument(format!(
            "{m} target labels requested but the scenario has {n_unlabeled} unlabeled rows"
        )));
    }
    let records = run_grid(1, replicates, |_, rep| {
        let data = generate(scenario, derive_seed(seed, &[rep as u64]))?;
        let target = data.unlabeled_true_labels();
        let ratio = study_score(scenario, &data)
            .and_then(|g| score_dataset(&data, &g))
            .and_then(|s| {
                let est = ratio_estimate(&s, DEFAULT_MIN_DENOM)?;
                ratio_variance(&est, GroupCounts::of(&s), Regime::Auto)
            });
        let mut out = Vec::new();
        for &m in label_counts {
            let param = m as f64;
            let ratio_theta = ratio.as_ref().ok().map(|e| e.theta);
            if m == 0 {
                out.push(scalar_record("ratio", param, rep, ratio_theta, Some(truth)));
                continue;
            }
            let labels = &target[..m];
            let labeled = labels.iter().sum::<usize>() as f64 / m as f64;
            let combined = ratio.as_ref().ok().and_then(|r| combined_estimate(r, labels).ok());
            out.push(scalar_record("labeled", param, rep, Some(labeled), Some(truth)));
            out.push(scalar_record("ratio", param, rep, ratio_theta, Some(truth)));
            out.push(scalar_record("combined", param, rep, combined.map(|c| c.theta), Some(truth)));
        }
        Ok(out)
    })?;
    Ok(ExperimentReport::new(
        "combined", scenario.clone(), "labels", seed, replicates, Loss::Sum, None, None, None, records,
    ))
}

/// Raw and simplex-projected multiclass estimates along a sample size
/// ladder with `n_U = n_L = n`. Losses are squared Euclidean errors of the
/// full prevalence vector.
pub fn run_multiclass_study(
    scenario: &ScenarioSpec,
    ladder: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    check_replicates(replicates, 1)?;
    let truth = scenario
        .class_priors()
        .ok_or_else(|| Error::InvalidArgument(format!("scenario `{}` has no class priors", scenario.kind())))?;
    let specs = ladder
        .iter()
        .map(|&n| scenario.with_sizes(Sizes::balanced(n)))
        .collect::<Result<Vec<_>>>()?;
    let records = run_grid(specs.len(), replicates, |cell, rep| {
        let param = ladder[cell] as f64;
        let data = generate(&specs[cell], derive_seed(seed, &[cell as u64, rep as u64]))?;
        let est = fit_logistic(&data, LOGISTIC_MAX_ITER, LOGISTIC_TOL)
            .and_then(|g| score_dataset(&data, &g))
            .and_then(|s| multiclass_ratio(&s, DEFAULT_MAX_CONDITION))
            .ok();
        let mut out = Vec::new();
        for (method, values) in [
            ("raw", est.as_ref().map(|e| &e.theta_raw)),
            ("projected", est.as_ref().map(|e| &e.theta)),
        ] {
            for (j, &t) in truth.iter().enumerate() {
                out.push(Record {
                    component: j,
                    ..scalar_record(method, param, rep, values.map(|v| v[j]), Some(t))
                });
            }
        }
        Ok(out)
    })?;
    Ok(ExperimentReport::new(
        "multiclass", scenario.clone(), "n", seed, replicates, Loss::Sum, None, None, None, records,
    ))
}

/// Ratio and classify-and-count regression curves on a midpoint grid of
/// `[0, 1]`, for each signal strength `mu`. Records hold one row per grid
/// point; the replicate loss is the mean squared error over the grid.
pub fn run_regression_study(
    scenario: &ScenarioSpec,
    mus: &[f64],
    grid_size: usize,
    bandwidth: Bandwidth,
    replicates: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    check_replicates(replicates, 1)?;
    let ScenarioSpec::RegressionSine { k, .. } = *scenario else {
        return Err(Error::InvalidArgument(format!(
            "regression studies need the regression_sine scenario, got `{}`",
            scenario.kind()
        )));
    };
    let specs = mus
        .iter()
        .map(|&mu| match scenario.clone() {
            ScenarioSpec::RegressionSine { mu: _, k, n_unlabeled, n_labeled } => {
                ScenarioSpec::RegressionSine { mu, k, n_unlabeled, n_labeled }
            }
            _ => unreachable!(),
        })
        .collect::<Vec<_>>();
    let grid = midpoint_grid(0.0, 1.0, grid_size);
    let g = scenario.native_score().expect("regression scenario has a score");
    let records = run_grid(specs.len(), replicates, |cell, rep| {
        let param = mus[cell];
        let data = generate(&specs[cell], derive_seed(seed, &[cell as u64, rep as u64]))?;
        let input = RegressionInput::from_dataset(&data, &g)?;
        let ratio = ratio_curve(&input, &grid, bandwidth, DEFAULT_MIN_DENOM).ok();
        let cc = cc_curve(&input, CC_THRESHOLD, &grid, bandwidth).ok();
        let mut out = Vec::with_capacity(2 * grid.len());
        for (method, curve) in [("ratio", &ratio), ("cc", &cc)] {
            for (j, &z) in grid.iter().enumerate() {
                out.push(Record {
                    component: j,
                    ..scalar_record(method, param, rep, curve.as_ref().map(|c| c.theta[j]), Some(sine_theta(k, z)))
                });
            }
        }
        Ok(out)
    })?;
    Ok(ExperimentReport::new(
        "regression", scenario.clone(), "mu", seed, replicates, Loss::Mean, None, None, None, records,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(mu: f64, sizes: Sizes) -> ScenarioSpec {
        ScenarioSpec::Gaussian {
            mean0: -mu,
            mean1: mu,
            sd: 1.0,
            gamma: None,
            theta: 0.3,
            sizes,
        }
    }

    #[test]
    fn two_replicates_give_two_rows_per_cell() {
        let spec = gaussian(1.0, Sizes::new(50, 25, 25));
        let methods: Vec<Method> = Method::ALL.to_vec();
        let r = run_mse_study(&spec, &[0.1, 0.4], &methods, 2, 5).unwrap();
        assert_eq!(r.records.len(), 2 * 2 * methods.len());
        for c in &r.summary {
            assert_eq!(c.replicates, 2);
            assert!(c.mse.unwrap() >= 0.0, "{c:?}");
        }
        assert!(run_mse_study(&spec, &[0.1], &methods, 1, 5).is_err());
        assert!("bella".parse::<Method>().is_err());
        assert_eq!("rkhs_gauss".parse::<Method>().unwrap(), Method::RkhsGauss);
    }

    #[test]
    fn reports_are_deterministic() {
        let spec = gaussian(1.0, Sizes::new(60, 30, 30));
        let a = run_mse_study(&spec, &[0.2], &[Method::Cc, Method::Ratio, Method::Em], 4, 9).unwrap();
        let b = run_mse_study(&spec, &[0.2], &[Method::Cc, Method::Ratio, Method::Em], 4, 9).unwrap();
        assert_eq!(a, b);
        let c = run_mse_study(&spec, &[0.2], &[Method::Cc, Method::Ratio, Method::Em], 4, 10).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn zero_variance_classes_cover_exactly() {
        let spec = ScenarioSpec::Gaussian {
            mean0: 0.0,
            mean1: 1.0,
            sd: 0.0,
            gamma: None,
            theta: 1.0,
            sizes: Sizes::new(20, 5, 5),
        };
        let r = run_coverage_study(&spec, &[0.0, 1.0], 0.95, Regime::Dense, 5, 1).unwrap();
        for c in &r.summary {
            assert_eq!(c.coverage, Some(1.0));
        }
        for rec in &r.records {
            assert_eq!(rec.lo, rec.hi);
            assert_eq!(rec.estimate, rec.truth);
        }
    }

    #[test]
    fn combined_without_labels_is_ratio_only() {
        let spec = gaussian(1.0, Sizes::new(100, 30, 30));
        let r = run_combined_study(&spec, &[0, 10], 3, 2).unwrap();
        let methods: Vec<(&str, f64)> = r.summary.iter().map(|c| (c.method.as_str(), c.param)).collect();
        assert_eq!(
            methods,
            [("ratio", 0.0), ("labeled", 10.0), ("ratio", 10.0), ("combined", 10.0)]
        );
        assert!(run_combined_study(&spec, &[500], 3, 2).is_err());
    }

    #[test]
    fn multiclass_projection_never_hurts() {
        let spec = ScenarioSpec::default_for("multiclass_gaussian").unwrap();
        let r = run_multiclass_study(&spec, &[100, 200], 5, 3).unwrap();
        for n in [100.0, 200.0] {
            let raw = r.replicate_losses("raw", n);
            let proj = r.replicate_losses("projected", n);
            assert_eq!(raw.len(), proj.len());
            for (a, b) in raw.iter().zip(&proj) {
                assert!(b <= &(a + 1e-12));
            }
        }
    }

    #[test]
    fn power_study_marks_null() {
        let spec = ScenarioSpec::default_for("gaussian").unwrap().with_sizes(Sizes::new(40, 20, 20)).unwrap();
        let r = run_power_study(&spec, &[0.0, -3.0], 0.05, 3, 20, 101, 4).unwrap();
        assert_eq!(r.cell("shift_test", 0.0).unwrap().null_param, Some(true));
        assert_eq!(r.cell("shift_test", -3.0).unwrap().null_param, Some(false));
        assert!(r.records.iter().all(|x| x.estimate.is_some_and(|p| (0.0..=1.0).contains(&p))));
        assert!(run_power_study(&ScenarioSpec::default_for("regression_sine").unwrap(), &[0.0], 0.05, 1, 1, 11, 0).is_err());
    }

    #[test]
    fn regression_study_records_grid() {
        let spec = ScenarioSpec::RegressionSine {
            mu: 2.0,
            k: 1,
            n_unlabeled: 200,
            n_labeled: 200,
        };
        let r = run_regression_study(&spec, &[2.0], 10, Bandwidth::Rule, 2, 1).unwrap();
        assert_eq!(r.records.len(), 2 * 2 * 10);
        assert_eq!(r.replicate_losses("ratio", 2.0).len(), 2);
    }
}
