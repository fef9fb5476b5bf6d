//! Generative scenarios for synthetic prior-shift experiments.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Beta, Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{load_corpus, RawDataset, Schema};
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};
use crate::score::ScoreFunction;

/// Group sizes of a binary scenario: unlabeled, labeled class 0, labeled
/// class 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sizes {
    pub n_unlabeled: usize,
    pub n0: usize,
    pub n1: usize,
}

impl Sizes {
    pub fn new(n_unlabeled: usize, n0: usize, n1: usize) -> Self {
        Self { n_unlabeled, n0, n1 }
    }

    /// `n_U = n_L = n` with the labeled sample split evenly.
    pub fn balanced(n: usize) -> Self {
        Self::new(n, n / 2, n - n / 2)
    }

    fn validate(&self) -> Result<()> {
        if self.n_unlabeled == 0 || self.n0 == 0 || self.n1 == 0 {
            return Err(Error::InvalidArgument(format!("group sizes must be positive, got {self:?}")));
        }
        Ok(())
    }
}

/// Benchmark sample sizes `(n_U, n_L, n_1, n_0)` by data set name.
pub const SIZE_PRESETS: [(&str, Sizes); 5] = [
    ("cancer", Sizes { n_unlabeled: 100, n0: 150, n1: 150 }),
    ("candles", Sizes { n_unlabeled: 300, n0: 150, n1: 150 }),
    ("block", Sizes { n_unlabeled: 800, n0: 150, n1: 150 }),
    ("spam", Sizes { n_unlabeled: 2000, n0: 150, n1: 150 }),
    ("bank", Sizes { n_unlabeled: 10000, n0: 150, n1: 150 }),
];

pub fn preset_sizes(name: &str) -> Result<Sizes> {
    SIZE_PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
        .ok_or_else(|| {
            let names: Vec<&str> = SIZE_PRESETS.iter().map(|(n, _)| *n).collect();
            Error::InvalidArgument(format!("unknown preset `{name}`; expected one of {}", names.join(", ")))
        })
}

/// A univariate score law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum Law {
    Normal { mean: f64, sd: f64 },
    /// Rate parameterization: mean `1 / rate`.
    Exponential { rate: f64 },
    Beta { a: f64, b: f64 },
}

impl Law {
    pub fn sample_n(&self, rng: &mut Rng, n: usize) -> Result<Vec<f64>> {
        let bad = |e: &dyn std::fmt::Display| Error::InvalidArgument(format!("{self:?}: {e}"));
        Ok(match *self {
            Law::Normal { mean, sd } => {
                let d = Normal::new(mean, sd).map_err(|e| bad(&e))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Law::Exponential { rate } => {
                if !(rate > 0.0) {
                    return Err(bad(&"rate must be positive"));
                }
                let d = Exp::new(rate).map_err(|e| bad(&e))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Law::Beta { a, b } => {
                let d = Beta::new(a, b).map_err(|e| bad(&e))?;
                (0..n).map(|_| d.sample(rng)).collect()
            }
        })
    }

    pub fn sample(&self, rng: &mut Rng) -> Result<f64> {
        Ok(self.sample_n(rng, 1)?[0])
    }
}

/// Class-conditional score laws of a binary scenario, in the labeled and
/// the unlabeled population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryLaws {
    pub labeled0: Law,
    pub labeled1: Law,
    pub unlabeled0: Law,
    pub unlabeled1: Law,
}

impl BinaryLaws {
    /// Whether the class-conditional laws agree across populations.
    pub fn prior_shift_holds(&self) -> bool {
        self.labeled0 == self.unlabeled0 && self.labeled1 == self.unlabeled1
    }
}

/// In the four shift families the unlabeled class-0 law is indexed by
/// `gamma`; `gamma = None` means the labeled class-0 law (no shift).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioSpec {
    /// Labeled `N(mean0, sd)`, `N(mean1, sd)`; unlabeled class 0 `N(gamma, sd)`.
    Gaussian {
        mean0: f64,
        mean1: f64,
        sd: f64,
        gamma: Option<f64>,
        theta: f64,
        #[serde(flatten)]
        sizes: Sizes,
    },
    /// Labeled `Exp(rate0)`, `Exp(rate1)`; unlabeled class 0 `Exp(gamma)`.
    Exponential {
        rate0: f64,
        rate1: f64,
        gamma: Option<f64>,
        theta: f64,
        #[serde(flatten)]
        sizes: Sizes,
    },
    /// Labeled `N(mean0, 1)`, `Exp(rate1)`; unlabeled class 0 `N(gamma, 1)`.
    GaussianExponential {
        mean0: f64,
        rate1: f64,
        gamma: Option<f64>,
        theta: f64,
        #[serde(flatten)]
        sizes: Sizes,
    },
    /// Labeled `Beta(a0, 1)`, `Beta(1, b1)`; unlabeled class 0 `Beta(gamma, 1)`.
    Beta {
        a0: f64,
        b1: f64,
        gamma: Option<f64>,
        theta: f64,
        #[serde(flatten)]
        sizes: Sizes,
    },
    /// `X | Y = j ~ N(means[j] * 1, I_dim)`; labeled class counts follow
    /// `labeled_priors` exactly, unlabeled labels are drawn from
    /// `unlabeled_priors`.
    MulticlassGaussian {
        dim: usize,
        means: Vec<f64>,
        labeled_priors: Vec<f64>,
        unlabeled_priors: Vec<f64>,
        n_unlabeled: usize,
        n_labeled: usize,
    },
    /// `Z ~ U(0, 1)`, `theta(z) = (sin(2 pi k z) + 1) / 2` in the unlabeled
    /// population and 1/2 in the labeled one; `X | Y = 0 ~ N(mu, 1)`,
    /// `X | Y = 1 ~ N(-mu, 1)`. Features are `x` and the score `1(x < 0)`.
    RegressionSine {
        mu: f64,
        k: u32,
        n_unlabeled: usize,
        n_labeled: usize,
    },
    /// Draws a prior-shift problem from a fully labeled binary corpus.
    ResampleCorpus {
        path: PathBuf,
        label: String,
        features: Option<Vec<String>>,
        theta: f64,
        #[serde(flatten)]
        sizes: Sizes,
    },
}

pub const SCENARIO_KINDS: [&str; 7] = [
    "gaussian",
    "exponential",
    "gaussian_exponential",
    "beta",
    "multiclass_gaussian",
    "regression_sine",
    "resample_corpus",
];

/// Default sizes of the shift-test scenarios.
const SHIFT_SIZES: Sizes = Sizes {
    n_unlabeled: 300,
    n0: 150,
    n1: 150,
};
const SHIFT_THETA: f64 = 0.6;

impl ScenarioSpec {
    /// Default configuration of each kind. The four shift families start at
    /// their no-shift `gamma`; `resample_corpus` needs a path and a label
    /// column.
    pub fn default_for(kind: &str) -> Result<Self> {
        Ok(match kind {
            "gaussian" => Self::Gaussian {
                mean0: 0.0,
                mean1: 2.0,
                sd: 1.0,
                gamma: None,
                theta: SHIFT_THETA,
                sizes: SHIFT_SIZES,
            },
            "exponential" => Self::Exponential {
                rate0: 1.0,
                rate1: 5.0,
                gamma: None,
                theta: SHIFT_THETA,
                sizes: SHIFT_SIZES,
            },
            "gaussian_exponential" => Self::GaussianExponential {
                mean0: 1.0,
                rate1: 1.0,
                gamma: None,
                theta: SHIFT_THETA,
                sizes: SHIFT_SIZES,
            },
            "beta" => Self::Beta {
                a0: 1.0,
                b1: 10.0,
                gamma: None,
                theta: SHIFT_THETA,
                sizes: SHIFT_SIZES,
            },
            "multiclass_gaussian" => Self::MulticlassGaussian {
                dim: 10,
                means: vec![0.0, 0.75, 1.25],
                labeled_priors: vec![0.2, 0.3, 0.5],
                unlabeled_priors: vec![0.25, 0.10, 0.65],
                n_unlabeled: 1000,
                n_labeled: 1000,
            },
            "regression_sine" => Self::RegressionSine {
                mu: 2.0,
                k: 1,
                n_unlabeled: 1000,
                n_labeled: 1000,
            },
            "resample_corpus" => {
                return Err(Error::InvalidArgument(
                    "resample_corpus needs a corpus path and label column".into(),
                ))
            }
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown scenario `{other}`; expected one of {}",
                    SCENARIO_KINDS.join(", ")
                )))
            }
        })
    }

    pub fn resample_corpus(path: impl Into<PathBuf>, label: &str, theta: f64, sizes: Sizes) -> Self {
        Self::ResampleCorpus {
            path: path.into(),
            label: label.to_owned(),
            features: None,
            theta,
            sizes,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Gaussian { .. } => "gaussian",
            Self::Exponential { .. } => "exponential",
            Self::GaussianExponential { .. } => "gaussian_exponential",
            Self::Beta { .. } => "beta",
            Self::MulticlassGaussian { .. } => "multiclass_gaussian",
            Self::RegressionSine { .. } => "regression_sine",
            Self::ResampleCorpus { .. } => "resample_corpus",
        }
    }

    /// Class-conditional laws of the four univariate shift families.
    pub fn laws(&self) -> Option<BinaryLaws> {
        let normal = |mean, sd| Law::Normal { mean, sd };
        Some(match *self {
            Self::Gaussian { mean0, mean1, sd, gamma, .. } => BinaryLaws {
                labeled0: normal(mean0, sd),
                labeled1: normal(mean1, sd),
                unlabeled0: normal(gamma.unwrap_or(mean0), sd),
                unlabeled1: normal(mean1, sd),
            },
            Self::Exponential { rate0, rate1, gamma, .. } => BinaryLaws {
                labeled0: Law::Exponential { rate: rate0 },
                labeled1: Law::Exponential { rate: rate1 },
                unlabeled0: Law::Exponential {
                    rate: gamma.unwrap_or(rate0),
                },
                unlabeled1: Law::Exponential { rate: rate1 },
            },
            Self::GaussianExponential { mean0, rate1, gamma, .. } => BinaryLaws {
                labeled0: normal(mean0, 1.0),
                labeled1: Law::Exponential { rate: rate1 },
                unlabeled0: normal(gamma.unwrap_or(mean0), 1.0),
                unlabeled1: Law::Exponential { rate: rate1 },
            },
            Self::Beta { a0, b1, gamma, .. } => BinaryLaws {
                labeled0: Law::Beta { a: a0, b: 1.0 },
                labeled1: Law::Beta { a: 1.0, b: b1 },
                unlabeled0: Law::Beta {
                    a: gamma.unwrap_or(a0),
                    b: 1.0,
                },
                unlabeled1: Law::Beta { a: 1.0, b: b1 },
            },
            _ => return None,
        })
    }

    /// The `gamma` at which the labeled and unlabeled class-0 laws agree.
    pub fn null_gamma(&self) -> Option<f64> {
        match *self {
            Self::Gaussian { mean0, .. } | Self::GaussianExponential { mean0, .. } => Some(mean0),
            Self::Exponential { rate0, .. } => Some(rate0),
            Self::Beta { a0, .. } => Some(a0),
            _ => None,
        }
    }

    pub fn with_gamma(&self, value: f64) -> Result<Self> {
        let mut out = self.clone();
        match &mut out {
            Self::Gaussian { gamma, .. }
            | Self::Exponential { gamma, .. }
            | Self::GaussianExponential { gamma, .. }
            | Self::Beta { gamma, .. } => *gamma = Some(value),
            _ => return Err(self.unsupported("gamma")),
        }
        Ok(out)
    }

    /// Unlabeled prevalence of class 1 for binary kinds.
    pub fn theta(&self) -> Option<f64> {
        match *self {
            Self::Gaussian { theta, .. }
            | Self::Exponential { theta, .. }
            | Self::GaussianExponential { theta, .. }
            | Self::Beta { theta, .. }
            | Self::ResampleCorpus { theta, .. } => Some(theta),
            _ => None,
        }
    }

    /// Unlabeled class proportions, class 0 first.
    pub fn class_priors(&self) -> Option<Vec<f64>> {
        match self {
            Self::MulticlassGaussian { unlabeled_priors, .. } => Some(unlabeled_priors.clone()),
            _ => self.theta().map(|t| vec![1.0 - t, t]),
        }
    }

    pub fn with_theta(&self, value: f64) -> Result<Self> {
        let mut out = self.clone();
        match &mut out {
            Self::Gaussian { theta, .. }
            | Self::Exponential { theta, .. }
            | Self::GaussianExponential { theta, .. }
            | Self::Beta { theta, .. }
            | Self::ResampleCorpus { theta, .. } => *theta = value,
            _ => return Err(self.unsupported("theta")),
        }
        out.validate()?;
        Ok(out)
    }

    pub fn sizes(&self) -> Option<Sizes> {
        match *self {
            Self::Gaussian { sizes, .. }
            | Self::Exponential { sizes, .. }
            | Self::GaussianExponential { sizes, .. }
            | Self::Beta { sizes, .. }
            | Self::ResampleCorpus { sizes, .. } => Some(sizes),
            _ => None,
        }
    }

    /// Sets binary group sizes, or `n_U` and `n_L = n0 + n1` for the
    /// multiclass and regression kinds.
    pub fn with_sizes(&self, value: Sizes) -> Result<Self> {
        let mut out = self.clone();
        match &mut out {
            Self::Gaussian { sizes, .. }
            | Self::Exponential { sizes, .. }
            | Self::GaussianExponential { sizes, .. }
            | Self::Beta { sizes, .. }
            | Self::ResampleCorpus { sizes, .. } => *sizes = value,
            Self::MulticlassGaussian { n_unlabeled, n_labeled, .. }
            | Self::RegressionSine { n_unlabeled, n_labeled, .. } => {
                *n_unlabeled = value.n_unlabeled;
                *n_labeled = value.n0 + value.n1;
            }
        }
        out.validate()?;
        Ok(out)
    }

    fn unsupported(&self, what: &str) -> Error {
        Error::InvalidArgument(format!("scenario `{}` has no {what} parameter", self.kind()))
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
            }
        };
        match self {
            Self::Gaussian { sd, theta, sizes, .. } => {
                if !(*sd >= 0.0) {
                    return Err(Error::InvalidArgument(format!("sd must be nonnegative, got {sd}")));
                }
                prob("theta", *theta)?;
                sizes.validate()
            }
            Self::Exponential { rate0, rate1, gamma, theta, sizes } => {
                positive("rate0", *rate0)?;
                positive("rate1", *rate1)?;
                gamma.map_or(Ok(()), |g| positive("gamma", g))?;
                prob("theta", *theta)?;
                sizes.validate()
            }
            Self::GaussianExponential { rate1, theta, sizes, .. } => {
                positive("rate1", *rate1)?;
                prob("theta", *theta)?;
                sizes.validate()
            }
            Self::Beta { a0, b1, gamma, theta, sizes } => {
                positive("a0", *a0)?;
                positive("b1", *b1)?;
                gamma.map_or(Ok(()), |g| positive("gamma", g))?;
                prob("theta", *theta)?;
                sizes.validate()
            }
            Self::MulticlassGaussian {
                dim,
                means,
                labeled_priors,
                unlabeled_priors,
                n_unlabeled,
                n_labeled,
            } => {
                if *dim == 0 || *n_unlabeled == 0 || *n_labeled == 0 {
                    return Err(Error::InvalidArgument("dimension and sizes must be positive".into()));
                }
                if means.len() < 2 || labeled_priors.len() != means.len() || unlabeled_priors.len() != means.len() {
                    return Err(Error::InvalidArgument(
                        "means and both prior vectors need one entry per class (at least 2)".into(),
                    ));
                }
                for priors in [labeled_priors, unlabeled_priors] {
                    for &p in priors {
                        prob("class prior", p)?;
                    }
                    if (priors.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                        return Err(Error::InvalidArgument(format!("class priors must sum to 1, got {priors:?}")));
                    }
                }
                Ok(())
            }
            Self::RegressionSine { mu, n_unlabeled, n_labeled, .. } => {
                if !mu.is_finite() || *n_unlabeled == 0 || *n_labeled < 2 {
                    return Err(Error::InvalidArgument(
                        "regression scenario needs finite mu, n_unlabeled >= 1 and n_labeled >= 2".into(),
                    ));
                }
                Ok(())
            }
            Self::ResampleCorpus { theta, sizes, .. } => {
                prob("theta", *theta)?;
                sizes.validate()
            }
        }
    }

    /// Score function that the generated features are meant to be used with
    /// when no classifier is fit: the raw value for univariate kinds and the
    /// precomputed indicator for the regression kind.
    pub fn native_score(&self) -> Option<ScoreFunction> {
        match self {
            Self::RegressionSine { .. } => Some(ScoreFunction::External { columns: vec![1] }),
            Self::MulticlassGaussian { .. } | Self::ResampleCorpus { .. } => None,
            _ => Some(ScoreFunction::identity()),
        }
    }
}

/// Prevalence curve of the regression scenario.
pub fn sine_theta(k: u32, z: f64) -> f64 {
    0.5 * ((2.0 * std::f64::consts::PI * k as f64 * z).sin() + 1.0)
}

/// Draws one dataset. Labeled rows come first (class by class), followed by
/// the unlabeled rows, which keep their true labels for evaluation.
pub fn generate(spec: &ScenarioSpec, seed: u64) -> Result<RawDataset> {
    spec.validate()?;
    let mut rng = rng_from_seed(seed);
    if let Some(laws) = spec.laws() {
        let sizes = spec.sizes().expect("shift families carry sizes");
        let theta = spec.theta().expect("shift families carry theta");
        return generate_univariate(&laws, theta, sizes, &mut rng);
    }
    match spec {
        ScenarioSpec::MulticlassGaussian {
            dim,
            means,
            labeled_priors,
            unlabeled_priors,
            n_unlabeled,
            n_labeled,
        } => generate_multiclass(*dim, means, labeled_priors, unlabeled_priors, *n_unlabeled, *n_labeled, &mut rng),
        ScenarioSpec::RegressionSine { mu, k, n_unlabeled, n_labeled } => {
            generate_regression(*mu, *k, *n_unlabeled, *n_labeled, &mut rng)
        }
        ScenarioSpec::ResampleCorpus {
            path,
            label,
            features,
            theta,
            sizes,
        } => {
            let schema = Schema {
                label: Some(label.clone()),
                features: features.clone(),
                ..Schema::default()
            };
            resample(&load_corpus(path, &schema)?, *theta, *sizes, &mut rng)
        }
        _ => unreachable!("univariate kinds handled above"),
    }
}

fn generate_univariate(laws: &BinaryLaws, theta: f64, sizes: Sizes, rng: &mut Rng) -> Result<RawDataset> {
    let mut values = laws.labeled0.sample_n(rng, sizes.n0)?;
    values.extend(laws.labeled1.sample_n(rng, sizes.n1)?);
    let mut labels: Vec<Option<usize>> = [vec![Some(0); sizes.n0], vec![Some(1); sizes.n1]].concat();
    for _ in 0..sizes.n_unlabeled {
        let y = usize::from(rng.random::<f64>() < theta);
        let law = if y == 1 { laws.unlabeled1 } else { laws.unlabeled0 };
        values.push(law.sample(rng)?);
        labels.push(Some(y));
    }
    let labeled = set_flags(sizes.n0 + sizes.n1, sizes.n_unlabeled);
    let rows: Vec<Vec<f64>> = values.into_iter().map(|v| vec![v]).collect();
    let data = RawDataset::from_rows(&rows, labels, labeled)?;
    Ok(data)
}

fn set_flags(n_labeled: usize, n_unlabeled: usize) -> Vec<bool> {
    [vec![true; n_labeled], vec![false; n_unlabeled]].concat()
}

/// Class counts summing to `n`, by largest remainder.
fn apportion(priors: &[f64], n: usize) -> Vec<usize> {
    let raw: Vec<f64> = priors.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..priors.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())));
    let missing = n - counts.iter().sum::<usize>();
    for &j in order.iter().take(missing) {
        counts[j] += 1;
    }
    counts
}

fn draw_categorical(priors: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, p) in priors.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    priors.len() - 1
}

fn generate_multiclass(
    dim: usize,
    means: &[f64],
    labeled_priors: &[f64],
    unlabeled_priors: &[f64],
    n_unlabeled: usize,
    n_labeled: usize,
    rng: &mut Rng,
) -> Result<RawDataset> {
    let counts = apportion(labeled_priors, n_labeled);
    if let Some(class) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClassGroup { class });
    }
    let mut labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(j, &c)| std::iter::repeat_n(j, c))
        .collect();
    labels.extend((0..n_unlabeled).map(|_| draw_categorical(unlabeled_priors, rng)));
    let rows: Vec<Vec<f64>> = labels
        .iter()
        .map(|&y| {
            let d = Normal::new(means[y], 1.0).expect("unit variance");
            (0..dim).map(|_| d.sample(rng)).collect()
        })
        .collect();
    RawDataset::from_rows(&rows, labels.into_iter().map(Some).collect(), set_flags(n_labeled, n_unlabeled))
}

fn generate_regression(mu: f64, k: u32, n_unlabeled: usize, n_labeled: usize, rng: &mut Rng) -> Result<RawDataset> {
    let n0 = n_labeled / 2;
    let mut labels: Vec<usize> = (0..n_labeled).map(|i| usize::from(i >= n0)).collect();
    let mut z: Vec<f64> = (0..n_labeled).map(|_| rng.random::<f64>()).collect();
    for _ in 0..n_unlabeled {
        let zi: f64 = rng.random();
        labels.push(usize::from(rng.random::<f64>() < sine_theta(k, zi)));
        z.push(zi);
    }
    let rows: Vec<Vec<f64>> = labels
        .iter()
        .map(|&y| {
            let center = if y == 1 { -mu } else { mu };
            let x = Normal::new(center, 1.0).expect("unit variance").sample(rng);
            vec![x, if x < 0.0 { 1.0 } else { 0.0 }]
        })
        .collect();
    let data = RawDataset::new(
        vec!["x".into(), "g".into()],
        nalgebra::DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j]),
        labels.into_iter().map(Some).collect(),
        set_flags(n_labeled, n_unlabeled),
    )?;
    data.with_covariate(z.into_iter().map(Some).collect())
}

/// Labeled rows: `n0` and `n1` drawn per class; unlabeled rows: a
/// `theta`-coin per instance picks the class pool, sampled without
/// replacement.
pub fn resample(corpus: &RawDataset, theta: f64, sizes: Sizes, rng: &mut Rng) -> Result<RawDataset> {
    if corpus.num_classes() != 2 {
        return Err(Error::InvalidArgument(format!(
            "corpus must have exactly two classes, found {}",
            corpus.num_classes()
        )));
    }
    let mut pools: Vec<Vec<usize>> = (0..2).map(|c| corpus.class_indices(c)).collect();
    for pool in &mut pools {
        pool.shuffle(rng);
    }
    let mut next = [0usize; 2];
    let mut take = |class: usize, rows: &mut Vec<usize>| -> Result<()> {
        let i = next[class];
        let &row = pools[class].get(i).ok_or_else(|| {
            Error::CorpusTooSmall(format!(
                "class {class} has {} rows, more were requested",
                pools[class].len()
            ))
        })?;
        next[class] += 1;
        rows.push(row);
        Ok(())
    };
    let mut rows = Vec::with_capacity(sizes.n0 + sizes.n1 + sizes.n_unlabeled);
    for _ in 0..sizes.n0 {
        take(0, &mut rows)?;
    }
    for _ in 0..sizes.n1 {
        take(1, &mut rows)?;
    }
    for _ in 0..sizes.n_unlabeled {
        let class = usize::from(rng.random::<f64>() < theta);
        take(class, &mut rows)?;
    }
    let n_labeled = sizes.n0 + sizes.n1;
    let source = corpus.features();
    let features = nalgebra::DMatrix::from_fn(rows.len(), corpus.dim(), |i, j| source[(rows[i], j)]);
    let labels = rows.iter().map(|&i| corpus.labels()[i]).collect();
    RawDataset::new(
        corpus.feature_names().to_vec(),
        features,
        labels,
        set_flags(n_labeled, sizes.n_unlabeled),
    )
}
