//! Choosing the score function by minimizing the estimated MSE of the
//! ratio estimator over an RKHS.
//!
//! For `g(x) = sum_{i in A_1} w_i K(x, x_i)` the estimated MSE is
//! `w' N w / (n_L w' M w)` with `M = (m1 - m0)(m1 - m0)'`. Since `M` has rank
//! one, the top generalized eigenvector of `M w = lambda (N + gamma I) w` is
//! `(N + gamma I)^{-1} (m1 - m0)` up to scale, so one linear solve replaces
//! an eigendecomposition. The ridge `gamma` is picked on a held-out split.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{RawDataset, ScoredDataset, Scores};
use crate::error::{Error, Result};
use crate::estimators::{empirical_mse, ratio_estimate, DEFAULT_MIN_DENOM};
use crate::kernel::{median_pairwise_distance, KernelSpec};
use crate::rng::rng_from_seed;
use crate::score::{score_dataset, ScoreFunction};

/// Fixed part of the default ridge grid; the median eigenvalue of `N` is
/// appended at selection time.
pub const DEFAULT_GAMMAS: [f64; 5] = [1e-8, 1e-6, 1e-4, 1e-2, 1.0];

#[derive(Debug, Clone)]
pub struct RkhsMatrices {
    pub gram: DMatrix<f64>,
    pub m0: DVector<f64>,
    pub m1: DVector<f64>,
    /// `(m1 - m0)(m1 - m0)'`
    pub m: DMatrix<f64>,
    /// `t^2 / p1 Sigma1 + (1 - t)^2 / p0 Sigma0`
    pub n: DMatrix<f64>,
    /// Labeled rows, in dataset order; the anchors of the expansion.
    pub anchors: Vec<Vec<f64>>,
}

impl RkhsMatrices {
    pub fn diff(&self) -> DVector<f64> {
        &self.m1 - &self.m0
    }
}

/// Builds the Gram matrix over `A_1`, the class-mean kernel columns, and the
/// matrices `M` and `N` of the MSE ratio. Covariances use `1/n_i`, matching
/// the variance estimates of [`empirical_mse`].
pub fn build_matrices(data: &RawDataset, kernel: &KernelSpec, theta_pilot: f64) -> Result<RkhsMatrices> {
    if !(0.0..=1.0).contains(&theta_pilot) {
        return Err(Error::InvalidArgument(format!(
            "pilot prevalence must lie in [0, 1], got {theta_pilot}"
        )));
    }
    let labeled = data.labeled_indices();
    let classes: Vec<usize> = labeled
        .iter()
        .map(|&i| data.labels()[i].expect("labeled rows carry labels"))
        .collect();
    if let Some(&bad) = classes.iter().find(|&&c| c > 1) {
        return Err(Error::InvalidArgument(format!(
            "RKHS selection needs binary labels, found {bad}"
        )));
    }
    let anchors: Vec<Vec<f64>> = labeled.iter().map(|&i| data.row(i)).collect();
    let n_l = anchors.len();
    let gram = DMatrix::from_fn(n_l, n_l, |i, j| kernel.eval(&anchors[i], &anchors[j]));

    let mut means = Vec::with_capacity(2);
    let mut covs = Vec::with_capacity(2);
    let mut counts = [0usize; 2];
    for (class, count) in counts.iter_mut().enumerate() {
        let members: Vec<usize> = (0..n_l).filter(|&r| classes[r] == class).collect();
        if members.is_empty() {
            return Err(Error::EmptyClassGroup { class });
        }
        *count = members.len();
        let block = gram.select_rows(&members);
        let mean = block.row_mean().transpose();
        let centered = DMatrix::from_fn(block.nrows(), n_l, |r, c| block[(r, c)] - mean[c]);
        covs.push(centered.transpose() * &centered / members.len() as f64);
        means.push(mean);
    }
    let p0 = counts[0] as f64 / n_l as f64;
    let p1 = counts[1] as f64 / n_l as f64;
    let n = &covs[1] * (theta_pilot * theta_pilot / p1) + &covs[0] * ((1.0 - theta_pilot).powi(2) / p0);
    let m1 = means.pop().expect("two classes");
    let m0 = means.pop().expect("two classes");
    let d = &m1 - &m0;
    let m = &d * d.transpose();
    Ok(RkhsMatrices {
        gram,
        m0,
        m1,
        m,
        n,
        anchors,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSolution {
    /// Unit-norm weights with `w' (m1 - m0) > 0`.
    pub weights: DVector<f64>,
    /// Generalized eigenvalue `w' M w / w' (N + gamma I) w`.
    pub eigenvalue: f64,
}

pub fn solve_weights(
    m: &DMatrix<f64>,
    n: &DMatrix<f64>,
    m0: &DVector<f64>,
    m1: &DVector<f64>,
    gamma: f64,
) -> Result<WeightSolution> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("gamma must be nonnegative, got {gamma}")));
    }
    let d = m1 - m0;
    if d.norm() == 0.0 {
        return Err(Error::Separability { denominator: 0.0 });
    }
    let mut a = n.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += gamma;
    }
    let u = match a.clone().cholesky() {
        Some(chol) => chol.solve(&d),
        None => a.clone().lu().solve(&d).ok_or(Error::Singular("N + gamma I"))?,
    };
    let norm = u.norm();
    if !norm.is_finite() || norm == 0.0 {
        return Err(Error::Singular("N + gamma I"));
    }
    let mut w = u / norm;
    if w.dot(&d) < 0.0 {
        w = -w;
    }
    let eigenvalue = (w.transpose() * m * &w)[0] / (w.transpose() * &a * &w)[0];
    Ok(WeightSolution { weights: w, eigenvalue })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GammaGrid {
    /// [`DEFAULT_GAMMAS`] plus the median eigenvalue of `N`.
    Default,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaCandidate {
    pub gamma: f64,
    /// Held-out estimated MSE; `None` when the solve failed.
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RkhsSelection {
    pub kernel: KernelSpec,
    pub weights: Vec<f64>,
    pub anchors: Vec<Vec<f64>>,
    pub gamma: f64,
    /// Estimated MSE of the induced score on the held-out split.
    pub objective: f64,
    pub theta_pilot: f64,
    pub split_seed: u64,
    pub candidates: Vec<GammaCandidate>,
}

impl RkhsSelection {
    pub fn score_function(&self) -> ScoreFunction {
        ScoreFunction::Rkhs {
            kernel: self.kernel,
            weights: self.weights.clone(),
            anchors: self.anchors.clone(),
        }
    }

    /// Recomputes the held-out objective on `data` with the stored split.
    pub fn heldout_objective(&self, data: &RawDataset) -> Result<f64> {
        let (_, heldout) = stratified_split(data, self.split_seed)?;
        let g = self.score_function();
        empirical_mse(&labeled_groups(data, &heldout, &g)?, self.theta_pilot)
    }
}

/// Stratified 50/50 split of the labeled rows (per class); the first half
/// gets the extra row when a class has odd size.
pub fn stratified_split(data: &RawDataset, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = rng_from_seed(seed);
    let (mut fit, mut heldout) = (Vec::new(), Vec::new());
    for class in 0..2 {
        let mut rows = data.class_indices(class);
        if rows.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "class {class} needs at least 2 labeled rows to split, has {}",
                rows.len()
            )));
        }
        rows.shuffle(&mut rng);
        let half = rows.len().div_ceil(2);
        fit.extend_from_slice(&rows[..half]);
        heldout.extend_from_slice(&rows[half..]);
    }
    fit.sort_unstable();
    heldout.sort_unstable();
    Ok((fit, heldout))
}

fn labeled_groups(data: &RawDataset, rows: &[usize], g: &ScoreFunction) -> Result<ScoredDataset> {
    let classes = (0..2)
        .map(|c| {
            let members: Vec<usize> = rows
                .iter()
                .copied()
                .filter(|&i| data.labels()[i] == Some(c))
                .collect();
            g.evaluate_rows(data, &members)
        })
        .collect::<Result<Vec<_>>>()?;
    ScoredDataset::new(Scores::from_scalars(Vec::new()), classes)
}

/// Median pairwise distance over the labeled rows.
pub fn default_bandwidth(data: &RawDataset) -> f64 {
    let rows: Vec<Vec<f64>> = data.labeled_indices().into_iter().map(|i| data.row(i)).collect();
    median_pairwise_distance(&rows)
}

fn median_eigenvalue(n: &DMatrix<f64>) -> f64 {
    let mut ev: Vec<f64> = SymmetricEigen::new(n.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev[ev.len() / 2].max(0.0)
}

pub fn select_g(
    data: &RawDataset,
    kernel: &KernelSpec,
    grid: &GammaGrid,
    split_seed: u64,
    pilot: &ScoreFunction,
) -> Result<RkhsSelection> {
    let (fit_rows, heldout_rows) = stratified_split(data, split_seed)?;
    let unlabeled = data.unlabeled_indices();
    let fit_data = data.select_rows(&[fit_rows.as_slice(), unlabeled.as_slice()].concat())?;

    let theta_pilot = ratio_estimate(&score_dataset(&fit_data, pilot)?, DEFAULT_MIN_DENOM)?.theta;
    let mats = build_matrices(&fit_data, kernel, theta_pilot)?;

    let mut gammas: Vec<f64> = match grid {
        GammaGrid::Fixed(g) => g.clone(),
        GammaGrid::Default => {
            let mut g = DEFAULT_GAMMAS.to_vec();
            let med = median_eigenvalue(&mats.n);
            if med > 0.0 {
                g.push(med);
            }
            g
        }
    };
    let mut seen = Vec::with_capacity(gammas.len());
    gammas.retain(|g| {
        let fresh = !seen.contains(&g.to_bits());
        seen.push(g.to_bits());
        fresh
    });
    if gammas.is_empty() {
        return Err(Error::Empty("gamma grid"));
    }

    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    let mut candidates = Vec::with_capacity(gammas.len());
    for (idx, &gamma) in gammas.iter().enumerate() {
        let objective = solve_weights(&mats.m, &mats.n, &mats.m0, &mats.m1, gamma)
            .and_then(|sol| {
                let weights: Vec<f64> = sol.weights.iter().copied().collect();
                let g = ScoreFunction::Rkhs {
                    kernel: *kernel,
                    weights: weights.clone(),
                    anchors: mats.anchors.clone(),
                };
                let mse = empirical_mse(&labeled_groups(data, &heldout_rows, &g)?, theta_pilot)?;
                Ok((mse, weights))
            })
            .ok()
            .filter(|(mse, _)| mse.is_finite());
        candidates.push(GammaCandidate {
            gamma,
            objective: objective.as_ref().map(|(m, _)| *m),
        });
        if let Some((mse, weights)) = objective {
            if best.as_ref().is_none_or(|(_, b, _)| mse < *b) {
                best = Some((idx, mse, weights));
            }
        }
    }
    let (idx, objective, weights) =
        best.ok_or_else(|| Error::InvalidArgument("no gamma produced a finite objective".into()))?;
    Ok(RkhsSelection {
        kernel: *kernel,
        weights,
        anchors: mats.anchors,
        gamma: gammas[idx],
        objective,
        theta_pilot,
        split_seed,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logistic::fit_logistic;
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Dense generalized eigensolver: top eigenvector of `L^{-1} M L^{-T}`
    /// mapped back through `L^{-T}`, with `A = L L'`.
    fn dense_top_eigenvector(m: &DMatrix<f64>, a: &DMatrix<f64>) -> DVector<f64> {
        let l = a.clone().cholesky().unwrap().l();
        let linv = l.clone().try_inverse().unwrap();
        let c = &linv * m * linv.transpose();
        let c = (&c + c.transpose()) * 0.5;
        let eig = SymmetricEigen::new(c);
        let (top, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let v = eig.eigenvectors.column(top).into_owned();
        let w = linv.transpose() * v;
        w.normalize()
    }

    fn random_psd(rng: &mut crate::rng::Rng, n: usize) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        &b * b.transpose()
    }

    #[test]
    fn identity_metric_gives_normalized_difference() {
        let m0 = DVector::from_vec(vec![0.0, 0.0, 0.0]);
        let m1 = DVector::from_vec(vec![3.0, 0.0, 4.0]);
        let d = &m1 - &m0;
        let sol = solve_weights(&(&d * d.transpose()), &DMatrix::identity(3, 3), &m0, &m1, 0.0).unwrap();
        assert!((sol.weights - DVector::from_vec(vec![0.6, 0.0, 0.8])).norm() < 1e-15);
    }

    #[test]
    fn diagonal_metric_matches_dense_solver() {
        let m0 = DVector::from_vec(vec![0.0, 0.0]);
        let m1 = DVector::from_vec(vec![1.0, 1.0]);
        let n = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let m = DMatrix::from_element(2, 2, 1.0);
        let sol = solve_weights(&m, &n, &m0, &m1, 0.0).unwrap();
        let oracle = dense_top_eigenvector(&m, &n);
        let oracle = if oracle[0] < 0.0 { -oracle } else { oracle };
        assert!((sol.weights.clone() - &oracle).norm() < 1e-12);
        assert!((sol.weights[0] - 0.4472).abs() < 1e-4);
        assert!((sol.weights[1] - 0.8944).abs() < 1e-4);
    }

    #[test]
    fn rayleigh_quotient_beats_random_directions() {
        let mut rng = rng_from_seed(3);
        for _ in 0..20 {
            let n = random_psd(&mut rng, 6);
            let m0 = DVector::from_fn(6, |_, _| rng.random::<f64>());
            let m1 = DVector::from_fn(6, |_, _| rng.random::<f64>());
            let d = &m1 - &m0;
            let m = &d * d.transpose();
            let gamma = 1e-3;
            let a = &n + DMatrix::identity(6, 6) * gamma;
            let sol = solve_weights(&m, &n, &m0, &m1, gamma).unwrap();
            let q = |w: &DVector<f64>| (w.transpose() * &m * w)[0] / (w.transpose() * &a * w)[0];
            let best = q(&sol.weights);
            for _ in 0..1000 {
                let w = DVector::from_fn(6, |_, _| StandardNormal.sample(&mut rng)).normalize();
                assert!(q(&w) <= best * (1.0 + 1e-12));
            }
            let oracle = dense_top_eigenvector(&m, &a);
            assert!((oracle.dot(&sol.weights).abs() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn scaling_metric_leaves_weights_unchanged() {
        let mut rng = rng_from_seed(8);
        let n = random_psd(&mut rng, 5);
        let m0 = DVector::from_fn(5, |_, _| rng.random::<f64>());
        let m1 = DVector::from_fn(5, |_, _| rng.random::<f64>());
        let d = &m1 - &m0;
        let m = &d * d.transpose();
        let a = solve_weights(&m, &n, &m0, &m1, 0.01).unwrap();
        let b = solve_weights(&m, &(&n * 7.5), &m0, &m1, 0.075).unwrap();
        assert!((a.weights - b.weights).norm() < 1e-12);
    }

    #[test]
    fn singular_metric_is_an_error() {
        let m0 = DVector::from_vec(vec![0.0, 0.0]);
        let m1 = DVector::from_vec(vec![1.0, 2.0]);
        let d = &m1 - &m0;
        let err = solve_weights(&(&d * d.transpose()), &DMatrix::zeros(2, 2), &m0, &m1, 0.0);
        assert!(matches!(err, Err(Error::Singular(_))));
    }

    #[test]
    fn two_point_linear_kernel_matrices() {
        // x_a = (1, 2) in class 0, x_b = (3, -1) in class 1
        let data = RawDataset::from_rows(
            &[vec![1.0, 2.0], vec![3.0, -1.0]],
            vec![Some(0), Some(1)],
            vec![true, true],
        )
        .unwrap();
        let mats = build_matrices(&data, &KernelSpec::Linear, 0.5).unwrap();
        // Gram [[5, 1], [1, 10]]; m0 = (5, 1), m1 = (1, 10); d = (-4, 9)
        assert_eq!(mats.gram, DMatrix::from_row_slice(2, 2, &[5.0, 1.0, 1.0, 10.0]));
        let expected = DMatrix::from_row_slice(2, 2, &[16.0, -36.0, -36.0, 81.0]);
        assert!((mats.m - expected).norm() < 1e-12);
        assert_eq!(mats.n, DMatrix::zeros(2, 2));
    }

    #[test]
    fn identical_features_within_class_give_zero_n() {
        let rows = vec![vec![1.0], vec![1.0], vec![4.0], vec![4.0], vec![2.0]];
        let data = RawDataset::from_rows(
            &rows,
            vec![Some(0), Some(0), Some(1), Some(1), None],
            vec![true, true, true, true, false],
        )
        .unwrap();
        let mats = build_matrices(&data, &KernelSpec::gaussian(1.0).unwrap(), 0.3).unwrap();
        assert!(mats.n.iter().all(|&v| v.abs() < 1e-15));
    }

    fn gaussian_data(seed: u64, n_per_class: usize, n_unlabeled: usize, sep: f64) -> RawDataset {
        let mut rng = rng_from_seed(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut labeled = Vec::new();
        for i in 0..2 * n_per_class {
            let c = i % 2;
            let z: f64 = StandardNormal.sample(&mut rng);
            rows.push(vec![z + sep * c as f64]);
            labels.push(Some(c));
            labeled.push(true);
        }
        for _ in 0..n_unlabeled {
            let c = usize::from(rng.random::<f64>() < 0.3);
            let z: f64 = StandardNormal.sample(&mut rng);
            rows.push(vec![z + sep * c as f64]);
            labels.push(Some(c));
            labeled.push(false);
        }
        RawDataset::from_rows(&rows, labels, labeled).unwrap()
    }

    #[test]
    fn m_is_rank_one_psd_and_objective_identity() {
        let data = gaussian_data(11, 15, 20, 1.5);
        let kernel = KernelSpec::gaussian(1.0).unwrap();
        let mats = build_matrices(&data, &kernel, 0.3).unwrap();
        let eig = SymmetricEigen::new(mats.m.clone());
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!(ev[..ev.len() - 1].iter().all(|v| v.abs() < 1e-10));
        assert!(ev[ev.len() - 1] > 0.0);

        // w'Nw / (n_L w'Mw) equals the estimated MSE of the induced score
        let mut rng = rng_from_seed(1);
        for _ in 0..5 {
            let w: Vec<f64> = (0..mats.anchors.len()).map(|_| rng.random::<f64>() - 0.3).collect();
            let wv = DVector::from_vec(w.clone());
            let quad = (wv.transpose() * &mats.n * &wv)[0]
                / (mats.anchors.len() as f64 * (wv.transpose() * &mats.m * &wv)[0]);
            let g = ScoreFunction::Rkhs {
                kernel,
                weights: w,
                anchors: mats.anchors.clone(),
            };
            let scores = score_dataset(&data, &g).unwrap();
            let mse = empirical_mse(&scores, 0.3).unwrap();
            assert!((quad - mse).abs() < 1e-9 * mse.max(1e-12), "{quad} vs {mse}");
        }
    }

    #[test]
    fn selection_properties() {
        let data = gaussian_data(5, 40, 60, 3.0);
        let pilot = fit_logistic(&data, 100, 1e-8).unwrap();
        let kernel = KernelSpec::gaussian(default_bandwidth(&data)).unwrap();

        let single = select_g(&data, &kernel, &GammaGrid::Fixed(vec![1e-3]), 9, &pilot).unwrap();
        assert_eq!(single.gamma, 1e-3);

        let grid = vec![1e-6, 1e-4, 1e-2, 1.0];
        let sel = select_g(&data, &kernel, &GammaGrid::Fixed(grid.clone()), 9, &pilot).unwrap();
        let dup: Vec<f64> = grid.iter().flat_map(|&g| [g, g]).collect();
        let sel_dup = select_g(&data, &kernel, &GammaGrid::Fixed(dup), 9, &pilot).unwrap();
        assert_eq!(sel, sel_dup);

        // objective is reproduced by re-scoring the held-out split
        let again = sel.heldout_objective(&data).unwrap();
        assert!((again - sel.objective).abs() < 1e-9);
        let weights_finite = sel.weights.iter().all(|w| w.is_finite());
        assert!(weights_finite);

        let linear = select_g(&data, &KernelSpec::Linear, &GammaGrid::Fixed(vec![1e-6]), 9, &pilot).unwrap();
        assert!(sel.objective <= linear.objective, "{} > {}", sel.objective, linear.objective);

        let default = select_g(&data, &kernel, &GammaGrid::Default, 9, &pilot).unwrap();
        assert!(default.candidates.len() >= DEFAULT_GAMMAS.len());
        assert!(select_g(&data, &kernel, &GammaGrid::Fixed(vec![]), 9, &pilot).is_err());
    }
}
