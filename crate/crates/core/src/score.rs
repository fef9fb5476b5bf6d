//! Score functions `g` and the grouping step that turns a raw dataset into
//! score groups `A_0`, `A_{1,0}`, ..., `A_{1,k}`.

use serde::{Deserialize, Serialize};

use crate::data::{RawDataset, ScoredDataset, Scores};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::logistic::LogisticModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScoreFunction {
    /// Precomputed score columns of the feature matrix.
    External { columns: Vec<usize> },
    /// Class probabilities `P(Y = j | x)` for `j = 1..k`.
    Logistic(LogisticModel),
    /// `g(x) = sum_i w_i K(x, x_i)` over anchor rows.
    Rkhs {
        kernel: KernelSpec,
        weights: Vec<f64>,
        anchors: Vec<Vec<f64>>,
    },
}

impl ScoreFunction {
    /// The first feature column as a scalar score.
    pub fn identity() -> Self {
        Self::External { columns: vec![0] }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Self::External { columns } => columns.len(),
            Self::Logistic(m) => m.num_outputs(),
            Self::Rkhs { .. } => 1,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::External { columns } => columns.iter().map(|&c| x[c]).collect(),
            Self::Logistic(m) => m.predict_proba(x)[1..].to_vec(),
            Self::Rkhs {
                kernel,
                weights,
                anchors,
            } => vec![weights
                .iter()
                .zip(anchors)
                .map(|(w, a)| w * kernel.eval(x, a))
                .sum()],
        }
    }

    fn check(&self, data: &RawDataset) -> Result<()> {
        let d = data.dim();
        let ok = match self {
            Self::External { columns } => {
                if let Some(&c) = columns.iter().find(|&&c| c >= d) {
                    return Err(Error::MissingColumn(format!("#{c}")));
                }
                !columns.is_empty()
            }
            Self::Logistic(m) => m.num_features() == d,
            Self::Rkhs {
                weights, anchors, ..
            } => weights.len() == anchors.len() && anchors.iter().all(|a| a.len() == d),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "score function is not evaluable on {d}-dimensional features"
            )))
        }
    }

    /// Scores of the given rows, in order.
    pub fn evaluate_rows(&self, data: &RawDataset, rows: &[usize]) -> Result<Scores> {
        self.check(data)?;
        let mut out = Vec::with_capacity(rows.len() * self.output_dim());
        for &i in rows {
            out.extend(self.eval(&data.row(i)));
        }
        Scores::new(self.output_dim(), out)
    }
}

/// Groups `g(X_i)` by `A_0` and `A_{1,j}`, preserving file order.
pub fn score_dataset(data: &RawDataset, g: &ScoreFunction) -> Result<ScoredDataset> {
    let unlabeled = g.evaluate_rows(data, &data.unlabeled_indices())?;
    let classes = (0..data.num_classes())
        .map(|j| {
            let rows = data.class_indices(j);
            if rows.is_empty() {
                return Err(Error::EmptyClassGroup { class: j });
            }
            g.evaluate_rows(data, &rows)
        })
        .collect::<Result<Vec<_>>>()?;
    ScoredDataset::new(unlabeled, classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> RawDataset {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, 10.0 - i as f64]).collect();
        let labels = vec![Some(0), Some(1), None, Some(0), None, Some(1), None, None];
        let labeled = vec![true, true, false, true, false, true, false, false];
        RawDataset::from_rows(&rows, labels, labeled).unwrap()
    }

    #[test]
    fn groups_have_expected_sizes_and_order() {
        let s = score_dataset(&toy(), &ScoreFunction::identity()).unwrap();
        assert_eq!(s.n_unlabeled(), 4);
        assert_eq!(s.class_count(0), 2);
        assert_eq!(s.class_count(1), 2);
        assert_eq!(s.unlabeled().values(), [2., 4., 6., 7.]);
        assert_eq!(s.class(0).values(), [0., 3.]);
        assert_eq!(s.class(1).values(), [1., 5.]);
        assert_eq!(s.n_unlabeled() + s.n_labeled(), toy().len());
    }

    #[test]
    fn constant_score() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, 3.0]).collect();
        let labels = vec![Some(0), Some(1), None, Some(0), Some(1), None];
        let labeled = vec![true, true, false, true, true, false];
        let data = RawDataset::from_rows(&rows, labels, labeled).unwrap();
        let s = score_dataset(&data, &ScoreFunction::External { columns: vec![1] }).unwrap();
        assert!(s.unlabeled().values().iter().all(|&v| v == 3.0));
        assert!(s.classes().iter().all(|c| c.values().iter().all(|&v| v == 3.0)));
    }

    #[test]
    fn rkhs_score_is_kernel_expansion() {
        let g = ScoreFunction::Rkhs {
            kernel: KernelSpec::Linear,
            weights: vec![2.0, -1.0],
            anchors: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        assert_eq!(g.eval(&[3.0, 5.0]), vec![2.0 * 3.0 - 5.0]);
    }

    #[test]
    fn empty_class_group_is_an_error() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
        let data =
            RawDataset::from_rows(&rows, vec![Some(0), None, Some(1)], vec![true, false, false])
                .unwrap();
        let err = score_dataset(&data, &ScoreFunction::identity()).unwrap_err();
        assert!(matches!(err, Error::EmptyClassGroup { class: 1 }));
        assert!(err.to_string().contains("empty class group"));
    }

    #[test]
    fn out_of_range_column() {
        let g = ScoreFunction::External { columns: vec![5] };
        assert!(matches!(
            score_dataset(&toy(), &g),
            Err(Error::MissingColumn(_))
        ));
    }
}
