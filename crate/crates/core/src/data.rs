//! Datasets: raw feature rows with labels and set indicators, and the
//! grouped score values that every estimator consumes.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A feature matrix with per-row label and set indicator.
///
/// `labeled[i] == true` marks the training population (`S = 1`); those rows
/// always carry a label. Unlabeled rows may carry a held-out label, used for
/// evaluation or by the combined estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    feature_names: Vec<String>,
    features: DMatrix<f64>,
    labels: Vec<Option<usize>>,
    labeled: Vec<bool>,
    covariate: Option<Vec<Option<f64>>>,
}

impl RawDataset {
    pub fn new(
        feature_names: Vec<String>,
        features: DMatrix<f64>,
        labels: Vec<Option<usize>>,
        labeled: Vec<bool>,
    ) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::Empty("dataset has no rows"));
        }
        if features.ncols() == 0 {
            return Err(Error::Empty("dataset has no feature columns"));
        }
        if feature_names.len() != features.ncols() {
            return Err(Error::DimensionMismatch {
                expected: features.ncols(),
                got: feature_names.len(),
            });
        }
        for len in [labels.len(), labeled.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
        for (row, (label, s)) in labels.iter().zip(&labeled).enumerate() {
            if *s && label.is_none() {
                return Err(Error::MissingLabel { row: row + 1 });
            }
        }
        let present: BTreeSet<usize> = labels.iter().flatten().copied().collect();
        if let Some(&max) = present.iter().next_back() {
            if present.len() != max + 1 {
                return Err(Error::NonContiguousLabels {
                    found: present.into_iter().collect(),
                });
            }
        }
        Ok(Self {
            feature_names,
            features,
            labels,
            labeled,
            covariate: None,
        })
    }

    /// Builds a dataset from row vectors, naming features `x1..xd`.
    pub fn from_rows(
        rows: &[Vec<f64>],
        labels: Vec<Option<usize>>,
        labeled: Vec<bool>,
    ) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        let features = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        let names = (1..=d).map(|j| format!("x{j}")).collect();
        Self::new(names, features, labels, labeled)
    }

    /// Attaches a scalar covariate. Unlabeled rows must carry a value.
    pub fn with_covariate(mut self, z: Vec<Option<f64>>) -> Result<Self> {
        if z.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: z.len(),
            });
        }
        for (row, (value, s)) in z.iter().zip(&self.labeled).enumerate() {
            if !*s && value.is_none() {
                return Err(Error::Parse {
                    row: row + 1,
                    message: "unlabeled row without covariate value".into(),
                });
            }
        }
        self.covariate = Some(z);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.features.row(i).iter().copied().collect()
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn is_labeled(&self, i: usize) -> bool {
        self.labeled[i]
    }

    pub fn set_indicators(&self) -> &[bool] {
        &self.labeled
    }

    pub fn covariate(&self) -> Option<&[Option<f64>]> {
        self.covariate.as_deref()
    }

    /// Number of classes `k + 1`, from the largest label present anywhere.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().flatten().max().map_or(0, |m| m + 1)
    }

    /// Indices of `A_0`, in file order.
    pub fn unlabeled_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.labeled[i]).collect()
    }

    /// Indices of `A_1`, in file order.
    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labeled[i]).collect()
    }

    /// Indices of `A_{1,j}`, in file order.
    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.labeled[i] && self.labels[i] == Some(class))
            .collect()
    }

    /// Held-out labels of the unlabeled rows that carry one.
    pub fn unlabeled_true_labels(&self) -> Vec<usize> {
        self.unlabeled_indices()
            .into_iter()
            .filter_map(|i| self.labels[i])
            .collect()
    }

    /// Keeps the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let features = self.features.select_rows(rows);
        let labels = rows.iter().map(|&i| self.labels[i]).collect();
        let labeled = rows.iter().map(|&i| self.labeled[i]).collect();
        let out = Self::new(self.feature_names.clone(), features, labels, labeled)?;
        match &self.covariate {
            Some(z) => out.with_covariate(rows.iter().map(|&i| z[i]).collect()),
            None => Ok(out),
        }
    }
}

/// Column mapping for [`load_csv`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub label: Option<String>,
    pub set: String,
    pub covariate: Option<String>,
    /// Feature columns to keep; `None` keeps every remaining column.
    pub features: Option<Vec<String>>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            label: Some("y".into()),
            set: "s".into(),
            covariate: None,
            features: None,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<RawDataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<RawDataset> {
    read_table(reader, schema, true)
}

/// Loads a fully labeled corpus without a set-indicator column; every row is
/// marked labeled. `schema.set` is ignored.
pub fn load_corpus(path: impl AsRef<Path>, schema: &Schema) -> Result<RawDataset> {
    let file = std::fs::File::open(path)?;
    read_table(file, schema, false)
}

fn read_table<R: Read>(reader: R, schema: &Schema, with_set: bool) -> Result<RawDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))
    };

    let set_col = if with_set { Some(find(&schema.set)?) } else { None };
    let label_col = schema.label.as_deref().map(find).transpose()?;
    let z_col = schema.covariate.as_deref().map(find).transpose()?;
    let feature_cols: Vec<usize> = match &schema.features {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..headers.len())
            .filter(|&c| Some(c) != set_col && Some(c) != label_col && Some(c) != z_col)
            .collect(),
    };
    if feature_cols.is_empty() {
        return Err(Error::Empty("no feature columns"));
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut labeled = Vec::new();
    let mut z = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let field = |c: usize| record.get(c).unwrap_or("");
        labeled.push(match set_col.map(field) {
            None | Some("1") => true,
            Some("0") => false,
            Some(other) => {
                return Err(Error::BadSetIndicator {
                    row,
                    value: other.to_owned(),
                })
            }
        });
        labels.push(match label_col.map(field).map(str::trim) {
            None | Some("") => None,
            Some(text) => Some(text.parse::<usize>().map_err(|_| Error::Parse {
                row,
                message: format!("label `{text}` is not a nonnegative integer"),
            })?),
        });
        if let Some(c) = z_col {
            let text = field(c).trim();
            z.push(if text.is_empty() {
                None
            } else {
                Some(parse_number(text, row, &headers[c])?)
            });
        }
        for &c in &feature_cols {
            values.push(parse_number(field(c), row, &headers[c])?);
        }
    }
    let n = labeled.len();
    let features = DMatrix::from_row_slice(n, feature_cols.len(), &values);
    let names = feature_cols.iter().map(|&c| headers[c].clone()).collect();
    let data = RawDataset::new(names, features, labels, labeled)?;
    match z_col {
        Some(_) => data.with_covariate(z),
        None => Ok(data),
    }
}

fn parse_number(text: &str, row: usize, column: &str) -> Result<f64> {
    let text = text.trim();
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            row,
            message: format!("column `{column}`: `{text}` is not a finite number"),
        }),
    }
}

/// Row-major block of score vectors sharing one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    dim: usize,
    data: Vec<f64>,
}

impl Scores {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("score dimension must be positive".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: data.len() % dim,
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_scalars(values: Vec<f64>) -> Self {
        Self { dim: 1, data: values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// The flat buffer; for `dim == 1` these are the scalar scores.
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }

    pub fn column_mean(&self, j: usize) -> f64 {
        self.column(j).sum::<f64>() / self.len() as f64
    }
}

/// Score values grouped into `A_0` and `A_{1,j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDataset {
    unlabeled: Scores,
    classes: Vec<Scores>,
}

impl ScoredDataset {
    pub fn new(unlabeled: Scores, classes: Vec<Scores>) -> Result<Self> {
        let dim = unlabeled.dim();
        if let Some(bad) = classes.iter().find(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
        Ok(Self { unlabeled, classes })
    }

    /// Binary dataset with scalar scores.
    pub fn binary(unlabeled: Vec<f64>, class0: Vec<f64>, class1: Vec<f64>) -> Self {
        Self {
            unlabeled: Scores::from_scalars(unlabeled),
            classes: vec![Scores::from_scalars(class0), Scores::from_scalars(class1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.unlabeled.dim()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn unlabeled(&self) -> &Scores {
        &self.unlabeled
    }

    pub fn class(&self, j: usize) -> &Scores {
        &self.classes[j]
    }

    pub fn classes(&self) -> &[Scores] {
        &self.classes
    }

    pub fn n_unlabeled(&self) -> usize {
        self.unlabeled.len()
    }

    pub fn class_count(&self, j: usize) -> usize {
        self.classes[j].len()
    }

    pub fn n_labeled(&self) -> usize {
        self.classes.iter().map(Scores::len).sum()
    }

    /// Checks the binary shape (`m = 1`, two classes) and that both labeled
    /// groups are nonempty; returns `(A_{1,0}, A_{1,1})`.
    pub fn binary_classes(&self) -> Result<(&[f64], &[f64])> {
        if self.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: self.dim(),
            });
        }
        if self.num_classes() != 2 {
            return Err(Error::InvalidArgument(format!(
                "binary estimator needs 2 classes, got {}",
                self.num_classes()
            )));
        }
        for j in 0..2 {
            if self.classes[j].is_empty() {
                return Err(Error::EmptyClassGroup { class: j });
            }
        }
        Ok((self.classes[0].values(), self.classes[1].values()))
    }

    /// As [`Self::binary_classes`], also requiring a nonempty unlabeled
    /// group; returns `(A_0, A_{1,0}, A_{1,1})`.
    pub fn binary_groups(&self) -> Result<(&[f64], &[f64], &[f64])> {
        let (class0, class1) = self.binary_classes()?;
        if self.unlabeled.is_empty() {
            return Err(Error::Empty("unlabeled group"));
        }
        Ok((self.unlabeled.values(), class0, class1))
    }

    /// Applies `g -> a g + b` to every score.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        let map = |s: &Scores| Scores {
            dim: s.dim,
            data: s.data.iter().map(|v| a * v + b).collect(),
        };
        Self {
            unlabeled: map(&self.unlabeled),
            classes: self.classes.iter().map(map).collect(),
        }
    }
}
