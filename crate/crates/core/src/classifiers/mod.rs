//! Supervised classifiers whose decision functions become collective
//! variables: linear SVM (squared hinge), logistic regression, one-vs-rest
//! multiclass SVM and a small Swish network trained with Adam.

mod crossval;
mod linear;
mod mlp;
mod multiclass;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

pub use crossval::{train_with, kfold_cross_validate, stratified_folds, CrossValReport, GridPoint, SettingResult, TrainedModel, Trainer};
pub use linear::{train_linear_svm, train_logreg, LinearFit, SolverOptions};
pub use mlp::{swish, train_mlp, Layer, MlpFit, MlpGradients, MlpModel, MlpOptions};
pub use multiclass::{train_multiclass_ovr, MulticlassLinearModel};

use crate::error::{Error, Result};

/// Feature matrix with integer class labels `0..class_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    x: Array2<f64>,
    y: Vec<usize>,
    class_count: usize,
}

impl LabeledDataset {
    /// Build a dataset; the class count is `max(label) + 1` and every class
    /// must be present.
    pub fn new(x: Array2<f64>, y: Vec<usize>) -> Result<Self> {
        let class_count = y.iter().max().map_or(0, |m| m + 1);
        Self::with_classes(x, y, class_count)
    }

    pub fn with_classes(x: Array2<f64>, y: Vec<usize>, class_count: usize) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::InvalidDataset(format!(
                "{} rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite feature value"));
        }
        if class_count < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 classes, found {class_count}"
            )));
        }
        let counts = class_counts(&y, class_count);
        if y.iter().any(|&l| l >= class_count) {
            return Err(Error::InvalidDataset(format!("label out of range 0..{class_count}")));
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidDataset(format!("class {empty} has no examples")));
        }
        Ok(Self { x, y, class_count })
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> &[usize] {
        &self.y
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn counts(&self) -> Vec<usize> {
        class_counts(&self.y, self.class_count)
    }

    /// Rows selected by index, keeping the class count.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let x = self.x.select(ndarray::Axis(0), rows);
        let y = rows.iter().map(|&r| self.y[r]).collect();
        Self::with_classes(x, y, self.class_count)
    }

    /// Binary relabeling `class == positive -> 1`, others `-> 0`.
    pub fn one_vs_rest(&self, positive: usize) -> Result<Self> {
        let y = self.y.iter().map(|&l| usize::from(l == positive)).collect();
        Self::with_classes(self.x.clone(), y, 2)
    }
}

fn class_counts(y: &[usize], n: usize) -> Vec<usize> {
    let mut c = vec![0; n];
    for &l in y {
        if l < n {
            c[l] += 1;
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SquaredHinge,
    Logistic,
}

/// Binary linear classifier `1[w.x + b > 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub w: Array1<f64>,
    pub b: f64,
    pub penalty: Penalty,
    pub c: f64,
    pub loss: LossKind,
}

impl LinearModel {
    pub fn decision_value(&self, x: ArrayView1<f64>) -> Result<f64> {
        if x.len() != self.w.len() {
            return Err(Error::input(format!(
                "model expects {} features, got {}",
                self.w.len(),
                x.len()
            )));
        }
        Ok(self.w.dot(&x) + self.b)
    }

    pub fn weight_norm(&self) -> f64 {
        self.w.dot(&self.w).sqrt()
    }

    pub fn predict(&self, x: ArrayView1<f64>) -> Result<usize> {
        Ok(usize::from(self.decision_value(x)? > 0.0))
    }
}

/// Anything that assigns a class to a feature vector.
pub trait Classifier {
    fn predict_label(&self, x: ArrayView1<f64>) -> Result<usize>;

    fn accuracy(&self, data: &LabeledDataset) -> Result<f64> {
        let mut hits = 0usize;
        for (row, &y) in data.x().rows().into_iter().zip(data.y()) {
            hits += usize::from(self.predict_label(row)? == y);
        }
        Ok(hits as f64 / data.len() as f64)
    }
}

impl Classifier for LinearModel {
    fn predict_label(&self, x: ArrayView1<f64>) -> Result<usize> {
        self.predict(x)
    }
}

/// Index of the largest entry, lowest index on ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn line_model() -> LinearModel {
        LinearModel {
            w: array![1.0, 0.0],
            b: 0.0,
            penalty: Penalty::L2,
            c: 1.0,
            loss: LossKind::SquaredHinge,
        }
    }

    #[test]
    fn predict_label_sides_and_boundary() {
        let m = line_model();
        assert_eq!(m.predict_label(array![2.0, 0.0].view()).unwrap(), 1);
        assert_eq!(m.predict_label(array![-2.0, 0.0].view()).unwrap(), 0);
        assert_eq!(m.predict_label(array![0.0, 5.0].view()).unwrap(), 0);
        assert!(m.predict_label(array![1.0].view()).is_err());
    }

    #[test]
    fn dataset_validation() {
        let x = array![[0.0], [1.0]];
        assert!(LabeledDataset::new(x.clone(), vec![0, 0]).is_err());
        assert!(LabeledDataset::new(x.clone(), vec![0]).is_err());
        assert!(LabeledDataset::with_classes(x.clone(), vec![0, 1], 3).is_err());
        assert!(LabeledDataset::new(array![[f64::NAN], [1.0]], vec![0, 1]).is_err());
        let d = LabeledDataset::new(x, vec![1, 0]).unwrap();
        assert_eq!(d.class_count(), 2);
        assert_eq!(d.counts(), vec![1, 1]);
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}
