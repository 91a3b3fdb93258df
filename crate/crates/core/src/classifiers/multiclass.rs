use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use super::{argmax, linear::train_linear_svm, Classifier, LabeledDataset, LinearModel, Penalty, SolverOptions};
use crate::error::{Error, Result};

/// One-vs-rest linear SVMs, one hyperplane per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassLinearModel {
    pub submodels: Vec<LinearModel>,
}

impl MulticlassLinearModel {
    pub fn new(submodels: Vec<LinearModel>) -> Result<Self> {
        let dim = submodels.first().map(|m| m.w.len()).unwrap_or(0);
        if submodels.len() < 2 {
            return Err(Error::InvalidDataset("multiclass model needs at least 2 states".into()));
        }
        if submodels.iter().any(|m| m.w.len() != dim) {
            return Err(Error::input("submodels disagree on feature dimensionality"));
        }
        Ok(Self { submodels })
    }

    pub fn state_count(&self) -> usize {
        self.submodels.len()
    }

    pub fn dim(&self) -> usize {
        self.submodels[0].w.len()
    }

    /// Signed distance of `x` to every state's hyperplane.
    pub fn signed_distances(&self, x: ArrayView1<f64>) -> Result<Vec<f64>> {
        self.submodels
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let norm = m.weight_norm();
                if !(norm > 0.0) {
                    return Err(Error::DegenerateModel(format!("state {k} has a zero weight vector")));
                }
                Ok(m.decision_value(x)? / norm)
            })
            .collect()
    }
}

impl Classifier for MulticlassLinearModel {
    /// Closest hyperplane wins; ties go to the lowest state index.
    fn predict_label(&self, x: ArrayView1<f64>) -> Result<usize> {
        Ok(argmax(&self.signed_distances(x)?))
    }
}

/// Train one squared-hinge SVM per state against all others.
pub fn train_multiclass_ovr(
    data: &LabeledDataset,
    penalty: Penalty,
    c: f64,
    opts: SolverOptions,
) -> Result<MulticlassLinearModel> {
    if data.class_count() < 3 {
        return Err(Error::InvalidDataset(format!(
            "one-vs-rest needs at least 3 classes, got {}; use the binary trainer",
            data.class_count()
        )));
    }
    let submodels = (0..data.class_count())
        .map(|k| Ok(train_linear_svm(&data.one_vs_rest(k)?, penalty, c, opts)?.model))
        .collect::<Result<Vec<_>>>()?;
    MulticlassLinearModel::new(submodels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn clusters() -> (LabeledDataset, [[f64; 2]; 3]) {
        let centers = [[0.0, 5.0], [-5.0, -3.0], [5.0, -3.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 0.4).unwrap();
        let n = 60;
        let mut x = Array2::zeros((3 * n, 2));
        let mut y = Vec::new();
        for i in 0..3 * n {
            let k = i % 3;
            x[[i, 0]] = centers[k][0] + noise.sample(&mut rng);
            x[[i, 1]] = centers[k][1] + noise.sample(&mut rng);
            y.push(k);
        }
        (LabeledDataset::new(x, y).unwrap(), centers)
    }

    #[test]
    fn separated_clusters_are_classified_perfectly() {
        let (d, centers) = clusters();
        // nearest-centroid oracle agrees with the labels
        for (row, &y) in d.x().rows().into_iter().zip(d.y()) {
            let dist: Vec<f64> = centers
                .iter()
                .map(|c| -((row[0] - c[0]).powi(2) + (row[1] - c[1]).powi(2)))
                .collect();
            assert_eq!(argmax(&dist), y);
        }
        let m = train_multiclass_ovr(&d, Penalty::L1, 1.0, SolverOptions::default()).unwrap();
        assert_eq!(m.accuracy(&d).unwrap(), 1.0);
        for row in d.x().rows() {
            let dist = m.signed_distances(row).unwrap();
            assert_eq!(m.predict_label(row).unwrap(), argmax(&dist));
        }
    }

    #[test]
    fn two_classes_rejected() {
        let d = LabeledDataset::new(array![[0.0], [1.0]], vec![0, 1]).unwrap();
        assert!(matches!(
            train_multiclass_ovr(&d, Penalty::L1, 1.0, SolverOptions::default()),
            Err(Error::InvalidDataset(_))
        ));
    }
}
