//! Stratified k-fold cross-validation over a grid of (C, penalty) settings.

use ndarray::ArrayView1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    train_linear_svm, train_logreg, train_multiclass_ovr, Classifier, LabeledDataset, LinearModel,
    MulticlassLinearModel, Penalty, SolverOptions,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trainer {
    LinearSvm,
    LogReg,
    MulticlassSvm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub c: f64,
    pub penalty: Penalty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Linear(LinearModel),
    Multiclass(MulticlassLinearModel),
}

impl Classifier for TrainedModel {
    fn predict_label(&self, x: ArrayView1<f64>) -> Result<usize> {
        match self {
            Self::Linear(m) => m.predict_label(x),
            Self::Multiclass(m) => m.predict_label(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingResult {
    pub setting: GridPoint,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Population standard deviation over folds.
    pub std_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub trainer: Trainer,
    pub k: usize,
    pub seed: u64,
    pub results: Vec<SettingResult>,
    pub best_index: usize,
}

impl CrossValReport {
    pub fn best_setting(&self) -> GridPoint {
        self.results[self.best_index].setting
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::input(e.to_string()))
    }
}

pub fn train_with(
    trainer: Trainer,
    data: &LabeledDataset,
    setting: GridPoint,
    opts: SolverOptions,
) -> Result<TrainedModel> {
    Ok(match trainer {
        Trainer::LinearSvm => TrainedModel::Linear(train_linear_svm(data, setting.penalty, setting.c, opts)?.model),
        Trainer::LogReg => TrainedModel::Linear(train_logreg(data, setting.penalty, setting.c, opts)?.model),
        Trainer::MulticlassSvm => {
            TrainedModel::Multiclass(train_multiclass_ovr(data, setting.penalty, setting.c, opts)?)
        }
    })
}

/// Partition row indices into `k` folds with each class spread evenly.
/// Rows of each class are shuffled, then classes are dealt round-robin in
/// label order with one running counter, so fold sizes differ by at most one.
pub fn stratified_folds(labels: &[usize], class_count: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in 0..class_count {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rows.shuffle(&mut rng);
        for r in rows {
            folds[next % k].push(r);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

/// Score every grid setting on held-out folds, then retrain the best one on
/// all of `data`.
pub fn kfold_cross_validate(
    data: &LabeledDataset,
    k: usize,
    grid: &[GridPoint],
    trainer: Trainer,
    seed: u64,
    opts: SolverOptions,
) -> Result<(CrossValReport, TrainedModel)> {
    if !(3..=10).contains(&k) {
        return Err(Error::argument(format!("k = {k} outside 3..=10")));
    }
    if grid.is_empty() {
        return Err(Error::argument("empty hyperparameter grid"));
    }
    if let Some(bad) = grid.iter().find(|g| !(g.c > 0.0 && g.c.is_finite())) {
        return Err(Error::argument(format!("C = {} must be positive", bad.c)));
    }
    let smallest = data.counts().into_iter().min().unwrap_or(0);
    if k > smallest {
        return Err(Error::argument(format!(
            "k = {k} exceeds the smallest class count {smallest}"
        )));
    }
    let folds = stratified_folds(data.y(), data.class_count(), k, seed);
    let mut results = Vec::with_capacity(grid.len());
    for &setting in grid {
        let mut fold_accuracies = Vec::with_capacity(k);
        for (f, held) in folds.iter().enumerate() {
            let train_rows: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, rows)| rows.iter().copied())
                .collect();
            let model = train_with(trainer, &data.subset(&train_rows)?, setting, opts)?;
            let mut hits = 0usize;
            for &r in held {
                hits += usize::from(model.predict_label(data.x().row(r))? == data.y()[r]);
            }
            fold_accuracies.push(hits as f64 / held.len() as f64);
        }
        let mean = fold_accuracies.iter().sum::<f64>() / k as f64;
        let var = fold_accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / k as f64;
        results.push(SettingResult {
            setting,
            fold_accuracies,
            mean_accuracy: mean,
            std_accuracy: var.sqrt(),
        });
    }
    let best_index = pick_best(&results);
    let model = train_with(trainer, data, results[best_index].setting, opts)?;
    Ok((CrossValReport { trainer, k, seed, results, best_index }, model))
}

fn pick_best(results: &[SettingResult]) -> usize {
    let mut best = 0;
    for (i, r) in results.iter().enumerate().skip(1) {
        let b = &results[best];
        if r.mean_accuracy > b.mean_accuracy
            || (r.mean_accuracy == b.mean_accuracy && r.setting.c < b.setting.c)
        {
            best = i;
        }
    }
    best
}
