//! Linear SVM and logistic regression on two torus basins, with 3-fold
//! cross-validation over a range of C.

use smlcv::classifiers::{
    kfold_cross_validate, train_linear_svm, train_logreg, GridPoint, Penalty, SolverOptions, Trainer,
};
use smlcv::criteria::{two_state_samples, C_GRID};
use smlcv::features::FeatureSpec;

fn main() -> smlcv::Result<()> {
    let samples = two_state_samples(1)?;
    let data = samples.dataset(&FeatureSpec::sincos(2))?;
    let opts = SolverOptions::default();

    let svm = train_linear_svm(&data, Penalty::L1, 1.0, opts)?;
    println!("L1 SVM   w = {} b = {:.4} ({} iterations)", svm.model.w, svm.model.b, svm.iterations);
    let lr = train_logreg(&data, Penalty::L2, 1.0, opts)?;
    println!("L2 LR    w = {} b = {:.4}", lr.model.w, lr.model.b);

    let grid: Vec<GridPoint> = C_GRID.iter().map(|&c| GridPoint { c, penalty: Penalty::L1 }).collect();
    for trainer in [Trainer::LinearSvm, Trainer::LogReg] {
        let (report, _) = kfold_cross_validate(&data, 3, &grid, trainer, 1, opts)?;
        for r in &report.results {
            println!("{trainer:?} C = {:<6} mean accuracy {:.4}", r.setting.c, r.mean_accuracy);
        }
    }
    Ok(())
}
