//! Benchmark runs on the toy landscapes. Each returns its measured numbers
//! and whether the target holds; the `report` subcommand and the acceptance
//! suite both drive these.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::classifiers::{
    kfold_cross_validate, train_linear_svm, train_logreg, train_mlp, train_multiclass_ovr, GridPoint, LabeledDataset,
    MlpModel, MlpOptions, Penalty, SolverOptions, Trainer,
};
use crate::cv::{CollectiveVariable, CvKind};
use crate::error::Result;
use crate::export::{emit_plumed, load_model, round_trip_error, save_model, ModelBundle};
use crate::features::{FeatureSpec, Frame, StandardScaler};
use crate::reweight::{
    build_fes, fes_rms, lastbias_weights, reference_fes, tiwary_weights, BinSpec, ReweightGrid,
};
use crate::sampling::{
    count_transitions, cv_bias_force, cv_periods, run_metadynamics, run_unbiased, BiasPotential, Hill, LangevinParams,
    MetadynamicsRun, ToyPotential, Trajectory, WellTemperedParams, ALPHA_L_BASIN, ALPHA_R_BASIN, BETA_BASIN,
};
use crate::scenarios::{basin_cores, bias_grid_1d, overlapping_clusters, sample_basins, sigma_from_frames, BasinSamples};

/// Steps per biased or unbiased production run.
pub const RUN_STEPS: u64 = 2_000_000;
/// Frames kept per run.
pub const SAVE_STRIDE: u64 = 100;
/// Core radius used for transition counting on the torus.
pub const CORE_RADIUS: f64 = 0.5;
/// Hill width as a fraction of the CV spread over training frames.
pub const SIGMA_FRACTION: f64 = 0.2;
/// Bias grid density for one-dimensional runs.
pub const GRID_POINTS_PER_SIGMA: f64 = 400.0;
/// The regularization grid scored by cross-validation.
pub const C_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];
/// Upper 5% point of the standard normal; two unit Gaussians whose means
/// are twice this apart have a Bayes accuracy of 0.95.
pub const Z95: f64 = 1.644_853_626_951_472_2;

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub metrics: Value,
    pub seconds: f64,
}

impl Outcome {
    fn new(id: u8, name: &str, passed: bool, metrics: Value, t0: Instant) -> Self {
        Self { id, name: name.into(), passed, metrics, seconds: t0.elapsed().as_secs_f64() }
    }

    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {} {} ({:.1} s): {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.seconds,
            self.metrics
        )
    }
}

/// A finished biased run and the settings it used.
#[derive(Debug, Clone)]
pub struct BiasedRun {
    pub trajectory: Trajectory,
    pub bias: BiasPotential,
    pub well_tempered: WellTemperedParams,
}

pub fn rama() -> ToyPotential {
    ToyPotential::rama_default()
}

/// 1000 frames from each of the beta and alpha_L basins.
pub fn two_state_samples(seed: u64) -> Result<BasinSamples> {
    sample_basins(&rama(), &[BETA_BASIN, ALPHA_L_BASIN], 1000, 20, seed)
}

pub fn three_state_samples(seed: u64) -> Result<BasinSamples> {
    sample_basins(&rama(), &[BETA_BASIN, ALPHA_R_BASIN, ALPHA_L_BASIN], 1000, 20, seed)
}

/// L1 linear SVM at C = 1 on sin/cos features, as a CV.
pub fn svm_cv(samples: &BasinSamples) -> Result<CollectiveVariable> {
    let spec = FeatureSpec::sincos(2);
    let fit = train_linear_svm(&samples.dataset(&spec)?, Penalty::L1, 1.0, SolverOptions::default())?;
    CollectiveVariable::svm(fit.model, spec)
}

pub fn multiclass_cvs(samples: &BasinSamples) -> Result<Vec<CollectiveVariable>> {
    let spec = FeatureSpec::sincos(2);
    let m = train_multiclass_ovr(&samples.dataset(&spec)?, Penalty::L1, 1.0, SolverOptions::default())?;
    CollectiveVariable::multiclass_set(&m, &spec)
}

/// Well-tempered run from the beta basin. Single CVs use the bias grid.
pub fn metad_run(cvs: Vec<CollectiveVariable>, frames: &[Frame], seed: u64) -> Result<BiasedRun> {
    let p = rama();
    let sigma = cvs.iter().map(|cv| sigma_from_frames(cv, frames, SIGMA_FRACTION)).collect::<Result<Vec<_>>>()?;
    let grid = match cvs.as_slice() {
        [cv] => Some(bias_grid_1d(&p, cv, sigma[0], GRID_POINTS_PER_SIGMA)?),
        _ => None,
    };
    let run = MetadynamicsRun {
        potential: &p,
        cvs: &cvs,
        langevin: LangevinParams::with_seed(seed),
        well_tempered: WellTemperedParams::new(sigma).with_periods(cv_periods(&cvs)),
        steps: RUN_STEPS,
        save_stride: SAVE_STRIDE,
        initial: p.basin_centers()[BETA_BASIN].clone(),
        grid,
    };
    let (trajectory, bias) = run_metadynamics(&run)?;
    Ok(BiasedRun { trajectory, bias, well_tempered: run.well_tempered })
}

pub fn beta_alpha_round_trips(frames: &[Vec<f64>]) -> Result<usize> {
    let cores = basin_cores(&rama(), &[BETA_BASIN, ALPHA_L_BASIN], CORE_RADIUS)?;
    Ok(count_transitions(frames, &cores).round_trips(0, 1))
}

fn grid_points() -> Vec<GridPoint> {
    C_GRID.iter().map(|&c| GridPoint { c, penalty: Penalty::L1 }).collect()
}

fn crossval_means(data: &LabeledDataset, trainer: Trainer, seed: u64) -> Result<Vec<f64>> {
    let (report, _) = kfold_cross_validate(data, 3, &grid_points(), trainer, seed, SolverOptions::default())?;
    Ok(report.results.iter().map(|r| r.mean_accuracy).collect())
}

pub fn separability(samples: &BasinSamples, seed: u64) -> Result<Outcome> {
    let t0 = Instant::now();
    let data = samples.dataset(&FeatureSpec::sincos(2))?;
    let svm = crossval_means(&data, Trainer::LinearSvm, seed)?;
    let lr = crossval_means(&data, Trainer::LogReg, seed)?;
    let passed = svm.iter().chain(&lr).all(|&a| a == 1.0);
    Ok(Outcome::new(1, "classifier separability", passed, json!({ "c": C_GRID, "svm": svm, "lr": lr }), t0))
}

pub fn overlap_floor(seed: u64) -> Result<Outcome> {
    let t0 = Instant::now();
    let data = overlapping_clusters(1000, 10, 2.0 * Z95, seed)?;
    let svm = crossval_means(&data, Trainer::LinearSvm, seed)?;
    let lr = crossval_means(&data, Trainer::LogReg, seed)?;
    let worst = svm.iter().chain(&lr).copied().fold(f64::INFINITY, f64::min);
    Ok(Outcome::new(
        2,
        "accuracy floor on overlapping classes",
        worst >= 0.92,
        json!({ "svm": svm, "lr": lr, "min": worst }),
        t0,
    ))
}

/// `|fd - analytic| / max(|analytic|, 1)` for every coordinate.
fn worst_fd(q: &[f64], h: f64, f: &dyn Fn(&[f64]) -> Result<f64>, grad: &[f64]) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..q.len() {
        let mut p = q.to_vec();
        p[i] += h;
        let mut m = q.to_vec();
        m[i] -= h;
        let fd = (f(&p)? - f(&m)?) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs() / grad[i].abs().max(1.0));
    }
    Ok(worst)
}

pub fn gradients(samples: &BasinSamples, three: &BasinSamples, seed: u64) -> Result<Outcome> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = FeatureSpec::sincos(2);
    let data = samples.dataset(&spec)?;
    let svm = train_linear_svm(&data, Penalty::L1, 1.0, SolverOptions::default())?.model;
    let lr = train_logreg(&data, Penalty::L2, 1.0, SolverOptions::default())?.model;
    let mlp = MlpModel::init(&[4, 16, 16, 2], &mut rng)?;
    let mut kinds: Vec<(String, Vec<CollectiveVariable>)> = vec![
        ("svm".into(), vec![CollectiveVariable::svm(svm, spec.clone())?]),
        ("lr".into(), vec![CollectiveVariable::new(CvKind::LrProbability { model: lr.clone() }, spec.clone())?]),
        ("lr_odds".into(), vec![CollectiveVariable::new(CvKind::LrOdds { model: lr }, spec.clone())?]),
        ("dnn".into(), vec![CollectiveVariable::new(CvKind::DnnOutput { model: mlp, node: 1 }, spec.clone())?]),
        ("multiclass".into(), multiclass_cvs(three)?),
    ];
    let h = 1e-6;
    let mut report = serde_json::Map::new();
    let mut worst_all = 0.0f64;
    let states: Vec<Vec<f64>> = (0..100).map(|_| (0..2).map(|_| rng.random_range(-PI..PI)).collect()).collect();
    for (name, cvs) in &kinds {
        let mut worst = 0.0f64;
        for q in &states {
            for cv in cvs {
                let g = cv.evaluate(&Frame::new(q.clone()))?.gradient;
                let f = |x: &[f64]| cv.value(&Frame::new(x.to_vec()));
                worst = worst.max(worst_fd(q, h, &f, g.as_slice().expect("contiguous"))?);
            }
        }
        worst_all = worst_all.max(worst);
        report.insert(name.clone(), json!(worst));
    }
    // bias force: random hills along the SVM CV and along the three state CVs
    for (name, cvs) in [("bias_1d", kinds.swap_remove(0).1), ("bias_3d", kinds.pop().expect("multiclass").1)] {
        let d = cvs.len();
        let mut bias = BiasPotential::new(d)?;
        for k in 0..50 {
            let center = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            bias.push(Hill { step: k, center, sigma: vec![0.3; d], height: rng.random_range(0.05..0.4) })?;
        }
        let mut worst = 0.0f64;
        for q in &states {
            let (_, _, force) = cv_bias_force(&cvs, &bias, q)?;
            let neg: Vec<f64> = force.iter().map(|f| -f).collect();
            let f = |x: &[f64]| cv_bias_force(&cvs, &bias, x).map(|r| r.1);
            worst = worst.max(worst_fd(q, h, &f, &neg)?);
        }
        worst_all = worst_all.max(worst);
        report.insert(name.into(), json!(worst));
    }
    report.insert("max".into(), json!(worst_all));
    Ok(Outcome::new(3, "gradient correctness", worst_all <= 1e-5, Value::Object(report), t0))
}

/// Biased run along the SVM CV and an unbiased run with the same budget.
pub fn acceleration(samples: &BasinSamples, seed: u64) -> Result<(Outcome, BiasedRun)> {
    let t0 = Instant::now();
    let run = metad_run(vec![svm_cv(samples)?], &samples.frames, seed)?;
    let biased = beta_alpha_round_trips(&run.trajectory.frames)?;
    let p = rama();
    let plain = run_unbiased(&p, LangevinParams::with_seed(seed), RUN_STEPS, SAVE_STRIDE, p.basin_centers()[BETA_BASIN].clone())?;
    let unbiased = beta_alpha_round_trips(&plain.frames)?;
    let out = Outcome::new(
        4,
        "sampling acceleration",
        biased >= 5 && unbiased <= 1,
        json!({ "svm_round_trips": biased, "unbiased_round_trips": unbiased, "hills": run.bias.len() }),
        t0,
    );
    Ok((out, run))
}

fn median(mut v: Vec<usize>) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

/// Round trips along the first angle, the SVM CV and the second angle for
/// `seeds` seeds, run concurrently.
pub fn cv_ordering(first_seed: u64, seeds: u64) -> Result<Outcome> {
    let t0 = Instant::now();
    let results: Vec<Result<[usize; 3]>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (first_seed..first_seed + seeds)
            .map(|seed| {
                scope.spawn(move || -> Result<[usize; 3]> {
                    let samples = two_state_samples(seed)?;
                    let cvs = [
                        CollectiveVariable::raw_coordinate(0, true),
                        svm_cv(&samples)?,
                        CollectiveVariable::raw_coordinate(1, true),
                    ];
                    let counts: Vec<Result<usize>> = std::thread::scope(|inner| {
                        let hs: Vec<_> = cvs
                            .iter()
                            .map(|cv| {
                                let frames = &samples.frames;
                                inner.spawn(move || {
                                    let run = metad_run(vec![cv.clone()], frames, seed)?;
                                    beta_alpha_round_trips(&run.trajectory.frames)
                                })
                            })
                            .collect();
                        hs.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
                    });
                    let counts = counts.into_iter().collect::<Result<Vec<_>>>()?;
                    Ok([counts[0], counts[1], counts[2]])
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("seed thread panicked")).collect()
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<_>>();
    let (phi, svm, psi) = (median(col(0)), median(col(1)), median(col(2)));
    Ok(Outcome::new(
        5,
        "CV quality ordering",
        phi >= svm && svm >= 3.0 * psi,
        json!({ "phi": col(0), "svm": col(1), "psi": col(2), "median_phi": phi, "median_svm": svm, "median_psi": psi }),
        t0,
    ))
}

fn torus_bins() -> Result<BinSpec> {
    BinSpec::new(vec![-PI, -PI], vec![PI, PI], vec![30, 30])
}

/// RMS error over bins with reference free energy below 5 T.
pub fn fes_error(traj: &Trajectory, weights: &[f64]) -> Result<(f64, usize)> {
    let bins = torus_bins()?;
    let fes = build_fes(&traj.frames, weights, &bins, 1.0)?;
    let reference = reference_fes(&rama(), &[0, 1], &bins, 1.0, 20)?;
    fes_rms(&fes, &reference, 5.0)
}

pub fn fes_recovery(svm_run: &BiasedRun, multiclass_run: &BiasedRun) -> Result<Outcome> {
    let t0 = Instant::now();
    let grid = ReweightGrid::around(&svm_run.trajectory, &svm_run.well_tempered, 400)?;
    let w = tiwary_weights(&svm_run.trajectory, &svm_run.bias, &svm_run.well_tempered, 1.0, &grid)?;
    let (tiwary, n1) = fes_error(&svm_run.trajectory, &w)?;
    let w = lastbias_weights(&multiclass_run.trajectory, &multiclass_run.bias, 1.0)?;
    let (lastbias, n2) = fes_error(&multiclass_run.trajectory, &w)?;
    Ok(Outcome::new(
        6,
        "free-energy recovery",
        tiwary <= 1.0 && lastbias <= 1.0,
        json!({ "tiwary_rms": tiwary, "tiwary_bins": n1, "lastbias_rms": lastbias, "lastbias_bins": n2 }),
        t0,
    ))
}

pub fn multiclass_diffusion(three: &BasinSamples, seed: u64) -> Result<(Outcome, BiasedRun)> {
    let t0 = Instant::now();
    let run = metad_run(multiclass_cvs(three)?, &three.frames, seed)?;
    let cores = basin_cores(&rama(), &[BETA_BASIN, ALPHA_R_BASIN, ALPHA_L_BASIN], CORE_RADIUS)?;
    let counts = count_transitions(&run.trajectory.frames, &cores);
    let out = Outcome::new(
        7,
        "multiclass diffusive regime",
        counts.visits.iter().all(|&v| v >= 3),
        json!({ "visits": counts.visits, "transitions": counts.matrix }),
        t0,
    );
    Ok((out, run))
}

/// Tail-mean hill height, and strictly falling heights at a pinned point.
pub fn tempering(svm_run: &BiasedRun) -> Result<Outcome> {
    let t0 = Instant::now();
    let h: Vec<f64> = svm_run.bias.hills().iter().map(|h| h.height).collect();
    let tail = &h[h.len() - h.len().div_ceil(10)..];
    let ratio = tail.iter().sum::<f64>() / tail.len() as f64 / svm_run.well_tempered.w0;
    let wt = WellTemperedParams::new(vec![0.2]);
    let mut pinned = BiasPotential::new(1)?;
    let heights = (0..200u64).map(|k| pinned.deposit(&[0.3], &wt, 1.0, k)).collect::<Result<Vec<_>>>()?;
    let decreasing = heights.windows(2).all(|w| w[1] < w[0]);
    Ok(Outcome::new(
        8,
        "well-tempered convergence",
        ratio < 0.2 && decreasing,
        json!({ "tail_mean_over_w0": ratio, "pinned_strictly_decreasing": decreasing }),
        t0,
    ))
}

pub fn thermometer(seed: u64) -> Result<Outcome> {
    let t0 = Instant::now();
    let p = ToyPotential::Harmonic { k: 1.0, dim: 1 };
    let t = run_unbiased(&p, LangevinParams::with_seed(seed), 1_000_000, 1, vec![0.0])?;
    let q: Vec<f64> = t.frames.iter().skip(1).map(|f| f[0]).collect();
    let n = q.len() as f64;
    let mean = crate::reweight::pairwise_sum(&q) / n;
    let sq: Vec<f64> = q.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = crate::reweight::pairwise_sum(&sq) / n;
    Ok(Outcome::new(9, "equilibrium thermometer", (0.95..=1.05).contains(&var), json!({ "variance": var }), t0))
}

fn save_load_save_identical(bundle: &ModelBundle, name: &str) -> Result<bool> {
    static CALLS: AtomicUsize = AtomicUsize::new(0);
    let call = CALLS.fetch_add(1, Ordering::Relaxed);
    let dir = std::env::temp_dir().join(format!("smlcv-export-check-{}-{call}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let (first, second) = (dir.join(format!("{name}-1.json")), dir.join(format!("{name}-2.json")));
    save_model(bundle, &first)?;
    save_model(&load_model(&first)?, &second)?;
    let same = std::fs::read(&first)? == std::fs::read(&second)?;
    std::fs::remove_dir_all(&dir)?;
    Ok(same)
}

/// Emitted-text round trip for every model-based CV kind, and byte-stable JSON.
pub fn export_round_trip(samples: &BasinSamples, three: &BasinSamples, seed: u64) -> Result<Outcome> {
    let t0 = Instant::now();
    let spec = FeatureSpec::sincos(2);
    let data = samples.dataset(&spec)?;
    let svm = train_linear_svm(&data, Penalty::L1, 1.0, SolverOptions::default())?.model;
    let lr = train_logreg(&data, Penalty::L1, 1.0, SolverOptions::default())?.model;
    let mut opts = MlpOptions::default_for(4, 2, seed);
    opts.layer_widths = vec![4, 8, 8, 2];
    let mlp = train_mlp(&data, &opts)?.model;
    let scaled = spec.clone().with_scaler(StandardScaler::fit(data.x())?);
    let scaled_svm = train_linear_svm(&samples.dataset(&scaled)?, Penalty::L1, 1.0, SolverOptions::default())?.model;
    let cvs = [
        ("svm", CollectiveVariable::svm(svm, spec.clone())?),
        ("svm_scaled", CollectiveVariable::svm(scaled_svm, scaled)?),
        ("lr", CollectiveVariable::new(CvKind::LrProbability { model: lr.clone() }, spec.clone())?),
        ("lr_odds", CollectiveVariable::new(CvKind::LrOdds { model: lr }, spec.clone())?),
        ("dnn", CollectiveVariable::new(CvKind::DnnOutput { model: mlp, node: 1 }, spec.clone())?),
        ("multiclass", multiclass_cvs(three)?.remove(0)),
    ];
    let mut report = serde_json::Map::new();
    let mut passed = true;
    for (name, cv) in &cvs {
        let bundle = ModelBundle::from_cv(cv)?;
        let text = emit_plumed(&bundle, &spec.labels())?;
        let err = round_trip_error(&bundle, &text, 1000, seed)?;
        let stable = save_load_save_identical(&bundle, name)?;
        passed &= err <= 1e-9 && stable;
        report.insert(name.to_string(), json!({ "max_error": err, "json_stable": stable }));
    }
    Ok(Outcome::new(10, "export round trip", passed, Value::Object(report), t0))
}

pub fn dnn_training(samples: &BasinSamples) -> Result<Outcome> {
    let t0 = Instant::now();
    let data = samples.dataset(&FeatureSpec::sincos(2))?;
    let mut rows = Vec::new();
    let mut good = 0;
    for seed in 1..=5 {
        let fit = train_mlp(&data, &MlpOptions::default_for(4, 2, seed))?;
        let ok = fit.accuracy == 1.0 && fit.loss < 0.1;
        good += usize::from(ok);
        rows.push(json!({ "seed": seed, "accuracy": fit.accuracy, "loss": fit.loss }));
    }
    Ok(Outcome::new(11, "network training", good >= 4, json!({ "runs": rows, "passing_seeds": good }), t0))
}

pub fn sparsity(samples: &BasinSamples) -> Result<Outcome> {
    let t0 = Instant::now();
    let data = samples.dataset(&FeatureSpec::sincos(2))?;
    let w = |c: f64| -> Result<Array1<f64>> { Ok(train_linear_svm(&data, Penalty::L1, c, SolverOptions::default())?.model.w) };
    let (w1, w01, w10, tiny) = (w(1.0)?, w(0.1)?, w(10.0)?, w(1e-6)?);
    let norm = |v: &Array1<f64>| v.dot(v).sqrt();
    let rel01 = norm(&(&w01 - &w1)) / norm(&w1);
    let rel10 = norm(&(&w10 - &w1)) / norm(&w1);
    let zeros = w1.iter().filter(|&&x| x == 0.0).count();
    let all_zero = tiny.iter().all(|&x| x == 0.0);
    Ok(Outcome::new(
        12,
        "sparsity and stability across C",
        zeros >= 1 && rel01 <= 0.2 && rel10 <= 0.2 && all_zero,
        json!({ "w_c1": w1.to_vec(), "zeros_c1": zeros, "rel_diff_c0.1": rel01, "rel_diff_c10": rel10, "all_zero_c1e-6": all_zero }),
        t0,
    ))
}

/// Every criterion in order, with `seed` as the base seed.
pub fn run_all(seed: u64) -> Result<Vec<Outcome>> {
    let two = two_state_samples(seed)?;
    let three = three_state_samples(seed)?;
    let mut out = vec![separability(&two, seed)?, overlap_floor(seed)?, gradients(&two, &three, seed)?];
    let (c4, svm_run) = acceleration(&two, seed)?;
    out.push(c4);
    out.push(cv_ordering(seed, 5)?);
    let (c7, mc_run) = multiclass_diffusion(&three, seed)?;
    out.push(fes_recovery(&svm_run, &mc_run)?);
    out.push(c7);
    out.push(tempering(&svm_run)?);
    out.push(thermometer(seed)?);
    out.push(export_round_trip(&two, &three, seed)?);
    out.push(dnn_training(&two)?);
    out.push(sparsity(&two)?);
    Ok(out)
}
