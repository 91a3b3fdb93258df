//! The workflow stages behind each subcommand.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use super::config::{ClassifierKind, CvChoice, Estimator, FeatureKind, WorkflowConfig};
use super::manifest::{sha256_hex, Staging};
use crate::classifiers::{
    kfold_cross_validate, stratified_folds, train_mlp, train_with, Classifier, CrossValReport, GridPoint,
    LabeledDataset, MlpOptions, SolverOptions, TrainedModel, Trainer,
};
use crate::cv::{CollectiveVariable, CvKind};
use crate::error::{Error, Result};
use crate::export::{emit_plumed, load_model, round_trip_error, BundleModel, MetadTemplate, ModelBundle};
use crate::features::csv::{csv_err, fmt_real};
use crate::features::{FeatureSpec, Frame, StandardScaler};
use crate::reweight::{
    build_fes, lastbias_weights, reference_fes, tiwary_weights, write_fes, BinSpec, Fes, ReweightGrid,
};
use crate::sampling::io::{read_hills, read_trajectory, write_hills, write_trajectory};
use crate::sampling::{
    count_transitions, multiwalker_run, run_metadynamics, BiasPotential, LangevinParams, MetadynamicsRun,
    Trajectory, TransitionCounts, WalkerSetup, WellTemperedParams,
};
use crate::scenarios::{basin_cores, bias_grid_1d, sample_basins, sigma_from_frames, BasinSamples};

pub const MODEL_FILE: &str = "model.json";
pub const TRAINING_FRAMES_FILE: &str = "training_frames.csv";
pub const HILLS_FILE: &str = "HILLS";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const PLUMED_FILE: &str = "plumed.dat";
pub const REPORT_FILE: &str = "report.json";

/// What a stage produced, for printing.
#[derive(Debug, Clone)]
pub struct StageSummary {
    pub stage: String,
    pub outputs: Vec<String>,
    pub metrics: BTreeMap<String, Value>,
}

type Metrics = BTreeMap<String, Value>;

fn finish(staging: Staging, stage: &str, cfg: Option<&WorkflowConfig>, metrics: Metrics, t0: Instant) -> Result<StageSummary> {
    let hash = cfg.map(|c| sha256_hex(c.canonical_json().as_bytes()));
    let manifest = staging.commit(stage, hash, metrics.clone(), t0.elapsed().as_secs_f64())?;
    Ok(StageSummary { stage: stage.to_string(), outputs: manifest.stages[stage].outputs.clone(), metrics })
}

pub fn trajectory_file(walker: usize, walkers: usize) -> String {
    if walkers == 1 {
        TRAJECTORY_FILE.to_string()
    } else {
        format!("trajectory_walker_{walker:02}.csv")
    }
}

fn feature_spec(cfg: &WorkflowConfig) -> FeatureSpec {
    let n = cfg.system.dim();
    match cfg.features.kind {
        FeatureKind::Sincos => FeatureSpec::sincos(n),
        FeatureKind::Raw => FeatureSpec::raw(n),
    }
}

fn solver(cfg: &WorkflowConfig) -> SolverOptions {
    SolverOptions { tol: cfg.classifier.tol, max_iter: cfg.classifier.max_iter }
}

fn trainer(kind: ClassifierKind) -> Option<Trainer> {
    match kind {
        ClassifierKind::Svm => Some(Trainer::LinearSvm),
        ClassifierKind::Lr => Some(Trainer::LogReg),
        ClassifierKind::MulticlassSvm => Some(Trainer::MulticlassSvm),
        ClassifierKind::Mlp => None,
    }
}

/// Training frames from `data.path`, or sampled without bias from each basin.
pub fn training_samples(cfg: &WorkflowConfig) -> Result<BasinSamples> {
    match &cfg.data.path {
        Some(p) => read_training_frames(Path::new(p), cfg.system.dim(), cfg.data.basins.len()),
        None => sample_basins(&cfg.system, &cfg.data.basins, cfg.data.frames_per_basin, cfg.data.save_stride, cfg.seed()),
    }
}

/// Columns `label, q_1, ...`.
pub fn write_training_frames(path: &Path, s: &BasinSamples) -> Result<()> {
    let mut w = ::csv::Writer::from_path(path).map_err(csv_err)?;
    let n = s.frames.first().map_or(0, |f| f.coords.len());
    let mut header = vec!["label".to_string()];
    header.extend((1..=n).map(|i| format!("q_{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for (f, l) in s.frames.iter().zip(&s.labels) {
        let mut rec = vec![l.to_string()];
        rec.extend(f.coords.iter().map(|v| fmt_real(*v)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_training_frames(path: &Path, dim: usize, classes: usize) -> Result<BasinSamples> {
    let mut r = ::csv::Reader::from_path(path).map_err(csv_err)?;
    let mut frames = Vec::new();
    let mut labels = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != dim + 1 {
            return Err(Error::Malformed(format!("row {}: expected {} columns", n + 1, dim + 1)));
        }
        let label: usize =
            rec[0].parse().map_err(|_| Error::Malformed(format!("row {}: bad label `{}`", n + 1, &rec[0])))?;
        if label >= classes {
            return Err(Error::Malformed(format!("row {}: label {label} but only {classes} basins", n + 1)));
        }
        let coords = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().map_err(|_| Error::Malformed(format!("row {}: `{v}` is not a number", n + 1))))
            .collect::<Result<Vec<_>>>()?;
        frames.push(Frame::at(coords, n as u64));
        labels.push(label);
    }
    if frames.is_empty() {
        return Err(Error::input(format!("{} has no frames", path.display())));
    }
    Ok(BasinSamples { frames, labels })
}

/// Feature spec (with a fitted scaler when requested) and the labelled data.
fn dataset(cfg: &WorkflowConfig, samples: &BasinSamples) -> Result<(FeatureSpec, LabeledDataset)> {
    let mut spec = feature_spec(cfg);
    if cfg.features.scale {
        let scaler = StandardScaler::fit(spec.featurize(&samples.frames)?.view())?;
        spec = spec.with_scaler(scaler);
    }
    let x = spec.featurize(&samples.frames)?;
    Ok((spec, LabeledDataset::with_classes(x, samples.labels.clone(), cfg.data.basins.len())?))
}

fn grid(cfg: &WorkflowConfig) -> Vec<GridPoint> {
    cfg.classifier.grid.iter().map(|&c| GridPoint { c, penalty: cfg.classifier.penalty }).collect()
}

fn crossval_metrics(report: &CrossValReport, m: &mut Metrics) {
    let means: Vec<f64> = report.results.iter().map(|r| r.mean_accuracy).collect();
    m.insert("cv_mean_accuracy".into(), json!(means));
    m.insert("cv_min_mean_accuracy".into(), json!(means.iter().copied().fold(f64::INFINITY, f64::min)));
    m.insert("cv_best_c".into(), json!(report.best_setting().c));
}

/// K-fold accuracies of the network with the configured options.
fn mlp_crossval(cfg: &WorkflowConfig, data: &LabeledDataset) -> Result<Value> {
    let k = cfg.classifier.folds;
    let folds = stratified_folds(data.y(), data.class_count(), k, cfg.seed());
    let mut acc = Vec::with_capacity(k);
    for (f, held) in folds.iter().enumerate() {
        let train: Vec<usize> = folds.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, r)| r.clone()).collect();
        let fit = train_mlp(&data.subset(&train)?, &mlp_options(cfg, data))?;
        acc.push(fit.model.accuracy(&data.subset(held)?)?);
    }
    let mean = acc.iter().sum::<f64>() / k as f64;
    Ok(json!({ "kind": "mlp", "k": k, "seed": cfg.seed(), "fold_accuracies": acc, "mean_accuracy": mean }))
}

fn mlp_options(cfg: &WorkflowConfig, data: &LabeledDataset) -> MlpOptions {
    let mut widths = vec![data.dim()];
    widths.extend(&cfg.classifier.hidden);
    widths.push(data.class_count());
    MlpOptions {
        layer_widths: widths,
        learning_rate: cfg.classifier.learning_rate,
        batch_size: cfg.classifier.batch_size,
        epochs: cfg.classifier.epochs,
        seed: cfg.seed(),
    }
}

/// The CV kind stored in the bundle for a trained linear model.
fn linear_cv(cfg: &WorkflowConfig, model: TrainedModel, spec: &FeatureSpec) -> Result<CollectiveVariable> {
    let kind = match (model, cfg.cv.kind) {
        (TrainedModel::Multiclass(m), _) => CvKind::MulticlassDistance { model: m, state: 0 },
        (TrainedModel::Linear(m), CvChoice::SvmDecision) => CvKind::SvmDistance { model: m, normalized: false },
        (TrainedModel::Linear(m), CvChoice::LrOdds) => CvKind::LrOdds { model: m },
        (TrainedModel::Linear(m), _) if cfg.classifier.kind == ClassifierKind::Lr => CvKind::LrProbability { model: m },
        (TrainedModel::Linear(m), _) => CvKind::SvmDistance { model: m, normalized: true },
    };
    CollectiveVariable::new(kind, spec.clone())
}

fn hill_sigma(cfg: &WorkflowConfig, cvs: &[CollectiveVariable], frames: &[Frame]) -> Result<Vec<f64>> {
    match &cfg.metad.sigma {
        Some(s) if s.len() != cvs.len() => {
            Err(Error::config("metad.sigma", format!("{} widths for {} CVs", s.len(), cvs.len())))
        }
        Some(s) => Ok(s.clone()),
        None => cvs.iter().map(|cv| sigma_from_frames(cv, frames, cfg.metad.sigma_fraction)).collect(),
    }
}

fn coefficient_csv(bundle: &ModelBundle) -> Option<String> {
    let states = match &bundle.model {
        BundleModel::Linear { params } => vec![params],
        BundleModel::Multiclass { states } => states.iter().collect(),
        BundleModel::Mlp { .. } => return None,
    };
    let mut s = String::from("state,");
    s.push_str(&bundle.features.labels().join(","));
    s.push_str(",bias\n");
    for (i, p) in states.iter().enumerate() {
        s.push_str(&i.to_string());
        for v in p.w.iter().chain([&p.b]) {
            s.push(',');
            s.push_str(&fmt_real(*v));
        }
        s.push('\n');
    }
    Some(s)
}

/// Sample (or read) labelled frames, cross-validate, train the final
/// model and store it with its hill settings.
pub fn cmd_train(cfg: &WorkflowConfig, out: &Path) -> Result<StageSummary> {
    cfg.validate()?;
    let t0 = Instant::now();
    let mut staging = Staging::new(out, "train")?;
    let samples = training_samples(cfg)?;
    write_training_frames(&staging.file(TRAINING_FRAMES_FILE), &samples)?;
    let (spec, data) = dataset(cfg, &samples)?;
    let mut m = Metrics::new();
    m.insert("frames".into(), json!(data.len()));
    let cv = match trainer(cfg.classifier.kind) {
        Some(t) => {
            let (report, _) = kfold_cross_validate(&data, cfg.classifier.folds, &grid(cfg), t, cfg.seed(), solver(cfg))?;
            staging.write("crossval.json", report.to_json()? + "\n")?;
            crossval_metrics(&report, &mut m);
            let setting = GridPoint { c: cfg.classifier.c, penalty: cfg.classifier.penalty };
            let model = train_with(t, &data, setting, solver(cfg))?;
            m.insert("training_accuracy".into(), json!(model.accuracy(&data)?));
            linear_cv(cfg, model, &spec)?
        }
        None => {
            let fit = train_mlp(&data, &mlp_options(cfg, &data))?;
            m.insert("training_accuracy".into(), json!(fit.accuracy));
            m.insert("training_loss".into(), json!(fit.loss));
            let node = cfg.cv.node;
            CollectiveVariable::new(CvKind::DnnOutput { model: fit.model, node }, spec.clone())?
        }
    };
    let mut bundle = ModelBundle::from_cv(&cv)?;
    let cvs = bundle.cvs()?;
    let sigma = hill_sigma(cfg, &cvs, &samples.frames)?;
    let mut wt = WellTemperedParams::new(sigma.clone());
    wt.w0 = cfg.metad.height;
    wt.gamma = cfg.metad.biasfactor;
    wt.deposit_stride = cfg.metad.pace;
    bundle = bundle.with_metad(MetadTemplate::from_params(&wt, cfg.metad.temperature));
    staging.write(MODEL_FILE, bundle.to_json()?)?;
    if let Some(csv) = coefficient_csv(&bundle) {
        let zeros = csv.lines().skip(1).flat_map(|l| l.split(',').skip(1)).filter(|v| v.parse::<f64>() == Ok(0.0)).count();
        m.insert("zero_coefficients".into(), json!(zeros));
        staging.write("coefficients.csv", csv)?;
    }
    m.insert("cv_count".into(), json!(cvs.len()));
    m.insert("sigma".into(), json!(sigma));
    finish(staging, "train", Some(cfg), m, t0)
}

/// Cross-validation report only.
pub fn cmd_cv(cfg: &WorkflowConfig, out: &Path) -> Result<StageSummary> {
    cfg.validate()?;
    let t0 = Instant::now();
    let mut staging = Staging::new(out, "cv")?;
    let samples = training_samples(cfg)?;
    let (_, data) = dataset(cfg, &samples)?;
    let mut m = Metrics::new();
    match trainer(cfg.classifier.kind) {
        Some(t) => {
            let (report, _) = kfold_cross_validate(&data, cfg.classifier.folds, &grid(cfg), t, cfg.seed(), solver(cfg))?;
            staging.write("crossval.json", report.to_json()? + "\n")?;
            crossval_metrics(&report, &mut m);
        }
        None => {
            let report = mlp_crossval(cfg, &data)?;
            m.insert("cv_mean_accuracy".into(), report["mean_accuracy"].clone());
            staging.write("crossval.json", serde_json::to_string_pretty(&report).expect("json") + "\n")?;
        }
    }
    finish(staging, "cv", Some(cfg), m, t0)
}

fn add_counts(total: &mut Option<TransitionCounts>, c: TransitionCounts) {
    match total {
        None => *total = Some(c),
        Some(t) => {
            for (row, other) in t.matrix.iter_mut().zip(&c.matrix) {
                for (a, b) in row.iter_mut().zip(other) {
                    *a += b;
                }
            }
            for (a, b) in t.visits.iter_mut().zip(&c.visits) {
                *a += b;
            }
        }
    }
}

/// Run biased dynamics along the stored (or raw-coordinate) CVs and count
/// transitions between the training basins.
pub fn cmd_simulate(cfg: &WorkflowConfig, out: &Path, model: Option<&Path>) -> Result<StageSummary> {
    cfg.validate()?;
    let t0 = Instant::now();
    let (cvs, stored_sigma) = if cfg.cv.kind == CvChoice::Raw {
        (vec![CollectiveVariable::raw_coordinate(cfg.cv.index, cfg.cv.periodic)], None)
    } else {
        let path = model.map(Path::to_path_buf).unwrap_or_else(|| out.join(MODEL_FILE));
        let bundle = load_model(&path)?;
        (bundle.cvs()?, bundle.metad.map(|t| t.sigma))
    };
    if cvs.len() > 3 {
        return Err(Error::config("cv.kind", format!("{} CVs; at most 3 can be biased", cvs.len())));
    }
    let sigma = match (&cfg.metad.sigma, stored_sigma) {
        (None, Some(s)) if s.len() == cvs.len() => s,
        _ => hill_sigma(cfg, &cvs, &training_samples(cfg)?.frames)?,
    };
    let mut wt = WellTemperedParams::new(sigma.clone());
    wt.w0 = cfg.metad.height;
    wt.gamma = cfg.metad.biasfactor;
    wt.deposit_stride = cfg.metad.pace;
    let m = &cfg.metad;
    let grid = if cvs.len() == 1 && m.grid_points_per_sigma > 0.0 {
        Some(bias_grid_1d(&cfg.system, &cvs[0], sigma[0], m.grid_points_per_sigma)?)
    } else {
        None
    };
    let start_basin = m.start_basin.unwrap_or(cfg.data.basins[0]);
    let start = cfg.system.basin_centers()[start_basin].clone();
    let langevin = |i: u64| LangevinParams {
        dt: m.dt,
        friction: m.friction,
        temperature: m.temperature,
        mass: m.mass,
        seed: cfg.seed().wrapping_add(i),
    };
    let (trajectories, bias) = if m.walkers == 1 {
        let run = MetadynamicsRun {
            potential: &cfg.system,
            cvs: &cvs,
            langevin: langevin(0),
            well_tempered: wt.clone(),
            steps: m.steps,
            save_stride: m.save_stride,
            initial: start,
            grid,
        };
        let (t, b) = run_metadynamics(&run)?;
        (vec![t], b)
    } else {
        let setup = WalkerSetup {
            potential: &cfg.system,
            cvs: &cvs,
            langevin: (0..m.walkers as u64).map(langevin).collect(),
            well_tempered: wt.clone(),
            steps: m.steps,
            save_stride: m.save_stride,
            read_stride: m.read_stride,
            initial: vec![start; m.walkers],
            grid,
            mode: m.mode(),
        };
        let r = multiwalker_run(&setup)?;
        (r.trajectories, r.bias)
    };
    let mut staging = Staging::new(out, "simulate")?;
    for (i, t) in trajectories.iter().enumerate() {
        let f = std::fs::File::create(staging.file(&trajectory_file(i, trajectories.len())))?;
        write_trajectory(std::io::BufWriter::new(f), t)?;
    }
    let f = std::fs::File::create(staging.file(HILLS_FILE))?;
    write_hills(std::io::BufWriter::new(f), &bias, wt.gamma)?;
    let cores = basin_cores(&cfg.system, &cfg.data.basins, m.core_radius)?;
    let mut counts = None;
    for t in &trajectories {
        add_counts(&mut counts, count_transitions(&t.frames, &cores));
    }
    let counts = counts.expect("at least one walker");
    let mut metrics = Metrics::new();
    let n = cfg.data.basins.len();
    let mut pairs = BTreeMap::new();
    for a in 0..n {
        for b in a + 1..n {
            pairs.insert(format!("{}-{}", cfg.data.basins[a], cfg.data.basins[b]), counts.round_trips(a, b));
        }
    }
    if n == 2 {
        metrics.insert("round_trips".into(), json!(counts.round_trips(0, 1)));
    } else {
        metrics.insert("round_trips".into(), json!(pairs));
    }
    metrics.insert("visits".into(), json!(counts.visits));
    metrics.insert("transition_matrix".into(), json!(counts.matrix));
    metrics.insert("hills".into(), json!(bias.len()));
    metrics.insert("sigma".into(), json!(sigma));
    let heights: Vec<f64> = bias.hills().iter().map(|h| h.height).collect();
    if !heights.is_empty() {
        let tail = &heights[heights.len() - heights.len().div_ceil(10)..];
        metrics.insert("final_hill_height_ratio".into(), json!(tail.iter().sum::<f64>() / tail.len() as f64 / wt.w0));
    }
    finish(staging, "simulate", Some(cfg), metrics, t0)
}

/// Trajectory files written by `simulate` for this configuration.
pub fn default_trajectories(cfg: &WorkflowConfig, out: &Path) -> Vec<PathBuf> {
    let n = cfg.metad.walkers;
    (0..n).map(|i| out.join(trajectory_file(i, n))).collect()
}

fn concat(trajs: Vec<Trajectory>) -> Trajectory {
    let mut all = Trajectory::default();
    for t in trajs {
        all.steps.extend(t.steps);
        all.frames.extend(t.frames);
        all.cvs.extend(t.cvs);
        all.bias.extend(t.bias);
    }
    all
}

fn domain_bins(cfg: &WorkflowConfig) -> Result<BinSpec> {
    let dom = cfg.system.domain();
    let r = &cfg.reweight;
    BinSpec::new(r.along.iter().map(|&k| dom[k].0).collect(), r.along.iter().map(|&k| dom[k].1).collect(), r.bins.clone())
}

/// Largest and RMS difference over bins where the reference is below `cutoff`.
pub fn fes_errors(est: &Fes, reference: &Fes, cutoff: f64) -> (f64, f64, usize) {
    let d: Vec<f64> = est
        .values
        .iter()
        .zip(&reference.values)
        .filter_map(|(e, r)| match (e, r) {
            (Some(e), Some(r)) if *r < cutoff => Some(e - r),
            _ => None,
        })
        .collect();
    let max = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let rms = if d.is_empty() { f64::NAN } else { (d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64).sqrt() };
    (rms, max, d.len())
}

/// Free-energy surface from the biased run and its error against quadrature.
pub fn cmd_reweight(cfg: &WorkflowConfig, out: &Path, trajectories: &[PathBuf], hills: Option<&Path>) -> Result<StageSummary> {
    cfg.validate()?;
    let t0 = Instant::now();
    let defaults;
    let trajectories = if trajectories.is_empty() {
        defaults = default_trajectories(cfg, out);
        &defaults[..]
    } else {
        trajectories
    };
    if cfg.reweight.estimator == Estimator::Tiwary && trajectories.len() > 1 {
        return Err(Error::config("reweight.estimator", "tiwary weights need a single trajectory; use lastbias"));
    }
    let trajs = trajectories
        .iter()
        .map(|p| read_trajectory(std::fs::File::open(p)?))
        .collect::<Result<Vec<_>>>()?;
    let traj = concat(trajs);
    if traj.is_empty() {
        return Err(Error::input("trajectory has no frames"));
    }
    let hills_path = hills.map(Path::to_path_buf).unwrap_or_else(|| out.join(HILLS_FILE));
    let (bias, gamma): (BiasPotential, f64) = read_hills(std::fs::File::open(&hills_path)?)?;
    let temperature = cfg.metad.temperature;
    let weights = match cfg.reweight.estimator {
        Estimator::Tiwary => {
            let sigma = bias.hills().first().map_or_else(|| vec![1.0; bias.dims()], |h| h.sigma.clone());
            let mut wt = WellTemperedParams::new(sigma).with_periods(bias.periods().to_vec());
            wt.w0 = cfg.metad.height;
            wt.gamma = if gamma.is_nan() { cfg.metad.biasfactor } else { gamma };
            wt.deposit_stride = cfg.metad.pace;
            let grid = ReweightGrid::around(&traj, &wt, cfg.reweight.grid_points)?;
            tiwary_weights(&traj, &bias, &wt, temperature, &grid)?
        }
        Estimator::Lastbias => lastbias_weights(&traj, &bias, temperature)?,
    };
    let bins = domain_bins(cfg)?;
    let points: Vec<Vec<f64>> = traj.frames.iter().map(|q| cfg.reweight.along.iter().map(|&k| q[k]).collect()).collect();
    let fes = build_fes(&points, &weights, &bins, temperature)?;
    let reference = reference_fes(&cfg.system, &cfg.reweight.along, &bins, temperature, cfg.reweight.reference_points)?;
    let (rms, max, compared) = fes_errors(&fes, &reference, cfg.reweight.cutoff * temperature);
    let mut staging = Staging::new(out, "reweight")?;
    write_fes(std::fs::File::create(staging.file("fes.csv"))?, &fes)?;
    write_fes(std::fs::File::create(staging.file("fes_reference.csv"))?, &reference)?;
    let estimator = match cfg.reweight.estimator {
        Estimator::Tiwary => "tiwary",
        Estimator::Lastbias => "lastbias",
    };
    let note = match cfg.reweight.estimator {
        Estimator::Tiwary => "time-dependent bias with per-deposit offsets c(t)",
        Estimator::Lastbias => "last-bias reweighting: every frame weighted by the final bias",
    };
    let mut m = Metrics::new();
    m.insert("estimator".into(), json!(estimator));
    m.insert("note".into(), json!(note));
    m.insert("fes_rms".into(), json!(rms));
    m.insert("fes_max".into(), json!(max));
    m.insert("bins_compared".into(), json!(compared));
    m.insert("cutoff".into(), json!(cfg.reweight.cutoff * temperature));
    m.insert("frames".into(), json!(traj.len()));
    staging.write("fes_report.json", serde_json::to_string_pretty(&m).expect("json") + "\n")?;
    finish(staging, "reweight", Some(cfg), m, t0)
}

/// Write the CUSTOM block for a stored model and check it by re-evaluation.
pub fn cmd_export(model: &Path, labels: Option<Vec<String>>, out: &Path) -> Result<StageSummary> {
    let t0 = Instant::now();
    let bundle = load_model(model)?;
    let labels = labels.unwrap_or_else(|| bundle.features.labels());
    let text = emit_plumed(&bundle, &labels)?;
    let err = round_trip_error(&bundle, &text, 1000, 0)?;
    let mut staging = Staging::new(out, "export")?;
    staging.write(PLUMED_FILE, &text)?;
    let mut m = Metrics::new();
    m.insert("custom_lines".into(), json!(text.lines().filter(|l| l.contains(" CUSTOM ")).count()));
    m.insert("round_trip_max_error".into(), json!(err));
    m.insert("model_sha256".into(), json!(sha256_hex(&std::fs::read(model)?)));
    finish(staging, "export", None, m, t0)
}

/// Run every benchmark criterion and write `report.json`.
pub fn cmd_report(cfg: &WorkflowConfig, out: &Path) -> Result<StageSummary> {
    let t0 = Instant::now();
    let outcomes = crate::criteria::run_all(cfg.seed())?;
    let mut staging = Staging::new(out, "report")?;
    let text = serde_json::to_string_pretty(&outcomes).expect("outcomes serialize") + "\n";
    staging.write(REPORT_FILE, text)?;
    let mut metrics = Metrics::new();
    for o in &outcomes {
        metrics.insert(format!("criterion_{:02}", o.id), json!(o.passed));
    }
    metrics.insert("passed".into(), json!(outcomes.iter().filter(|o| o.passed).count()));
    finish(staging, "report", Some(cfg), metrics, t0)
}
