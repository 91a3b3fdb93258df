//! Randomized invariants across the public API.

use std::collections::HashMap;
use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use proptest::prelude::*;
use smlcv::classifiers::{
    train_linear_svm, Classifier, LabeledDataset, LinearModel, LossKind, MulticlassLinearModel, Penalty, SolverOptions,
};
use smlcv::cv::{lr_cv, lr_odds_cv, multiclass_cvs, svm_cv, CollectiveVariable, CvKind};
use smlcv::export::{emit_plumed, eval_expression, parse_custom_lines, ModelBundle};
use smlcv::features::{contact_distance, pseudo_dihedral_cos, FeatureSpec, Frame, StandardScaler, Transform};
use smlcv::reweight::{lastbias_weights, tiwary_weights, ReweightGrid};
use smlcv::sampling::{
    run_metadynamics, BiasPotential, Hill, LangevinParams, MetadynamicsRun, ToyPotential, Trajectory,
    WellTemperedParams,
};

fn linear(w: Vec<f64>, b: f64) -> LinearModel {
    LinearModel { w: Array1::from(w), b, penalty: Penalty::L2, c: 1.0, loss: LossKind::SquaredHinge }
}

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, n).prop_filter("non-zero weights", |w| w.iter().any(|x| x.abs() > 1e-3))
}

fn rotation(a: f64, b: f64, c: f64) -> [[f64; 3]; 3] {
    let (sa, ca, sb, cb, sc, cc) = (a.sin(), a.cos(), b.sin(), b.cos(), c.sin(), c.cos());
    let rz = [[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]];
    let ry = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
    let rx = [[1.0, 0.0, 0.0], [0.0, cc, -sc], [0.0, sc, cc]];
    let mul = |p: [[f64; 3]; 3], q: [[f64; 3]; 3]| {
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] = (0..3).map(|k| p[i][k] * q[k][j]).sum();
            }
        }
        r
    };
    mul(mul(rz, ry), rx)
}

fn transform(coords: &[f64], r: [[f64; 3]; 3], shift: [f64; 3]) -> Vec<f64> {
    coords
        .chunks(3)
        .flat_map(|p| (0..3).map(move |i| (0..3).map(|k| r[i][k] * p[k]).sum::<f64>() + shift[i]))
        .collect()
}

/// Central differences of every feature with respect to every coordinate.
fn fd_jacobian(spec: &FeatureSpec, q: &[f64], h: f64) -> Array2<f64> {
    let width = spec.width();
    let mut jac = Array2::zeros((width, q.len()));
    for j in 0..q.len() {
        let (mut p, mut m) = (q.to_vec(), q.to_vec());
        p[j] += h;
        m[j] -= h;
        let fp = spec.features(&Frame::new(p)).unwrap();
        let fm = spec.features(&Frame::new(m)).unwrap();
        for i in 0..width {
            jac[[i, j]] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sincos_pairs_lie_on_the_unit_circle(angles in prop::collection::vec(-50.0..50.0f64, 1..6)) {
        let x = FeatureSpec::sincos(angles.len()).features(&Frame::new(angles)).unwrap();
        for pair in x.as_slice().unwrap().chunks(2) {
            prop_assert!((pair[0] * pair[0] + pair[1] * pair[1] - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn jacobians_match_finite_differences(coords in prop::collection::vec(-2.0..2.0f64, 12)) {
        let spec = FeatureSpec::new(vec![
            Transform::SinCos { angle: 0 },
            Transform::ContactDistance { i: 0, j: 2 },
            Transform::PseudoDihedralCos { a: 0, b: 1, c: 2, d: 3 },
            Transform::Raw { index: 5 },
        ]);
        let frame = Frame::new(coords.clone());
        // skip near-degenerate torsions where the cosine is ill-conditioned
        prop_assume!(spec.features(&frame).is_ok());
        let (_, analytic) = spec.features_and_jacobian(&frame).unwrap();
        prop_assume!(analytic.iter().all(|g| g.abs() < 1e3));
        let fd = fd_jacobian(&spec, &coords, 1e-6);
        for (a, n) in analytic.iter().zip(fd.iter()) {
            prop_assert!((a - n).abs() / a.abs().max(1.0) <= 1e-6, "analytic {a} vs fd {n}");
        }
    }

    #[test]
    fn scaler_standardizes_its_own_data(rows in 2usize..40, seed_data in prop::collection::vec(-100.0..100.0f64, 120)) {
        let x = Array2::from_shape_fn((rows, 3), |(i, j)| seed_data[(i * 3 + j) % 120] + (i * j) as f64 * 0.37);
        prop_assume!((0..3).all(|j| x.column(j).iter().any(|v| *v != x[[0, j]])));
        let s = StandardScaler::fit(x.view()).unwrap();
        let z: Vec<Array1<f64>> = x.rows().into_iter().map(|r| s.apply(r).unwrap()).collect();
        for j in 0..3 {
            let col: Vec<f64> = z.iter().map(|r| r[j]).collect();
            let mean = col.iter().sum::<f64>() / rows as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows as f64).sqrt();
            prop_assert!(mean.abs() <= 1e-12, "mean {mean}");
            prop_assert!((sd - 1.0).abs() <= 1e-12, "std {sd}");
        }
    }

    #[test]
    fn geometry_is_rigid_motion_invariant(
        coords in prop::collection::vec(-3.0..3.0f64, 12),
        angles in prop::array::uniform3(-PI..PI),
        shift in prop::array::uniform3(-10.0..10.0f64),
    ) {
        let moved = transform(&coords, rotation(angles[0], angles[1], angles[2]), shift);
        let (f, g) = (Frame::new(coords), Frame::new(moved));
        let d = contact_distance(&f, 0, 3).unwrap();
        prop_assert!((d - contact_distance(&f, 3, 0).unwrap()).abs() <= 1e-12);
        prop_assert!((d - contact_distance(&g, 0, 3).unwrap()).abs() <= 1e-9 * d.max(1.0));
        if let (Ok(a), Ok(b)) = (pseudo_dihedral_cos(&f, 0, 1, 2, 3), pseudo_dihedral_cos(&g, 0, 1, 2, 3)) {
            prop_assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn labels_follow_the_sign_of_the_decision_value(w in weights(4), b in -2.0..2.0f64, x in prop::collection::vec(-5.0..5.0f64, 4)) {
        let m = linear(w.clone(), b);
        let x = Array1::from(x);
        let z = w.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() + b;
        prop_assert_eq!(m.predict_label(x.view()).unwrap(), usize::from(z > 0.0));
        let s = svm_cv(&m, x.view()).unwrap();
        prop_assert_eq!(s > 0.0, m.predict_label(x.view()).unwrap() == 1);
    }

    #[test]
    fn multiclass_label_is_the_argmax_distance(
        ws in prop::collection::vec(weights(4), 3),
        bs in prop::collection::vec(-2.0..2.0f64, 3),
        x in prop::collection::vec(-5.0..5.0f64, 4),
    ) {
        let m = MulticlassLinearModel::new(ws.into_iter().zip(bs).map(|(w, b)| linear(w, b)).collect()).unwrap();
        let x = Array1::from(x);
        let d = m.signed_distances(x.view()).unwrap();
        let best = (0..3).fold(0, |best, k| if d[k] > d[best] { k } else { best });
        prop_assert_eq!(m.predict_label(x.view()).unwrap(), best);
    }

    #[test]
    fn distance_cvs_ignore_positive_rescaling(
        ws in prop::collection::vec(weights(4), 3),
        bs in prop::collection::vec(-2.0..2.0f64, 3),
        scale in 1e-3..1e3f64,
        x in prop::collection::vec(-5.0..5.0f64, 4),
    ) {
        let x = Array1::from(x);
        let plain: Vec<LinearModel> = ws.iter().zip(&bs).map(|(w, b)| linear(w.clone(), *b)).collect();
        let scaled: Vec<LinearModel> =
            ws.iter().zip(&bs).map(|(w, b)| linear(w.iter().map(|v| v * scale).collect(), b * scale)).collect();
        let a = svm_cv(&plain[0], x.view()).unwrap();
        prop_assert!((a - svm_cv(&scaled[0], x.view()).unwrap()).abs() <= 1e-12 * a.abs().max(1.0));
        let da = multiclass_cvs(&MulticlassLinearModel::new(plain).unwrap(), x.view()).unwrap();
        let db = multiclass_cvs(&MulticlassLinearModel::new(scaled).unwrap(), x.view()).unwrap();
        for (p, q) in da.iter().zip(&db) {
            prop_assert!((p - q).abs() <= 1e-12 * p.abs().max(1.0));
        }
    }

    #[test]
    fn probability_links_increase_with_the_decision_value(mut zs in prop::collection::vec(-30.0..30.0f64, 2..20)) {
        zs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        zs.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        let m = linear(vec![1.0], 0.0);
        let eval = |z: f64, f: fn(&LinearModel, ndarray::ArrayView1<f64>) -> smlcv::Result<f64>| {
            f(&m, Array1::from(vec![z]).view()).unwrap()
        };
        for pair in zs.windows(2) {
            prop_assert!(eval(pair[0], lr_odds_cv) < eval(pair[1], lr_odds_cv));
            let (p0, p1) = (eval(pair[0], lr_cv), eval(pair[1], lr_cv));
            prop_assert!(p0 <= p1);
            if pair[1] < 15.0 {
                prop_assert!(p0 < p1);
            }
        }
    }

    #[test]
    fn cv_gradient_is_model_gradient_times_feature_jacobian(w in weights(4), b in -1.0..1.0f64, q in prop::array::uniform2(-PI..PI)) {
        let spec = FeatureSpec::sincos(2);
        let cv = CollectiveVariable::new(CvKind::LrProbability { model: linear(w.clone(), b) }, spec.clone()).unwrap();
        let frame = Frame::new(q.to_vec());
        let got = cv.evaluate(&frame).unwrap().gradient;
        let (x, jac) = spec.features_and_jacobian(&frame).unwrap();
        let z = w.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() + b;
        let p = 1.0 / (1.0 + (-z).exp());
        let model_grad = Array1::from(w).mapv(|v| v * p * (1.0 - p));
        let expect = jac.t().dot(&model_grad);
        for (g, e) in got.iter().zip(expect.iter()) {
            prop_assert!((g - e).abs() <= 1e-12);
        }
    }

    #[test]
    fn hill_heights_stay_in_range_and_bias_never_drops(
        points in prop::collection::vec(-2.0..2.0f64, 1..60),
        probe in -3.0..3.0f64,
    ) {
        let wt = WellTemperedParams::new(vec![0.25]);
        let mut bias = BiasPotential::new(1).unwrap();
        let mut last = 0.0;
        for (k, s) in points.iter().enumerate() {
            let h = bias.deposit(&[*s], &wt, 1.0, k as u64).unwrap();
            prop_assert!(h > 0.0 && h <= wt.w0);
            let v = bias.eval(&[probe]).unwrap().0;
            prop_assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn periodic_bias_repeats_every_period(centers in prop::collection::vec(-PI..PI, 1..20), s in -PI..PI, k in -3i32..3) {
        let mut bias = BiasPotential::with_periods(vec![Some(2.0 * PI)]).unwrap();
        for (i, c) in centers.iter().enumerate() {
            bias.push(Hill { step: i as u64, center: vec![*c], sigma: vec![0.4], height: 0.3 }).unwrap();
        }
        let a = bias.eval(&[s]).unwrap().0;
        let b = bias.eval(&[s + 2.0 * PI * k as f64]).unwrap().0;
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn svm_weights_vanish_at_tiny_c(n in 10usize..60, seed in any::<u64>()) {
        let x = Array2::from_shape_fn((n, 3), |(i, j)| (((seed.wrapping_add((i * 7 + j * 13) as u64) % 2000) as f64) / 100.0) - 10.0);
        let y: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let data = LabeledDataset::new(x, y).unwrap();
        let fit = train_linear_svm(&data, Penalty::L1, 1e-6, SolverOptions::default()).unwrap();
        prop_assert!(fit.model.w.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn emitted_linear_cv_matches_in_process_value(w in weights(4), b in -2.0..2.0f64, q in prop::array::uniform2(-PI..PI)) {
        let spec = FeatureSpec::sincos(2);
        let cv = CollectiveVariable::svm(linear(w, b), spec.clone()).unwrap();
        let bundle = ModelBundle::from_cv(&cv).unwrap();
        let text = emit_plumed(&bundle, &spec.labels()).unwrap();
        prop_assert!(text.is_ascii());
        let line = &parse_custom_lines(&text).unwrap()[0];
        let x = spec.features(&Frame::new(q.to_vec())).unwrap();
        let vars: HashMap<String, f64> = line.vars.iter().cloned().zip(x.iter().copied()).collect();
        let got = line.func.eval(&vars).unwrap();
        let reparsed = eval_expression(&line.func.to_string(), &vars).unwrap();
        prop_assert_eq!(got, reparsed);
        let want = cv.value(&Frame::new(q.to_vec())).unwrap();
        prop_assert!((got - want).abs() <= 1e-9);
        prop_assert_eq!(bundle.to_json().unwrap(), ModelBundle::from_json(&bundle.to_json().unwrap()).unwrap().to_json().unwrap());
    }
}

fn short_run(seed: u64, steps: u64) -> (Trajectory, BiasPotential, WellTemperedParams) {
    let p = ToyPotential::DoubleWell1d { a: 3.0 };
    let cvs = [CollectiveVariable::raw_coordinate(0, false)];
    let wt = WellTemperedParams::new(vec![0.2]);
    let run = MetadynamicsRun {
        potential: &p,
        cvs: &cvs,
        langevin: LangevinParams::with_seed(seed),
        well_tempered: wt.clone(),
        steps,
        save_stride: 10,
        initial: vec![-1.0],
        grid: None,
    };
    let (t, b) = run_metadynamics(&run).unwrap();
    (t, b, wt)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn single_walker_runs_are_reproducible(seed in any::<u64>()) {
        let (a, ba, _) = short_run(seed, 3000);
        let (b, bb, _) = short_run(seed, 3000);
        prop_assert_eq!(a, b);
        prop_assert_eq!(ba.hills(), bb.hills());
    }

    #[test]
    fn reweighting_weights_are_normalized(seed in any::<u64>(), shift in 0.1..50.0f64) {
        let (t, bias, wt) = short_run(seed, 4000);
        let last = lastbias_weights(&t, &bias, 1.0).unwrap();
        let grid = ReweightGrid::around(&t, &wt, 200).unwrap();
        let tiw = tiwary_weights(&t, &bias, &wt, 1.0, &grid).unwrap();
        for w in [&last, &tiw] {
            prop_assert!(w.iter().all(|&x| x >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        // a hill this wide adds the same energy at every visited point
        let mut shifted = bias.clone();
        shifted.push(Hill { step: u64::MAX, center: vec![0.0], sigma: vec![1e9], height: shift }).unwrap();
        let again = lastbias_weights(&t, &shifted, 1.0).unwrap();
        for (a, b) in last.iter().zip(&again) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
