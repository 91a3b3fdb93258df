//! Benchmark criteria at their stated tolerances. Runs without the libtest
//! harness so every criterion prints one PASS/FAIL line; exits non-zero if
//! any fails.
//!
//! Pass/fail is decided here from the reported numbers, with independent
//! oracles where a reference value is involved.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use serde_json::Value;
use smlcv::criteria::{self, BiasedRun, Outcome, Z95};
use smlcv::reweight::{build_fes, lastbias_weights, tiwary_weights, BinSpec, ReweightGrid};
use smlcv::sampling::ToyPotential;

const SEED: u64 = 1;

struct Verdict {
    id: u8,
    name: String,
    passed: bool,
    detail: String,
}

fn f(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or_else(|| panic!("metric {key} missing in {v}"))
}

fn floats(v: &Value, key: &str) -> Vec<f64> {
    v[key].as_array().unwrap_or_else(|| panic!("metric {key} missing")).iter().map(|x| x.as_f64().unwrap()).collect()
}

fn within(o: &Outcome, limit_s: f64) -> bool {
    o.seconds < limit_s
}

/// Composite Simpson rule on [lo, hi] with `n` (even) intervals.
fn simpson(g: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut s = g(lo) + g(hi);
    for i in 1..n {
        s += g(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Accuracy of the optimal rule for two equally likely unit Gaussians with
/// means at -d/2 and +d/2.
fn bayes_accuracy(d: f64) -> f64 {
    let pdf = |x: f64, m: f64| (-(x - m) * (x - m) / 2.0).exp() / (2.0 * PI).sqrt();
    simpson(|x| 0.5 * pdf(x, -d / 2.0).max(pdf(x, d / 2.0)), -15.0, 15.0, 200_000)
}

/// Bin-averaged free energy on the torus, `-T ln` of the Boltzmann integral
/// over each bin by the midpoint rule, shifted to a zero minimum.
fn torus_reference(p: &ToyPotential, bins: usize, per_bin: usize) -> Vec<f64> {
    let w = 2.0 * PI / bins as f64;
    let mut out = Vec::with_capacity(bins * bins);
    for i in 0..bins {
        for j in 0..bins {
            let mut z = 0.0;
            for a in 0..per_bin {
                for b in 0..per_bin {
                    let x = -PI + w * (i as f64 + (a as f64 + 0.5) / per_bin as f64);
                    let y = -PI + w * (j as f64 + (b as f64 + 0.5) / per_bin as f64);
                    z += (-p.energy(&[x, y])).exp();
                }
            }
            out.push(-(z / (per_bin * per_bin) as f64).ln());
        }
    }
    let m = out.iter().copied().fold(f64::INFINITY, f64::min);
    out.iter().map(|v| v - m).collect()
}

/// RMS between a reweighted histogram and the oracle over bins with oracle F < 5.
fn oracle_rms(run: &BiasedRun, weights: &[f64], reference: &[f64]) -> f64 {
    let bins = BinSpec::new(vec![-PI, -PI], vec![PI, PI], vec![30, 30]).unwrap();
    let fes = build_fes(&run.trajectory.frames, weights, &bins, 1.0).unwrap();
    let m = fes.values.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let sq: Vec<f64> = fes
        .values
        .iter()
        .zip(reference)
        .filter_map(|(e, r)| e.filter(|_| *r < 5.0).map(|e| (e - m - r).powi(2)))
        .collect();
    (sq.iter().sum::<f64>() / sq.len() as f64).sqrt()
}

fn verdict(o: &Outcome, passed: bool, detail: String) -> Verdict {
    Verdict { id: o.id, name: o.name.clone(), passed, detail }
}

fn main() -> ExitCode {
    let t0 = Instant::now();
    let two = criteria::two_state_samples(SEED).unwrap();
    let three = criteria::three_state_samples(SEED).unwrap();
    let mut verdicts = Vec::new();
    let mut report = |v: Verdict| {
        println!("criterion {:>2} {} {}: {}", v.id, if v.passed { "PASS" } else { "FAIL" }, v.name, v.detail);
        verdicts.push(v.passed);
    };

    let o = criteria::separability(&two, SEED).unwrap();
    let accs: Vec<f64> = floats(&o.metrics, "svm").into_iter().chain(floats(&o.metrics, "lr")).collect();
    report(verdict(&o, accs.len() == 10 && accs.iter().all(|&a| a == 1.0) && within(&o, 10.0), format!("accuracies {accs:?}, {:.1} s", o.seconds)));

    let o = criteria::overlap_floor(SEED).unwrap();
    let bayes = bayes_accuracy(2.0 * Z95);
    let accs: Vec<f64> = floats(&o.metrics, "svm").into_iter().chain(floats(&o.metrics, "lr")).collect();
    let worst = accs.iter().copied().fold(f64::INFINITY, f64::min);
    report(verdict(
        &o,
        (bayes - 0.95).abs() < 1e-6 && accs.len() == 10 && worst >= 0.92 && within(&o, 30.0),
        format!("Bayes accuracy by quadrature {bayes:.6}, worst CV accuracy {worst:.4}, {:.1} s", o.seconds),
    ));

    let o = criteria::gradients(&two, &three, SEED).unwrap();
    let worst = f(&o.metrics, "max");
    let kinds = ["svm", "lr", "lr_odds", "dnn", "multiclass", "bias_1d", "bias_3d"];
    let all_present = kinds.iter().all(|k| o.metrics[*k].is_number());
    report(verdict(&o, all_present && worst <= 1e-5 && within(&o, 10.0), format!("max relative error {worst:.2e}, {:.1} s", o.seconds)));

    let (o4, svm_run) = criteria::acceleration(&two, SEED).unwrap();
    let biased = f(&o4.metrics, "svm_round_trips");
    let plain = f(&o4.metrics, "unbiased_round_trips");
    report(verdict(&o4, biased >= 5.0 && plain <= 1.0 && within(&o4, 300.0), format!("biased {biased}, unbiased {plain}, {:.1} s", o4.seconds)));

    let o = criteria::cv_ordering(SEED, 5).unwrap();
    let (phi, svm, psi) = (f(&o.metrics, "median_phi"), f(&o.metrics, "median_svm"), f(&o.metrics, "median_psi"));
    report(verdict(
        &o,
        phi >= svm && svm >= 3.0 * psi && within(&o, 900.0),
        format!("median round trips phi {phi}, svm {svm}, psi {psi}, {:.1} s", o.seconds),
    ));

    let (o7, mc_run) = criteria::multiclass_diffusion(&three, SEED).unwrap();

    let o = criteria::fes_recovery(&svm_run, &mc_run).unwrap();
    let reference = torus_reference(&criteria::rama(), 30, 20);
    let grid = ReweightGrid::around(&svm_run.trajectory, &svm_run.well_tempered, 400).unwrap();
    let w = tiwary_weights(&svm_run.trajectory, &svm_run.bias, &svm_run.well_tempered, 1.0, &grid).unwrap();
    let tiwary_oracle = oracle_rms(&svm_run, &w, &reference);
    let w = lastbias_weights(&mc_run.trajectory, &mc_run.bias, 1.0).unwrap();
    let lastbias_oracle = oracle_rms(&mc_run, &w, &reference);
    let (t, l) = (f(&o.metrics, "tiwary_rms"), f(&o.metrics, "lastbias_rms"));
    report(verdict(
        &o,
        t <= 1.0 && l <= 1.0 && tiwary_oracle <= 1.0 && lastbias_oracle <= 1.0 && within(&o, 120.0),
        format!(
            "RMS time-dependent {t:.3} (bin-averaged oracle {tiwary_oracle:.3}), last-bias {l:.3} (oracle {lastbias_oracle:.3}), {:.1} s",
            o.seconds
        ),
    ));

    let visits = floats(&o7.metrics, "visits");
    report(verdict(&o7, visits.len() == 3 && visits.iter().all(|&v| v >= 3.0) && within(&o7, 600.0), format!("core visits {visits:?}, {:.1} s", o7.seconds)));

    let o = criteria::tempering(&svm_run).unwrap();
    let hills: Vec<f64> = svm_run.bias.hills().iter().map(|h| h.height).collect();
    let tail = &hills[hills.len() - hills.len().div_ceil(10)..];
    let ratio = tail.iter().sum::<f64>() / tail.len() as f64 / svm_run.well_tempered.w0;
    let pinned = o.metrics["pinned_strictly_decreasing"].as_bool() == Some(true);
    report(verdict(&o, ratio < 0.2 && pinned, format!("tail hill height {ratio:.4} w0, pinned heights strictly decreasing: {pinned}")));

    let o = criteria::thermometer(SEED).unwrap();
    let (k, temperature) = (1.0, 1.0);
    let exact = temperature / k;
    let var = f(&o.metrics, "variance");
    report(verdict(
        &o,
        (0.95 * exact..=1.05 * exact).contains(&var) && within(&o, 30.0),
        format!("Var(q) {var:.4} against T/k = {exact}, {:.1} s", o.seconds),
    ));

    let o = criteria::export_round_trip(&two, &three, SEED).unwrap();
    let kinds = ["svm", "svm_scaled", "lr", "lr_odds", "dnn", "multiclass"];
    let ok = kinds.iter().all(|k| {
        let m = &o.metrics[*k];
        m["max_error"].as_f64().is_some_and(|e| e <= 1e-9) && m["json_stable"].as_bool() == Some(true)
    });
    let worst = kinds.iter().filter_map(|k| o.metrics[*k]["max_error"].as_f64()).fold(0.0, f64::max);
    report(verdict(&o, ok && within(&o, 10.0), format!("max error {worst:.2e}, save/load/save identical, {:.1} s", o.seconds)));

    let o = criteria::dnn_training(&two).unwrap();
    let good = o.metrics["runs"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| f(r, "accuracy") == 1.0 && f(r, "loss") < 0.1)
        .count();
    report(verdict(&o, good >= 4 && within(&o, 30.0), format!("{good} of 5 seeds at accuracy 1 and loss < 0.1, {:.1} s", o.seconds)));

    let o = criteria::sparsity(&two).unwrap();
    let w1 = floats(&o.metrics, "w_c1");
    let zeros = w1.iter().filter(|&&x| x == 0.0).count();
    let (r01, r10) = (f(&o.metrics, "rel_diff_c0.1"), f(&o.metrics, "rel_diff_c10"));
    let all_zero = o.metrics["all_zero_c1e-6"].as_bool() == Some(true);
    report(verdict(
        &o,
        zeros >= 1 && r01 <= 0.2 && r10 <= 0.2 && all_zero && within(&o, 10.0),
        format!("{zeros} zero weights at C=1, relative change {r01:.3} (C=0.1) {r10:.3} (C=10), all zero at C=1e-6: {all_zero}"),
    ));

    let failed = verdicts.iter().filter(|p| !**p).count();
    println!("{} of {} criteria passed in {:.1} s", verdicts.len() - failed, verdicts.len(), t0.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
