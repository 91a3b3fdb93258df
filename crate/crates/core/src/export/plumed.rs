//! CUSTOM/METAD text blocks for PLUMED-style engines.

use std::rc::Rc;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bundle::{BundleModel, CvOptions, LinearParams, ModelBundle};
use super::expr::{fmt_number, parse, BinOp, Expr};
use crate::error::{Error, Result};

/// Longest emitted line, in characters.
pub const MAX_LINE: u128 = 1_000_000;

fn add(l: Rc<Expr>, r: Rc<Expr>) -> Rc<Expr> {
    Expr::bin(BinOp::Add, l, r)
}

fn mul(l: Rc<Expr>, r: Rc<Expr>) -> Rc<Expr> {
    Expr::bin(BinOp::Mul, l, r)
}

fn div(l: Rc<Expr>, r: Rc<Expr>) -> Rc<Expr> {
    Expr::bin(BinOp::Div, l, r)
}

/// `1/(1+exp(-(z)))`.
fn logistic(z: Rc<Expr>) -> Rc<Expr> {
    div(Expr::num(1.0), Expr::group(add(Expr::num(1.0), Expr::exp(Expr::negate(Expr::group(z))))))
}

/// `(w1*x1+...+wn*xn)+(b)`.
fn affine(w: &[f64], b: f64, inputs: &[Rc<Expr>]) -> Rc<Expr> {
    let sum = w
        .iter()
        .zip(inputs)
        .map(|(&wi, x)| mul(Expr::num(wi), x.clone()))
        .reduce(add)
        .unwrap_or_else(|| Expr::num(0.0));
    add(Expr::group(sum), Expr::group(Expr::num(b)))
}

/// `(affine)/(norm)`, or the bare affine form.
fn linear_cv(p: &LinearParams, inputs: &[Rc<Expr>], normalized: bool) -> Rc<Expr> {
    let z = affine(&p.w, p.b, inputs);
    if normalized {
        div(Expr::group(z), Expr::group(Expr::num(p.norm)))
    } else {
        z
    }
}

/// Feature variables `v1..vn`, with the scaler folded in as `((vi-mean)/std)`.
fn inputs(bundle: &ModelBundle) -> Vec<Rc<Expr>> {
    let n = bundle.features.width();
    (0..n)
        .map(|i| {
            let v = Expr::var(format!("v{}", i + 1));
            match &bundle.features.scaler {
                Some(s) if !(s.mean[i] == 0.0 && s.std[i] == 1.0) => Expr::group(div(
                    Expr::group(Expr::bin(BinOp::Sub, v, Expr::num(s.mean[i]))),
                    Expr::num(s.std[i]),
                )),
                _ => v,
            }
        })
        .collect()
}

/// One expression per CV the bundle defines.
pub fn cv_expressions(bundle: &ModelBundle) -> Result<Vec<Rc<Expr>>> {
    bundle.validate()?;
    let x = inputs(bundle);
    Ok(match (&bundle.model, bundle.cv) {
        (BundleModel::Linear { params }, CvOptions::SvmDistance { normalized }) => {
            vec![linear_cv(params, &x, normalized)]
        }
        (BundleModel::Linear { params }, CvOptions::LrProbability) => vec![logistic(affine(&params.w, params.b, &x))],
        (BundleModel::Linear { params }, CvOptions::LrOdds) => vec![Expr::exp(affine(&params.w, params.b, &x))],
        (BundleModel::Multiclass { states }, CvOptions::MulticlassDistance) => {
            states.iter().map(|p| linear_cv(p, &x, true)).collect()
        }
        (BundleModel::Mlp { layers }, CvOptions::DnnOutput { node }) => {
            let mut act = x;
            for (k, layer) in layers.iter().enumerate() {
                let last = k + 1 == layers.len();
                act = layer
                    .weight
                    .iter()
                    .zip(&layer.bias)
                    .map(|(row, &b)| {
                        let z = Expr::group(affine(row, b, &act));
                        if last {
                            z
                        } else {
                            // swish: (z)*(1/(1+exp(-(z))))
                            mul(z.clone(), Expr::group(logistic(z)))
                        }
                    })
                    .collect();
            }
            vec![act[node].clone()]
        }
        _ => return Err(Error::UnsupportedExport(format!("{:?} on this model", bundle.cv))),
    })
}

/// Labels for the emitted CVs.
pub fn cv_labels(bundle: &ModelBundle) -> Vec<String> {
    match bundle.cv {
        CvOptions::SvmDistance { normalized: true } => vec!["svm_cv".into()],
        CvOptions::SvmDistance { normalized: false } => vec!["svm_decision".into()],
        CvOptions::LrProbability => vec!["lr_cv".into()],
        CvOptions::LrOdds => vec!["lr_odds_cv".into()],
        CvOptions::DnnOutput { node } => vec![format!("dnn_cv_{node}")],
        CvOptions::MulticlassDistance => match &bundle.model {
            BundleModel::Multiclass { states } => (1..=states.len()).map(|i| format!("cv{i}")).collect(),
            _ => Vec::new(),
        },
    }
}

fn check_labels(labels: &[String], width: usize) -> Result<()> {
    if labels.len() != width {
        return Err(Error::argument(format!("{} feature labels for {width} features", labels.len())));
    }
    for l in labels {
        if l.is_empty() || !l.chars().all(|c| c.is_ascii_graphic() && c != ',' && c != '=') {
            return Err(Error::argument(format!("feature label `{l}` must be printable ASCII without `,` or `=`")));
        }
    }
    Ok(())
}

/// CUSTOM lines for every CV plus a commented METAD template.
pub fn emit_plumed(bundle: &ModelBundle, feature_labels: &[String]) -> Result<String> {
    let width = bundle.features.width();
    check_labels(feature_labels, width)?;
    let exprs = cv_expressions(bundle)?;
    let names = cv_labels(bundle);
    let arg = feature_labels.join(",");
    let var: Vec<String> = (1..=width).map(|i| format!("v{i}")).collect();
    let var = var.join(",");
    let mut out = String::new();
    for (name, e) in names.iter().zip(&exprs) {
        let head = format!("{name}: CUSTOM ARG={arg} VAR={var} FUNC=");
        let tail = " PERIODIC=NO";
        let len = head.len() as u128 + e.printed_len() + tail.len() as u128;
        if len > MAX_LINE {
            return Err(Error::UnsupportedExport(format!(
                "CUSTOM line for {name} would be {len} characters, limit {MAX_LINE}"
            )));
        }
        out.push_str(&head);
        out.push_str(&e.to_string());
        out.push_str(tail);
        out.push('\n');
    }
    out.push_str(&metad_stanza(bundle, &names));
    debug_assert!(out.is_ascii());
    Ok(out)
}

fn metad_stanza(bundle: &ModelBundle, names: &[String]) -> String {
    let join = |xs: &[f64]| xs.iter().map(|x| fmt_number(*x)).collect::<Vec<_>>().join(",");
    let mut s = String::from("#\n# Metadynamics template:\n");
    let line = match &bundle.metad {
        Some(m) => format!(
            "# metad: METAD ARG={} SIGMA={} HEIGHT={} BIASFACTOR={} TEMP={} PACE={} FILE=HILLS\n",
            names.join(","),
            join(&m.sigma),
            fmt_number(m.height),
            fmt_number(m.biasfactor),
            fmt_number(m.temperature),
            m.pace
        ),
        None => format!(
            "# metad: METAD ARG={} SIGMA=__FILL__ HEIGHT=__FILL__ BIASFACTOR=__FILL__ TEMP=__FILL__ PACE=__FILL__ FILE=HILLS\n",
            names.join(",")
        ),
    };
    s.push_str(&line);
    s
}

/// A parsed CUSTOM line.
#[derive(Debug, Clone)]
pub struct CustomLine {
    pub label: String,
    pub args: Vec<String>,
    pub vars: Vec<String>,
    pub func: Rc<Expr>,
}

/// Read back the CUSTOM lines of an emitted block.
pub fn parse_custom_lines(text: &str) -> Result<Vec<CustomLine>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.starts_with('#') || !line.contains(" CUSTOM ") {
            continue;
        }
        let (label, rest) = line
            .split_once(": CUSTOM ")
            .ok_or_else(|| Error::Malformed(format!("line {}: missing `label: CUSTOM`", n + 1)))?;
        let mut args = None;
        let mut vars = None;
        let mut func = None;
        for field in rest.split_whitespace() {
            if let Some(v) = field.strip_prefix("ARG=") {
                args = Some(v.split(',').map(str::to_string).collect());
            } else if let Some(v) = field.strip_prefix("VAR=") {
                vars = Some(v.split(',').map(str::to_string).collect());
            } else if let Some(v) = field.strip_prefix("FUNC=") {
                func = Some(parse(v)?);
            }
        }
        let missing = |what: &str| Error::Malformed(format!("line {}: no {what}", n + 1));
        out.push(CustomLine {
            label: label.to_string(),
            args: args.ok_or_else(|| missing("ARG"))?,
            vars: vars.ok_or_else(|| missing("VAR"))?,
            func: func.ok_or_else(|| missing("FUNC"))?,
        });
    }
    Ok(out)
}

/// Largest absolute difference between the emitted functions and the
/// in-process CVs over `samples` random feature vectors.
pub fn round_trip_error(bundle: &ModelBundle, text: &str, samples: usize, seed: u64) -> Result<f64> {
    let lines = parse_custom_lines(text)?;
    let cvs = bundle.cvs()?;
    if lines.len() != cvs.len() {
        return Err(Error::Malformed(format!("{} CUSTOM lines for {} CVs", lines.len(), cvs.len())));
    }
    let width = bundle.features.width();
    let (center, spread) = match &bundle.features.scaler {
        Some(s) => (s.mean.clone(), s.std.iter().map(|v| 2.0 * v).collect()),
        None => (vec![0.0; width], vec![1.0; width]),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let raw: Vec<f64> = (0..width).map(|i| center[i] + spread[i] * rng.random_range(-1.0..1.0)).collect();
        let scaled = match &bundle.features.scaler {
            Some(s) => s.apply(Array1::from(raw.clone()).view())?,
            None => Array1::from(raw.clone()),
        };
        for (line, cv) in lines.iter().zip(&cvs) {
            let emitted = line.func.eval_indexed(&raw)?;
            let direct = cv.value_from_features(scaled.view())?;
            let err = (emitted - direct).abs();
            if !err.is_finite() {
                return Err(Error::input(format!("non-finite value for {}", line.label)));
            }
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
