//! Collective variables built from trained classifiers, with gradients with
//! respect to raw coordinates.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::classifiers::{LinearModel, MlpModel, MulticlassLinearModel};
use crate::error::{Error, Result};
use crate::features::{FeatureSpec, Frame};

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn nonzero_norm(model: &LinearModel, what: &str) -> Result<f64> {
    let n = model.weight_norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::DegenerateModel(format!("{what} has a zero weight vector")));
    }
    Ok(n)
}

/// Signed distance `(w.x + b) / |w|` to the separating hyperplane.
pub fn svm_cv(model: &LinearModel, x: ArrayView1<f64>) -> Result<f64> {
    let norm = nonzero_norm(model, "SVM")?;
    Ok(model.decision_value(x)? / norm)
}

/// `P(class 1 | x) = sigmoid(w.x + b)`.
pub fn lr_cv(model: &LinearModel, x: ArrayView1<f64>) -> Result<f64> {
    Ok(sigmoid(model.decision_value(x)?))
}

/// Odds ratio `p / (1 - p)`, computed as `exp(w.x + b)`.
pub fn lr_odds_cv(model: &LinearModel, x: ArrayView1<f64>) -> Result<f64> {
    Ok(model.decision_value(x)?.exp())
}

pub fn dnn_cv(model: &MlpModel, x: ArrayView1<f64>, node: usize) -> Result<f64> {
    if node >= model.output_dim() {
        return Err(Error::argument(format!(
            "output node {node} out of range for {} outputs",
            model.output_dim()
        )));
    }
    Ok(model.forward(x)?[node])
}

/// Distance to every one-vs-rest hyperplane.
pub fn multiclass_cvs(model: &MulticlassLinearModel, x: ArrayView1<f64>) -> Result<Vec<f64>> {
    model.signed_distances(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CvKind {
    /// Normalized distance, or the bare decision value when `normalized` is false.
    SvmDistance { model: LinearModel, normalized: bool },
    LrProbability { model: LinearModel },
    LrOdds { model: LinearModel },
    DnnOutput { model: MlpModel, node: usize },
    MulticlassDistance { model: MulticlassLinearModel, state: usize },
    /// One raw coordinate, bypassing the feature pipeline.
    RawCoordinate { index: usize, periodic: bool },
}

/// Value and gradient with respect to raw coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CvValue {
    pub value: f64,
    pub gradient: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectiveVariable {
    pub kind: CvKind,
    pub spec: FeatureSpec,
}

impl CollectiveVariable {
    pub fn new(kind: CvKind, spec: FeatureSpec) -> Result<Self> {
        let model_dim = match &kind {
            CvKind::SvmDistance { model, normalized } => {
                if *normalized {
                    nonzero_norm(model, "SVM")?;
                }
                Some(model.w.len())
            }
            CvKind::LrProbability { model } | CvKind::LrOdds { model } => Some(model.w.len()),
            CvKind::DnnOutput { model, node } => {
                if *node >= model.output_dim() {
                    return Err(Error::argument(format!(
                        "output node {node} out of range for {} outputs",
                        model.output_dim()
                    )));
                }
                Some(model.input_dim())
            }
            CvKind::MulticlassDistance { model, state } => {
                if *state >= model.state_count() {
                    return Err(Error::argument(format!(
                        "state {state} out of range for {} states",
                        model.state_count()
                    )));
                }
                nonzero_norm(&model.submodels[*state], &format!("state {state}"))?;
                Some(model.dim())
            }
            CvKind::RawCoordinate { .. } => None,
        };
        if let Some(d) = model_dim {
            if d != spec.width() {
                return Err(Error::input(format!(
                    "model expects {d} features but the feature spec produces {}",
                    spec.width()
                )));
            }
        }
        Ok(Self { kind, spec })
    }

    pub fn raw_coordinate(index: usize, periodic: bool) -> Self {
        Self {
            kind: CvKind::RawCoordinate { index, periodic },
            spec: FeatureSpec::new(Vec::new()),
        }
    }

    pub fn svm(model: LinearModel, spec: FeatureSpec) -> Result<Self> {
        Self::new(CvKind::SvmDistance { model, normalized: true }, spec)
    }

    /// One variable per one-vs-rest state.
    pub fn multiclass_set(model: &MulticlassLinearModel, spec: &FeatureSpec) -> Result<Vec<Self>> {
        (0..model.state_count())
            .map(|state| Self::new(CvKind::MulticlassDistance { model: model.clone(), state }, spec.clone()))
            .collect()
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.kind, CvKind::RawCoordinate { periodic: true, .. })
    }

    pub fn name(&self) -> String {
        match &self.kind {
            CvKind::SvmDistance { normalized: true, .. } => "svm_cv".into(),
            CvKind::SvmDistance { normalized: false, .. } => "svm_decision".into(),
            CvKind::LrProbability { .. } => "lr_cv".into(),
            CvKind::LrOdds { .. } => "lr_odds_cv".into(),
            CvKind::DnnOutput { node, .. } => format!("dnn_cv_{node}"),
            CvKind::MulticlassDistance { state, .. } => format!("cv{}", state + 1),
            CvKind::RawCoordinate { index, .. } => format!("q{index}"),
        }
    }

    /// Value in feature space; `x` must already be featurized and scaled.
    pub fn value_from_features(&self, x: ArrayView1<f64>) -> Result<f64> {
        Ok(self.value_and_feature_grad(x)?.0)
    }

    /// Value and gradient with respect to the (scaled) features.
    fn value_and_feature_grad(&self, x: ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
        match &self.kind {
            CvKind::SvmDistance { model, normalized } => {
                let z = model.decision_value(x)?;
                if *normalized {
                    let n = nonzero_norm(model, "SVM")?;
                    Ok((z / n, &model.w / n))
                } else {
                    Ok((z, model.w.clone()))
                }
            }
            CvKind::LrProbability { model } => {
                let p = sigmoid(model.decision_value(x)?);
                Ok((p, &model.w * (p * (1.0 - p))))
            }
            CvKind::LrOdds { model } => {
                let e = model.decision_value(x)?.exp();
                Ok((e, &model.w * e))
            }
            CvKind::DnnOutput { model, node } => model.output_and_input_grad(x, *node),
            CvKind::MulticlassDistance { model, state } => {
                let m = &model.submodels[*state];
                let n = nonzero_norm(m, &format!("state {state}"))?;
                Ok((m.decision_value(x)? / n, &m.w / n))
            }
            CvKind::RawCoordinate { .. } => Err(Error::argument("raw coordinate CV has no feature space")),
        }
    }

    pub fn value(&self, frame: &Frame) -> Result<f64> {
        match self.kind {
            CvKind::RawCoordinate { index, .. } => raw_coord(frame, index),
            _ => self.value_from_features(self.spec.features(frame)?.view()),
        }
    }

    /// Chain rule through the feature Jacobian.
    pub fn evaluate(&self, frame: &Frame) -> Result<CvValue> {
        let out = if let CvKind::RawCoordinate { index, .. } = self.kind {
            let value = raw_coord(frame, index)?;
            let mut gradient = Array1::zeros(frame.coords.len());
            gradient[index] = 1.0;
            CvValue { value, gradient }
        } else {
            let (x, jac) = self.spec.features_and_jacobian(frame)?;
            let (value, dx) = self.value_and_feature_grad(x.view())?;
            CvValue { value, gradient: jac.t().dot(&dx) }
        };
        if !out.value.is_finite() || out.gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::input(format!("{} is not finite at this frame", self.name())));
        }
        Ok(out)
    }
}

fn raw_coord(frame: &Frame, index: usize) -> Result<f64> {
    frame
        .coords
        .get(index)
        .copied()
        .ok_or_else(|| Error::input(format!("coordinate {index} out of range for {} coordinates", frame.coords.len())))
}

pub fn cv_gradient(cv: &CollectiveVariable, frame: &Frame) -> Result<CvValue> {
    cv.evaluate(frame)
}
