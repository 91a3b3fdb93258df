//! Portable JSON model bundles.

use std::io;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::classifiers::{Layer, LinearModel, LossKind, MlpModel, MulticlassLinearModel, Penalty};
use crate::cv::{CollectiveVariable, CvKind};
use crate::error::{Error, Result};
use crate::features::FeatureSpec;
use crate::sampling::WellTemperedParams;

pub const SCHEMA_VERSION: u32 = 1;

/// Tolerance between the stored `norm` and the norm recomputed from `w`.
const NORM_TOL: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearParams {
    pub w: Vec<f64>,
    pub b: f64,
    /// Euclidean norm of `w`, stored so consumers need not recompute it.
    pub norm: f64,
    pub penalty: Penalty,
    pub c: f64,
    pub loss: LossKind,
}

impl LinearParams {
    pub fn from_model(m: &LinearModel) -> Self {
        Self { w: m.w.to_vec(), b: m.b, norm: m.weight_norm(), penalty: m.penalty, c: m.c, loss: m.loss }
    }

    pub fn to_model(&self) -> LinearModel {
        LinearModel { w: Array1::from(self.w.clone()), b: self.b, penalty: self.penalty, c: self.c, loss: self.loss }
    }
}

/// One affine layer; `weight[o][i]` maps input `i` to output `o`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerParams {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BundleModel {
    Linear { params: LinearParams },
    Multiclass { states: Vec<LinearParams> },
    Mlp { layers: Vec<LayerParams> },
}

/// Which CV is computed from the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CvOptions {
    SvmDistance { normalized: bool },
    LrProbability,
    LrOdds,
    DnnOutput { node: usize },
    /// One CV per state.
    MulticlassDistance,
}

/// Hill settings echoed into the exported METAD template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetadTemplate {
    pub sigma: Vec<f64>,
    pub height: f64,
    pub biasfactor: f64,
    pub pace: u64,
    pub temperature: f64,
}

impl MetadTemplate {
    pub fn from_params(wt: &WellTemperedParams, temperature: f64) -> Self {
        Self {
            sigma: wt.sigma.clone(),
            height: wt.w0,
            biasfactor: wt.gamma,
            pace: wt.deposit_stride,
            temperature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBundle {
    pub schema_version: u32,
    pub features: FeatureSpec,
    pub model: BundleModel,
    pub cv: CvOptions,
    #[serde(default)]
    pub metad: Option<MetadTemplate>,
}

fn invariant(field: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::InvariantViolation { field: field.into(), msg: msg.into() }
}

impl ModelBundle {
    /// Bundle for a single CV. Multiclass CVs export every state.
    pub fn from_cv(cv: &CollectiveVariable) -> Result<Self> {
        let (model, options) = match &cv.kind {
            CvKind::SvmDistance { model, normalized } => (
                BundleModel::Linear { params: LinearParams::from_model(model) },
                CvOptions::SvmDistance { normalized: *normalized },
            ),
            CvKind::LrProbability { model } => {
                (BundleModel::Linear { params: LinearParams::from_model(model) }, CvOptions::LrProbability)
            }
            CvKind::LrOdds { model } => {
                (BundleModel::Linear { params: LinearParams::from_model(model) }, CvOptions::LrOdds)
            }
            CvKind::DnnOutput { model, node } => (mlp_params(model), CvOptions::DnnOutput { node: *node }),
            CvKind::MulticlassDistance { model, .. } => (
                BundleModel::Multiclass { states: model.submodels.iter().map(LinearParams::from_model).collect() },
                CvOptions::MulticlassDistance,
            ),
            CvKind::RawCoordinate { .. } => {
                return Err(Error::UnsupportedExport("raw coordinate CVs carry no model".into()))
            }
        };
        let b = Self { schema_version: SCHEMA_VERSION, features: cv.spec.clone(), model, cv: options, metad: None };
        b.validate()?;
        Ok(b)
    }

    pub fn multiclass(model: &MulticlassLinearModel, spec: &FeatureSpec) -> Result<Self> {
        let cvs = CollectiveVariable::multiclass_set(model, spec)?;
        Self::from_cv(&cvs[0])
    }

    pub fn with_metad(mut self, template: MetadTemplate) -> Self {
        self.metad = Some(template);
        self
    }

    /// The CVs this bundle defines, one per state for multiclass models.
    pub fn cvs(&self) -> Result<Vec<CollectiveVariable>> {
        let spec = self.features.clone();
        match (&self.model, self.cv) {
            (BundleModel::Linear { params }, CvOptions::SvmDistance { normalized }) => {
                Ok(vec![CollectiveVariable::new(CvKind::SvmDistance { model: params.to_model(), normalized }, spec)?])
            }
            (BundleModel::Linear { params }, CvOptions::LrProbability) => {
                Ok(vec![CollectiveVariable::new(CvKind::LrProbability { model: params.to_model() }, spec)?])
            }
            (BundleModel::Linear { params }, CvOptions::LrOdds) => {
                Ok(vec![CollectiveVariable::new(CvKind::LrOdds { model: params.to_model() }, spec)?])
            }
            (BundleModel::Mlp { .. }, CvOptions::DnnOutput { node }) => {
                Ok(vec![CollectiveVariable::new(CvKind::DnnOutput { model: self.mlp()?, node }, spec)?])
            }
            (BundleModel::Multiclass { states }, CvOptions::MulticlassDistance) => {
                let m = MulticlassLinearModel::new(states.iter().map(LinearParams::to_model).collect())?;
                CollectiveVariable::multiclass_set(&m, &spec)
            }
            (model, cv) => Err(invariant(
                "cv.kind",
                format!("{cv:?} cannot be computed from a {} model", model_kind(model)),
            )),
        }
    }

    pub(crate) fn mlp(&self) -> Result<MlpModel> {
        let BundleModel::Mlp { layers } = &self.model else {
            return Err(invariant("model.kind", "not a network"));
        };
        let layers = layers
            .iter()
            .enumerate()
            .map(|(k, l)| {
                let outputs = l.weight.len();
                let inputs = l.weight.first().map_or(0, Vec::len);
                if l.weight.iter().any(|r| r.len() != inputs) {
                    return Err(invariant(format!("model.layers[{k}].weight"), "ragged rows"));
                }
                let flat: Vec<f64> = l.weight.iter().flatten().copied().collect();
                let weight = Array2::from_shape_vec((outputs, inputs), flat).expect("shape checked");
                Ok(Layer { weight, bias: Array1::from(l.bias.clone()) })
            })
            .collect::<Result<Vec<_>>>()?;
        MlpModel::new(layers).map_err(|e| invariant("model.layers", e.to_string()))
    }

    /// Check every stored invariant, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaMismatch(format!(
                "schema_version {} is not {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        let width = self.features.width();
        if let Some(s) = &self.features.scaler {
            if s.mean.len() != width || s.std.len() != width {
                return Err(invariant("features.scaler", format!("expected {width} entries")));
            }
            check_finite("features.scaler.mean", &s.mean)?;
            check_finite("features.scaler.std", &s.std)?;
            if s.std.iter().any(|&v| v <= 0.0) {
                return Err(invariant("features.scaler.std", "must be positive"));
            }
        }
        match &self.model {
            BundleModel::Linear { params } => check_linear("model.params", params, width)?,
            BundleModel::Multiclass { states } => {
                if states.len() < 2 {
                    return Err(invariant("model.states", "need at least two states"));
                }
                for (i, p) in states.iter().enumerate() {
                    check_linear(&format!("model.states[{i}]"), p, width)?;
                }
            }
            BundleModel::Mlp { layers } => {
                if layers.is_empty() {
                    return Err(invariant("model.layers", "network has no layers"));
                }
                for (k, l) in layers.iter().enumerate() {
                    for row in &l.weight {
                        check_finite(&format!("model.layers[{k}].weight"), row)?;
                    }
                    check_finite(&format!("model.layers[{k}].bias"), &l.bias)?;
                }
                let first = layers[0].weight.first().map_or(0, Vec::len);
                if first != width {
                    return Err(invariant("model.layers[0].weight", format!("expects {first} inputs, features give {width}")));
                }
            }
        }
        if let Some(m) = &self.metad {
            check_finite("metad.sigma", &m.sigma)?;
            if m.sigma.iter().any(|&s| s <= 0.0) {
                return Err(invariant("metad.sigma", "must be positive"));
            }
            if !(m.height > 0.0 && m.height.is_finite()) {
                return Err(invariant("metad.height", "must be positive"));
            }
            if !(m.biasfactor > 1.0) {
                return Err(invariant("metad.biasfactor", "must exceed 1"));
            }
            if m.pace == 0 {
                return Err(invariant("metad.pace", "must be at least 1"));
            }
            if !(m.temperature > 0.0 && m.temperature.is_finite()) {
                return Err(invariant("metad.temperature", "must be positive"));
            }
        }
        self.cvs().map_err(|e| match e {
            e @ Error::InvariantViolation { .. } => e,
            e => invariant("cv", e.to_string()),
        })?;
        Ok(())
    }

    /// Canonical text: fixed field order, reals with 17 significant digits.
    pub fn to_json(&self) -> Result<String> {
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, Canonical::default());
        self.serialize(&mut ser).map_err(|e| Error::Malformed(e.to_string()))?;
        buf.push(b'\n');
        Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Malformed(format!("model JSON: {e}")))?;
        match value.get("schema_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => return Err(Error::SchemaMismatch(format!("schema_version {v} is not {SCHEMA_VERSION}"))),
            None => return Err(Error::SchemaMismatch("missing schema_version".into())),
        }
        let bundle: Self = serde_json::from_value(value).map_err(|e| Error::Malformed(format!("model JSON: {e}")))?;
        bundle.validate()?;
        Ok(bundle)
    }
}

fn model_kind(m: &BundleModel) -> &'static str {
    match m {
        BundleModel::Linear { .. } => "linear",
        BundleModel::Multiclass { .. } => "multiclass",
        BundleModel::Mlp { .. } => "mlp",
    }
}

fn mlp_params(model: &MlpModel) -> BundleModel {
    BundleModel::Mlp {
        layers: model
            .layers
            .iter()
            .map(|l| LayerParams {
                weight: l.weight.rows().into_iter().map(|r| r.to_vec()).collect(),
                bias: l.bias.to_vec(),
            })
            .collect(),
    }
}

fn check_finite(field: &str, xs: &[f64]) -> Result<()> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(invariant(format!("{field}[{i}]"), "not finite")),
        None => Ok(()),
    }
}

fn check_linear(field: &str, p: &LinearParams, width: usize) -> Result<()> {
    if p.w.len() != width {
        return Err(invariant(format!("{field}.w"), format!("{} coefficients for {width} features", p.w.len())));
    }
    check_finite(&format!("{field}.w"), &p.w)?;
    check_finite(&format!("{field}.b"), &[p.b])?;
    let norm = p.to_model().weight_norm();
    if !((p.norm - norm).abs() <= NORM_TOL * norm.max(1.0)) {
        return Err(invariant(format!("{field}.norm"), format!("stored {} but w has norm {norm}", p.norm)));
    }
    Ok(())
}

/// Pretty JSON with every float written as `{:.16e}`.
#[derive(Default)]
struct Canonical<'a>(PrettyFormatter<'a>);

impl Formatter for Canonical<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Write via a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::argument(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}

pub fn save_model(bundle: &ModelBundle, path: &Path) -> Result<()> {
    bundle.validate()?;
    write_atomic(path, bundle.to_json()?.as_bytes())
}

pub fn load_model(path: &Path) -> Result<ModelBundle> {
    ModelBundle::from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{train_linear_svm, LabeledDataset, SolverOptions};
    use ndarray::array;

    fn trained() -> CollectiveVariable {
        let x = array![[0.1, 0.9, -0.3, 0.2], [0.7, -0.2, 0.4, 0.1], [-0.5, 0.3, 0.8, -0.6], [0.9, 0.9, -0.7, 0.3]];
        let data = LabeledDataset::new(x, vec![0, 1, 0, 1]).unwrap();
        let fit = train_linear_svm(&data, Penalty::L2, 1.0, SolverOptions::default()).unwrap();
        CollectiveVariable::svm(fit.model, FeatureSpec::sincos(2)).unwrap()
    }

    #[test]
    fn linear_round_trip_is_bit_exact() {
        let cv = trained();
        let b = ModelBundle::from_cv(&cv).unwrap();
        let text = b.to_json().unwrap();
        let back = ModelBundle::from_json(&text).unwrap();
        let CvKind::SvmDistance { model, .. } = &back.cvs().unwrap()[0].kind else { panic!() };
        let CvKind::SvmDistance { model: orig, .. } = &cv.kind else { panic!() };
        for (a, c) in model.w.iter().zip(&orig.w) {
            assert_eq!(a.to_bits(), c.to_bits());
        }
        assert_eq!(model.b.to_bits(), orig.b.to_bits());
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn reals_use_seventeen_digits() {
        let text = ModelBundle::from_cv(&trained()).unwrap().to_json().unwrap();
        assert!(text.contains("\"c\": 1.0000000000000000e0"), "{text}");
    }

    #[test]
    fn truncated_file_is_malformed() {
        let text = ModelBundle::from_cv(&trained()).unwrap().to_json().unwrap();
        assert!(matches!(ModelBundle::from_json(&text[..text.len() / 2]), Err(Error::Malformed(_))));
    }

    #[test]
    fn inconsistent_norm_is_rejected() {
        let mut b = ModelBundle::from_cv(&trained()).unwrap();
        let BundleModel::Linear { params } = &mut b.model else { panic!() };
        params.norm *= 1.0 + 1e-12;
        let text = b.to_json().unwrap();
        match ModelBundle::from_json(&text) {
            Err(Error::InvariantViolation { field, .. }) => assert_eq!(field, "model.params.norm"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_version_checked() {
        let text = ModelBundle::from_cv(&trained()).unwrap().to_json().unwrap();
        let bumped = text.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(matches!(ModelBundle::from_json(&bumped), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn mismatched_cv_kind_names_field() {
        let mut b = ModelBundle::from_cv(&trained()).unwrap();
        b.cv = CvOptions::DnnOutput { node: 0 };
        assert!(matches!(b.validate(), Err(Error::InvariantViolation { field, .. }) if field == "cv.kind"));
    }

    #[test]
    fn raw_coordinate_not_exportable() {
        let cv = CollectiveVariable::raw_coordinate(0, true);
        assert!(matches!(ModelBundle::from_cv(&cv), Err(Error::UnsupportedExport(_))));
    }

    #[test]
    fn save_load_save_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.json");
        let p2 = dir.path().join("b.json");
        let b = ModelBundle::from_cv(&trained()).unwrap();
        save_model(&b, &p1).unwrap();
        save_model(&load_model(&p1).unwrap(), &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
    }
}
