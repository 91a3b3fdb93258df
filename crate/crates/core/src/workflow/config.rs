//! TOML workflow configuration with dotted `--set` overrides.

use serde::{Deserialize, Serialize};

use crate::classifiers::Penalty;
use crate::error::{Error, Result};
use crate::sampling::{ToyPotential, WalkerMode, DEFAULT_W0};

fn config_err(path: &str, msg: impl Into<String>) -> Error {
    Error::Config { path: path.to_string(), msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Sine and cosine of every angle.
    Sincos,
    /// Coordinates as they are.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Svm,
    Lr,
    Mlp,
    MulticlassSvm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvChoice {
    /// Follow the classifier: distance, probability, network output or per-state distances.
    Auto,
    Svm,
    SvmDecision,
    Lr,
    LrOdds,
    Dnn,
    Multiclass,
    /// One raw coordinate; needs no model.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Tiwary,
    Lastbias,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Basin indices of the system; class labels follow this order.
    pub basins: Vec<usize>,
    pub frames_per_basin: usize,
    pub save_stride: u64,
    /// CSV with columns `label, q_1, ...`; generated when absent.
    pub path: Option<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { basins: vec![0, 2], frames_per_basin: 1000, save_stride: 20, path: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    /// Standardize features with moments of the training data.
    pub scale: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { kind: FeatureKind::Sincos, scale: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub kind: ClassifierKind,
    pub penalty: Penalty,
    /// Inverse regularization strength of the final model.
    pub c: f64,
    /// Values of C scored by cross-validation.
    pub grid: Vec<f64>,
    pub folds: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            kind: ClassifierKind::Svm,
            penalty: Penalty::L1,
            c: 1.0,
            grid: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            folds: 3,
            max_iter: 5000,
            tol: 1e-4,
            hidden: vec![32, 32, 32, 32],
            learning_rate: 0.1,
            batch_size: 32,
            epochs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvConfig {
    pub kind: CvChoice,
    /// Network output node for `dnn`.
    pub node: usize,
    /// Coordinate for `raw`.
    pub index: usize,
    pub periodic: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { kind: CvChoice::Auto, node: 1, index: 0, periodic: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetadConfig {
    pub steps: u64,
    pub save_stride: u64,
    pub dt: f64,
    pub friction: f64,
    pub temperature: f64,
    pub mass: f64,
    pub height: f64,
    pub biasfactor: f64,
    pub pace: u64,
    /// Explicit hill widths; otherwise `sigma_fraction` times the CV spread
    /// over the training frames.
    pub sigma: Option<Vec<f64>>,
    pub sigma_fraction: f64,
    pub walkers: usize,
    pub read_stride: u64,
    pub parallel: bool,
    /// Bias interpolation grid density for a single CV; 0 sums hills exactly.
    pub grid_points_per_sigma: f64,
    /// Basin the walkers start in; defaults to the first training basin.
    pub start_basin: Option<usize>,
    /// Core radius used when counting transitions between training basins.
    pub core_radius: f64,
}

impl Default for MetadConfig {
    fn default() -> Self {
        Self {
            steps: 2_000_000,
            save_stride: 100,
            dt: 0.005,
            friction: 1.0,
            temperature: 1.0,
            mass: 1.0,
            height: DEFAULT_W0,
            biasfactor: 8.0,
            pace: 400,
            sigma: None,
            sigma_fraction: 0.2,
            walkers: 1,
            read_stride: 400,
            parallel: false,
            grid_points_per_sigma: 400.0,
            start_basin: None,
            core_radius: 0.5,
        }
    }
}

impl MetadConfig {
    pub fn mode(&self) -> WalkerMode {
        if self.parallel {
            WalkerMode::Parallel
        } else {
            WalkerMode::Sequential
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReweightConfig {
    pub estimator: Estimator,
    /// Coordinates histogrammed into the free-energy surface.
    pub along: Vec<usize>,
    pub bins: Vec<usize>,
    /// Grid nodes per CV dimension for the offset integrals.
    pub grid_points: usize,
    /// Free-energy ceiling, in units of T, for the comparison report.
    pub cutoff: f64,
    /// Quadrature nodes per bin and dimension for the reference surface.
    pub reference_points: usize,
}

impl Default for ReweightConfig {
    fn default() -> Self {
        Self {
            estimator: Estimator::Tiwary,
            along: vec![0, 1],
            bins: vec![30, 30],
            grid_points: 400,
            cutoff: 5.0,
            reference_points: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkflowConfig {
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub system: ToyPotential,
    pub data: DataConfig,
    pub features: FeatureConfig,
    pub classifier: ClassifierConfig,
    pub cv: CvConfig,
    pub metad: MetadConfig,
    pub reweight: ReweightConfig,
}

impl Default for WorkflowConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out: None,
            system: ToyPotential::rama_default(),
            data: DataConfig::default(),
            features: FeatureConfig::default(),
            classifier: ClassifierConfig::default(),
            cv: CvConfig::default(),
            metad: MetadConfig::default(),
            reweight: ReweightConfig::default(),
        }
    }
}

/// Parse `key.path=value`, reading the value as TOML and falling back to a
/// bare string.
fn parse_override(item: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| config_err(item, "override must look like key=value"))?;
    let key = key.trim();
    let path: Vec<String> = key.split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(config_err(key, "empty key segment"));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((path, value))
}

fn apply_override(root: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let mut table = root;
    for (i, seg) in path[..path.len() - 1].iter().enumerate() {
        let entry = table.entry(seg.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| config_err(&path[..=i].join("."), "is not a table"))?;
    }
    table.insert(path[path.len() - 1].clone(), value);
    Ok(())
}

impl WorkflowConfig {
    /// Parse TOML text, apply overrides, then validate.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| config_err("", e.message()))?;
        for o in overrides {
            let (path, value) = parse_override(o)?;
            apply_override(&mut table, &path, value)?;
        }
        // rama_torus_2d needs no parameters; fill the default landscape in
        if let Some(toml::Value::Table(sys)) = table.get_mut("system") {
            if sys.get("kind").and_then(toml::Value::as_str) == Some("rama_torus_2d") && !sys.contains_key("wells") {
                let d = toml::Value::try_from(ToyPotential::rama_default()).expect("default landscape serializes");
                for (k, v) in d.as_table().cloned().unwrap_or_default() {
                    sys.entry(k).or_insert(v);
                }
            }
        }
        let cfg: Self = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            config_err(if path == "." { "" } else { &path }, e.into_inner().message())
        })?;
        Ok(cfg)
    }

    /// Every semantic rule, with the path of the first failing field.
    pub fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            return Err(config_err("seed", "a seed is required (set it in the file or pass --seed)"));
        }
        self.system.validate().map_err(|e| config_err("system", e.to_string()))?;
        let n_basins = self.system.basin_centers().len();
        let d = &self.data;
        if d.basins.len() < 2 {
            return Err(config_err("data.basins", "need at least two basins"));
        }
        if let Some(b) = d.basins.iter().find(|&&b| b >= n_basins) {
            return Err(config_err("data.basins", format!("system has no basin {b}")));
        }
        let mut sorted = d.basins.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != d.basins.len() {
            return Err(config_err("data.basins", "basins repeat"));
        }
        if d.frames_per_basin < 2 {
            return Err(config_err("data.frames_per_basin", "need at least 2"));
        }
        if d.save_stride == 0 {
            return Err(config_err("data.save_stride", "must be at least 1"));
        }
        let c = &self.classifier;
        if !(c.c > 0.0 && c.c.is_finite()) {
            return Err(config_err("classifier.c", "must be positive"));
        }
        if let Some(i) = c.grid.iter().position(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(config_err(&format!("classifier.grid[{i}]"), "must be positive"));
        }
        if !(3..=10).contains(&c.folds) {
            return Err(config_err("classifier.folds", "must be between 3 and 10"));
        }
        if c.folds > d.frames_per_basin {
            return Err(config_err("classifier.folds", "exceeds the frames per basin"));
        }
        if c.max_iter == 0 {
            return Err(config_err("classifier.max_iter", "must be at least 1"));
        }
        if !(c.tol > 0.0) {
            return Err(config_err("classifier.tol", "must be positive"));
        }
        if c.hidden.contains(&0) {
            return Err(config_err("classifier.hidden", "layer widths must be positive"));
        }
        if !(c.learning_rate > 0.0 && c.learning_rate.is_finite()) {
            return Err(config_err("classifier.learning_rate", "must be positive"));
        }
        if c.batch_size == 0 {
            return Err(config_err("classifier.batch_size", "must be at least 1"));
        }
        let binary = d.basins.len() == 2;
        match c.kind {
            ClassifierKind::Svm | ClassifierKind::Lr if !binary => {
                return Err(config_err("classifier.kind", "binary classifiers need exactly two basins"));
            }
            ClassifierKind::MulticlassSvm if binary => {
                return Err(config_err("classifier.kind", "multiclass_svm needs at least three basins"));
            }
            _ => {}
        }
        let cv_ok = match self.cv.kind {
            CvChoice::Auto | CvChoice::Raw => true,
            CvChoice::Svm | CvChoice::SvmDecision => c.kind == ClassifierKind::Svm,
            CvChoice::Lr | CvChoice::LrOdds => c.kind == ClassifierKind::Lr,
            CvChoice::Dnn => c.kind == ClassifierKind::Mlp,
            CvChoice::Multiclass => c.kind == ClassifierKind::MulticlassSvm,
        };
        if !cv_ok {
            return Err(config_err("cv.kind", format!("{:?} does not match classifier {:?}", self.cv.kind, c.kind)));
        }
        if self.cv.kind == CvChoice::Raw && self.cv.index >= self.system.dim() {
            return Err(config_err("cv.index", format!("system has {} coordinates", self.system.dim())));
        }
        if matches!(self.cv.kind, CvChoice::Auto | CvChoice::Dnn) && c.kind == ClassifierKind::Mlp && self.cv.node >= d.basins.len() {
            return Err(config_err("cv.node", format!("network has {} outputs", d.basins.len())));
        }
        let m = &self.metad;
        for (field, v) in [("metad.dt", m.dt), ("metad.mass", m.mass), ("metad.height", m.height)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_err(field, "must be positive"));
            }
        }
        if !(m.friction >= 0.0 && m.friction.is_finite()) {
            return Err(config_err("metad.friction", "must be non-negative"));
        }
        if !(m.temperature > 0.0 && m.temperature.is_finite()) {
            return Err(config_err("metad.temperature", "must be positive"));
        }
        if !(m.biasfactor > 1.0) {
            return Err(config_err("metad.biasfactor", "must exceed 1"));
        }
        for (field, v) in [("metad.save_stride", m.save_stride), ("metad.pace", m.pace), ("metad.read_stride", m.read_stride)] {
            if v == 0 {
                return Err(config_err(field, "must be at least 1"));
            }
        }
        if m.walkers == 0 {
            return Err(config_err("metad.walkers", "must be at least 1"));
        }
        if let Some(s) = &m.sigma {
            if let Some(i) = s.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(config_err(&format!("metad.sigma[{i}]"), "must be positive"));
            }
        }
        if !(m.sigma_fraction > 0.0 && m.sigma_fraction.is_finite()) {
            return Err(config_err("metad.sigma_fraction", "must be positive"));
        }
        if !(m.grid_points_per_sigma >= 0.0 && m.grid_points_per_sigma.is_finite()) {
            return Err(config_err("metad.grid_points_per_sigma", "must be non-negative"));
        }
        if let Some(b) = m.start_basin.filter(|&b| b >= n_basins) {
            return Err(config_err("metad.start_basin", format!("system has no basin {b}")));
        }
        if !(m.core_radius > 0.0) {
            return Err(config_err("metad.core_radius", "must be positive"));
        }
        let r = &self.reweight;
        if r.along.is_empty() || r.along.len() != r.bins.len() {
            return Err(config_err("reweight.bins", "need one bin count per entry of reweight.along"));
        }
        if let Some(a) = r.along.iter().find(|&&a| a >= self.system.dim()) {
            return Err(config_err("reweight.along", format!("system has no coordinate {a}")));
        }
        if r.bins.contains(&0) {
            return Err(config_err("reweight.bins", "must be positive"));
        }
        if r.grid_points < 2 {
            return Err(config_err("reweight.grid_points", "need at least 2"));
        }
        if !(r.cutoff > 0.0) {
            return Err(config_err("reweight.cutoff", "must be positive"));
        }
        if r.reference_points == 0 {
            return Err(config_err("reweight.reference_points", "must be positive"));
        }
        if r.estimator == Estimator::Tiwary && m.walkers > 1 {
            return Err(config_err("reweight.estimator", "tiwary weights need a single walker; use lastbias"));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or_default()
    }

    /// Canonical JSON used for hashing.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_need_only_a_seed() {
        let cfg = WorkflowConfig::from_toml("seed = 3\n", &[]).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.system, ToyPotential::rama_default());
        assert_eq!(cfg.data.basins, vec![0, 2]);
    }

    #[test]
    fn missing_seed_is_named() {
        let cfg = WorkflowConfig::from_toml("", &[]).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config { path, .. }) if path == "seed"));
    }

    #[test]
    fn overrides_apply_with_types() {
        let cfg = WorkflowConfig::from_toml(
            "seed = 1\n[metad]\nsteps = 10\n",
            &["metad.steps=20".into(), "classifier.kind=lr".into(), "reweight.bins=[10, 12]".into()],
        )
        .unwrap();
        assert_eq!(cfg.metad.steps, 20);
        assert_eq!(cfg.classifier.kind, ClassifierKind::Lr);
        assert_eq!(cfg.reweight.bins, vec![10, 12]);
    }

    #[test]
    fn unknown_field_reports_path() {
        let err = WorkflowConfig::from_toml("seed = 1\n[metad]\nstepz = 10\n", &[]).unwrap_err();
        assert!(matches!(&err, Error::Config { path, .. } if path == "metad.stepz"), "{err}");
        let err = WorkflowConfig::from_toml("seed = 1\n[metad]\nsteps = \"many\"\n", &[]).unwrap_err();
        assert!(matches!(&err, Error::Config { path, .. } if path == "metad.steps"), "{err}");
    }

    #[test]
    fn semantic_errors_report_paths() {
        let check = |set: &str, want: &str| {
            let cfg = WorkflowConfig::from_toml("seed = 1\n", &[set.to_string()]).unwrap();
            match cfg.validate() {
                Err(Error::Config { path, .. }) => assert_eq!(path, want, "{set}"),
                other => panic!("{set}: {other:?}"),
            }
        };
        check("classifier.grid=[1.0, -2.0]", "classifier.grid[1]");
        check("classifier.folds=2", "classifier.folds");
        check("data.basins=[0, 7]", "data.basins");
        check("metad.biasfactor=1.0", "metad.biasfactor");
        check("cv.kind=dnn", "cv.kind");
        check("reweight.bins=[10]", "reweight.bins");
        check("metad.walkers=4", "reweight.estimator");
    }

    #[test]
    fn other_systems_parse() {
        let cfg = WorkflowConfig::from_toml("seed = 1\n[system]\nkind = \"double_well_1d\"\na = 5.0\n", &[]).unwrap();
        assert_eq!(cfg.system, ToyPotential::DoubleWell1d { a: 5.0 });
        let cfg = WorkflowConfig::from_toml("seed = 1\n[system]\nkind = \"harmonic\"\nk = 2.0\n", &[]).unwrap();
        assert_eq!(cfg.system, ToyPotential::Harmonic { k: 2.0, dim: 1 });
    }

    #[test]
    fn bad_override_syntax() {
        assert!(matches!(WorkflowConfig::from_toml("", &["nokey".into()]), Err(Error::Config { .. })));
        assert!(matches!(WorkflowConfig::from_toml("seed = 1", &["seed.x=1".into()]), Err(Error::Config { .. })));
    }
}
