//! Coordinate to feature transforms with analytic Jacobians.
//!
//! A [`FeatureSpec`] is an ordered list of [`Transform`]s plus an optional
//! [`StandardScaler`]. Angle systems (tori) use `SinCos` and `Raw`
//! transforms on radian coordinates; point-cloud systems store atoms as
//! consecutive Cartesian triples and use `ContactDistance` and
//! `PseudoDihedralCos`.

pub mod csv;
mod geometry;
mod scaler;

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

pub use geometry::{contact_distance, pseudo_dihedral_cos};
pub use scaler::StandardScaler;

use crate::error::{Error, Result};

/// One configuration of the simulated system.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub coords: Vec<f64>,
    pub time_index: u64,
}

impl Frame {
    pub fn new(coords: Vec<f64>) -> Self {
        Self { coords, time_index: 0 }
    }

    pub fn at(coords: Vec<f64>, time_index: u64) -> Self {
        Self { coords, time_index }
    }
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut y = x - two_pi * ((x + PI) / two_pi).floor();
    if y <= -PI {
        y += two_pi;
    }
    if y > PI {
        y -= two_pi;
    }
    y
}

/// A single coordinate transform contributing one or two features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Transform {
    /// `[sin q, cos q]` of an angle coordinate.
    SinCos { angle: usize },
    /// Distance between two atoms.
    ContactDistance { i: usize, j: usize },
    /// Cosine of the torsion over four atoms.
    PseudoDihedralCos { a: usize, b: usize, c: usize, d: usize },
    /// A coordinate passed through unchanged.
    Raw { index: usize },
}

impl Transform {
    pub fn width(&self) -> usize {
        match self {
            Transform::SinCos { .. } => 2,
            _ => 1,
        }
    }

    /// Highest coordinate index touched, used for range validation.
    fn max_coord(&self) -> usize {
        match *self {
            Transform::SinCos { angle } => angle,
            Transform::Raw { index } => index,
            Transform::ContactDistance { i, j } => 3 * i.max(j) + 2,
            Transform::PseudoDihedralCos { a, b, c, d } => 3 * a.max(b).max(c).max(d) + 2,
        }
    }

    /// Feature names in the order they are produced.
    pub fn labels(&self) -> Vec<String> {
        match *self {
            Transform::SinCos { angle } => vec![format!("sin_q{angle}"), format!("cos_q{angle}")],
            Transform::ContactDistance { i, j } => vec![format!("dist_{i}_{j}")],
            Transform::PseudoDihedralCos { a, b, c, d } => vec![format!("cosdih_{a}_{b}_{c}_{d}")],
            Transform::Raw { index } => vec![format!("q{index}")],
        }
    }
}

/// `[sin a1, cos a1, sin a2, cos a2, ...]`.
pub fn sincos_features(angles: &[f64]) -> Result<Array1<f64>> {
    if angles.iter().any(|a| !a.is_finite()) {
        return Err(Error::input("non-finite angle"));
    }
    Ok(angles.iter().flat_map(|a| [a.sin(), a.cos()]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub transforms: Vec<Transform>,
    #[serde(default)]
    pub scaler: Option<StandardScaler>,
}

impl FeatureSpec {
    pub fn new(transforms: Vec<Transform>) -> Self {
        Self { transforms, scaler: None }
    }

    /// Sin/cos of every angle coordinate `0..n`.
    pub fn sincos(n: usize) -> Self {
        Self::new((0..n).map(|angle| Transform::SinCos { angle }).collect())
    }

    /// Identity map over coordinates `0..n`.
    pub fn raw(n: usize) -> Self {
        Self::new((0..n).map(|index| Transform::Raw { index }).collect())
    }

    pub fn with_scaler(mut self, scaler: StandardScaler) -> Self {
        self.scaler = Some(scaler);
        self
    }

    /// Output dimensionality.
    pub fn width(&self) -> usize {
        self.transforms.iter().map(Transform::width).sum()
    }

    pub fn labels(&self) -> Vec<String> {
        self.transforms.iter().flat_map(Transform::labels).collect()
    }

    /// Check that every transform fits a system with `n_coords` coordinates
    /// and that the scaler, if any, matches the output width.
    pub fn validate(&self, n_coords: usize) -> Result<()> {
        for t in &self.transforms {
            if t.max_coord() >= n_coords {
                return Err(Error::input(format!(
                    "transform {t:?} out of range for {n_coords} coordinates"
                )));
            }
            match *t {
                Transform::ContactDistance { i, j } if i == j => return Err(Error::DegeneratePair(i)),
                Transform::PseudoDihedralCos { a, b, c, d } => {
                    let ids = [a, b, c, d];
                    if (0..4).any(|x| (x + 1..4).any(|y| ids[x] == ids[y])) {
                        return Err(Error::DegenerateGeometry(format!(
                            "repeated atom in torsion {ids:?}"
                        )));
                    }
                }
                _ => {}
            }
        }
        if let Some(s) = &self.scaler {
            if s.dim() != self.width() {
                return Err(Error::input(format!(
                    "scaler has {} features but the transforms produce {}",
                    s.dim(),
                    self.width()
                )));
            }
            if s.std.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::input("scaler std must be positive and finite"));
            }
        }
        Ok(())
    }

    /// Unscaled features.
    pub fn raw_features(&self, frame: &Frame) -> Result<Array1<f64>> {
        self.check_frame(frame)?;
        let mut out = Vec::with_capacity(self.width());
        for t in &self.transforms {
            match *t {
                Transform::SinCos { angle } => {
                    let a = frame.coords[angle];
                    out.push(a.sin());
                    out.push(a.cos());
                }
                Transform::ContactDistance { i, j } => out.push(contact_distance(frame, i, j)?),
                Transform::PseudoDihedralCos { a, b, c, d } => {
                    out.push(pseudo_dihedral_cos(frame, a, b, c, d)?)
                }
                Transform::Raw { index } => out.push(frame.coords[index]),
            }
        }
        Ok(Array1::from(out))
    }

    /// Scaled feature vector fed to classifiers.
    pub fn features(&self, frame: &Frame) -> Result<Array1<f64>> {
        let x = self.raw_features(frame)?;
        match &self.scaler {
            Some(s) => s.apply(x.view()),
            None => Ok(x),
        }
    }

    /// Features and their Jacobian `dX/dq` (rows = features, columns =
    /// coordinates), including the scaler.
    pub fn features_and_jacobian(&self, frame: &Frame) -> Result<(Array1<f64>, Array2<f64>)> {
        self.check_frame(frame)?;
        let n = frame.coords.len();
        let mut x = Vec::with_capacity(self.width());
        let mut jac = Array2::<f64>::zeros((self.width(), n));
        let mut row = 0;
        for t in &self.transforms {
            match *t {
                Transform::SinCos { angle } => {
                    let (s, c) = frame.coords[angle].sin_cos();
                    x.push(s);
                    x.push(c);
                    jac[[row, angle]] = c;
                    jac[[row + 1, angle]] = -s;
                }
                Transform::ContactDistance { i, j } => {
                    let (r, g) = geometry::contact_distance_grad(frame, i, j)?;
                    x.push(r);
                    for k in 0..3 {
                        jac[[row, 3 * i + k]] += g[k];
                        jac[[row, 3 * j + k]] -= g[k];
                    }
                }
                Transform::PseudoDihedralCos { a, b, c, d } => {
                    let (cos, grads) = geometry::pseudo_dihedral_cos_grad(frame, a, b, c, d)?;
                    x.push(cos);
                    for (atom, g) in [a, b, c, d].into_iter().zip(grads) {
                        for k in 0..3 {
                            jac[[row, 3 * atom + k]] += g[k];
                        }
                    }
                }
                Transform::Raw { index } => {
                    x.push(frame.coords[index]);
                    jac[[row, index]] = 1.0;
                }
            }
            row += t.width();
        }
        let mut x = Array1::from(x);
        if let Some(s) = &self.scaler {
            x = s.apply(x.view())?;
            for (mut r, sd) in jac.rows_mut().into_iter().zip(&s.std) {
                r /= *sd;
            }
        }
        Ok((x, jac))
    }

    fn check_frame(&self, frame: &Frame) -> Result<()> {
        if frame.coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite coordinate in frame"));
        }
        if let Some(t) = self.transforms.iter().find(|t| t.max_coord() >= frame.coords.len()) {
            return Err(Error::input(format!(
                "transform {t:?} out of range for a frame with {} coordinates",
                frame.coords.len()
            )));
        }
        Ok(())
    }

    /// Featurize many frames into a matrix (one row per frame).
    pub fn featurize(&self, frames: &[Frame]) -> Result<Array2<f64>> {
        let w = self.width();
        let mut out = Array2::zeros((frames.len(), w));
        for (mut row, f) in out.rows_mut().into_iter().zip(frames) {
            row.assign(&self.features(f)?);
        }
        Ok(out)
    }
}

/// Analytic Jacobian of the (scaled) features with respect to coordinates.
pub fn feature_jacobian(spec: &FeatureSpec, frame: &Frame) -> Result<Array2<f64>> {
    Ok(spec.features_and_jacobian(frame)?.1)
}
