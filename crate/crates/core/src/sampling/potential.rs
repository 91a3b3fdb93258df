//! Analytic toy landscapes in units of the reference thermal energy.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::wrap_angle;

/// Inverted periodic Gaussian `-depth * exp((cos dphi - 1)/wphi^2 + (cos dpsi - 1)/wpsi^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusWell {
    pub center: [f64; 2],
    pub depth: f64,
    pub width: [f64; 2],
}

/// Barrier along the first angle only: `height * exp((cos(phi - at) - 1)/width^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusRidge {
    pub at: f64,
    pub height: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamaTorus {
    pub wells: Vec<TorusWell>,
    #[serde(default)]
    pub ridges: Vec<TorusRidge>,
}

impl Default for RamaTorus {
    /// Basins labelled beta, alpha_R and alpha_L (in that order) with two
    /// ridges in the first angle that separate alpha_L from the others.
    fn default() -> Self {
        let well = |c: [f64; 2], depth| TorusWell { center: c, depth, width: [0.6, 0.6] };
        Self {
            wells: vec![
                well([-2.5, 2.6], 7.0),
                well([-1.4, -1.0], 6.0),
                well([1.0, 1.2], 4.0),
            ],
            ridges: vec![
                TorusRidge { at: 0.0, height: 7.0, width: 0.4 },
                TorusRidge { at: 2.4, height: 7.0, width: 0.4 },
            ],
        }
    }
}

pub const BETA_BASIN: usize = 0;
pub const ALPHA_R_BASIN: usize = 1;
pub const ALPHA_L_BASIN: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToyPotential {
    /// `a (x^2 - 1)^2`.
    #[serde(rename = "double_well_1d")]
    DoubleWell1d { a: f64 },
    #[serde(rename = "rama_torus_2d")]
    RamaTorus2d(RamaTorus),
    /// `k/2 |x|^2` in `dim` dimensions.
    Harmonic { k: f64, #[serde(default = "one")] dim: usize },
}

fn one() -> usize {
    1
}

impl ToyPotential {
    pub fn rama_default() -> Self {
        Self::RamaTorus2d(RamaTorus::default())
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::DoubleWell1d { .. } => 1,
            Self::RamaTorus2d(_) => 2,
            Self::Harmonic { dim, .. } => *dim,
        }
    }

    /// Coordinates live on a torus of period `2 pi`.
    pub fn is_periodic(&self) -> bool {
        matches!(self, Self::RamaTorus2d(_))
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::DoubleWell1d { a } => a.is_finite() && *a > 0.0,
            Self::Harmonic { k, dim } => k.is_finite() && *k > 0.0 && *dim > 0,
            Self::RamaTorus2d(t) => {
                !t.wells.is_empty()
                    && t.wells.iter().all(|w| w.width.iter().all(|&s| s > 0.0) && w.depth.is_finite())
                    && t.ridges.iter().all(|r| r.width > 0.0 && r.height.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::argument(format!("invalid potential parameters: {self:?}")))
        }
    }

    /// Map a point back into the fundamental domain.
    pub fn wrap(&self, q: &mut [f64]) {
        if self.is_periodic() {
            for x in q {
                *x = wrap_angle(*x);
            }
        }
    }

    pub fn energy(&self, q: &[f64]) -> f64 {
        match self {
            Self::DoubleWell1d { a } => a * (q[0] * q[0] - 1.0).powi(2),
            Self::Harmonic { k, .. } => 0.5 * k * q.iter().map(|x| x * x).sum::<f64>(),
            Self::RamaTorus2d(t) => torus(t, q, None),
        }
    }

    /// Energy and gradient; `grad` must have length `dim()`.
    pub fn energy_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        match self {
            Self::DoubleWell1d { a } => {
                let u = q[0] * q[0] - 1.0;
                grad[0] = 4.0 * a * q[0] * u;
                a * u * u
            }
            Self::Harmonic { k, .. } => {
                for (g, x) in grad.iter_mut().zip(q) {
                    *g = k * x;
                }
                0.5 * k * q.iter().map(|x| x * x).sum::<f64>()
            }
            Self::RamaTorus2d(t) => torus(t, q, Some(grad)),
        }
    }

    /// Energy with the gradient returned as a vector.
    pub fn eval(&self, q: &[f64]) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; self.dim()];
        let e = self.energy_grad(q, &mut g);
        (e, g)
    }

    /// Basin centers, when the landscape has named minima.
    pub fn basin_centers(&self) -> Vec<Vec<f64>> {
        match self {
            Self::DoubleWell1d { .. } => vec![vec![-1.0], vec![1.0]],
            Self::Harmonic { dim, .. } => vec![vec![0.0; *dim]],
            Self::RamaTorus2d(t) => t.wells.iter().map(|w| w.center.to_vec()).collect(),
        }
    }

    /// Natural domain per coordinate for quadrature.
    pub fn domain(&self) -> Vec<(f64, f64)> {
        match self {
            Self::RamaTorus2d(_) => vec![(-PI, PI); 2],
            Self::DoubleWell1d { a } => {
                // U = 30 T at the edge is far beyond anything sampled
                let edge = (1.0 + (30.0 / a).sqrt()).sqrt();
                vec![(-edge, edge)]
            }
            Self::Harmonic { k, dim } => vec![(-8.0 / k.sqrt(), 8.0 / k.sqrt()); *dim],
        }
    }
}

fn torus(t: &RamaTorus, q: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let (phi, psi) = (q[0], q[1]);
    let mut e = 0.0;
    let (mut g0, mut g1) = (0.0, 0.0);
    for w in &t.wells {
        let (dp, ds) = (phi - w.center[0], psi - w.center[1]);
        let (ip, is) = (1.0 / (w.width[0] * w.width[0]), 1.0 / (w.width[1] * w.width[1]));
        let v = -w.depth * ((dp.cos() - 1.0) * ip + (ds.cos() - 1.0) * is).exp();
        e += v;
        g0 -= v * dp.sin() * ip;
        g1 -= v * ds.sin() * is;
    }
    for r in &t.ridges {
        let d = phi - r.at;
        let iw = 1.0 / (r.width * r.width);
        let v = r.height * ((d.cos() - 1.0) * iw).exp();
        e += v;
        g0 -= v * d.sin() * iw;
    }
    if let Some(g) = grad {
        g[0] = g0;
        g[1] = g1;
    }
    e
}
