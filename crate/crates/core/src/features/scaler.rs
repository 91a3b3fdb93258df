use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature standardization `(x - mean) / std` with population moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardScaler {
    /// Fit column means and population standard deviations.
    ///
    /// Constant columns are rejected: they would divide by zero and carry no
    /// class information.
    pub fn fit(data: ArrayView2<f64>) -> Result<Self> {
        let (rows, cols) = data.dim();
        if rows < 2 {
            return Err(Error::input(format!("scaler needs at least 2 rows, got {rows}")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite value in scaler fitting data"));
        }
        let n = rows as f64;
        let mut mean = Vec::with_capacity(cols);
        let mut std = Vec::with_capacity(cols);
        for (column, col) in data.axis_iter(Axis(1)).enumerate() {
            let m = col.sum() / n;
            // two-pass variance; the correction term removes the rounding bias of `m`
            let (ss, s) = col.iter().fold((0.0, 0.0), |(ss, s), &x| {
                let d = x - m;
                (ss + d * d, s + d)
            });
            let var = (ss - s * s / n) / n;
            let sd = var.max(0.0).sqrt();
            if !(sd > 0.0) || sd <= 1e-12 * m.abs() {
                return Err(Error::DegenerateFeature { column });
            }
            mean.push(m + s / n);
            std.push(sd);
        }
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_dim(x.len())?;
        Ok(Array1::from_iter(
            x.iter()
                .zip(self.mean.iter().zip(&self.std))
                .map(|(&v, (&m, &s))| (v - m) / s),
        ))
    }

    /// Inverse transform `x * std + mean`.
    pub fn invert(&self, z: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_dim(z.len())?;
        Ok(Array1::from_iter(
            z.iter()
                .zip(self.mean.iter().zip(&self.std))
                .map(|(&v, (&m, &s))| v * s + m),
        ))
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::input(format!(
                "scaler expects {} features, got {len}",
                self.dim()
            )));
        }
        Ok(())
    }
}
