//! Ready-made datasets and run settings on the toy landscapes, shared by the
//! command line, the examples and the test suites.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::classifiers::LabeledDataset;
use crate::cv::CollectiveVariable;
use crate::error::{Error, Result};
use crate::features::{FeatureSpec, Frame};
use crate::sampling::{run_unbiased, Basin, BasinSet, GridSpec, LangevinParams, ToyPotential};

/// Frames sampled without bias from each listed basin, labelled by position
/// in `basins`.
#[derive(Debug, Clone)]
pub struct BasinSamples {
    pub frames: Vec<Frame>,
    pub labels: Vec<usize>,
}

impl BasinSamples {
    pub fn dataset(&self, spec: &FeatureSpec) -> Result<LabeledDataset> {
        LabeledDataset::new(spec.featurize(&self.frames)?, self.labels.clone())
    }
}

/// `per_basin` frames from each basin, saved every `save_stride` steps of
/// an unbiased run started at the basin center. The starting frame is dropped.
pub fn sample_basins(
    p: &ToyPotential,
    basins: &[usize],
    per_basin: usize,
    save_stride: u64,
    seed: u64,
) -> Result<BasinSamples> {
    let centers = p.basin_centers();
    let mut frames = Vec::with_capacity(per_basin * basins.len());
    let mut labels = Vec::with_capacity(per_basin * basins.len());
    for (label, &b) in basins.iter().enumerate() {
        let start = centers
            .get(b)
            .ok_or_else(|| Error::argument(format!("potential has no basin {b}")))?
            .clone();
        let lp = LangevinParams::with_seed(seed.wrapping_mul(1000).wrapping_add(b as u64));
        let t = run_unbiased(p, lp, per_basin as u64 * save_stride, save_stride, start)?;
        for f in t.to_frames().into_iter().skip(1) {
            frames.push(f);
            labels.push(label);
        }
    }
    Ok(BasinSamples { frames, labels })
}

/// Two Gaussian classes with identity covariance in `dim` dimensions whose
/// means are `separation` apart along the first axis.
pub fn overlapping_clusters(per_class: usize, dim: usize, separation: f64, seed: u64) -> Result<LabeledDataset> {
    if dim == 0 || per_class == 0 {
        return Err(Error::argument("need at least one dimension and one sample per class"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let n = 2 * per_class;
    let mut x = Array2::zeros((n, dim));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        for d in 0..dim {
            x[[i, d]] = normal.sample(&mut rng);
        }
        x[[i, 0]] += if label == 1 { separation / 2.0 } else { -separation / 2.0 };
        y.push(label);
    }
    LabeledDataset::new(x, y)
}

/// Cores of radius `radius` around the listed basins, with minimum-image
/// distances on periodic systems.
pub fn basin_cores(p: &ToyPotential, basins: &[usize], radius: f64) -> Result<BasinSet> {
    let centers = p.basin_centers();
    let list = basins
        .iter()
        .map(|&b| {
            centers
                .get(b)
                .map(|c| Basin { center: c.clone(), core_radius: radius })
                .ok_or_else(|| Error::argument(format!("potential has no basin {b}")))
        })
        .collect::<Result<Vec<_>>>()?;
    BasinSet::new(list, p.is_periodic().then_some(2.0 * PI))
}

/// Hill width as a fraction of the pooled standard deviation of a CV over
/// training frames.
pub fn sigma_from_frames(cv: &CollectiveVariable, frames: &[Frame], fraction: f64) -> Result<f64> {
    let values = frames.iter().map(|f| cv.value(f)).collect::<Result<Vec<_>>>()?;
    if values.len() < 2 {
        return Err(Error::input("need at least two frames"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sigma = fraction * var.sqrt();
    if !(sigma > 0.0) {
        return Err(Error::input("CV is constant over the training frames"));
    }
    Ok(sigma)
}

/// Range of a CV over a regular sweep of the potential's domain box, with
/// `points` nodes per coordinate.
pub fn cv_range(p: &ToyPotential, cv: &CollectiveVariable, points: usize) -> Result<(f64, f64)> {
    let domain = p.domain();
    let total = points
        .checked_pow(domain.len() as u32)
        .filter(|&t| t <= 10_000_000)
        .ok_or_else(|| Error::argument("domain sweep too large"))?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut q = vec![0.0; domain.len()];
    for flat in 0..total {
        let mut rest = flat;
        for (k, &(a, b)) in domain.iter().enumerate() {
            q[k] = a + (b - a) * (rest % points) as f64 / (points - 1) as f64;
            rest /= points;
        }
        let v = cv.value(&Frame::new(q.clone()))?;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi))
}

/// Interpolation grid for a single CV: periodic CVs span one period,
/// others the swept range padded by five hill widths.
pub fn bias_grid_1d(p: &ToyPotential, cv: &CollectiveVariable, sigma: f64, points_per_sigma: f64) -> Result<GridSpec> {
    let (lo, hi) = if cv.is_periodic() {
        (-PI, PI)
    } else {
        let per_dim = match p.dim() {
            1 => 20_000,
            2 => 200,
            3 => 40,
            _ => 10,
        };
        let (lo, hi) = cv_range(p, cv, per_dim)?;
        (lo - 5.0 * sigma, hi + 5.0 * sigma)
    };
    Ok(GridSpec::with_resolution(vec![lo], vec![hi], &[sigma], points_per_sigma))
}
