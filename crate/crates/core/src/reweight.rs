//! Free-energy surfaces from biased runs: per-frame weights, weighted
//! histograms and quadrature references.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::csv::{csv_err, fmt_real};
use crate::sampling::{BiasPotential, ToyPotential, Trajectory, WellTemperedParams};

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// `ln sum exp(x)` with max subtraction.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let shifted: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    max + pairwise_sum(&shifted).ln()
}

/// Normalized `exp(x_i)` weights.
fn softmax(log_w: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(log_w);
    log_w.iter().map(|x| (x - lse).exp()).collect()
}

/// Uniform grid of bins; `bins[d]` cells between `lo[d]` and `hi[d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub bins: Vec<usize>,
}

impl BinSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, bins: Vec<usize>) -> Result<Self> {
        let s = Self { lo, hi, bins };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.lo.len();
        if d == 0 || self.hi.len() != d || self.bins.len() != d {
            return Err(Error::argument("bin spec needs matching lo, hi and bins per dimension"));
        }
        for k in 0..d {
            if !(self.hi[k] > self.lo[k]) || self.bins[k] == 0 || !self.lo[k].is_finite() || !self.hi[k].is_finite() {
                return Err(Error::argument(format!("bad bin range in dimension {k}")));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    pub fn total(&self) -> usize {
        self.bins.iter().product()
    }

    pub fn width(&self, d: usize) -> f64 {
        (self.hi[d] - self.lo[d]) / self.bins[d] as f64
    }

    /// Flat index of the bin containing `x`; the upper edge belongs to the last bin.
    pub fn index(&self, x: &[f64]) -> Option<usize> {
        let mut flat = 0;
        for d in 0..self.dims() {
            if !(x[d] >= self.lo[d] && x[d] <= self.hi[d]) {
                return None;
            }
            let i = (((x[d] - self.lo[d]) / self.width(d)) as usize).min(self.bins[d] - 1);
            flat = flat * self.bins[d] + i;
        }
        Some(flat)
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dims()];
        let mut rest = flat;
        for d in (0..self.dims()).rev() {
            idx[d] = rest % self.bins[d];
            rest /= self.bins[d];
        }
        (0..self.dims())
            .map(|d| self.lo[d] + (idx[d] as f64 + 0.5) * self.width(d))
            .collect()
    }
}

/// Gridded free energy; `None` marks bins with no samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Fes {
    pub bins: BinSpec,
    pub values: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

impl Fes {
    pub fn defined(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i, v)))
    }

    /// `F(a) - F(b)` using the bins containing the two points.
    pub fn difference(&self, a: &[f64], b: &[f64]) -> Option<f64> {
        let fa = self.values[self.bins.index(a)?]?;
        let fb = self.values[self.bins.index(b)?]?;
        Some(fa - fb)
    }
}

/// Root-mean-square difference over bins where `reference < cutoff` and
/// both surfaces are defined; also returns the number of bins compared.
pub fn fes_rms(estimate: &Fes, reference: &Fes, cutoff: f64) -> Result<(f64, usize)> {
    if estimate.bins != reference.bins {
        return Err(Error::argument("surfaces use different bins"));
    }
    let diffs: Vec<f64> = estimate
        .values
        .iter()
        .zip(&reference.values)
        .filter_map(|(e, r)| match (e, r) {
            (Some(e), Some(r)) if *r < cutoff => Some((e - r) * (e - r)),
            _ => None,
        })
        .collect();
    if diffs.is_empty() {
        return Err(Error::input("no bins to compare"));
    }
    Ok(((pairwise_sum(&diffs) / diffs.len() as f64).sqrt(), diffs.len()))
}

/// Uniform grid on which the c(t) integrals are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReweightGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: Vec<usize>,
}

impl ReweightGrid {
    /// Visited CV range widened by three hill widths, with `points` nodes
    /// per dimension. Periodic CVs span one full period.
    pub fn around(traj: &Trajectory, wt: &WellTemperedParams, points: usize) -> Result<Self> {
        let d = wt.dims();
        if traj.is_empty() || traj.cvs[0].len() != d {
            return Err(Error::input("trajectory has no CV values matching the bias"));
        }
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for s in &traj.cvs {
            for k in 0..d {
                lo[k] = lo[k].min(s[k]);
                hi[k] = hi[k].max(s[k]);
            }
        }
        for k in 0..d {
            if let Some(p) = wt.period(k) {
                lo[k] = -p / 2.0;
                hi[k] = p / 2.0;
            } else {
                lo[k] -= 3.0 * wt.sigma[k];
                hi[k] += 3.0 * wt.sigma[k];
            }
        }
        Ok(Self { lo, hi, points: vec![points; d] })
    }

    fn nodes(&self, periods: &[Option<f64>]) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = (0..self.lo.len())
            .map(|k| {
                let n = self.points[k];
                if periods[k].is_some() {
                    let h = (self.hi[k] - self.lo[k]) / n as f64;
                    (0..n).map(|i| self.lo[k] + i as f64 * h).collect()
                } else {
                    let h = (self.hi[k] - self.lo[k]) / (n - 1) as f64;
                    (0..n).map(|i| self.lo[k] + i as f64 * h).collect()
                }
            })
            .collect();
        let mut out = vec![Vec::new()];
        for axis in &axes {
            out = out
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&x| {
                        let mut q = p.clone();
                        q.push(x);
                        q
                    })
                })
                .collect();
        }
        out
    }
}

/// Offsets `c(t)` after each number of deposited hills, from 0 to all.
pub fn tiwary_offsets(
    bias: &BiasPotential,
    wt: &WellTemperedParams,
    temperature: f64,
    grid: &ReweightGrid,
) -> Result<Vec<f64>> {
    let d = bias.dims();
    if grid.lo.len() != d || grid.hi.len() != d || grid.points.len() != d {
        return Err(Error::argument("reweighting grid dimensionality does not match the bias"));
    }
    if grid.points.iter().any(|&n| n < 2) {
        return Err(Error::argument("reweighting grid needs at least 2 points per dimension"));
    }
    let beta = 1.0 / temperature;
    let (num, den) = if wt.gamma.is_infinite() {
        (beta, 0.0)
    } else {
        (beta * wt.gamma / (wt.gamma - 1.0), beta / (wt.gamma - 1.0))
    };
    let nodes = grid.nodes(bias.periods());
    let mut v = vec![0.0; nodes.len()];
    let mut scratch = vec![0.0; d];
    let mut offsets = Vec::with_capacity(bias.len() + 1);
    let single = |v: &[f64]| -> f64 {
        let a: Vec<f64> = v.iter().map(|x| num * x).collect();
        let b: Vec<f64> = v.iter().map(|x| den * x).collect();
        (log_sum_exp(&a) - log_sum_exp(&b)) / beta
    };
    offsets.push(single(&v));
    for h in bias.hills() {
        for (vi, s) in v.iter_mut().zip(&nodes) {
            *vi += h.kernel(s, bias.periods(), &mut scratch);
        }
        offsets.push(single(&v));
    }
    Ok(offsets)
}

fn check_grid_coverage(traj: &Trajectory, grid: &ReweightGrid, periods: &[Option<f64>]) -> Result<()> {
    for (i, s) in traj.cvs.iter().enumerate() {
        for k in 0..s.len() {
            if periods[k].is_none() && !(s[k] >= grid.lo[k] && s[k] <= grid.hi[k]) {
                return Err(Error::GridCoverage(format!(
                    "frame {i}: CV {} = {} outside [{}, {}]",
                    k + 1,
                    s[k],
                    grid.lo[k],
                    grid.hi[k]
                )));
            }
        }
    }
    Ok(())
}

/// Time-independent weights `exp(beta (V(s_i, t_i) - c(t_i)))`, normalized.
/// A frame saved at step `t` feels every hill deposited before `t`.
pub fn tiwary_weights(
    traj: &Trajectory,
    bias: &BiasPotential,
    wt: &WellTemperedParams,
    temperature: f64,
    grid: &ReweightGrid,
) -> Result<Vec<f64>> {
    if traj.is_empty() {
        return Err(Error::input("empty trajectory"));
    }
    if traj.cvs.iter().any(|s| s.len() != bias.dims()) {
        return Err(Error::input("trajectory CVs do not match the bias dimensionality"));
    }
    check_grid_coverage(traj, grid, bias.periods())?;
    let offsets = tiwary_offsets(bias, wt, temperature, grid)?;
    let beta = 1.0 / temperature;
    let steps: Vec<u64> = bias.hills().iter().map(|h| h.step).collect();
    let log_w: Vec<f64> = traj
        .steps
        .iter()
        .zip(&traj.bias)
        .map(|(t, v)| {
            let epoch = steps.partition_point(|s| s < t);
            beta * (v - offsets[epoch])
        })
        .collect();
    if log_w.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("non-finite bias at a frame"));
    }
    Ok(softmax(&log_w))
}

/// Weights `exp(beta V_final(s_i))`, normalized.
pub fn lastbias_weights(traj: &Trajectory, bias: &BiasPotential, temperature: f64) -> Result<Vec<f64>> {
    if traj.is_empty() {
        return Err(Error::input("empty trajectory"));
    }
    let beta = 1.0 / temperature;
    let mut g = vec![0.0; bias.dims()];
    let log_w = traj
        .cvs
        .iter()
        .map(|s| {
            if s.len() != bias.dims() {
                return Err(Error::input("trajectory CVs do not match the bias dimensionality"));
            }
            Ok(beta * bias.eval_prefix(s, bias.len(), &mut g))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(softmax(&log_w))
}

/// `F = -T ln(weight per bin)`, shifted so the lowest defined bin is 0.
pub fn build_fes<P: AsRef<[f64]>>(points: &[P], weights: &[f64], bins: &BinSpec, temperature: f64) -> Result<Fes> {
    bins.validate()?;
    if points.len() != weights.len() {
        return Err(Error::input(format!("{} points but {} weights", points.len(), weights.len())));
    }
    let mut per_bin: Vec<Vec<f64>> = vec![Vec::new(); bins.total()];
    for (p, &w) in points.iter().zip(weights) {
        let p = p.as_ref();
        if p.len() != bins.dims() {
            return Err(Error::input("point dimensionality does not match the bins"));
        }
        if !(w >= 0.0) {
            return Err(Error::input("weights must be non-negative"));
        }
        let i = bins
            .index(p)
            .ok_or_else(|| Error::input(format!("point {p:?} lies outside the bins")))?;
        per_bin[i].push(w);
    }
    let counts: Vec<usize> = per_bin.iter().map(Vec::len).collect();
    let raw: Vec<Option<f64>> = per_bin
        .iter()
        .map(|ws| {
            let total = pairwise_sum(ws);
            (total > 0.0).then(|| -temperature * total.ln())
        })
        .collect();
    let min = raw.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::input("histogram is empty"));
    }
    Ok(Fes { bins: bins.clone(), values: raw.into_iter().map(|v| v.map(|v| v - min)).collect(), counts })
}

/// Quadrature weights for `n` points over `[lo, hi]`.
fn rule(lo: f64, hi: f64, n: usize, periodic: bool) -> Vec<(f64, f64)> {
    if periodic {
        let h = (hi - lo) / n as f64;
        (0..n).map(|i| (lo + i as f64 * h, h)).collect()
    } else {
        let h = (hi - lo) / (n - 1) as f64;
        (0..n)
            .map(|i| (lo + i as f64 * h, if i == 0 || i == n - 1 { 0.5 * h } else { h }))
            .collect()
    }
}

fn marginal(p: &ToyPotential, along: &[usize], bins: &BinSpec, temperature: f64, n: usize) -> Vec<f64> {
    let dim = p.dim();
    let domain = p.domain();
    let others: Vec<usize> = (0..dim).filter(|k| !along.contains(k)).collect();
    let rules: Vec<Vec<(f64, f64)>> = others
        .iter()
        .map(|&k| rule(domain[k].0, domain[k].1, n, p.is_periodic()))
        .collect();
    (0..bins.total())
        .map(|b| {
            let z = bins.center(b);
            let mut q = vec![0.0; dim];
            for (a, &k) in along.iter().enumerate() {
                q[k] = z[a];
            }
            if others.is_empty() {
                return p.energy(&q);
            }
            let mut terms = Vec::new();
            let mut idx = vec![0usize; others.len()];
            loop {
                let mut lw = 0.0;
                for (j, &k) in others.iter().enumerate() {
                    q[k] = rules[j][idx[j]].0;
                    lw += rules[j][idx[j]].1.ln();
                }
                terms.push(lw - p.energy(&q) / temperature);
                let mut j = others.len();
                loop {
                    if j == 0 {
                        return -temperature * log_sum_exp(&terms);
                    }
                    j -= 1;
                    idx[j] += 1;
                    if idx[j] < n {
                        break;
                    }
                    idx[j] = 0;
                }
            }
        })
        .collect()
}

/// Marginal free energy along the coordinates in `along`, evaluated at bin
/// centers by quadrature with `n` points per orthogonal coordinate. The
/// result is checked against `2n` points.
pub fn reference_fes(p: &ToyPotential, along: &[usize], bins: &BinSpec, temperature: f64, n: usize) -> Result<Fes> {
    bins.validate()?;
    if along.len() != bins.dims() || along.iter().any(|&k| k >= p.dim()) {
        return Err(Error::argument("coordinate subset does not match the potential or bins"));
    }
    if n < 2 {
        return Err(Error::argument("quadrature needs at least 2 points"));
    }
    let shift = |v: Vec<f64>| {
        let m = v.iter().copied().fold(f64::INFINITY, f64::min);
        v.into_iter().map(|x| x - m).collect::<Vec<_>>()
    };
    let coarse = shift(marginal(p, along, bins, temperature, n));
    if along.len() < p.dim() {
        let fine = shift(marginal(p, along, bins, temperature, 2 * n));
        let worst = coarse.iter().zip(&fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if worst > 1e-3 * temperature {
            return Err(Error::Resolution(format!(
                "{n} and {} quadrature points disagree by {worst:.3e}",
                2 * n
            )));
        }
    }
    let total = bins.total();
    Ok(Fes { bins: bins.clone(), values: coarse.into_iter().map(Some).collect(), counts: vec![0; total] })
}

/// Columns `z_1.., F, count`; undefined bins have an empty `F`.
pub fn write_fes<W: Write>(out: W, fes: &Fes) -> Result<()> {
    let mut w = ::csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=fes.bins.dims()).map(|i| format!("z_{i}")).collect();
    header.push("F".into());
    header.push("count".into());
    w.write_record(&header).map_err(csv_err)?;
    for (i, v) in fes.values.iter().enumerate() {
        let mut rec: Vec<String> = fes.bins.center(i).iter().map(|c| fmt_real(*c)).collect();
        rec.push(v.map(fmt_real).unwrap_or_default());
        rec.push(fes.counts[i].to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Bin center, free energy (if defined) and sample count.
pub type FesRow = (Vec<f64>, Option<f64>, usize);

/// Values and counts from a FES CSV, in file order.
pub fn read_fes_values<R: Read>(input: R) -> Result<Vec<FesRow>> {
    let mut r = ::csv::Reader::from_reader(input);
    let d = r.headers().map_err(csv_err)?.len().checked_sub(2).ok_or_else(|| Error::Malformed("short FES header".into()))?;
    let bad = |f: &str| Error::Malformed(format!("bad FES field `{f}`"));
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let z = (0..d).map(|k| rec[k].parse::<f64>().map_err(|_| bad(&rec[k]))).collect::<Result<Vec<_>>>()?;
        let f = if rec[d].is_empty() { None } else { Some(rec[d].parse::<f64>().map_err(|_| bad(&rec[d]))?) };
        let c = rec[d + 1].parse::<usize>().map_err(|_| bad(&rec[d + 1]))?;
        rows.push((z, f, c));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::Hill;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn traj_1d(s: &[f64], steps: &[u64], v: &[f64]) -> Trajectory {
        Trajectory {
            steps: steps.to_vec(),
            frames: s.iter().map(|x| vec![*x]).collect(),
            cvs: s.iter().map(|x| vec![*x]).collect(),
            bias: v.to_vec(),
        }
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    #[test]
    fn zero_bias_gives_uniform_weights() {
        let t = traj_1d(&[0.1, 0.5, -0.3, 0.0], &[0, 1, 2, 3], &[0.0; 4]);
        let b = BiasPotential::new(1).unwrap();
        let wt = WellTemperedParams::new(vec![0.1]);
        let grid = ReweightGrid::around(&t, &wt, 400).unwrap();
        for w in tiwary_weights(&t, &b, &wt, 1.0, &grid).unwrap() {
            assert!((w - 0.25).abs() < 1e-15);
        }
        for w in lastbias_weights(&t, &b, 1.0).unwrap() {
            assert!((w - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn last_bias_ratio_and_shift() {
        let mut b = BiasPotential::new(1).unwrap();
        b.push(Hill { step: 0, center: vec![0.0], sigma: vec![0.3], height: 2f64.ln() }).unwrap();
        let t = traj_1d(&[0.0, 100.0], &[1, 2], &[0.0, 0.0]);
        let w = lastbias_weights(&t, &b, 1.0).unwrap();
        assert!((w[0] / w[1] - 2.0).abs() < 1e-12);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // a hill far away adds a constant at the visited points
        let mut shifted = b.clone();
        shifted.push(Hill { step: 1, center: vec![50.0], sigma: vec![1e3], height: 3.0 }).unwrap();
        let w2 = lastbias_weights(&t, &shifted, 1.0).unwrap();
        assert!((w2[0] / w2[1] - w[0] / w[1]).abs() < 1e-6);
    }

    #[test]
    fn final_epoch_equal_bias_is_uniform() {
        let mut b = BiasPotential::new(1).unwrap();
        b.push(Hill { step: 10, center: vec![0.0], sigma: vec![0.3], height: 0.5 }).unwrap();
        b.push(Hill { step: 20, center: vec![0.0], sigma: vec![0.3], height: 0.4 }).unwrap();
        let t = traj_1d(&[0.2, -0.2], &[30, 40], &[0.7, 0.7]);
        let wt = WellTemperedParams::new(vec![0.3]);
        let grid = ReweightGrid::around(&t, &wt, 400).unwrap();
        let w = tiwary_weights(&t, &b, &wt, 1.0, &grid).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn offsets_grow_with_hills() {
        let mut b = BiasPotential::new(1).unwrap();
        let wt = WellTemperedParams::new(vec![0.2]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for i in 0..100 {
            let s = [rng.random_range(-1.0..1.0)];
            b.deposit(&s, &wt, 1.0, i).unwrap();
        }
        let grid = ReweightGrid { lo: vec![-2.0], hi: vec![2.0], points: vec![400] };
        let c = tiwary_offsets(&b, &wt, 1.0, &grid).unwrap();
        assert_eq!(c.len(), 101);
        assert_eq!(c[0], 0.0);
        assert!(c.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn coverage_error() {
        let t = traj_1d(&[0.0, 5.0], &[0, 1], &[0.0, 0.0]);
        let grid = ReweightGrid { lo: vec![-1.0], hi: vec![1.0], points: vec![10] };
        let r = tiwary_weights(&t, &BiasPotential::new(1).unwrap(), &WellTemperedParams::new(vec![0.1]), 1.0, &grid);
        assert!(matches!(r, Err(Error::GridCoverage(_))));
    }

    #[test]
    fn uniform_samples_give_flat_fes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let pts: Vec<[f64; 1]> = (0..n).map(|_| [rng.random_range(0.0..1.0)]).collect();
        let w = vec![1.0 / n as f64; n];
        let bins = BinSpec::new(vec![0.0], vec![1.0], vec![10]).unwrap();
        let f = build_fes(&pts, &w, &bins, 1.0).unwrap();
        assert!(f.values.iter().all(|v| v.unwrap() < 0.05));
    }

    #[test]
    fn boltzmann_harmonic_fes_is_parabola() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 1_000_000;
        let pts: Vec<[f64; 1]> = (0..n)
            .map(|_| [normal.sample(&mut rng)])
            .filter(|p: &[f64; 1]| p[0].abs() <= 6.0)
            .collect();
        let w = vec![1.0 / pts.len() as f64; pts.len()];
        let bins = BinSpec::new(vec![-6.0], vec![6.0], vec![60]).unwrap();
        let f = build_fes(&pts, &w, &bins, 1.0).unwrap();
        let zero = f.values[bins.index(&[0.1]).unwrap()].unwrap();
        for (i, v) in f.defined() {
            let z = bins.center(i)[0];
            if z.abs() <= 2.0 {
                assert!(((v - zero) - (0.5 * z * z - 0.005)).abs() <= 0.1, "z {z}: {}", v - zero);
            }
        }
    }

    #[test]
    fn single_bin_histogram() {
        let bins = BinSpec::new(vec![0.0], vec![1.0], vec![4]).unwrap();
        let f = build_fes(&[[0.1], [0.2]], &[0.5, 0.5], &bins, 1.0).unwrap();
        assert_eq!(f.values, vec![Some(0.0), None, None, None]);
        assert!(build_fes::<[f64; 1]>(&[], &[], &bins, 1.0).is_err());
    }

    #[test]
    fn reference_without_marginalization_is_the_potential() {
        let p = ToyPotential::Harmonic { k: 2.0, dim: 1 };
        let bins = BinSpec::new(vec![-2.0], vec![2.0], vec![8]).unwrap();
        let f = reference_fes(&p, &[0], &bins, 1.0, 10).unwrap();
        let min = (0..8).map(|i| p.energy(&bins.center(i))).fold(f64::INFINITY, f64::min);
        for (i, v) in f.defined() {
            assert!((v - (p.energy(&bins.center(i)) - min)).abs() < 1e-15);
        }
        let dw = ToyPotential::DoubleWell1d { a: 6.0 };
        let f = reference_fes(&dw, &[0], &bins, 1.0, 10).unwrap();
        let min = (0..8).map(|i| dw.energy(&bins.center(i))).fold(f64::INFINITY, f64::min);
        for (i, v) in f.defined() {
            assert!((v - (dw.energy(&bins.center(i)) - min)).abs() < 1e-12);
        }
    }

    #[test]
    fn torus_marginal_is_stable_under_doubling() {
        let p = ToyPotential::rama_default();
        let pi = std::f64::consts::PI;
        let bins = BinSpec::new(vec![-pi], vec![pi], vec![60]).unwrap();
        let coarse = reference_fes(&p, &[0], &bins, 1.0, 200).unwrap();
        let fine = reference_fes(&p, &[0], &bins, 1.0, 400).unwrap();
        let (beta, alpha) = ([-2.5], [1.0]);
        let gap = |f: &Fes| f.difference(&beta, &alpha).unwrap();
        assert!((gap(&coarse) - gap(&fine)).abs() < 1e-3);
        assert!(matches!(reference_fes(&p, &[0], &bins, 1.0, 3), Err(Error::Resolution(_))));
    }

    #[test]
    fn fes_csv_marks_empty_bins() {
        let bins = BinSpec::new(vec![0.0], vec![1.0], vec![2]).unwrap();
        let f = build_fes(&[[0.1]], &[1.0], &bins, 1.0).unwrap();
        let mut buf = Vec::new();
        write_fes(&mut buf, &f).unwrap();
        let rows = read_fes_values(buf.as_slice()).unwrap();
        assert_eq!(rows[0].1, Some(0.0));
        assert_eq!(rows[1].1, None);
        assert_eq!(rows[0].2, 1);
    }
}
