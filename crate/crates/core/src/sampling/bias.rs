//! Well-tempered Gaussian hill bias in CV space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellTemperedParams {
    pub w0: f64,
    pub sigma: Vec<f64>,
    /// Bias factor; infinity gives plain metadynamics.
    pub gamma: f64,
    pub deposit_stride: u64,
    /// Period of each CV, if any.
    #[serde(default)]
    pub periods: Vec<Option<f64>>,
}

impl WellTemperedParams {
    /// Defaults in reduced units: 1 kJ/mol at 340 K, bias factor 8, a hill every 400 steps.
    /// Periods are left empty, meaning "take them from the CVs".
    pub fn new(sigma: Vec<f64>) -> Self {
        Self { w0: DEFAULT_W0, sigma, gamma: 8.0, deposit_stride: 400, periods: Vec::new() }
    }

    pub fn with_periods(mut self, periods: Vec<Option<f64>>) -> Self {
        self.periods = periods;
        self
    }

    pub fn dims(&self) -> usize {
        self.sigma.len()
    }

    pub fn period(&self, d: usize) -> Option<f64> {
        self.periods.get(d).copied().flatten()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w0 > 0.0 && self.w0.is_finite()) {
            return Err(Error::argument(format!("hill height w0 = {} must be positive", self.w0)));
        }
        if self.sigma.is_empty() || self.sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::argument(format!("hill widths {:?} must be positive", self.sigma)));
        }
        if !(self.gamma > 1.0) {
            return Err(Error::argument(format!("bias factor {} must exceed 1", self.gamma)));
        }
        if self.deposit_stride == 0 {
            return Err(Error::argument("deposit stride must be at least 1"));
        }
        if !self.periods.is_empty() && self.periods.len() != self.sigma.len() {
            return Err(Error::argument("one period entry per CV is required"));
        }
        if self.periods.iter().flatten().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::argument("periods must be positive"));
        }
        Ok(())
    }
}

/// 1 kJ/mol expressed in units of kT at 340 K.
pub const DEFAULT_W0: f64 = 1000.0 / (8.314_462_618 * 340.0);

/// `w0 * exp(-V / ((gamma - 1) T))`.
pub fn wt_hill_height(v_here: f64, params: &WellTemperedParams, temperature: f64) -> f64 {
    if params.gamma.is_infinite() {
        return params.w0;
    }
    params.w0 * (-v_here / ((params.gamma - 1.0) * temperature)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hill {
    pub step: u64,
    pub center: Vec<f64>,
    pub sigma: Vec<f64>,
    pub height: f64,
}

fn min_image(d: f64, period: Option<f64>) -> f64 {
    match period {
        Some(p) => d - p * (d / p).round(),
        None => d,
    }
}

impl Hill {
    /// Kernel value at `s`; `grad` is overwritten with its gradient.
    pub fn kernel(&self, s: &[f64], periods: &[Option<f64>], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        self.add_to(s, periods, grad)
    }

    /// Kernel value; `grad` accumulates `dV/ds`.
    fn add_to(&self, s: &[f64], periods: &[Option<f64>], grad: &mut [f64]) -> f64 {
        let mut arg = 0.0;
        for d in 0..s.len() {
            let delta = min_image(s[d] - self.center[d], periods[d]);
            arg += delta * delta / (self.sigma[d] * self.sigma[d]);
        }
        let v = self.height * (-0.5 * arg).exp();
        for d in 0..s.len() {
            let delta = min_image(s[d] - self.center[d], periods[d]);
            grad[d] -= v * delta / (self.sigma[d] * self.sigma[d]);
        }
        v
    }
}

/// Uniform grid over CV space. Periodic dimensions use `bins` nodes over one
/// period starting at `lo`; others use `bins + 1` nodes from `lo` to `hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub bins: Vec<usize>,
}

impl GridSpec {
    /// `points_per_sigma` nodes per hill width across `[lo, hi]`.
    pub fn with_resolution(lo: Vec<f64>, hi: Vec<f64>, sigma: &[f64], points_per_sigma: f64) -> Self {
        let bins = lo
            .iter()
            .zip(&hi)
            .zip(sigma)
            .map(|((l, h), s)| (((h - l) / s) * points_per_sigma).ceil().max(1.0) as usize)
            .collect();
        Self { lo, hi, bins }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct GridCache {
    spec: GridSpec,
    periods: Vec<Option<f64>>,
    nodes: Vec<usize>,
    step: Vec<f64>,
    values: Vec<f64>,
    grads: Vec<f64>,
}

impl GridCache {
    fn new(spec: GridSpec, periods: &[Option<f64>]) -> Result<Self> {
        let dims = periods.len();
        if spec.lo.len() != dims || spec.hi.len() != dims || spec.bins.len() != dims {
            return Err(Error::argument("grid dimensionality does not match the CVs"));
        }
        let mut nodes = Vec::with_capacity(dims);
        let mut step = Vec::with_capacity(dims);
        for d in 0..dims {
            if spec.bins[d] == 0 {
                return Err(Error::argument("grid needs at least one bin per dimension"));
            }
            match periods[d] {
                Some(p) => {
                    nodes.push(spec.bins[d]);
                    step.push(p / spec.bins[d] as f64);
                }
                None => {
                    if !(spec.hi[d] > spec.lo[d]) {
                        return Err(Error::argument(format!("grid dimension {d} has hi <= lo")));
                    }
                    nodes.push(spec.bins[d] + 1);
                    step.push((spec.hi[d] - spec.lo[d]) / spec.bins[d] as f64);
                }
            }
        }
        let total: usize = nodes.iter().product();
        if total > 50_000_000 {
            return Err(Error::argument(format!("grid with {total} nodes is too large")));
        }
        Ok(Self {
            spec,
            periods: periods.to_vec(),
            nodes,
            step,
            values: vec![0.0; total],
            grads: vec![0.0; total * dims],
        })
    }

    fn coordinate(&self, d: usize, i: usize) -> f64 {
        self.spec.lo[d] + i as f64 * self.step[d]
    }

    fn add_hill(&mut self, hill: &Hill) {
        let dims = self.nodes.len();
        // the kernel factorizes over dimensions
        let factors: Vec<Vec<(f64, f64)>> = (0..dims)
            .map(|d| {
                (0..self.nodes[d])
                    .map(|i| {
                        let delta = min_image(self.coordinate(d, i) - hill.center[d], self.periods[d]);
                        let s2 = hill.sigma[d] * hill.sigma[d];
                        ((-0.5 * delta * delta / s2).exp(), -delta / s2)
                    })
                    .collect()
            })
            .collect();
        let mut idx = vec![0usize; dims];
        for flat in 0..self.values.len() {
            let mut v = hill.height;
            for d in 0..dims {
                v *= factors[d][idx[d]].0;
            }
            self.values[flat] += v;
            for d in 0..dims {
                self.grads[flat * dims + d] += v * factors[d][idx[d]].1;
            }
            for d in (0..dims).rev() {
                idx[d] += 1;
                if idx[d] < self.nodes[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
    }

    /// Multilinear interpolation, or `None` outside a non-periodic range.
    fn eval(&self, s: &[f64], grad: &mut [f64]) -> Option<f64> {
        let dims = self.nodes.len();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for d in 0..dims {
            let mut t = (s[d] - self.spec.lo[d]) / self.step[d];
            if self.periods[d].is_some() {
                t = t.rem_euclid(self.nodes[d] as f64);
            } else if !(0.0..=(self.nodes[d] - 1) as f64).contains(&t) {
                return None;
            }
            let i = (t.floor() as usize).min(self.nodes[d] - 1);
            base[d] = i;
            frac[d] = t - i as f64;
        }
        let mut v = 0.0;
        grad.iter_mut().for_each(|g| *g = 0.0);
        for corner in 0..(1usize << dims) {
            let mut weight = 1.0;
            let mut flat = 0;
            for d in 0..dims {
                let up = (corner >> d) & 1 == 1;
                let mut i = base[d] + usize::from(up);
                if i >= self.nodes[d] {
                    i = if self.periods[d].is_some() { 0 } else { self.nodes[d] - 1 };
                }
                weight *= if up { frac[d] } else { 1.0 - frac[d] };
                flat = flat * self.nodes[d] + i;
            }
            if weight == 0.0 {
                continue;
            }
            v += weight * self.values[flat];
            for d in 0..dims {
                grad[d] += weight * self.grads[flat * dims + d];
            }
        }
        Some(v)
    }
}

/// Append-only hill list with optional grid cache.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasPotential {
    periods: Vec<Option<f64>>,
    hills: Vec<Hill>,
    cache: Option<GridCache>,
}

impl BiasPotential {
    pub fn new(dims: usize) -> Result<Self> {
        Self::with_periods(vec![None; dims])
    }

    pub fn with_periods(periods: Vec<Option<f64>>) -> Result<Self> {
        if periods.is_empty() || periods.len() > 3 {
            return Err(Error::argument(format!(
                "bias supports 1 to 3 CV dimensions, got {}",
                periods.len()
            )));
        }
        Ok(Self { periods, hills: Vec::new(), cache: None })
    }

    pub fn for_params(params: &WellTemperedParams) -> Result<Self> {
        params.validate()?;
        let periods = if params.periods.is_empty() { vec![None; params.dims()] } else { params.periods.clone() };
        Self::with_periods(periods)
    }

    /// Evaluate through a grid inside `spec`; points outside fall back to
    /// exact summation.
    pub fn with_grid(mut self, spec: GridSpec) -> Result<Self> {
        let mut cache = GridCache::new(spec, &self.periods)?;
        for h in &self.hills {
            cache.add_hill(h);
        }
        self.cache = Some(cache);
        Ok(self)
    }

    pub fn grid(&self) -> Option<&GridSpec> {
        self.cache.as_ref().map(|c| &c.spec)
    }

    pub fn without_grid(&self) -> Self {
        Self { periods: self.periods.clone(), hills: self.hills.clone(), cache: None }
    }

    pub fn dims(&self) -> usize {
        self.periods.len()
    }

    pub fn periods(&self) -> &[Option<f64>] {
        &self.periods
    }

    pub fn hills(&self) -> &[Hill] {
        &self.hills
    }

    pub fn len(&self) -> usize {
        self.hills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hills.is_empty()
    }

    fn check(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.dims() {
            return Err(Error::input(format!("CV point has {} components, bias has {}", s.len(), self.dims())));
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::input("non-finite CV point"));
        }
        Ok(())
    }

    pub fn push(&mut self, hill: Hill) -> Result<()> {
        self.check(&hill.center)?;
        if hill.sigma.len() != self.dims() || hill.sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::input("hill widths must be positive, one per dimension"));
        }
        if !(hill.height > 0.0 && hill.height.is_finite()) {
            return Err(Error::input(format!("hill height {} must be positive", hill.height)));
        }
        if let Some(c) = &mut self.cache {
            c.add_hill(&hill);
        }
        self.hills.push(hill);
        Ok(())
    }

    /// Exact sum over the first `count` hills.
    pub fn eval_prefix(&self, s: &[f64], count: usize, grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        self.hills[..count].iter().map(|h| h.add_to(s, &self.periods, grad)).sum()
    }

    /// `V(s)` written into the return value and `dV/ds` into `grad`.
    pub fn eval_into(&self, s: &[f64], grad: &mut [f64]) -> f64 {
        if let Some(v) = self.cache.as_ref().and_then(|c| c.eval(s, grad)) {
            return v;
        }
        self.eval_prefix(s, self.hills.len(), grad)
    }

    pub fn eval(&self, s: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check(s)?;
        let mut g = vec![0.0; self.dims()];
        let v = self.eval_into(s, &mut g);
        Ok((v, g))
    }

    /// Deposit a well-tempered hill at `s`; returns its height.
    pub fn deposit(&mut self, s: &[f64], params: &WellTemperedParams, temperature: f64, step: u64) -> Result<f64> {
        self.check(s)?;
        if params.sigma.len() != self.dims() {
            return Err(Error::input("hill widths do not match the bias dimensionality"));
        }
        let (v, _) = self.eval(s)?;
        let height = wt_hill_height(v.max(0.0), params, temperature);
        self.push(Hill { step, center: s.to_vec(), sigma: params.sigma.clone(), height })?;
        Ok(height)
    }
}

pub fn bias_eval(bias: &BiasPotential, s: &[f64]) -> Result<(f64, Vec<f64>)> {
    bias.eval(s)
}

pub fn deposit_hill(
    bias: &mut BiasPotential,
    s: &[f64],
    params: &WellTemperedParams,
    temperature: f64,
    step: u64,
) -> Result<f64> {
    bias.deposit(s, params, temperature, step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn params(sigma: Vec<f64>) -> WellTemperedParams {
        WellTemperedParams { w0: 1.2, ..WellTemperedParams::new(sigma) }
    }

    #[test]
    fn height_formula() {
        let p = params(vec![0.1]);
        assert_eq!(wt_hill_height(0.0, &p, 1.0), 1.2);
        let e = wt_hill_height(7.0, &p, 1.0);
        assert!((e - 1.2 / std::f64::consts::E).abs() < 1e-15);
        let plain = WellTemperedParams { gamma: f64::INFINITY, ..p };
        assert_eq!(wt_hill_height(1e3, &plain, 1.0), 1.2);
    }

    #[test]
    fn first_hill_is_w0_then_decreasing() {
        let p = params(vec![0.1]);
        let mut b = BiasPotential::for_params(&p).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let h = b.deposit(&[0.3], &p, 1.0, i).unwrap();
            if i == 0 {
                assert_eq!(h, 1.2);
            }
            assert!(h < prev && h > 0.0);
            prev = h;
        }
    }

    #[test]
    fn far_hills_are_independent() {
        let p = params(vec![0.1]);
        let mut b = BiasPotential::for_params(&p).unwrap();
        b.deposit(&[0.0], &p, 1.0, 0).unwrap();
        let h = b.deposit(&[1.0], &p, 1.0, 1).unwrap();
        assert!((h - 1.2).abs() < 1e-15);
    }

    #[test]
    fn empty_and_center_values() {
        let mut b = BiasPotential::new(2).unwrap();
        assert_eq!(b.eval(&[0.5, 0.5]).unwrap(), (0.0, vec![0.0, 0.0]));
        b.push(Hill { step: 0, center: vec![0.5, 0.5], sigma: vec![0.2, 0.3], height: 0.7 }).unwrap();
        assert_eq!(b.eval(&[0.5, 0.5]).unwrap(), (0.7, vec![0.0, 0.0]));
        assert!(b.eval(&[0.5]).is_err());
        assert!(BiasPotential::new(4).is_err());
    }

    fn random_bias(rng: &mut ChaCha8Rng, periods: Vec<Option<f64>>) -> BiasPotential {
        let dims = periods.len();
        let mut b = BiasPotential::with_periods(periods).unwrap();
        for i in 0..40 {
            b.push(Hill {
                step: i,
                center: (0..dims).map(|_| rng.random_range(-3.0..3.0)).collect(),
                sigma: (0..dims).map(|_| rng.random_range(0.2..0.6)).collect(),
                height: rng.random_range(0.1..1.0),
            })
            .unwrap();
        }
        b
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for periods in [vec![None], vec![None, Some(2.0 * PI)], vec![None, None, None]] {
            let b = random_bias(&mut rng, periods);
            for _ in 0..100 {
                let s: Vec<f64> = (0..b.dims()).map(|_| rng.random_range(-3.0..3.0)).collect();
                let (_, g) = b.eval(&s).unwrap();
                for d in 0..b.dims() {
                    let h = 1e-6;
                    let mut a = s.clone();
                    a[d] += h;
                    let mut m = s.clone();
                    m[d] -= h;
                    let fd = (b.eval(&a).unwrap().0 - b.eval(&m).unwrap().0) / (2.0 * h);
                    assert!((fd - g[d]).abs() <= 1e-6 * g[d].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn periodic_images_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = random_bias(&mut rng, vec![Some(2.0 * PI)]);
        for _ in 0..100 {
            let s = rng.random_range(-PI..PI);
            let v = b.eval(&[s]).unwrap().0;
            assert!((b.eval(&[s + 2.0 * PI]).unwrap().0 - v).abs() < 1e-12);
        }
    }

    #[test]
    fn fine_grid_agrees_with_exact_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for periods in [vec![None], vec![Some(2.0 * PI)]] {
            let exact = random_bias(&mut rng, periods.clone());
            let lo = if periods[0].is_some() { -PI } else { -4.0 };
            let spec = GridSpec::with_resolution(vec![lo], vec![4.0], &[0.2], 400.0);
            let cached = exact.clone().with_grid(spec).unwrap();
            for _ in 0..500 {
                let s = [rng.random_range(-3.5..3.5)];
                let (ve, ge) = exact.eval(&s).unwrap();
                let (vc, gc) = cached.eval(&s).unwrap();
                assert!((ve - vc).abs() <= 1e-6, "value {ve} vs {vc}");
                assert!((ge[0] - gc[0]).abs() <= 1e-4 * ge[0].abs().max(1.0));
            }
            if periods[0].is_none() {
                // beyond the grid the exact sum is used
                assert_eq!(cached.eval(&[5.0]).unwrap(), exact.eval(&[5.0]).unwrap());
            }
        }
    }

    #[test]
    fn coarse_2d_grid_is_exact_at_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let exact = random_bias(&mut rng, vec![None, None]);
        let spec = GridSpec { lo: vec![-4.0, -4.0], hi: vec![4.0, 4.0], bins: vec![80, 80] };
        let cached = exact.clone().with_grid(spec).unwrap();
        for (i, j) in [(0, 0), (13, 57), (80, 80), (40, 1)] {
            let s = [-4.0 + i as f64 * 0.1, -4.0 + j as f64 * 0.1];
            let (ve, _) = exact.eval(&s).unwrap();
            let (vc, _) = cached.eval(&s).unwrap();
            assert!((ve - vc).abs() < 1e-12);
        }
    }
}
