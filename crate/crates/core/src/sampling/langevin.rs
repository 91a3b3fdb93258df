//! BAOAB Langevin integrator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::potential::ToyPotential;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LangevinParams {
    pub dt: f64,
    pub friction: f64,
    pub temperature: f64,
    pub mass: f64,
    pub seed: u64,
}

impl Default for LangevinParams {
    fn default() -> Self {
        Self { dt: 0.005, friction: 1.0, temperature: 1.0, mass: 1.0, seed: 0 }
    }
}

impl LangevinParams {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        // a zero temperature is allowed for deterministic checks
        if !positive(self.dt)
            || !positive(self.friction)
            || !positive(self.mass)
            || !(self.temperature.is_finite() && self.temperature >= 0.0)
        {
            return Err(Error::argument(format!("invalid Langevin parameters {self:?}")));
        }
        Ok(())
    }
}

/// Positions, velocities and the force acting at the current positions.
#[derive(Debug, Clone, PartialEq)]
pub struct LangevinState {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub force: Vec<f64>,
    pub energy: f64,
}

/// Integrator with its own seeded noise stream.
#[derive(Debug, Clone)]
pub struct Langevin {
    params: LangevinParams,
    decay: f64,
    kick: f64,
    rng: ChaCha8Rng,
}

impl Langevin {
    pub fn new(params: LangevinParams) -> Result<Self> {
        params.validate()?;
        let decay = (-params.friction * params.dt).exp();
        let kick = ((1.0 - decay * decay) * params.temperature / params.mass).sqrt();
        Ok(Self { params, decay, kick, rng: ChaCha8Rng::seed_from_u64(params.seed) })
    }

    pub fn params(&self) -> &LangevinParams {
        &self.params
    }

    /// One BAOAB step. `force` returns `(energy, force)` at a position and
    /// may fail; `wrap` maps positions back into the domain after each drift.
    pub fn step<F, W>(&mut self, state: &mut LangevinState, step: u64, mut force: F, wrap: W) -> Result<()>
    where
        F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
        W: Fn(&mut [f64]),
    {
        let half = 0.5 * self.params.dt;
        let inv_m = 1.0 / self.params.mass;
        for ((v, f), q) in state.v.iter_mut().zip(&state.force).zip(state.q.iter_mut()) {
            *v += half * f * inv_m;
            *q += half * *v;
        }
        for v in &mut state.v {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *v = self.decay * *v + self.kick * z;
        }
        for (q, v) in state.q.iter_mut().zip(&state.v) {
            *q += half * v;
        }
        wrap(&mut state.q);
        if let Some(x) = state.q.iter().find(|x| !x.is_finite() || x.abs() > 1e6) {
            return Err(Error::Diverged { step, reason: format!("coordinate reached {x}; last state q = {:?}", state.q) });
        }
        let (energy, f) = force(&state.q)?;
        if !energy.is_finite() || f.iter().any(|x| !x.is_finite()) {
            return Err(Error::Diverged { step, reason: format!("non-finite energy or force at q = {:?}", state.q) });
        }
        for (v, fi) in state.v.iter_mut().zip(&f) {
            *v += half * fi * inv_m;
        }
        state.force = f;
        state.energy = energy;
        Ok(())
    }
}

/// Force of a bare toy potential plus a constant external force.
pub fn potential_force(p: &ToyPotential, q: &[f64], extra: &[f64]) -> (f64, Vec<f64>) {
    let (e, g) = p.eval(q);
    let f = g
        .iter()
        .enumerate()
        .map(|(i, gi)| extra.get(i).copied().unwrap_or(0.0) - gi)
        .collect();
    (e, f)
}

/// Single step on a bare potential with an extra constant force, for callers
/// that manage their own state.
pub fn langevin_step(
    p: &ToyPotential,
    integrator: &mut Langevin,
    state: &mut LangevinState,
    extra_force: &[f64],
    step: u64,
) -> Result<()> {
    if extra_force.len() != p.dim() {
        return Err(Error::input(format!(
            "extra force has {} components for a {}-dimensional potential",
            extra_force.len(),
            p.dim()
        )));
    }
    integrator.step(state, step, |q| Ok(potential_force(p, q, extra_force)), |q| p.wrap(q))
}

/// Initial state at rest with the force evaluated.
pub fn state_at(p: &ToyPotential, q: Vec<f64>) -> Result<LangevinState> {
    if q.len() != p.dim() {
        return Err(Error::input(format!("{} coordinates for a {}-dimensional potential", q.len(), p.dim())));
    }
    if q.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("non-finite initial coordinates"));
    }
    let (energy, force) = potential_force(p, &q, &[]);
    let dim = q.len();
    Ok(LangevinState { q, v: vec![0.0; dim], force, energy })
}
