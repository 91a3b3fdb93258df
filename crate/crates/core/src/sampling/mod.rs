//! Langevin dynamics on toy landscapes with well-tempered metadynamics
//! along learned or raw collective variables.

mod bias;
pub mod io;
mod langevin;
mod potential;
mod transitions;
mod walkers;

pub use bias::{bias_eval, deposit_hill, wt_hill_height, BiasPotential, GridSpec, Hill, WellTemperedParams, DEFAULT_W0};
pub use langevin::{langevin_step, potential_force, state_at, Langevin, LangevinParams, LangevinState};
pub use potential::{RamaTorus, ToyPotential, TorusRidge, TorusWell, ALPHA_L_BASIN, ALPHA_R_BASIN, BETA_BASIN};
pub use transitions::{count_transitions, Basin, BasinSet, TransitionCounts};
pub use walkers::{
    bias_exchange_swap, exchange_delta, metropolis_accept, multiwalker_run, run_bias_exchange, BiasExchangeReport,
    ExchangeSetup, MultiWalkerResult, Replica, WalkerMode, WalkerSetup,
};

use std::f64::consts::PI;

use crate::cv::CollectiveVariable;
use crate::error::{Error, Result};
use crate::features::Frame;

/// Saved frames with their CV values and the bias felt at save time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub steps: Vec<u64>,
    pub frames: Vec<Vec<f64>>,
    pub cvs: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn to_frames(&self) -> Vec<Frame> {
        self.steps
            .iter()
            .zip(&self.frames)
            .map(|(&s, q)| Frame::at(q.clone(), s))
            .collect()
    }

    fn push(&mut self, step: u64, q: &[f64], s: &[f64], v: f64) {
        self.steps.push(step);
        self.frames.push(q.to_vec());
        self.cvs.push(s.to_vec());
        self.bias.push(v);
    }
}

/// Everything needed for one biased run.
#[derive(Debug, Clone)]
pub struct MetadynamicsRun<'a> {
    pub potential: &'a ToyPotential,
    pub cvs: &'a [CollectiveVariable],
    pub langevin: LangevinParams,
    pub well_tempered: WellTemperedParams,
    pub steps: u64,
    pub save_stride: u64,
    pub initial: Vec<f64>,
    /// Optional interpolation grid for the bias.
    pub grid: Option<GridSpec>,
}

/// CV values, bias energy `V(s(q))` and the bias force `-dV/dq`.
pub fn cv_bias_force(cvs: &[CollectiveVariable], bias: &BiasPotential, q: &[f64]) -> Result<(Vec<f64>, f64, Vec<f64>)> {
    let frame = Frame::new(q.to_vec());
    let mut s = Vec::with_capacity(cvs.len());
    let mut grads = Vec::with_capacity(cvs.len());
    for cv in cvs {
        let out = cv.evaluate(&frame)?;
        s.push(out.value);
        grads.push(out.gradient);
    }
    let mut force = vec![0.0; q.len()];
    let mut v = 0.0;
    if !bias.is_empty() {
        let mut dv = vec![0.0; s.len()];
        v = bias.eval_into(&s, &mut dv);
        for (g, d) in grads.iter().zip(dv) {
            for (f, gi) in force.iter_mut().zip(g) {
                *f -= d * gi;
            }
        }
    }
    Ok((s, v, force))
}

/// Default periods: `2 pi` for periodic raw coordinates.
pub fn cv_periods(cvs: &[CollectiveVariable]) -> Vec<Option<f64>> {
    cvs.iter().map(|c| c.is_periodic().then_some(2.0 * PI)).collect()
}

struct BiasedEval {
    energy: f64,
    force: Vec<f64>,
    s: Vec<f64>,
    v: f64,
}

fn biased_force(p: &ToyPotential, cvs: &[CollectiveVariable], bias: &BiasPotential, q: &[f64]) -> Result<BiasedEval> {
    let (energy, mut force) = potential_force(p, q, &[]);
    let (s, v, extra) = cv_bias_force(cvs, bias, q)?;
    for (f, e) in force.iter_mut().zip(extra) {
        *f += e;
    }
    Ok(BiasedEval { energy, force, s, v })
}

/// One biased trajectory; also the per-walker engine of multi-walker runs.
pub(crate) struct Walker<'a> {
    potential: &'a ToyPotential,
    cvs: &'a [CollectiveVariable],
    integrator: Langevin,
    state: LangevinState,
    pub(crate) bias: BiasPotential,
    s: Vec<f64>,
    v: f64,
    pub(crate) traj: Trajectory,
    deposits: usize,
}

impl<'a> Walker<'a> {
    pub(crate) fn new(
        potential: &'a ToyPotential,
        cvs: &'a [CollectiveVariable],
        params: LangevinParams,
        bias: BiasPotential,
        initial: Vec<f64>,
    ) -> Result<Self> {
        potential.validate()?;
        let mut q = initial;
        if q.len() != potential.dim() {
            return Err(Error::input(format!(
                "initial point has {} coordinates, potential has {}",
                q.len(),
                potential.dim()
            )));
        }
        potential.wrap(&mut q);
        let mut state = state_at(potential, q)?;
        let e = biased_force(potential, cvs, &bias, &state.q)?;
        state.force = e.force;
        state.energy = e.energy;
        Ok(Self {
            potential,
            cvs,
            integrator: Langevin::new(params)?,
            state,
            bias,
            s: e.s,
            v: e.v,
            traj: Trajectory::default(),
            deposits: 0,
        })
    }

    pub(crate) fn save(&mut self, step: u64) {
        self.traj.push(step, &self.state.q, &self.s, self.v);
    }

    pub(crate) fn advance(&mut self, step: u64) -> Result<()> {
        let (p, cvs, bias) = (self.potential, self.cvs, &self.bias);
        let mut last = None;
        self.integrator.step(
            &mut self.state,
            step,
            |q| {
                let e = biased_force(p, cvs, bias, q)?;
                last = Some((e.s, e.v));
                Ok((e.energy, e.force))
            },
            |q| p.wrap(q),
        )?;
        if let Some((s, v)) = last {
            self.s = s;
            self.v = v;
        }
        Ok(())
    }

    /// Re-evaluate force and bias at the current point after the bias changed.
    pub(crate) fn refresh(&mut self, step: u64) -> Result<()> {
        let e = biased_force(self.potential, self.cvs, &self.bias, &self.state.q)?;
        if !e.energy.is_finite() {
            return Err(Error::Diverged { step, reason: "non-finite energy".into() });
        }
        self.state.force = e.force;
        self.state.energy = e.energy;
        self.s = e.s;
        self.v = e.v;
        Ok(())
    }

    pub(crate) fn deposit(&mut self, wt: &WellTemperedParams, step: u64) -> Result<Hill> {
        let s = self.s.clone();
        self.bias.deposit(&s, wt, self.integrator.params().temperature, step)?;
        self.deposits += 1;
        let hill = self.bias.hills().last().cloned().expect("hill just deposited");
        self.refresh(step)?;
        Ok(hill)
    }

    pub(crate) fn state(&self) -> &LangevinState {
        &self.state
    }

    pub(crate) fn state_mut(&mut self) -> &mut LangevinState {
        &mut self.state
    }

    pub(crate) fn deposits(&self) -> usize {
        self.deposits
    }
}

pub(crate) fn check_cv_count(cvs: &[CollectiveVariable]) -> Result<()> {
    if cvs.is_empty() || cvs.len() > 3 {
        return Err(Error::argument(format!(
            "metadynamics needs 1 to 3 CVs, got {}",
            cvs.len()
        )));
    }
    Ok(())
}

pub(crate) fn initial_bias(wt: &WellTemperedParams, cvs: &[CollectiveVariable], grid: Option<&GridSpec>) -> Result<BiasPotential> {
    if wt.dims() != cvs.len() {
        return Err(Error::argument(format!(
            "{} hill widths for {} CVs",
            wt.dims(),
            cvs.len()
        )));
    }
    let bias = BiasPotential::for_params(wt)?;
    match grid {
        Some(g) => bias.with_grid(g.clone()),
        None => Ok(bias),
    }
}

/// Biased Langevin run. Frames are saved at step 0 and every `save_stride`
/// steps with the bias felt during that step; hills are deposited after the
/// save at multiples of the deposit stride.
pub fn run_metadynamics(run: &MetadynamicsRun) -> Result<(Trajectory, BiasPotential)> {
    check_cv_count(run.cvs)?;
    if run.save_stride == 0 {
        return Err(Error::argument("save stride must be at least 1"));
    }
    let mut wt = run.well_tempered.clone();
    if wt.periods.is_empty() {
        wt.periods = cv_periods(run.cvs);
    }
    let bias = initial_bias(&wt, run.cvs, run.grid.as_ref())?;
    let mut w = Walker::new(run.potential, run.cvs, run.langevin, bias, run.initial.clone())?;
    w.save(0);
    for step in 1..=run.steps {
        w.advance(step)?;
        if step % run.save_stride == 0 {
            w.save(step);
        }
        if step % wt.deposit_stride == 0 {
            w.deposit(&wt, step)?;
        }
    }
    Ok((w.traj, w.bias))
}

/// Plain Langevin trajectory with no CVs recorded.
pub fn run_unbiased(
    p: &ToyPotential,
    params: LangevinParams,
    steps: u64,
    save_stride: u64,
    initial: Vec<f64>,
) -> Result<Trajectory> {
    if save_stride == 0 {
        return Err(Error::argument("save stride must be at least 1"));
    }
    p.validate()?;
    let mut q = initial;
    p.wrap(&mut q);
    let mut state = state_at(p, q)?;
    let mut lg = Langevin::new(params)?;
    let mut traj = Trajectory::default();
    traj.push(0, &state.q, &[], 0.0);
    for step in 1..=steps {
        lg.step(&mut state, step, |q| Ok(potential_force(p, q, &[])), |q| p.wrap(q))?;
        if step % save_stride == 0 {
            traj.push(step, &state.q, &[], 0.0);
        }
    }
    Ok(traj)
}
