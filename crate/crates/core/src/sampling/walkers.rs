//! Multiple walkers sharing one hill list, and bias-exchange swaps between
//! replicas biased along different CVs.

use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    check_cv_count, cv_periods, initial_bias, BiasPotential, GridSpec, Hill, LangevinParams, LangevinState,
    ToyPotential, Trajectory, Walker, WellTemperedParams,
};
use crate::cv::CollectiveVariable;
use crate::error::{Error, Result};
use crate::features::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalkerMode {
    /// Round-robin in one thread; reproducible.
    Sequential,
    /// One thread per walker; hill order depends on scheduling.
    Parallel,
}

#[derive(Debug, Clone)]
pub struct WalkerSetup<'a> {
    pub potential: &'a ToyPotential,
    pub cvs: &'a [CollectiveVariable],
    /// One entry per walker, with distinct seeds.
    pub langevin: Vec<LangevinParams>,
    pub well_tempered: WellTemperedParams,
    pub steps: u64,
    pub save_stride: u64,
    /// Steps between refreshes of a walker's view of other walkers' hills.
    pub read_stride: u64,
    pub initial: Vec<Vec<f64>>,
    pub grid: Option<GridSpec>,
    pub mode: WalkerMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiWalkerResult {
    pub trajectories: Vec<Trajectory>,
    /// Every hill from every walker, in deposit order.
    pub bias: BiasPotential,
    pub deposits: Vec<usize>,
}

fn validate(setup: &WalkerSetup) -> Result<WellTemperedParams> {
    check_cv_count(setup.cvs)?;
    let n = setup.langevin.len();
    if n == 0 {
        return Err(Error::argument("at least one walker is required"));
    }
    if setup.initial.len() != n {
        return Err(Error::argument(format!("{} initial points for {n} walkers", setup.initial.len())));
    }
    let mut seeds: Vec<u64> = setup.langevin.iter().map(|l| l.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    if seeds.len() != n {
        return Err(Error::argument("walker seeds must be distinct"));
    }
    if setup.read_stride == 0 || setup.save_stride == 0 {
        return Err(Error::argument("read and save strides must be at least 1"));
    }
    let mut wt = setup.well_tempered.clone();
    if wt.periods.is_empty() {
        wt.periods = cv_periods(setup.cvs);
    }
    wt.validate()?;
    Ok(wt)
}

/// Append hills owned by other walkers that this walker has not seen yet.
fn pull(walker: &mut Walker, me: usize, shared: &[(usize, Hill)], seen: &mut usize) -> Result<bool> {
    let mut any = false;
    for (owner, h) in &shared[*seen..] {
        if *owner != me {
            walker.bias.push(h.clone())?;
            any = true;
        }
    }
    *seen = shared.len();
    Ok(any)
}

/// Run walkers that deposit into one shared bias. Each walker sees its own
/// hills at once and other walkers' hills at its next read.
pub fn multiwalker_run(setup: &WalkerSetup) -> Result<MultiWalkerResult> {
    let wt = validate(setup)?;
    let mut walkers = Vec::with_capacity(setup.langevin.len());
    for (lp, q0) in setup.langevin.iter().zip(&setup.initial) {
        let bias = initial_bias(&wt, setup.cvs, setup.grid.as_ref())?;
        walkers.push(Walker::new(setup.potential, setup.cvs, *lp, bias, q0.clone())?);
    }
    let shared = match setup.mode {
        WalkerMode::Sequential => run_sequential(setup, &wt, &mut walkers)?,
        WalkerMode::Parallel => run_parallel(setup, &wt, &mut walkers)?,
    };
    let mut bias = BiasPotential::for_params(&wt)?;
    for (_, h) in shared {
        bias.push(h)?;
    }
    Ok(MultiWalkerResult {
        deposits: walkers.iter().map(Walker::deposits).collect(),
        trajectories: walkers.into_iter().map(|w| w.traj).collect(),
        bias,
    })
}

fn walker_step(
    w: &mut Walker,
    me: usize,
    step: u64,
    setup: &WalkerSetup,
    wt: &WellTemperedParams,
    seen: &mut usize,
    shared: &Mutex<Vec<(usize, Hill)>>,
) -> Result<()> {
    w.advance(step)?;
    if step.is_multiple_of(setup.save_stride) {
        w.save(step);
    }
    let mut pulled = false;
    if step.is_multiple_of(setup.read_stride) {
        let list = shared.lock().expect("hill list lock poisoned");
        pulled = pull(w, me, &list, seen)?;
    }
    if step.is_multiple_of(wt.deposit_stride) {
        let hill = w.deposit(wt, step)?;
        shared.lock().expect("hill list lock poisoned").push((me, hill));
    } else if pulled {
        w.refresh(step)?;
    }
    Ok(())
}

fn run_sequential(setup: &WalkerSetup, wt: &WellTemperedParams, walkers: &mut [Walker]) -> Result<Vec<(usize, Hill)>> {
    let shared = Mutex::new(Vec::new());
    let mut seen = vec![0usize; walkers.len()];
    for w in walkers.iter_mut() {
        w.save(0);
    }
    for step in 1..=setup.steps {
        for (me, w) in walkers.iter_mut().enumerate() {
            walker_step(w, me, step, setup, wt, &mut seen[me], &shared)?;
        }
    }
    Ok(shared.into_inner().expect("hill list lock poisoned"))
}

fn run_parallel(setup: &WalkerSetup, wt: &WellTemperedParams, walkers: &mut [Walker]) -> Result<Vec<(usize, Hill)>> {
    let shared = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        let handles: Vec<_> = walkers
            .iter_mut()
            .enumerate()
            .map(|(me, w)| {
                let shared = &shared;
                scope.spawn(move || -> Result<()> {
                    let mut seen = 0;
                    w.save(0);
                    for step in 1..=setup.steps {
                        walker_step(w, me, step, setup, wt, &mut seen, shared)?;
                    }
                    Ok(())
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("walker thread panicked"))
            .collect::<Result<Vec<()>>>()
    })?;
    Ok(shared.into_inner().expect("hill list lock poisoned"))
}

/// A bias viewed through its own CVs.
#[derive(Debug, Clone, Copy)]
pub struct Replica<'a> {
    pub cvs: &'a [CollectiveVariable],
    pub bias: &'a BiasPotential,
}

impl Replica<'_> {
    pub fn bias_at(&self, q: &[f64]) -> Result<f64> {
        let frame = Frame::new(q.to_vec());
        let s = self.cvs.iter().map(|c| c.value(&frame)).collect::<Result<Vec<_>>>()?;
        Ok(self.bias.eval(&s)?.0)
    }
}

/// Bias energy change of exchanging configurations between two replicas.
pub fn exchange_delta(ri: &Replica, rj: &Replica, qi: &[f64], qj: &[f64]) -> Result<f64> {
    Ok(ri.bias_at(qj)? + rj.bias_at(qi)? - ri.bias_at(qi)? - rj.bias_at(qj)?)
}

/// Accept with probability `min(1, exp(-delta / T))`.
pub fn metropolis_accept(delta: f64, temperature: f64, rng: &mut impl Rng) -> bool {
    if delta <= 0.0 {
        return true;
    }
    rng.random::<f64>() < (-delta / temperature).exp()
}

/// Propose exchanging positions and velocities between two replicas.
/// Forces stored in the states are stale after an accepted swap.
pub fn bias_exchange_swap(
    si: &mut LangevinState,
    sj: &mut LangevinState,
    ri: &Replica,
    rj: &Replica,
    temperature: f64,
    rng: &mut impl Rng,
) -> Result<bool> {
    let delta = exchange_delta(ri, rj, &si.q, &sj.q)?;
    let accept = metropolis_accept(delta, temperature, rng);
    if accept {
        std::mem::swap(si, sj);
    }
    Ok(accept)
}

#[derive(Debug, Clone)]
pub struct ExchangeSetup<'a> {
    pub potential: &'a ToyPotential,
    /// CVs of each replica.
    pub cv_sets: &'a [Vec<CollectiveVariable>],
    pub langevin: Vec<LangevinParams>,
    pub well_tempered: Vec<WellTemperedParams>,
    pub steps: u64,
    pub save_stride: u64,
    pub exchange_stride: u64,
    pub initial: Vec<Vec<f64>>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasExchangeReport {
    pub trajectories: Vec<Trajectory>,
    pub biases: Vec<BiasPotential>,
    pub attempts: usize,
    pub accepted: usize,
}

/// Replicas each run their own metadynamics; every `exchange_stride` steps
/// a random neighbouring pair attempts a swap.
pub fn run_bias_exchange(setup: &ExchangeSetup) -> Result<BiasExchangeReport> {
    let n = setup.cv_sets.len();
    if n < 2 || setup.langevin.len() != n || setup.well_tempered.len() != n || setup.initial.len() != n {
        return Err(Error::argument("bias exchange needs at least 2 replicas with one setting each"));
    }
    if setup.exchange_stride == 0 || setup.save_stride == 0 {
        return Err(Error::argument("strides must be at least 1"));
    }
    let temperature = setup.langevin[0].temperature;
    if setup.langevin.iter().any(|l| l.temperature != temperature) {
        return Err(Error::argument("all replicas must share one temperature"));
    }
    let mut wts = Vec::with_capacity(n);
    let mut walkers = Vec::with_capacity(n);
    for k in 0..n {
        check_cv_count(&setup.cv_sets[k])?;
        let mut wt = setup.well_tempered[k].clone();
        if wt.periods.is_empty() {
            wt.periods = cv_periods(&setup.cv_sets[k]);
        }
        let bias = initial_bias(&wt, &setup.cv_sets[k], None)?;
        walkers.push(Walker::new(setup.potential, &setup.cv_sets[k], setup.langevin[k], bias, setup.initial[k].clone())?);
        wts.push(wt);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let (mut attempts, mut accepted) = (0, 0);
    for w in &mut walkers {
        w.save(0);
    }
    for step in 1..=setup.steps {
        for (k, w) in walkers.iter_mut().enumerate() {
            w.advance(step)?;
            if step % setup.save_stride == 0 {
                w.save(step);
            }
            if step % wts[k].deposit_stride == 0 {
                w.deposit(&wts[k], step)?;
            }
        }
        if step % setup.exchange_stride == 0 {
            let i = rng.random_range(0..n - 1);
            let (left, right) = walkers.split_at_mut(i + 1);
            let (a, b) = (&mut left[i], &mut right[0]);
            let (ra, rb) = (Replica { cvs: &setup.cv_sets[i], bias: &a.bias }, Replica { cvs: &setup.cv_sets[i + 1], bias: &b.bias });
            let delta = exchange_delta(&ra, &rb, &a.state().q, &b.state().q)?;
            attempts += 1;
            if metropolis_accept(delta, temperature, &mut rng) {
                accepted += 1;
                std::mem::swap(a.state_mut(), b.state_mut());
                a.refresh(step)?;
                b.refresh(step)?;
            }
        }
    }
    Ok(BiasExchangeReport {
        biases: walkers.iter().map(|w| w.bias.clone()).collect(),
        trajectories: walkers.into_iter().map(|w| w.traj).collect(),
        attempts,
        accepted,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{run_metadynamics, MetadynamicsRun};
    use super::*;

    fn setup<'a>(p: &'a ToyPotential, cvs: &'a [CollectiveVariable], n: usize, read: u64) -> WalkerSetup<'a> {
        WalkerSetup {
            potential: p,
            cvs,
            langevin: (0..n as u64).map(|s| LangevinParams::with_seed(40 + s)).collect(),
            well_tempered: WellTemperedParams { deposit_stride: 100, ..WellTemperedParams::new(vec![0.1]) },
            steps: 20_000,
            save_stride: 50,
            read_stride: read,
            initial: vec![vec![-1.0]; n],
            grid: None,
            mode: WalkerMode::Sequential,
        }
    }

    #[test]
    fn one_walker_equals_single_run() {
        let p = ToyPotential::DoubleWell1d { a: 6.0 };
        let cvs = [CollectiveVariable::raw_coordinate(0, false)];
        let s = setup(&p, &cvs, 1, 7);
        let multi = multiwalker_run(&s).unwrap();
        let (t, b) = run_metadynamics(&MetadynamicsRun {
            potential: &p,
            cvs: &cvs,
            langevin: s.langevin[0],
            well_tempered: s.well_tempered.clone(),
            steps: s.steps,
            save_stride: s.save_stride,
            initial: vec![-1.0],
            grid: None,
        })
        .unwrap();
        assert_eq!(multi.trajectories[0], t);
        assert_eq!(multi.bias, b);
    }

    #[test]
    fn hill_count_is_sum_of_deposits() {
        let p = ToyPotential::DoubleWell1d { a: 6.0 };
        let cvs = [CollectiveVariable::raw_coordinate(0, false)];
        let r = multiwalker_run(&setup(&p, &cvs, 4, 10)).unwrap();
        assert_eq!(r.bias.len(), r.deposits.iter().sum::<usize>());
        assert_eq!(r.deposits, vec![200; 4]);
    }

    #[test]
    fn read_stride_one_sees_current_bias() {
        let p = ToyPotential::DoubleWell1d { a: 6.0 };
        let cvs = [CollectiveVariable::raw_coordinate(0, false)];
        let s = setup(&p, &cvs, 3, 1);
        let r = multiwalker_run(&s).unwrap();
        // replay the shared list: every height must follow from all earlier hills
        let mut replay = BiasPotential::new(1).unwrap();
        for h in r.bias.hills() {
            let (v, _) = replay.eval(&h.center).unwrap();
            let expected = super::super::wt_hill_height(v, &s.well_tempered, 1.0);
            assert!((h.height - expected).abs() <= 1e-12 * expected);
            replay.push(h.clone()).unwrap();
        }
    }

    #[test]
    fn parallel_mode_runs() {
        let p = ToyPotential::DoubleWell1d { a: 6.0 };
        let cvs = [CollectiveVariable::raw_coordinate(0, false)];
        let s = WalkerSetup { mode: WalkerMode::Parallel, steps: 5000, ..setup(&p, &cvs, 4, 10) };
        let r = multiwalker_run(&s).unwrap();
        assert_eq!(r.bias.len(), 200);
        assert!(r.trajectories.iter().all(|t| t.len() == 101));
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let p = ToyPotential::DoubleWell1d { a: 6.0 };
        let cvs = [CollectiveVariable::raw_coordinate(0, false)];
        let mut s = setup(&p, &cvs, 2, 10);
        s.langevin[1].seed = s.langevin[0].seed;
        assert!(multiwalker_run(&s).is_err());
    }

    #[test]
    fn symmetric_swaps_always_accepted() {
        let cvs = [CollectiveVariable::raw_coordinate(0, false)];
        let mut bias = BiasPotential::new(1).unwrap();
        bias.push(Hill { step: 0, center: vec![0.2], sigma: vec![0.3], height: 1.0 }).unwrap();
        let empty = BiasPotential::new(1).unwrap();
        let p = ToyPotential::DoubleWell1d { a: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (bi, bj) in [(&bias, &bias), (&empty, &empty)] {
            let (ri, rj) = (Replica { cvs: &cvs, bias: bi }, Replica { cvs: &cvs, bias: bj });
            for k in 0..100 {
                let mut a = super::super::state_at(&p, vec![-1.0 + 0.01 * k as f64]).unwrap();
                let mut b = super::super::state_at(&p, vec![0.7]).unwrap();
                let (qa, qb) = (a.q.clone(), b.q.clone());
                assert!(bias_exchange_swap(&mut a, &mut b, &ri, &rj, 1.0, &mut rng).unwrap());
                assert_eq!((a.q, b.q), (qb, qa));
            }
        }
    }

    #[test]
    fn acceptance_rate_matches_metropolis() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for delta in [0.1, 0.7, 2.0] {
            let hits = (0..10_000).filter(|_| metropolis_accept(delta, 1.0, &mut rng)).count();
            let rate = hits as f64 / 1e4;
            assert!((rate - (-delta).exp()).abs() < 0.02, "delta {delta}: rate {rate}");
        }
    }

    #[test]
    fn exchange_driver_counts_attempts() {
        let p = ToyPotential::rama_default();
        let sets = vec![vec![CollectiveVariable::raw_coordinate(0, true)], vec![CollectiveVariable::raw_coordinate(1, true)]];
        let s = ExchangeSetup {
            potential: &p,
            cv_sets: &sets,
            langevin: vec![LangevinParams::with_seed(1), LangevinParams::with_seed(2)],
            well_tempered: vec![WellTemperedParams::new(vec![0.3]), WellTemperedParams::new(vec![0.3])],
            steps: 10_000,
            save_stride: 100,
            exchange_stride: 500,
            initial: vec![vec![-2.5, 2.6], vec![-2.5, 2.6]],
            seed: 3,
        };
        let r = run_bias_exchange(&s).unwrap();
        assert_eq!(r.attempts, 20);
        assert!(r.accepted <= r.attempts);
        assert_eq!(r.biases[0].len(), 25);
    }
}
