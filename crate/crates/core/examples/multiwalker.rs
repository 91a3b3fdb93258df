//! Walkers sharing one bias, and bias exchange between replicas biased
//! along different coordinates.

use smlcv::criteria::{rama, svm_cv, two_state_samples};
use smlcv::cv::CollectiveVariable;
use smlcv::sampling::{
    multiwalker_run, run_bias_exchange, ExchangeSetup, LangevinParams, WalkerMode, WalkerSetup, WellTemperedParams,
    BETA_BASIN,
};
use smlcv::scenarios::sigma_from_frames;

fn main() -> smlcv::Result<()> {
    let p = rama();
    let samples = two_state_samples(2)?;
    let cvs = vec![svm_cv(&samples)?];
    let sigma = sigma_from_frames(&cvs[0], &samples.frames, 0.2)?;
    let walkers = 8;
    let start = p.basin_centers()[BETA_BASIN].clone();
    let setup = WalkerSetup {
        potential: &p,
        cvs: &cvs,
        langevin: (0..walkers).map(|i| LangevinParams::with_seed(100 + i)).collect(),
        well_tempered: WellTemperedParams::new(vec![sigma]),
        steps: 100_000,
        save_stride: 100,
        read_stride: 400,
        initial: vec![start.clone(); walkers as usize],
        grid: None,
        mode: WalkerMode::Sequential,
    };
    let res = multiwalker_run(&setup)?;
    println!("{walkers} walkers deposited {} hills in total; per walker {:?}", res.bias.len(), res.deposits);

    let cv_sets = vec![cvs, vec![CollectiveVariable::raw_coordinate(0, true)], vec![CollectiveVariable::raw_coordinate(1, true)]];
    let wt = vec![
        WellTemperedParams::new(vec![sigma]),
        WellTemperedParams::new(vec![0.3]),
        WellTemperedParams::new(vec![0.3]),
    ];
    let ex = ExchangeSetup {
        potential: &p,
        cv_sets: &cv_sets,
        langevin: (0..3).map(|i| LangevinParams::with_seed(200 + i)).collect(),
        well_tempered: wt,
        steps: 100_000,
        save_stride: 100,
        exchange_stride: 1000,
        initial: vec![start; 3],
        seed: 5,
    };
    let report = run_bias_exchange(&ex)?;
    println!("bias exchange: {} of {} swaps accepted", report.accepted, report.attempts);
    Ok(())
}
