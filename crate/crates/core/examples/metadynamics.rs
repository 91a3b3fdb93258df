//! Well-tempered metadynamics along an SVM CV, compared with plain Langevin
//! dynamics under the same budget. Pass a step count to shorten the runs.

use smlcv::criteria::{beta_alpha_round_trips, rama, svm_cv, two_state_samples, GRID_POINTS_PER_SIGMA, SAVE_STRIDE};
use smlcv::sampling::{run_metadynamics, run_unbiased, LangevinParams, MetadynamicsRun, WellTemperedParams, BETA_BASIN};
use smlcv::scenarios::{bias_grid_1d, sigma_from_frames};

fn main() -> smlcv::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2_000_000u64);
    let p = rama();
    let samples = two_state_samples(1)?;
    let cvs = vec![svm_cv(&samples)?];
    let sigma = sigma_from_frames(&cvs[0], &samples.frames, 0.2)?;
    let run = MetadynamicsRun {
        potential: &p,
        cvs: &cvs,
        langevin: LangevinParams::with_seed(1),
        well_tempered: WellTemperedParams::new(vec![sigma]),
        steps,
        save_stride: SAVE_STRIDE,
        initial: p.basin_centers()[BETA_BASIN].clone(),
        grid: Some(bias_grid_1d(&p, &cvs[0], sigma, GRID_POINTS_PER_SIGMA)?),
    };
    let (traj, bias) = run_metadynamics(&run)?;
    let hills = bias.hills();
    println!("biased:   {} round trips, {} hills of width {sigma:.4}", beta_alpha_round_trips(&traj.frames)?, hills.len());
    if let (Some(first), Some(last)) = (hills.first(), hills.last()) {
        println!("hill height {:.4} -> {:.4}", first.height, last.height);
    }

    let plain = run_unbiased(&p, LangevinParams::with_seed(1), steps, SAVE_STRIDE, p.basin_centers()[BETA_BASIN].clone())?;
    println!("unbiased: {} round trips", beta_alpha_round_trips(&plain.frames)?);
    Ok(())
}
