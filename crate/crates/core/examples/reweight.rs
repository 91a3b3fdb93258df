//! Free-energy surfaces from a biased run: time-dependent offsets and the
//! final bias, each compared with the exact surface.

use smlcv::criteria::{fes_error, metad_run, svm_cv, two_state_samples};
use smlcv::reweight::{lastbias_weights, tiwary_weights, ReweightGrid};

fn main() -> smlcv::Result<()> {
    let samples = two_state_samples(1)?;
    let run = metad_run(vec![svm_cv(&samples)?], &samples.frames, 1)?;
    let grid = ReweightGrid::around(&run.trajectory, &run.well_tempered, 400)?;
    let w = tiwary_weights(&run.trajectory, &run.bias, &run.well_tempered, 1.0, &grid)?;
    let (rms, bins) = fes_error(&run.trajectory, &w)?;
    println!("time-dependent weights: RMS {rms:.3} T over {bins} bins");
    let w = lastbias_weights(&run.trajectory, &run.bias, 1.0)?;
    let (rms, bins) = fes_error(&run.trajectory, &w)?;
    println!("final-bias weights:     RMS {rms:.3} T over {bins} bins");
    Ok(())
}
