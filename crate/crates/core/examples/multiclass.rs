//! One-vs-rest SVM over three basins and a 3-D bias with one CV per state.

use smlcv::criteria::{metad_run, multiclass_cvs, rama, three_state_samples, CORE_RADIUS};
use smlcv::sampling::{count_transitions, ALPHA_L_BASIN, ALPHA_R_BASIN, BETA_BASIN};
use smlcv::scenarios::basin_cores;

fn main() -> smlcv::Result<()> {
    let samples = three_state_samples(1)?;
    let cvs = multiclass_cvs(&samples)?;
    for cv in &cvs {
        println!("{}", cv.name());
    }
    let run = metad_run(cvs, &samples.frames, 1)?;
    let cores = basin_cores(&rama(), &[BETA_BASIN, ALPHA_R_BASIN, ALPHA_L_BASIN], CORE_RADIUS)?;
    let counts = count_transitions(&run.trajectory.frames, &cores);
    println!("visits per basin {:?}", counts.visits);
    println!("transition matrix {:?}", counts.matrix);
    Ok(())
}
