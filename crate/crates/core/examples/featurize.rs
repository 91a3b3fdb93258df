//! Sin/cos features of torus angles, their Jacobian, and a standardizing scaler.

use smlcv::features::{FeatureSpec, Frame, StandardScaler};
use smlcv::scenarios::sample_basins;
use smlcv::sampling::{ToyPotential, ALPHA_L_BASIN, BETA_BASIN};

fn main() -> smlcv::Result<()> {
    let spec = FeatureSpec::sincos(2);
    let frame = Frame::new(vec![-1.3, 2.2]);
    let (x, jac) = spec.features_and_jacobian(&frame)?;
    println!("labels   {:?}", spec.labels());
    println!("features {x}");
    println!("jacobian\n{jac}");

    let p = ToyPotential::rama_default();
    let samples = sample_basins(&p, &[BETA_BASIN, ALPHA_L_BASIN], 200, 20, 7)?;
    let table = spec.featurize(&samples.frames)?;
    let scaler = StandardScaler::fit(table.view())?;
    println!("feature means {:?}", scaler.mean);
    println!("feature stds  {:?}", scaler.std);
    let scaled = spec.with_scaler(scaler);
    println!("scaled first frame {}", scaled.features(&samples.frames[0])?);
    Ok(())
}
