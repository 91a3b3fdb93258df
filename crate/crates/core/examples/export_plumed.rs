//! Save a trained SVM CV as a model bundle and emit PLUMED input for it.

use smlcv::criteria::{svm_cv, two_state_samples};
use smlcv::export::{emit_plumed, load_model, round_trip_error, save_model, MetadTemplate, ModelBundle};
use smlcv::sampling::WellTemperedParams;

fn main() -> smlcv::Result<()> {
    let samples = two_state_samples(1)?;
    let cv = svm_cv(&samples)?;
    let bundle = ModelBundle::from_cv(&cv)?.with_metad(MetadTemplate::from_params(&WellTemperedParams::new(vec![0.18]), 1.0));
    let dir = std::env::temp_dir().join("smlcv-export-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.json");
    save_model(&bundle, &path)?;
    let back = load_model(&path)?;
    let labels = vec!["phi_sin".into(), "phi_cos".into(), "psi_sin".into(), "psi_cos".into()];
    let text = emit_plumed(&back, &labels)?;
    print!("{text}");
    println!("max round-trip error over 1000 inputs: {:e}", round_trip_error(&back, &text, 1000, 1)?);
    Ok(())
}
