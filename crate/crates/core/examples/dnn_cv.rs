//! A swish network trained on two basins, used as a CV with an analytic gradient.

use smlcv::classifiers::{train_mlp, MlpOptions};
use smlcv::criteria::two_state_samples;
use smlcv::cv::{CollectiveVariable, CvKind};
use smlcv::features::{FeatureSpec, Frame};

fn main() -> smlcv::Result<()> {
    let samples = two_state_samples(3)?;
    let spec = FeatureSpec::sincos(2);
    let data = samples.dataset(&spec)?;
    let fit = train_mlp(&data, &MlpOptions::default_for(4, 2, 3))?;
    println!("widths {:?} loss {:.4} accuracy {:.4}", fit.model.widths(), fit.loss, fit.accuracy);

    let cv = CollectiveVariable::new(CvKind::DnnOutput { model: fit.model, node: 1 }, spec)?;
    for q in [[-1.4, 2.2], [1.1, 0.7], [0.0, 0.0]] {
        let v = cv.evaluate(&Frame::new(q.to_vec()))?;
        println!("q = {q:?}  cv = {:.4}  grad = {}", v.value, v.gradient);
    }
    Ok(())
}
