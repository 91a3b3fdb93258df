//! Fully connected network with Swish activations between affine layers.
//! The last layer is linear: its outputs are un-normalized class scores.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, linear::sigmoid, Classifier, LabeledDataset};
use crate::error::{Error, Result};

pub fn swish(z: f64) -> f64 {
    z * sigmoid(z)
}

fn swish_prime(z: f64) -> f64 {
    let s = sigmoid(z);
    s + z * s * (1.0 - s)
}

/// Affine map `W x + b` with `W` shaped `(out, in)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
}

/// Per-layer parameter gradients, same shapes as the model.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub weight: Vec<Array2<f64>>,
    pub bias: Vec<Array1<f64>>,
}

impl MlpModel {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArchitecture("network has no layers".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weight.nrows() {
                return Err(Error::InvalidArchitecture(format!(
                    "layer {k}: bias length {} does not match {} outputs",
                    l.bias.len(),
                    l.weight.nrows()
                )));
            }
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].weight.nrows() != pair[1].weight.ncols() {
                return Err(Error::InvalidArchitecture(format!(
                    "layer {k} emits {} values but layer {} expects {}",
                    pair[0].weight.nrows(),
                    k + 1,
                    pair[1].weight.ncols()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Random initialization `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(widths: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidArchitecture(format!(
                "widths {widths:?} must list at least an input and an output size, all positive"
            )));
        }
        let layers = widths
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Layer {
                    weight: Array2::from_shape_fn((w[1], w[0]), |_| rng.random_range(-bound..bound)),
                    bias: Array1::from_shape_fn(w[1], |_| rng.random_range(-bound..bound)),
                }
            })
            .collect();
        Self::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.nrows())
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(|l| l.weight.nrows()));
        w
    }

    fn check_input(&self, x: ArrayView1<f64>) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::input(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Un-normalized outputs.
    pub fn forward(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        for (k, l) in self.layers.iter().enumerate() {
            let z = l.weight.dot(&a) + &l.bias;
            a = if k < last { z.mapv(swish) } else { z };
        }
        Ok(a)
    }

    /// Pre-activations of every layer for one input.
    fn trace(&self, x: ArrayView1<f64>) -> Vec<Array1<f64>> {
        let last = self.layers.len() - 1;
        let mut zs = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for (k, l) in self.layers.iter().enumerate() {
            let z = l.weight.dot(&a) + &l.bias;
            if k < last {
                a = z.mapv(swish);
            }
            zs.push(z);
        }
        zs
    }

    /// Output `node` and its gradient with respect to the input.
    pub fn output_and_input_grad(&self, x: ArrayView1<f64>, node: usize) -> Result<(f64, Array1<f64>)> {
        self.check_input(x)?;
        if node >= self.output_dim() {
            return Err(Error::argument(format!(
                "output node {node} out of range for {} outputs",
                self.output_dim()
            )));
        }
        let zs = self.trace(x);
        let value = zs.last().unwrap()[node];
        let mut delta = Array1::zeros(self.output_dim());
        delta[node] = 1.0;
        for k in (0..self.layers.len()).rev() {
            let up = self.layers[k].weight.t().dot(&delta);
            delta = if k > 0 {
                up * &zs[k - 1].mapv(swish_prime)
            } else {
                up
            };
        }
        Ok((value, delta))
    }

    /// Mean softmax cross-entropy over the rows of `data` selected by `rows`,
    /// and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, data: &LabeledDataset, rows: &[usize]) -> Result<(f64, MlpGradients)> {
        let mut gw: Vec<Array2<f64>> = self.layers.iter().map(|l| Array2::zeros(l.weight.dim())).collect();
        let mut gb: Vec<Array1<f64>> = self.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect();
        let mut total = 0.0;
        let n = rows.len() as f64;
        let last = self.layers.len() - 1;
        let xs = data.x();
        for &r in rows {
            let x = xs.row(r);
            self.check_input(x)?;
            let label = data.y()[r];
            if label >= self.output_dim() {
                return Err(Error::input(format!("label {label} exceeds network outputs")));
            }
            let zs = self.trace(x);
            let (loss, mut delta) = softmax_xent(&zs[last], label);
            total += loss;
            for k in (0..=last).rev() {
                let input = if k == 0 { x.to_owned() } else { zs[k - 1].mapv(swish) };
                let d = &delta / n;
                gb[k] += &d;
                gw[k] += &outer(&d, &input);
                if k > 0 {
                    delta = self.layers[k].weight.t().dot(&delta) * &zs[k - 1].mapv(swish_prime);
                }
            }
        }
        Ok((total / n, MlpGradients { weight: gw, bias: gb }))
    }

    pub fn mean_loss(&self, data: &LabeledDataset) -> Result<f64> {
        let mut total = 0.0;
        for (row, &y) in data.x().rows().into_iter().zip(data.y()) {
            total += softmax_xent(&self.forward(row)?, y).0;
        }
        Ok(total / data.len() as f64)
    }
}

impl Classifier for MlpModel {
    fn predict_label(&self, x: ArrayView1<f64>) -> Result<usize> {
        Ok(argmax(self.forward(x)?.as_slice().unwrap()))
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let col = a.view().insert_axis(Axis(1));
    let row = b.view().insert_axis(Axis(0));
    col.dot(&row)
}

/// Cross-entropy of softmax(scores) against `label`, and d loss / d scores.
fn softmax_xent(scores: &Array1<f64>, label: usize) -> (f64, Array1<f64>) {
    let max = scores.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exps = scores.mapv(|v| (v - max).exp());
    let sum = exps.sum();
    let loss = -(scores[label] - max) + sum.ln();
    let mut grad = exps / sum;
    grad[label] -= 1.0;
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpOptions {
    pub layer_widths: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl MlpOptions {
    /// Four hidden layers of 32 units between `inputs` and `classes`.
    pub fn default_for(inputs: usize, classes: usize, seed: u64) -> Self {
        Self {
            layer_widths: vec![inputs, 32, 32, 32, 32, classes],
            learning_rate: 0.1,
            batch_size: 32,
            epochs: 1,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpFit {
    pub model: MlpModel,
    /// Mean cross-entropy over the full training set after the last epoch.
    pub loss: f64,
    pub accuracy: f64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

struct Adam {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    t: i32,
}

impl Adam {
    fn new(model: &MlpModel) -> Self {
        let zw = || model.layers.iter().map(|l| Array2::zeros(l.weight.dim())).collect();
        let zb = || model.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect();
        Self { m_w: zw(), v_w: zw(), m_b: zb(), v_b: zb(), t: 0 }
    }

    fn step(&mut self, model: &mut MlpModel, g: &MlpGradients, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for k in 0..model.layers.len() {
            ndarray::Zip::from(&mut model.layers[k].weight)
                .and(&mut self.m_w[k])
                .and(&mut self.v_w[k])
                .and(&g.weight[k])
                .for_each(|p, m, v, &gr| adam_update(p, m, v, gr, lr, c1, c2));
            ndarray::Zip::from(&mut model.layers[k].bias)
                .and(&mut self.m_b[k])
                .and(&mut self.v_b[k])
                .and(&g.bias[k])
                .for_each(|p, m, v, &gr| adam_update(p, m, v, gr, lr, c1, c2));
        }
    }
}

fn adam_update(p: &mut f64, m: &mut f64, v: &mut f64, g: f64, lr: f64, c1: f64, c2: f64) {
    *m = BETA1 * *m + (1.0 - BETA1) * g;
    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
}

/// Minimize softmax cross-entropy with Adam on seeded, shuffled mini-batches.
pub fn train_mlp(data: &LabeledDataset, opts: &MlpOptions) -> Result<MlpFit> {
    let widths = &opts.layer_widths;
    if widths.first() != Some(&data.dim()) || widths.last() != Some(&data.class_count()) {
        return Err(Error::InvalidArchitecture(format!(
            "widths {widths:?} must start at {} features and end at {} classes",
            data.dim(),
            data.class_count()
        )));
    }
    if opts.epochs == 0 {
        return Err(Error::argument("epochs must be at least 1"));
    }
    if opts.batch_size == 0 {
        return Err(Error::argument("batch size must be at least 1"));
    }
    if !(opts.learning_rate > 0.0) {
        return Err(Error::argument("learning rate must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut model = MlpModel::init(widths, &mut rng)?;
    let mut adam = Adam::new(&model);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(opts.batch_size) {
            let (_, g) = model.loss_and_grad(data, batch)?;
            adam.step(&mut model, &g, opts.learning_rate);
        }
    }
    let loss = model.mean_loss(data)?;
    if !loss.is_finite() {
        return Err(Error::input("training diverged to a non-finite loss"));
    }
    let accuracy = model.accuracy(data)?;
    Ok(MlpFit { model, loss, accuracy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy() -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_fn((10, 3), |_| rng.random_range(-1.0..1.0));
        LabeledDataset::new(x, vec![0, 1, 0, 1, 1, 0, 0, 1, 1, 0]).unwrap()
    }

    #[test]
    fn swish_values() {
        assert_eq!(swish(0.0), 0.0);
        assert!((swish(1.0) - 0.7310585786300049).abs() < 1e-15);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let layers = vec![
            Layer { weight: Array2::zeros((4, 3)), bias: Array1::zeros(4) },
            Layer { weight: Array2::zeros((2, 4)), bias: Array1::zeros(2) },
        ];
        let m = MlpModel::new(layers).unwrap();
        assert_eq!(m.forward(array![1.0, -2.0, 3.0].view()).unwrap(), array![0.0, 0.0]);
    }

    #[test]
    fn single_layer_is_affine() {
        let m = MlpModel::new(vec![Layer { weight: array![[2.0, -1.0]], bias: array![0.5] }]).unwrap();
        assert_eq!(m.forward(array![1.0, 3.0].view()).unwrap()[0], 2.0 - 3.0 + 0.5);
    }

    #[test]
    fn non_chaining_layers_rejected() {
        let layers = vec![
            Layer { weight: Array2::zeros((4, 3)), bias: Array1::zeros(4) },
            Layer { weight: Array2::zeros((2, 5)), bias: Array1::zeros(2) },
        ];
        assert!(matches!(MlpModel::new(layers), Err(Error::InvalidArchitecture(_))));
        let opts = MlpOptions { layer_widths: vec![4, 8, 2], ..MlpOptions::default_for(3, 2, 0) };
        assert!(matches!(train_mlp(&toy(), &opts), Err(Error::InvalidArchitecture(_))));
    }

    #[test]
    fn zero_epochs_rejected() {
        let opts = MlpOptions { epochs: 0, ..MlpOptions::default_for(3, 2, 0) };
        assert!(matches!(train_mlp(&toy(), &opts), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let data = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = MlpModel::init(&[3, 5, 4, 2], &mut rng).unwrap();
        let rows: Vec<usize> = (0..10).collect();
        let (_, g) = model.loss_and_grad(&data, &rows).unwrap();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for k in 0..model.layers.len() {
            for idx in 0..model.layers[k].weight.len() {
                let (r, c) = (idx / model.layers[k].weight.ncols(), idx % model.layers[k].weight.ncols());
                let mut p = model.clone();
                p.layers[k].weight[[r, c]] += h;
                let mut m = model.clone();
                m.layers[k].weight[[r, c]] -= h;
                let fd = (p.loss_and_grad(&data, &rows).unwrap().0 - m.loss_and_grad(&data, &rows).unwrap().0) / (2.0 * h);
                let an = g.weight[k][[r, c]];
                worst = worst.max((fd - an).abs() / an.abs().max(1e-3));
            }
            for j in 0..model.layers[k].bias.len() {
                let mut p = model.clone();
                p.layers[k].bias[j] += h;
                let mut m = model.clone();
                m.layers[k].bias[j] -= h;
                let fd = (p.loss_and_grad(&data, &rows).unwrap().0 - m.loss_and_grad(&data, &rows).unwrap().0) / (2.0 * h);
                let an = g.bias[k][j];
                worst = worst.max((fd - an).abs() / an.abs().max(1e-3));
            }
        }
        assert!(worst <= 1e-4, "max relative error {worst}");
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = MlpModel::init(&[3, 6, 6, 2], &mut rng).unwrap();
        let x = array![0.3, -0.7, 1.1];
        for node in 0..2 {
            let (_, g) = model.output_and_input_grad(x.view(), node).unwrap();
            for i in 0..3 {
                let mut p = x.clone();
                p[i] += 1e-6;
                let mut m = x.clone();
                m[i] -= 1e-6;
                let fd = (model.forward(p.view()).unwrap()[node] - model.forward(m.view()).unwrap()[node]) / 2e-6;
                assert!((fd - g[i]).abs() <= 1e-6 * fd.abs().max(1.0));
            }
        }
        assert!(model.output_and_input_grad(x.view(), 2).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let opts = MlpOptions { layer_widths: vec![3, 8, 2], epochs: 3, batch_size: 4, ..MlpOptions::default_for(3, 2, 21) };
        let a = train_mlp(&toy(), &opts).unwrap();
        let b = train_mlp(&toy(), &opts).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.loss.to_bits(), b.loss.to_bits());
    }
}
