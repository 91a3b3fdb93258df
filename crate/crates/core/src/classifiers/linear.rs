//! Regularized linear classifiers fitted by accelerated proximal gradient
//! descent with backtracking.
//!
//! Objective: `penalty(w) + C * sum_i loss(y_i * (w.x_i + b))` with labels
//! mapped to `y_i in {-1, +1}`. The bias is never penalized. The L1 penalty
//! is handled by soft-thresholding, the L2 penalty `0.5 |w|^2` by its
//! closed-form prox. Iterates follow the monotone FISTA scheme, so the
//! recorded objective never increases.

use ndarray::{Array1, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use super::{LabeledDataset, LinearModel, LossKind, Penalty};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop when the mean relative objective decrease over the last
    /// `WINDOW` iterations falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-4, max_iter: 5000 }
    }
}

const WINDOW: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub model: LinearModel,
    pub converged: bool,
    pub objective: f64,
    pub iterations: usize,
    /// Objective after every outer iteration, starting with the initial point.
    pub history: Vec<f64>,
}

pub fn train_linear_svm(
    data: &LabeledDataset,
    penalty: Penalty,
    c: f64,
    opts: SolverOptions,
) -> Result<LinearFit> {
    train(data, penalty, c, LossKind::SquaredHinge, opts)
}

pub fn train_logreg(
    data: &LabeledDataset,
    penalty: Penalty,
    c: f64,
    opts: SolverOptions,
) -> Result<LinearFit> {
    train(data, penalty, c, LossKind::Logistic, opts)
}

struct Problem<'a> {
    x: ArrayView2<'a, f64>,
    y: Array1<f64>,
    c: f64,
    loss: LossKind,
    penalty: Penalty,
}

#[derive(Clone)]
struct Point {
    w: Array1<f64>,
    b: f64,
}

impl Point {
    fn zeros(d: usize) -> Self {
        Self { w: Array1::zeros(d), b: 0.0 }
    }

    fn sub_norm2(&self, other: &Point) -> f64 {
        let dw = &self.w - &other.w;
        dw.dot(&dw) + (self.b - other.b).powi(2)
    }
}

fn log1pexp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Problem<'_> {
    fn margins(&self, p: &Point) -> Array1<f64> {
        let mut m = self.x.dot(&p.w);
        Zip::from(&mut m).and(&self.y).for_each(|m, &y| *m = y * (*m + p.b));
        m
    }

    fn loss_value(&self, m: f64) -> f64 {
        match self.loss {
            LossKind::SquaredHinge => {
                let h = (1.0 - m).max(0.0);
                h * h
            }
            LossKind::Logistic => log1pexp(-m),
        }
    }

    fn loss_slope(&self, m: f64) -> f64 {
        match self.loss {
            LossKind::SquaredHinge => -2.0 * (1.0 - m).max(0.0),
            LossKind::Logistic => -sigmoid(-m),
        }
    }

    fn smooth(&self, p: &Point) -> f64 {
        self.c * self.margins(p).iter().map(|&m| self.loss_value(m)).sum::<f64>()
    }

    fn smooth_grad(&self, p: &Point) -> (f64, Point) {
        let m = self.margins(p);
        let mut value = 0.0;
        let mut coef = Array1::zeros(m.len());
        for ((c, &mi), &yi) in coef.iter_mut().zip(m.iter()).zip(self.y.iter()) {
            value += self.loss_value(mi);
            *c = self.c * self.loss_slope(mi) * yi;
        }
        let gw = self.x.t().dot(&coef);
        let gb = coef.sum();
        (self.c * value, Point { w: gw, b: gb })
    }

    fn penalty_value(&self, w: &Array1<f64>) -> f64 {
        match self.penalty {
            Penalty::L1 => w.iter().map(|v| v.abs()).sum(),
            Penalty::L2 => 0.5 * w.dot(w),
        }
    }

    fn objective(&self, p: &Point) -> f64 {
        self.penalty_value(&p.w) + self.smooth(p)
    }

    /// Prox of `step * penalty` applied to the weights; the bias passes through.
    fn prox(&self, mut u: Point, step: f64) -> Point {
        match self.penalty {
            Penalty::L1 => u.w.mapv_inplace(|v| {
                if v > step {
                    v - step
                } else if v < -step {
                    v + step
                } else {
                    0.0
                }
            }),
            Penalty::L2 => u.w.mapv_inplace(|v| v / (1.0 + step)),
        }
        u
    }
}

fn train(
    data: &LabeledDataset,
    penalty: Penalty,
    c: f64,
    loss: LossKind,
    opts: SolverOptions,
) -> Result<LinearFit> {
    if data.class_count() != 2 {
        return Err(Error::InvalidDataset(format!(
            "binary trainer needs 2 classes, got {}",
            data.class_count()
        )));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::argument(format!("C must be positive, got {c}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::argument(format!("tol must be positive, got {}", opts.tol)));
    }
    let prob = Problem {
        x: data.x(),
        y: data.y().iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect(),
        c,
        loss,
        penalty,
    };

    let mut x = Point::zeros(data.dim());
    let mut fx = prob.objective(&x);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut lip = 1.0f64;
    let mut history = vec![fx];
    let mut converged = false;
    let mut stalled = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let (fy, gy) = prob.smooth_grad(&y);
        lip = (lip * 0.8).max(1e-12);
        // backtracking on the quadratic upper bound of the smooth part
        let z = loop {
            let step = 1.0 / lip;
            let trial = Point {
                w: &y.w - &(&gy.w * step),
                b: y.b - gy.b * step,
            };
            let z = prob.prox(trial, step);
            let lin = gy.w.dot(&(&z.w - &y.w)) + gy.b * (z.b - y.b);
            let bound = fy + lin + 0.5 * lip * z.sub_norm2(&y);
            let fz = prob.smooth(&z);
            if fz <= bound + 1e-12 * fy.abs().max(1.0) || lip > 1e300 {
                break z;
            }
            lip *= 2.0;
        };
        let fz = prob.objective(&z);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let prev = x.clone();
        if fz <= fx {
            stalled = false;
            x = z.clone();
            fx = fz;
            let a = t / t_next;
            let bcoef = (t - 1.0) / t_next;
            y = Point {
                w: &x.w + &((&z.w - &x.w) * a) + &((&x.w - &prev.w) * bcoef),
                b: x.b + a * (z.b - x.b) + bcoef * (x.b - prev.b),
            };
            t = t_next;
        } else {
            // momentum overshoot: restart from the best point
            if stalled {
                history.push(fx);
                converged = true;
                break;
            }
            stalled = true;
            y = x.clone();
            t = 1.0;
        }
        history.push(fx);
        if !fx.is_finite() {
            return Err(Error::input("objective became non-finite; check feature scaling"));
        }
        let k = history.len() - 1;
        if k >= WINDOW && !stalled {
            let drop = (history[k - WINDOW] - history[k]) / WINDOW as f64;
            if drop <= opts.tol * history[k].abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
    }

    Ok(LinearFit {
        model: LinearModel {
            w: x.w,
            b: x.b,
            penalty,
            c,
            loss,
        },
        converged,
        objective: fx,
        iterations,
        history,
    })
}
