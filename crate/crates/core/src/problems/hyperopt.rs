//! Online hyperparameter optimization on a synthetic multiclass stream.
//!
//! Inner: mean multinomial logistic loss on the training batch plus
//! `½ Σ_j exp(λ_j) ‖W_{·j}‖²`. Outer: mean logistic loss on the validation
//! batch. `W` is `classes × features`, flattened row-major; `λ` has one entry
//! per feature. No closed-form inner minimizer exists.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{normal_mat, rng_for, seed_tags, Drift, Family, ProblemStream, StreamConfig};
use crate::error::{OboError, Result};
use crate::oracle::{RegularityConstants, RoundOracle};
use crate::types::{flatten_row_major, Matrix, Vector};

#[derive(Debug)]
pub struct HoStream {
    cfg: StreamConfig,
    base: Matrix,
}

pub fn make_ho_stream(cfg: &StreamConfig) -> Result<HoStream> {
    if cfg.family != Family::Hyperopt {
        return Err(OboError::Config(format!(
            "hyperparameter stream requested for family {}",
            cfg.family.as_str()
        )));
    }
    cfg.validate_common()?;
    let p = &cfg.hyperopt;
    if p.classes < 2 || p.features == 0 || p.batch == 0 || p.val_batch == 0 {
        return Err(OboError::Config(
            "hyperopt needs >= 2 classes and positive features / batch sizes".into(),
        ));
    }
    if !(p.lambda_lo <= p.lambda_hi && p.lambda_lo.is_finite() && p.lambda_hi.is_finite()) {
        return Err(OboError::Config("lambda_lo must not exceed lambda_hi".into()));
    }
    let mut previous_start = 0;
    for &(start, fraction) in &p.corruption {
        if start <= previous_start {
            return Err(OboError::Config(
                "corruption schedule start rounds must be >= 1 and strictly increasing".into(),
            ));
        }
        if !(0.0..1.0).contains(&fraction) {
            return Err(OboError::Config(format!(
                "corruption fraction must lie in [0, 1), got {fraction}"
            )));
        }
        previous_start = start;
    }
    let base = normal_mat(&mut rng_for(cfg.seed, seed_tags::FIXED), p.classes, p.features) * p.signal;
    Ok(HoStream {
        cfg: cfg.clone(),
        base,
    })
}

fn softmax(logits: &Vector) -> Vector {
    let max = logits.max();
    let exp = logits.map(|z| (z - max).exp());
    let total = exp.sum();
    exp / total
}

impl HoStream {
    fn teacher(&self, t: usize) -> Matrix {
        let p = &self.cfg.hyperopt;
        match self.cfg.drift {
            Drift::Staged { magnitude, .. } if self.cfg.drift.stage(t) > 0 => {
                let stage = self.cfg.drift.stage(t) as u64;
                normal_mat(&mut rng_for(self.cfg.seed, seed_tags::STAGE + stage), p.classes, p.features)
                    * (p.signal * magnitude)
            }
            _ => self.base.clone(),
        }
    }

    /// Label-noise fraction in force at round `t`.
    pub fn corruption_at(&self, t: usize) -> f64 {
        self.cfg
            .hyperopt
            .corruption
            .iter()
            .take_while(|(start, _)| *start <= t)
            .last()
            .map_or(0.0, |&(_, f)| f)
    }

    fn draw(&self, rng: &mut ChaCha8Rng, teacher: &Matrix, n: usize) -> (Matrix, Vec<usize>) {
        let p = &self.cfg.hyperopt;
        let scale = 1.0 / (p.features as f64).sqrt();
        let x = normal_mat(rng, n, p.features) * scale;
        let labels = (0..n)
            .map(|i| {
                let probs = softmax(&(teacher * x.row(i).transpose()));
                let u: f64 = rng.random();
                let mut acc = 0.0;
                probs
                    .iter()
                    .position(|&q| {
                        acc += q;
                        u < acc
                    })
                    .unwrap_or(p.classes - 1)
            })
            .collect();
        (x, labels)
    }

    /// Clean round data: `(train_x, train_labels, val_x, val_labels)`.
    fn clean_round(&self, t: usize) -> (Matrix, Vec<usize>, Matrix, Vec<usize>, ChaCha8Rng) {
        let teacher = self.teacher(t);
        let mut rng = rng_for(self.cfg.seed, seed_tags::ROUND + t as u64);
        let (xt, yt) = self.draw(&mut rng, &teacher, self.cfg.hyperopt.batch);
        let (xv, yv) = self.draw(&mut rng, &teacher, self.cfg.hyperopt.val_batch);
        (xt, yt, xv, yv, rng)
    }

    /// Training labels before corruption.
    pub fn clean_labels(&self, t: usize) -> Vec<usize> {
        self.clean_round(t).1
    }

    pub fn round(&self, t: usize) -> Result<HoOracle> {
        if t == 0 || t > self.cfg.horizon {
            return Err(OboError::Argument(format!(
                "round {t} outside 1..={}",
                self.cfg.horizon
            )));
        }
        let p = &self.cfg.hyperopt;
        let (train_x, mut train_y, val_x, val_y, mut rng) = self.clean_round(t);
        let flips = (self.corruption_at(t) * p.batch as f64).round() as usize;
        if flips > 0 {
            for i in sample(&mut rng, p.batch, flips.min(p.batch)) {
                let shift = 1 + rng.random_range(0..p.classes - 1);
                train_y[i] = (train_y[i] + shift) % p.classes;
            }
        }
        Ok(HoOracle {
            t,
            classes: p.classes,
            features: p.features,
            train_x,
            train_y,
            val_x,
            val_y,
        })
    }
}

impl ProblemStream for HoStream {
    fn family(&self) -> Family {
        Family::Hyperopt
    }

    fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    fn dim_x(&self) -> usize {
        self.cfg.hyperopt.features
    }

    fn dim_y(&self) -> usize {
        self.cfg.hyperopt.classes * self.cfg.hyperopt.features
    }

    fn oracle(&self, t: usize) -> Result<Arc<dyn RoundOracle>> {
        Ok(Arc::new(self.round(t)?))
    }

    /// Estimates over the configured `λ` box: `mu_g = exp(lambda_lo)`,
    /// `l1 = ½ max‖x‖² + exp(lambda_hi)` with `max‖x‖²` taken as 2 (features
    /// are scaled to unit expected norm).
    fn constants(&self) -> RegularityConstants {
        let p = &self.cfg.hyperopt;
        RegularityConstants {
            mu_g: p.lambda_lo.exp(),
            l1: 1.0 + p.lambda_hi.exp(),
            d_bound: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HoOracle {
    t: usize,
    classes: usize,
    features: usize,
    train_x: Matrix,
    train_y: Vec<usize>,
    val_x: Matrix,
    val_y: Vec<usize>,
}

impl HoOracle {
    fn weights(&self, y: &Vector) -> Matrix {
        Matrix::from_fn(self.classes, self.features, |c, j| y[c * self.features + j])
    }

    fn mean_loss(&self, w: &Matrix, x: &Matrix, labels: &[usize]) -> f64 {
        let total: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &label)| {
                let z = w * x.row(i).transpose();
                let max = z.max();
                let lse = max + z.map(|v| (v - max).exp()).sum().ln();
                lse - z[label]
            })
            .sum();
        total / labels.len() as f64
    }

    /// Gradient of the mean loss with respect to `W`.
    fn mean_loss_grad(&self, w: &Matrix, x: &Matrix, labels: &[usize]) -> Matrix {
        let mut g = Matrix::zeros(self.classes, self.features);
        for (i, &label) in labels.iter().enumerate() {
            let xi = x.row(i).transpose();
            let mut p = softmax(&(w * &xi));
            p[label] -= 1.0;
            g.ger(1.0, &p, &xi, 1.0);
        }
        g / labels.len() as f64
    }

    pub fn train_labels(&self) -> &[usize] {
        &self.train_y
    }

    pub fn validation_accuracy(&self, y: &Vector) -> f64 {
        let w = self.weights(y);
        let correct = self
            .val_y
            .iter()
            .enumerate()
            .filter(|(i, &label)| (&w * self.val_x.row(*i).transpose()).argmax().0 == label)
            .count();
        correct as f64 / self.val_y.len() as f64
    }
}

impl RoundOracle for HoOracle {
    fn round(&self) -> usize {
        self.t
    }

    fn dim_x(&self) -> usize {
        self.features
    }

    fn dim_y(&self) -> usize {
        self.classes * self.features
    }

    fn f_value(&self, _x: &Vector, y: &Vector) -> f64 {
        self.mean_loss(&self.weights(y), &self.val_x, &self.val_y)
    }

    fn g_value(&self, x: &Vector, y: &Vector) -> Option<f64> {
        let w = self.weights(y);
        let reg: f64 = (0..self.features)
            .map(|j| x[j].exp() * w.column(j).norm_squared())
            .sum();
        Some(self.mean_loss(&w, &self.train_x, &self.train_y) + 0.5 * reg)
    }

    fn grad_f_x(&self, x: &Vector, _y: &Vector) -> Vector {
        Vector::zeros(x.len())
    }

    fn grad_f_y(&self, _x: &Vector, y: &Vector) -> Vector {
        flatten_row_major(&self.mean_loss_grad(&self.weights(y), &self.val_x, &self.val_y))
    }

    fn grad_g_y(&self, x: &Vector, y: &Vector) -> Vector {
        let w = self.weights(y);
        let mut g = self.mean_loss_grad(&w, &self.train_x, &self.train_y);
        for j in 0..self.features {
            let scale = x[j].exp();
            g.column_mut(j).axpy(scale, &w.column(j), 1.0);
        }
        flatten_row_major(&g)
    }

    /// `(1/n) Σ [(diag(p) − ppᵀ) V x] xᵀ + V diag(exp λ)`.
    fn hess_g_yy_vec(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        let w = self.weights(y);
        let dir = self.weights(v);
        let mut h = Matrix::zeros(self.classes, self.features);
        for i in 0..self.train_y.len() {
            let xi = self.train_x.row(i).transpose();
            let p = softmax(&(&w * &xi));
            let s = &dir * &xi;
            let ps = p.dot(&s);
            let jvp = p.component_mul(&(s - Vector::from_element(self.classes, ps)));
            h.ger(1.0, &jvp, &xi, 1.0);
        }
        h /= self.train_y.len() as f64;
        for j in 0..self.features {
            h.column_mut(j).axpy(x[j].exp(), &dir.column(j), 1.0);
        }
        flatten_row_major(&h)
    }

    /// `exp(λ_j) ⟨W_{·j}, V_{·j}⟩` per feature.
    fn cross_g_xy_vec(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        let w = self.weights(y);
        let dir = self.weights(v);
        Vector::from_fn(self.features, |j, _| x[j].exp() * w.column(j).dot(&dir.column(j)))
    }

    fn strong_convexity(&self, x: &Vector) -> f64 {
        x.iter().map(|l| l.exp()).fold(f64::INFINITY, f64::min)
    }

    fn inner_smoothness(&self, x: &Vector) -> f64 {
        let data: f64 = (0..self.train_y.len())
            .map(|i| self.train_x.row(i).norm_squared())
            .sum::<f64>()
            / self.train_y.len() as f64;
        0.5 * data + x.iter().map(|l| l.exp()).fold(0.0, f64::max)
    }
}
