//! Online hyper-representation learning with linear models.
//!
//! Inner: `g_t(Λ, w) = ‖X^g Λ w − Y^g‖² + (γ/2)‖w‖²`.
//! Outer: `f_t(Λ, w) = ‖X^f Λ w − Y^f‖²`.
//!
//! `Λ` is `p × d`, flattened row-major into the outer variable. Minibatches are
//! drawn from `Y = X Λ* w* + noise` with standard normal `X`, `Λ*` and `w*`.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::{normal_mat, normal_vec, rng_for, seed_tags, Drift, Family, ProblemStream, StreamConfig};
use crate::error::{OboError, Result};
use crate::oracle::{RegularityConstants, RoundOracle};
use crate::types::{flatten_row_major, Matrix, Vector};

#[derive(Debug, Clone)]
struct GroundTruth {
    lambda: Matrix,
    w: Vector,
}

impl GroundTruth {
    fn draw(rng: &mut ChaCha8Rng, p: usize, d: usize, scale: f64) -> Self {
        Self {
            lambda: normal_mat(rng, p, d) * scale,
            w: normal_vec(rng, d) * scale,
        }
    }
}

#[derive(Debug)]
pub struct HrStream {
    cfg: StreamConfig,
    base: GroundTruth,
    circle: (GroundTruth, GroundTruth),
}

pub fn make_hr_stream(cfg: &StreamConfig) -> Result<HrStream> {
    if cfg.family != Family::HyperRep {
        return Err(OboError::Config(format!(
            "hyper-representation stream requested for family {}",
            cfg.family.as_str()
        )));
    }
    cfg.validate_common()?;
    let p = &cfg.hyper_rep;
    if p.p == 0 || p.d == 0 || p.batch_f == 0 || p.batch_g == 0 {
        return Err(OboError::Config(
            "hyper_rep dimensions and batch sizes must be positive".into(),
        ));
    }
    if !(p.gamma > 0.0 && p.gamma.is_finite()) {
        return Err(OboError::Config(format!("gamma must be positive, got {}", p.gamma)));
    }
    let mut rng = rng_for(cfg.seed, seed_tags::FIXED);
    let base = GroundTruth::draw(&mut rng, p.p, p.d, 1.0);
    let circle = (
        GroundTruth::draw(&mut rng, p.p, p.d, 1.0),
        GroundTruth::draw(&mut rng, p.p, p.d, 1.0),
    );
    Ok(HrStream {
        cfg: cfg.clone(),
        base,
        circle,
    })
}

impl HrStream {
    /// Ground-truth model generating round `t`'s minibatches.
    pub fn ground_truth(&self, t: usize) -> (Matrix, Vector) {
        let p = &self.cfg.hyper_rep;
        let truth = match self.cfg.drift {
            Drift::Static => self.base.clone(),
            Drift::Staged { magnitude, .. } => {
                let stage = self.cfg.drift.stage(t);
                if stage == 0 {
                    self.base.clone()
                } else {
                    let mut rng = rng_for(self.cfg.seed, seed_tags::STAGE + stage as u64);
                    GroundTruth::draw(&mut rng, p.p, p.d, magnitude)
                }
            }
            Drift::Smooth { magnitude, .. } => {
                let (cos_m1, sin) = self.cfg.drift.rotation(t);
                let lambda = &self.base.lambda
                    + &self.circle.0.lambda * (magnitude * cos_m1)
                    + &self.circle.1.lambda * (magnitude * sin);
                let w = &self.base.w
                    + &self.circle.0.w * (magnitude * cos_m1)
                    + &self.circle.1.w * (magnitude * sin);
                GroundTruth { lambda, w }
            }
        };
        (truth.lambda, truth.w)
    }

    pub fn ground_truth_flat(&self, t: usize) -> (Vector, Vector) {
        let (lambda, w) = self.ground_truth(t);
        (flatten_row_major(&lambda), w)
    }

    pub fn round(&self, t: usize) -> Result<HrOracle> {
        if t == 0 || t > self.cfg.horizon {
            return Err(OboError::Argument(format!(
                "round {t} outside 1..={}",
                self.cfg.horizon
            )));
        }
        let p = &self.cfg.hyper_rep;
        let (lambda_star, w_star) = self.ground_truth(t);
        let signal = &lambda_star * &w_star;
        let mut rng = rng_for(self.cfg.seed, seed_tags::ROUND + t as u64);
        let mut batch = |n: usize| {
            let x = normal_mat(&mut rng, n, p.p);
            let noise = normal_vec(&mut rng, n);
            let y = &x * &signal + noise * self.cfg.noise_std;
            (x, y)
        };
        let (x_f, y_f) = batch(p.batch_f);
        let (x_g, y_g) = batch(p.batch_g);
        Ok(HrOracle {
            t,
            p: p.p,
            d: p.d,
            gamma: p.gamma,
            x_f,
            y_f,
            x_g,
            y_g,
        })
    }
}

impl ProblemStream for HrStream {
    fn family(&self) -> Family {
        Family::HyperRep
    }

    fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    fn dim_x(&self) -> usize {
        self.cfg.hyper_rep.p * self.cfg.hyper_rep.d
    }

    fn dim_y(&self) -> usize {
        self.cfg.hyper_rep.d
    }

    fn oracle(&self, t: usize) -> Result<Arc<dyn RoundOracle>> {
        Ok(Arc::new(self.round(t)?))
    }

    /// `mu_g = γ`; `l1` is the inner curvature bound at the stage-0 ground
    /// truth averaged over the first round's batch (a per-run estimate, since
    /// the true bound depends on `Λ`).
    fn constants(&self) -> RegularityConstants {
        let gamma = self.cfg.hyper_rep.gamma;
        let (lambda, _) = self.ground_truth(1);
        let l1 = self
            .round(1)
            .map(|o| o.inner_smoothness(&flatten_row_major(&lambda)))
            .unwrap_or(gamma);
        RegularityConstants {
            mu_g: gamma,
            l1: l1.max(gamma),
            d_bound: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HrOracle {
    t: usize,
    p: usize,
    d: usize,
    gamma: f64,
    x_f: Matrix,
    y_f: Vector,
    x_g: Matrix,
    y_g: Vector,
}

impl HrOracle {
    fn lambda(&self, x: &Vector) -> Matrix {
        Matrix::from_fn(self.p, self.d, |i, j| x[i * self.d + j])
    }

    /// `(XΛ, XΛw − Y)` for one split.
    fn features_and_residual(&self, data: &Matrix, target: &Vector, x: &Vector, w: &Vector) -> (Matrix, Vector) {
        let features = data * self.lambda(x);
        let residual = &features * w - target;
        (features, residual)
    }

    fn inner_matrix(&self, features: &Matrix) -> Matrix {
        let mut h = features.transpose() * features * 2.0;
        for i in 0..self.d {
            h[(i, i)] += self.gamma;
        }
        h
    }

    pub fn batches(&self) -> (&Matrix, &Vector, &Matrix, &Vector) {
        (&self.x_f, &self.y_f, &self.x_g, &self.y_g)
    }
}

impl RoundOracle for HrOracle {
    fn round(&self) -> usize {
        self.t
    }

    fn dim_x(&self) -> usize {
        self.p * self.d
    }

    fn dim_y(&self) -> usize {
        self.d
    }

    fn f_value(&self, x: &Vector, y: &Vector) -> f64 {
        self.features_and_residual(&self.x_f, &self.y_f, x, y).1.norm_squared()
    }

    fn g_value(&self, x: &Vector, y: &Vector) -> Option<f64> {
        let (_, r) = self.features_and_residual(&self.x_g, &self.y_g, x, y);
        Some(r.norm_squared() + 0.5 * self.gamma * y.norm_squared())
    }

    fn grad_f_x(&self, x: &Vector, y: &Vector) -> Vector {
        let (_, r) = self.features_and_residual(&self.x_f, &self.y_f, x, y);
        let g = self.x_f.transpose() * r * y.transpose() * 2.0;
        flatten_row_major(&g)
    }

    fn grad_f_y(&self, x: &Vector, y: &Vector) -> Vector {
        let (m, r) = self.features_and_residual(&self.x_f, &self.y_f, x, y);
        m.transpose() * r * 2.0
    }

    fn grad_g_y(&self, x: &Vector, y: &Vector) -> Vector {
        let (m, r) = self.features_and_residual(&self.x_g, &self.y_g, x, y);
        m.transpose() * r * 2.0 + y * self.gamma
    }

    fn hess_g_yy_vec(&self, x: &Vector, _y: &Vector, v: &Vector) -> Vector {
        let m = &self.x_g * self.lambda(x);
        m.transpose() * (&m * v) * 2.0 + v * self.gamma
    }

    /// `2 [X^gᵀ r vᵀ + X^gᵀ (X^g Λ v) wᵀ]`, flattened.
    fn cross_g_xy_vec(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        let (m, r) = self.features_and_residual(&self.x_g, &self.y_g, x, y);
        let xt = self.x_g.transpose();
        let g = (&xt * r * v.transpose() + &xt * (&m * v) * y.transpose()) * 2.0;
        flatten_row_major(&g)
    }

    fn has_exact_inner(&self) -> bool {
        true
    }

    fn y_star(&self, x: &Vector) -> Option<Vector> {
        let m = &self.x_g * self.lambda(x);
        let rhs = m.transpose() * &self.y_g * 2.0;
        self.inner_matrix(&m).cholesky().map(|c| c.solve(&rhs))
    }

    fn strong_convexity(&self, _x: &Vector) -> f64 {
        self.gamma
    }

    /// `2‖X^g Λ‖_F² + γ`, an upper bound on the spectral curvature.
    fn inner_smoothness(&self, x: &Vector) -> f64 {
        let m = &self.x_g * self.lambda(x);
        2.0 * m.norm_squared() + self.gamma
    }
}
