//! Quadratic verification family with closed-form inner solutions:
//!
//! `g_t(x, y) = ½ yᵀA y − yᵀ(Bx + c_t)`, `f_t(x, y) = ½‖y − d_t‖² + ½ r ‖x − e_t‖²`.

use std::sync::Arc;

use nalgebra::Cholesky;
use rand::Rng;

use super::{normal_mat, normal_vec, rng_for, seed_tags, Drift, Family, ProblemStream, StreamConfig};
use crate::error::{OboError, Result};
use crate::oracle::{RegularityConstants, RoundOracle};
use crate::types::{Matrix, Vector};

#[derive(Debug)]
struct Shared {
    a: Matrix,
    a_chol: Cholesky<f64, nalgebra::Dyn>,
    b: Matrix,
    r: f64,
    mu: f64,
    l: f64,
}

/// Offsets `(c, d, e)` drawn for one stage or direction.
#[derive(Debug, Clone)]
struct Offsets {
    c: Vector,
    d: Vector,
    e: Vector,
}

impl Offsets {
    fn draw(rng: &mut rand_chacha::ChaCha8Rng, d1: usize, d2: usize) -> Self {
        Self {
            c: normal_vec(rng, d2),
            d: normal_vec(rng, d2),
            e: normal_vec(rng, d1),
        }
    }

    fn axpy(&mut self, scale: f64, other: &Offsets) {
        self.c.axpy(scale, &other.c, 1.0);
        self.d.axpy(scale, &other.d, 1.0);
        self.e.axpy(scale, &other.e, 1.0);
    }
}

#[derive(Debug)]
pub struct QuadraticStream {
    cfg: StreamConfig,
    shared: Arc<Shared>,
    base: Offsets,
    /// Two orthogonal-in-expectation directions spanning the smooth-drift circle.
    circle: (Offsets, Offsets),
}

/// Random SPD matrix `Q diag(λ) Qᵀ` with eigenvalues in `[mu, l]`, endpoints attained.
fn spd_matrix(rng: &mut rand_chacha::ChaCha8Rng, n: usize, mu: f64, l: f64) -> Matrix {
    let q = normal_mat(rng, n, n).qr().q();
    let mut eig = Vector::from_fn(n, |_, _| mu + (l - mu) * rng.random::<f64>());
    eig[0] = mu;
    if n > 1 {
        eig[n - 1] = l;
    }
    let a = &q * Matrix::from_diagonal(&eig) * q.transpose();
    (&a + a.transpose()) * 0.5
}

pub fn make_quadratic_stream(cfg: &StreamConfig) -> Result<QuadraticStream> {
    if cfg.family != Family::Quadratic {
        return Err(OboError::Config(format!(
            "quadratic stream requested for family {}",
            cfg.family.as_str()
        )));
    }
    cfg.validate_common()?;
    let p = &cfg.quadratic;
    if !(p.mu > 0.0 && p.mu <= p.l && p.l.is_finite()) {
        return Err(OboError::Config(format!(
            "quadratic spectrum must satisfy 0 < mu <= L (got [{}, {}])",
            p.mu, p.l
        )));
    }
    if p.d1 == 0 || p.d2 == 0 {
        return Err(OboError::Config("quadratic dimensions must be positive".into()));
    }
    if !(p.outer_reg >= 0.0 && p.coupling.is_finite()) {
        return Err(OboError::Config("outer_reg must be >= 0 and coupling finite".into()));
    }

    let mut rng = rng_for(cfg.seed, seed_tags::FIXED);
    let a = spd_matrix(&mut rng, p.d2, p.mu, p.l);
    let b = normal_mat(&mut rng, p.d2, p.d1) * (p.coupling / (p.d1 as f64).sqrt());
    let base = Offsets::draw(&mut rng, p.d1, p.d2);
    let circle = (
        Offsets::draw(&mut rng, p.d1, p.d2),
        Offsets::draw(&mut rng, p.d1, p.d2),
    );
    let a_chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| OboError::Config("generated inner Hessian is not positive definite".into()))?;

    Ok(QuadraticStream {
        cfg: cfg.clone(),
        shared: Arc::new(Shared {
            a,
            a_chol,
            b,
            r: p.outer_reg,
            mu: p.mu,
            l: p.l,
        }),
        base,
        circle,
    })
}

impl QuadraticStream {
    pub fn inner_hessian(&self) -> &Matrix {
        &self.shared.a
    }

    pub fn coupling(&self) -> &Matrix {
        &self.shared.b
    }

    pub fn outer_reg(&self) -> f64 {
        self.shared.r
    }

    /// Concrete oracle for round `t`.
    pub fn round(&self, t: usize) -> Result<QuadraticOracle> {
        if t == 0 || t > self.cfg.horizon {
            return Err(OboError::Argument(format!(
                "round {t} outside 1..={}",
                self.cfg.horizon
            )));
        }
        let mut offsets = self.base.clone();
        let magnitude = self.cfg.drift.magnitude();
        match self.cfg.drift {
            Drift::Static => {}
            Drift::Staged { .. } => {
                let stage = self.cfg.drift.stage(t);
                if stage > 0 {
                    let mut rng = rng_for(self.cfg.seed, seed_tags::STAGE + stage as u64);
                    let shift = Offsets::draw(&mut rng, self.cfg.quadratic.d1, self.cfg.quadratic.d2);
                    offsets.axpy(magnitude, &shift);
                }
            }
            Drift::Smooth { .. } => {
                let (cos_m1, sin) = self.cfg.drift.rotation(t);
                offsets.axpy(magnitude * cos_m1, &self.circle.0);
                offsets.axpy(magnitude * sin, &self.circle.1);
            }
        }
        if self.cfg.noise_std > 0.0 {
            let mut rng = rng_for(self.cfg.seed, seed_tags::ROUND + t as u64);
            let noise = Offsets::draw(&mut rng, self.cfg.quadratic.d1, self.cfg.quadratic.d2);
            offsets.c.axpy(self.cfg.noise_std, &noise.c, 1.0);
            offsets.d.axpy(self.cfg.noise_std, &noise.d, 1.0);
        }
        Ok(QuadraticOracle {
            t,
            shared: Arc::clone(&self.shared),
            c: offsets.c,
            d: offsets.d,
            e: offsets.e,
        })
    }
}

impl ProblemStream for QuadraticStream {
    fn family(&self) -> Family {
        Family::Quadratic
    }

    fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    fn dim_x(&self) -> usize {
        self.cfg.quadratic.d1
    }

    fn dim_y(&self) -> usize {
        self.cfg.quadratic.d2
    }

    fn oracle(&self, t: usize) -> Result<Arc<dyn RoundOracle>> {
        Ok(Arc::new(self.round(t)?))
    }

    /// `mu_g` and the largest curvature among `A`, the outer `y`-curvature (1)
    /// and the outer regularizer.
    fn constants(&self) -> RegularityConstants {
        let s = &self.shared;
        RegularityConstants {
            mu_g: s.mu,
            l1: s.l.max(1.0).max(s.r),
            d_bound: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuadraticOracle {
    t: usize,
    shared: Arc<Shared>,
    c: Vector,
    d: Vector,
    e: Vector,
}

impl QuadraticOracle {
    pub fn offsets(&self) -> (&Vector, &Vector, &Vector) {
        (&self.c, &self.d, &self.e)
    }

    /// `∇F_t(x) = Bᵀ A⁻¹ (A⁻¹(Bx + c) − d) + r (x − e)`.
    pub fn composite_gradient(&self, x: &Vector) -> Vector {
        let s = &self.shared;
        let y_star = s.a_chol.solve(&(&s.b * x + &self.c));
        let inner = s.a_chol.solve(&(y_star - &self.d));
        s.b.transpose() * inner + (x - &self.e) * s.r
    }
}

impl RoundOracle for QuadraticOracle {
    fn round(&self) -> usize {
        self.t
    }

    fn dim_x(&self) -> usize {
        self.shared.b.ncols()
    }

    fn dim_y(&self) -> usize {
        self.shared.a.nrows()
    }

    fn f_value(&self, x: &Vector, y: &Vector) -> f64 {
        0.5 * (y - &self.d).norm_squared() + 0.5 * self.shared.r * (x - &self.e).norm_squared()
    }

    fn g_value(&self, x: &Vector, y: &Vector) -> Option<f64> {
        let s = &self.shared;
        Some(0.5 * y.dot(&(&s.a * y)) - y.dot(&(&s.b * x + &self.c)))
    }

    fn grad_f_x(&self, x: &Vector, _y: &Vector) -> Vector {
        (x - &self.e) * self.shared.r
    }

    fn grad_f_y(&self, _x: &Vector, y: &Vector) -> Vector {
        y - &self.d
    }

    fn grad_g_y(&self, x: &Vector, y: &Vector) -> Vector {
        let s = &self.shared;
        &s.a * y - &s.b * x - &self.c
    }

    fn hess_g_yy_vec(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Vector {
        &self.shared.a * v
    }

    fn cross_g_xy_vec(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Vector {
        -(self.shared.b.transpose() * v)
    }

    fn has_exact_inner(&self) -> bool {
        true
    }

    fn y_star(&self, x: &Vector) -> Option<Vector> {
        let s = &self.shared;
        Some(s.a_chol.solve(&(&s.b * x + &self.c)))
    }

    fn strong_convexity(&self, _x: &Vector) -> f64 {
        self.shared.mu
    }

    fn inner_smoothness(&self, _x: &Vector) -> f64 {
        self.shared.l
    }
}
