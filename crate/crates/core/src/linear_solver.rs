//! Hessian-vector-product solvers for `H v = b` with `H` symmetric positive definite.

use serde::{Deserialize, Serialize};

use crate::error::{OboError, Result};
use crate::types::{ensure_dim, Matrix, Vector};

/// A symmetric positive-definite linear map, known only through products.
pub trait LinearMap {
    fn dim(&self) -> usize;
    fn apply(&self, v: &Vector) -> Vector;
}

impl LinearMap for Matrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, v: &Vector) -> Vector {
        self * v
    }
}

/// Adapts a closure to [`LinearMap`].
pub struct FnMap<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&Vector) -> Vector> FnMap<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&Vector) -> Vector> LinearMap for FnMap<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: &Vector) -> Vector {
        (self.f)(v)
    }
}

/// Per-round solver budget `Q(t) = min(q_max, q0 + ceil((t - 1) * q_increment))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QSchedule {
    pub q0: usize,
    pub q_increment: f64,
    pub q_max: usize,
}

// Absorbs representation error in products like 10 * 0.1 before `ceil`.
const CEIL_SLACK: f64 = 1e-9;

pub fn q_at(schedule: &QSchedule, t: usize) -> Result<usize> {
    if t < 1 {
        return Err(OboError::Argument(format!("round index must be >= 1, got {t}")));
    }
    let growth = ((t - 1) as f64 * schedule.q_increment - CEIL_SLACK).ceil().max(0.0);
    let q = schedule.q0 as f64 + growth;
    Ok(if q >= schedule.q_max as f64 {
        schedule.q_max
    } else {
        q as usize
    })
}

fn check_dims(map: &dyn LinearMap, rhs: &Vector, v0: &Vector) -> Result<()> {
    ensure_dim(rhs, map.dim(), "linear solve rhs")?;
    ensure_dim(v0, map.dim(), "linear solve v0")
}

/// `q` iterations of `v ← v − λ (H v − b)` starting at `v0`.
///
/// With spectrum `[μ, L]` and `λ <= 1/L` the error contracts by at least
/// `1 − λμ` per iteration.
pub fn solve_fixed_step(
    map: &dyn LinearMap,
    rhs: &Vector,
    v0: &Vector,
    lambda: f64,
    q: usize,
) -> Result<Vector> {
    check_dims(map, rhs, v0)?;
    if !(lambda > 0.0) {
        return Err(OboError::Argument(format!("solver stepsize must be positive, got {lambda}")));
    }
    let mut v = v0.clone();
    for iteration in 0..q {
        let residual = map.apply(&v) - rhs;
        v.axpy(-lambda, &residual, 1.0);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(OboError::Numerical {
                context: "fixed-step solver",
                iteration: Some(iteration + 1),
            });
        }
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub solution: Vector,
    pub iterations: usize,
    pub residual_norm: f64,
}

/// Conjugate gradient from `v0`, stopping once `‖r‖ <= tol ‖rhs‖` or after
/// `max_iters` iterations.
pub fn solve_cg(
    map: &dyn LinearMap,
    rhs: &Vector,
    v0: &Vector,
    max_iters: usize,
    tol: f64,
) -> Result<CgSolution> {
    check_dims(map, rhs, v0)?;
    if !(tol >= 0.0) {
        return Err(OboError::Argument(format!("tolerance must be non-negative, got {tol}")));
    }
    let threshold = tol * rhs.norm();
    let mut x = v0.clone();
    let mut r = rhs - map.apply(&x);
    let mut rr = r.norm_squared();
    let mut p = r.clone();
    let mut iterations = 0;

    while rr.sqrt() > threshold && iterations < max_iters {
        let ap = map.apply(&p);
        let curvature = p.dot(&ap);
        if !(curvature > 0.0) || !curvature.is_finite() {
            return Err(OboError::SolverBreakdown {
                iteration: iterations + 1,
                curvature,
            });
        }
        let step = rr / curvature;
        x.axpy(step, &p, 1.0);
        r.axpy(-step, &ap, 1.0);
        let rr_next = r.norm_squared();
        p = &r + (rr_next / rr) * p;
        rr = rr_next;
        iterations += 1;
        if !rr.is_finite() {
            return Err(OboError::Numerical {
                context: "conjugate gradient",
                iteration: Some(iterations),
            });
        }
    }

    Ok(CgSolution {
        solution: x,
        iterations,
        residual_norm: rr.sqrt(),
    })
}
