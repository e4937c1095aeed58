//! Hypergradients of `F_t(x) = f_t(x, y_t*(x))`.
//!
//! The exact hypergradient is
//! `∇_x f(x, y*) − ∇_x∇_y g(x, y*) v*` with `∇²_y g(x, y*) v* = ∇_y f(x, y*)`.
//! The online estimate replaces `y*` by the current inner iterate and `v*` by a
//! truncated linear solve.

use crate::config::{OptimizerConfig, SolverKind};
use crate::error::{OboError, Result};
use crate::linear_solver::{solve_cg, solve_fixed_step, FnMap};
use crate::oracle::RoundOracle;
use crate::types::{ensure_dim, ensure_finite, Vector};

/// Default tolerance for inner solves feeding finite differences.
pub const DEFAULT_INNER_TOL: f64 = 1e-10;
/// Default relative residual for converged linear solves.
pub const DEFAULT_SOLVE_TOL: f64 = 1e-12;
/// Default finite-difference step.
/// Relative residual below which a budgeted CG solve stops early.
pub const CG_FLOOR_TOL: f64 = 1e-14;
pub const DEFAULT_FD_EPS: f64 = 1e-5;

pub const INNER_MAX_ITERS: usize = 200_000;
const POLISH_STEPS: usize = 3;

/// One round's stored hypergradient estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct HypergradRecord {
    pub round: usize,
    pub grad: Vector,
    pub v_q: Vector,
    pub solver_iters: usize,
}

fn hessian_map<'a>(
    oracle: &'a dyn RoundOracle,
    x: &'a Vector,
    y: &'a Vector,
) -> FnMap<impl Fn(&Vector) -> Vector + 'a> {
    FnMap::new(oracle.dim_y(), move |v: &Vector| oracle.hess_g_yy_vec(x, y, v))
}

/// Estimated hypergradient at `(x, y_est)` with a `q`-step linear solve from `v0`.
///
/// Every derivative is evaluated at the same point `(x, y_est)`.
pub fn estimate_hypergrad(
    oracle: &dyn RoundOracle,
    x: &Vector,
    y_est: &Vector,
    cfg: &OptimizerConfig,
    q: usize,
    v0: &Vector,
) -> Result<HypergradRecord> {
    ensure_dim(x, oracle.dim_x(), "estimate_hypergrad x")?;
    ensure_dim(y_est, oracle.dim_y(), "estimate_hypergrad y")?;
    ensure_dim(v0, oracle.dim_y(), "estimate_hypergrad v0")?;

    let rhs = oracle.grad_f_y(x, y_est);
    let map = hessian_map(oracle, x, y_est);
    let (v_q, solver_iters) = match cfg.solver {
        SolverKind::FixedStep => (solve_fixed_step(&map, &rhs, v0, cfg.lambda_solver, q)?, q),
        SolverKind::ConjugateGradient => {
            // Budget-limited; the tolerance only stops iterating on round-off.
            let sol = solve_cg(&map, &rhs, v0, q, CG_FLOOR_TOL)?;
            (sol.solution, sol.iterations)
        }
    };
    let grad = oracle.grad_f_x(x, y_est) - oracle.cross_g_xy_vec(x, y_est, &v_q);
    ensure_finite(&grad, "estimated hypergradient")?;
    Ok(HypergradRecord {
        round: oracle.round(),
        grad,
        v_q,
        solver_iters,
    })
}

/// Exact hypergradient combination at a supplied inner minimizer.
pub fn hypergrad_at(
    oracle: &dyn RoundOracle,
    x: &Vector,
    y_star: &Vector,
    solve_tol: f64,
) -> Result<Vector> {
    ensure_dim(x, oracle.dim_x(), "hypergrad x")?;
    ensure_dim(y_star, oracle.dim_y(), "hypergrad y*")?;
    let rhs = oracle.grad_f_y(x, y_star);
    let map = hessian_map(oracle, x, y_star);
    let budget = 20 * oracle.dim_y() + 100;
    let sol = solve_cg(&map, &rhs, &Vector::zeros(oracle.dim_y()), budget, solve_tol)?;
    if sol.residual_norm > solve_tol * rhs.norm() {
        return Err(OboError::Convergence {
            context: "hypergradient linear solve",
            iterations: sol.iterations,
            residual: sol.residual_norm,
        });
    }
    let grad = oracle.grad_f_x(x, y_star) - oracle.cross_g_xy_vec(x, y_star, &sol.solution);
    ensure_finite(&grad, "exact hypergradient")?;
    Ok(grad)
}

/// Exact hypergradient using the oracle's closed-form inner minimizer.
pub fn exact_hypergrad(oracle: &dyn RoundOracle, x: &Vector, solve_tol: f64) -> Result<Vector> {
    let y_star = oracle.y_star(x).ok_or(OboError::OracleCapability(
        "exact hypergradient needs a closed-form inner minimizer",
    ))?;
    hypergrad_at(oracle, x, &y_star, solve_tol)
}

/// Inner minimizer: closed form when available, otherwise a converged
/// iterative solve started from `warm` (or zero).
pub fn inner_minimizer(
    oracle: &dyn RoundOracle,
    x: &Vector,
    warm: Option<&Vector>,
    inner_tol: f64,
) -> Result<Vector> {
    if let Some(y) = oracle.y_star(x) {
        return Ok(y);
    }
    let start = warm.cloned().unwrap_or_else(|| Vector::zeros(oracle.dim_y()));
    let y = inner_solve_from(oracle, x, &start, inner_tol, INNER_MAX_ITERS)?;
    polish_inner(oracle, x, y)
}

/// Hypergradient through a high-accuracy inner solve; works for every oracle.
pub fn approx_exact_hypergrad(
    oracle: &dyn RoundOracle,
    x: &Vector,
    warm: Option<&Vector>,
    inner_tol: f64,
    solve_tol: f64,
) -> Result<(Vector, Vector)> {
    let y = inner_minimizer(oracle, x, warm, inner_tol)?;
    let grad = hypergrad_at(oracle, x, &y, solve_tol)?;
    Ok((grad, y))
}

/// Gradient descent on `y ↦ g(x, y)` from zero with stepsize `1 / L`, until
/// `‖∇_y g‖ <= tol (1 + ‖y‖)`.
pub fn inner_solve(
    oracle: &dyn RoundOracle,
    x: &Vector,
    tol: f64,
    max_iters: usize,
) -> Result<Vector> {
    inner_solve_from(oracle, x, &Vector::zeros(oracle.dim_y()), tol, max_iters)
}

pub fn inner_solve_from(
    oracle: &dyn RoundOracle,
    x: &Vector,
    y0: &Vector,
    tol: f64,
    max_iters: usize,
) -> Result<Vector> {
    if !(tol > 0.0) {
        return Err(OboError::Argument(format!("inner tolerance must be positive, got {tol}")));
    }
    ensure_dim(x, oracle.dim_x(), "inner_solve x")?;
    ensure_dim(y0, oracle.dim_y(), "inner_solve y0")?;
    let step = 1.0 / oracle.inner_smoothness(x);
    let mut y = y0.clone();
    let mut grad = oracle.grad_g_y(x, &y);
    let mut iterations = 0;
    while grad.norm() > tol * (1.0 + y.norm()) {
        if iterations == max_iters {
            return Err(OboError::Convergence {
                context: "inner solve",
                iterations,
                residual: grad.norm(),
            });
        }
        y.axpy(-step, &grad, 1.0);
        grad = oracle.grad_g_y(x, &y);
        iterations += 1;
        if !grad.norm().is_finite() {
            return Err(OboError::Numerical {
                context: "inner solve",
                iteration: Some(iterations),
            });
        }
    }
    Ok(y)
}

/// A few Newton steps (CG on the Hessian) to push an inner solution to
/// working precision.
pub fn polish_inner(oracle: &dyn RoundOracle, x: &Vector, mut y: Vector) -> Result<Vector> {
    let mut grad_norm = oracle.grad_g_y(x, &y).norm();
    for _ in 0..POLISH_STEPS {
        let grad = oracle.grad_g_y(x, &y);
        let step = {
            let map = hessian_map(oracle, x, &y);
            solve_cg(&map, &grad, &Vector::zeros(y.len()), 20 * y.len() + 100, 1e-14)?
        };
        let candidate = &y - step.solution;
        let candidate_norm = oracle.grad_g_y(x, &candidate).norm();
        if !(candidate_norm < grad_norm) {
            break;
        }
        y = candidate;
        grad_norm = candidate_norm;
    }
    Ok(y)
}

/// Central-difference gradient of `x ↦ f(x, y*(x))`, re-solving the inner
/// problem at every perturbed point.
pub fn fd_hypergrad(
    oracle: &dyn RoundOracle,
    x: &Vector,
    eps: f64,
    inner_tol: f64,
) -> Result<Vector> {
    if !(eps > 1e-8 && eps < 1e-2) {
        return Err(OboError::Argument(format!("finite-difference step {eps} outside (1e-8, 1e-2)")));
    }
    ensure_dim(x, oracle.dim_x(), "fd_hypergrad x")?;
    let center = inner_minimizer(oracle, x, None, inner_tol)?;
    let composite = |xp: &Vector| -> Result<f64> {
        let y = inner_minimizer(oracle, xp, Some(&center), inner_tol)?;
        Ok(oracle.f_value(xp, &y))
    };
    let mut probe = x.clone();
    let mut out = Vector::zeros(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let plus = composite(&probe)?;
        probe[i] = orig - eps;
        let minus = composite(&probe)?;
        probe[i] = orig;
        out[i] = (plus - minus) / (2.0 * eps);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::tests::Trivial;
    use crate::types::Matrix;

    /// `g = ½‖y − a‖²`, `f = ½‖x‖² + ½‖y‖²`: inner problem independent of `x`.
    #[derive(Debug)]
    struct Shifted {
        a: Vector,
        exact: bool,
    }

    impl RoundOracle for Shifted {
        fn round(&self) -> usize {
            3
        }
        fn dim_x(&self) -> usize {
            2
        }
        fn dim_y(&self) -> usize {
            self.a.len()
        }
        fn f_value(&self, x: &Vector, y: &Vector) -> f64 {
            0.5 * x.norm_squared() + 0.5 * y.norm_squared()
        }
        fn grad_f_x(&self, x: &Vector, _y: &Vector) -> Vector {
            x.clone()
        }
        fn grad_f_y(&self, _x: &Vector, y: &Vector) -> Vector {
            y.clone()
        }
        fn grad_g_y(&self, _x: &Vector, y: &Vector) -> Vector {
            y - &self.a
        }
        fn hess_g_yy_vec(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Vector {
            v.clone()
        }
        fn cross_g_xy_vec(&self, _x: &Vector, _y: &Vector, _v: &Vector) -> Vector {
            Vector::zeros(2)
        }
        fn has_exact_inner(&self) -> bool {
            self.exact
        }
        fn y_star(&self, _x: &Vector) -> Option<Vector> {
            self.exact.then(|| self.a.clone())
        }
        fn strong_convexity(&self, _x: &Vector) -> f64 {
            1.0
        }
        fn inner_smoothness(&self, _x: &Vector) -> f64 {
            1.0
        }
    }

    /// Coupled quadratic with hand-coded closed forms:
    /// `g = ½ yᵀAy − yᵀBx`, `f = ½‖y − d‖² + ½‖x‖²`.
    #[derive(Debug)]
    struct Coupled {
        a: Matrix,
        b: Matrix,
        d: Vector,
    }

    impl RoundOracle for Coupled {
        fn round(&self) -> usize {
            1
        }
        fn dim_x(&self) -> usize {
            self.b.ncols()
        }
        fn dim_y(&self) -> usize {
            self.a.nrows()
        }
        fn f_value(&self, x: &Vector, y: &Vector) -> f64 {
            0.5 * (y - &self.d).norm_squared() + 0.5 * x.norm_squared()
        }
        fn grad_f_x(&self, x: &Vector, _y: &Vector) -> Vector {
            x.clone()
        }
        fn grad_f_y(&self, _x: &Vector, y: &Vector) -> Vector {
            y - &self.d
        }
        fn grad_g_y(&self, x: &Vector, y: &Vector) -> Vector {
            &self.a * y - &self.b * x
        }
        fn hess_g_yy_vec(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Vector {
            &self.a * v
        }
        fn cross_g_xy_vec(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Vector {
            -(self.b.transpose() * v)
        }
        fn has_exact_inner(&self) -> bool {
            true
        }
        fn y_star(&self, x: &Vector) -> Option<Vector> {
            self.a.clone().cholesky().map(|c| c.solve(&(&self.b * x)))
        }
        fn strong_convexity(&self, _x: &Vector) -> f64 {
            self.a.symmetric_eigenvalues().min()
        }
        fn inner_smoothness(&self, _x: &Vector) -> f64 {
            self.a.symmetric_eigenvalues().max()
        }
    }

    fn coupled() -> Coupled {
        Coupled {
            a: Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            b: Matrix::from_row_slice(2, 3, &[1.0, 0.0, -1.0, 0.5, 2.0, 0.0]),
            d: Vector::from_vec(vec![0.3, -0.7]),
        }
    }

    /// Closed-form composite gradient `x + Bᵀ A⁻¹ (A⁻¹ B x − d)`.
    fn coupled_closed_form(o: &Coupled, x: &Vector) -> Vector {
        let inv = o.a.clone().try_inverse().unwrap();
        x + o.b.transpose() * &inv * (&inv * &o.b * x - &o.d)
    }

    #[test]
    fn zero_coupling_reduces_to_partial_gradient() {
        let o = Shifted {
            a: Vector::from_vec(vec![1.0, 2.0]),
            exact: true,
        };
        let x = Vector::from_vec(vec![0.25, -3.0]);
        let y = Vector::from_vec(vec![0.7, 0.1]);
        let rec = estimate_hypergrad(&o, &x, &y, &OptimizerConfig::default(), 7, &Vector::zeros(2))
            .unwrap();
        assert_eq!(rec.grad.as_slice(), o.grad_f_x(&x, &y).as_slice());
        assert_eq!(rec.round, 3);
    }

    #[test]
    fn zero_budget_skips_correction() {
        let o = coupled();
        let x = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        let y = Vector::from_vec(vec![-1.0, 0.5]);
        let rec = estimate_hypergrad(&o, &x, &y, &OptimizerConfig::default(), 0, &Vector::zeros(2))
            .unwrap();
        assert_eq!(rec.grad, o.grad_f_x(&x, &y));
        assert_eq!(rec.v_q, Vector::zeros(2));
    }

    #[test]
    fn estimate_converges_to_exact_with_large_budget() {
        let o = coupled();
        let x = Vector::from_vec(vec![0.4, -1.2, 0.9]);
        let y = o.y_star(&x).unwrap();
        let cfg = OptimizerConfig {
            lambda_solver: 0.4,
            ..Default::default()
        };
        let rec = estimate_hypergrad(&o, &x, &y, &cfg, 400, &Vector::zeros(2)).unwrap();
        let exact = coupled_closed_form(&o, &x);
        assert!((rec.grad - &exact).norm() < 1e-8);
        assert!((exact_hypergrad(&o, &x, 1e-14).unwrap() - exact).norm() < 1e-10);
    }

    #[test]
    fn cg_solver_kind_reports_actual_iterations() {
        let o = coupled();
        let x = Vector::from_vec(vec![0.4, -1.2, 0.9]);
        let y = o.y_star(&x).unwrap();
        let cfg = OptimizerConfig {
            solver: SolverKind::ConjugateGradient,
            ..Default::default()
        };
        let rec = estimate_hypergrad(&o, &x, &y, &cfg, 50, &Vector::zeros(2)).unwrap();
        assert!(rec.solver_iters <= 2);
        assert!((rec.grad - coupled_closed_form(&o, &x)).norm() < 1e-10);
    }

    #[test]
    fn decoupled_exact_hypergradient_is_x() {
        // f = ½‖x‖² + ½‖y‖², g = ½‖y‖²: y* = 0, v* = 0.
        let o = Shifted {
            a: Vector::zeros(2),
            exact: true,
        };
        let x = Vector::from_vec(vec![1.5, -0.5]);
        assert_eq!(exact_hypergrad(&o, &x, 1e-12).unwrap(), x);
    }

    #[test]
    fn exact_hypergrad_requires_closed_form() {
        let o = Shifted {
            a: Vector::zeros(2),
            exact: false,
        };
        let err = exact_hypergrad(&o, &Vector::zeros(2), 1e-12).unwrap_err();
        assert!(matches!(err, OboError::OracleCapability(_)));
    }

    #[test]
    fn fd_matches_closed_form() {
        let o = coupled();
        let x = Vector::from_vec(vec![0.4, -1.2, 0.9]);
        let fd = fd_hypergrad(&o, &x, DEFAULT_FD_EPS, DEFAULT_INNER_TOL).unwrap();
        let exact = coupled_closed_form(&o, &x);
        assert!((fd - &exact).norm() / exact.norm() < 1e-6);
    }

    #[test]
    fn fd_of_constant_composite_is_zero() {
        let o = Trivial { dx: 3, dy: 2 };
        let fd = fd_hypergrad(&o, &Vector::from_vec(vec![1.0, 2.0, 3.0]), 1e-5, 1e-10).unwrap();
        assert!(fd.norm() < 1e-6);
    }

    #[test]
    fn inner_solve_finds_shift() {
        let a = Vector::from_vec(vec![3.0, -4.0]);
        let o = Shifted {
            a: a.clone(),
            exact: false,
        };
        let y = inner_solve(&o, &Vector::zeros(2), 1e-9, 100).unwrap();
        assert!((y - a).norm() < 1e-8);
    }

    #[test]
    fn inner_solve_with_no_budget_fails() {
        let o = Shifted {
            a: Vector::from_vec(vec![1.0, 1.0]),
            exact: false,
        };
        let err = inner_solve(&o, &Vector::zeros(2), 1e-9, 0).unwrap_err();
        match err {
            OboError::Convergence { residual, .. } => assert!(residual > 1.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fd_through_iterative_inner_solve() {
        let o = Shifted {
            a: Vector::from_vec(vec![1.0, -2.0]),
            exact: false,
        };
        let x = Vector::from_vec(vec![0.5, 0.25]);
        let fd = fd_hypergrad(&o, &x, 1e-5, 1e-10).unwrap();
        assert!((fd - &x).norm() < 1e-6);
    }
}
