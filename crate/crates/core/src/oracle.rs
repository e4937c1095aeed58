//! The per-round bilevel oracle and its derivative self-check.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{OboError, Result};
use crate::types::{ensure_dim, ensure_finite, Vector};

/// One round's pair `(f_t, g_t)`: outer objective `f_t(x, y)` and inner
/// objective `g_t(x, y)`, strongly convex in `y`.
///
/// Callers are responsible for passing vectors of the advertised dimensions;
/// [`check_oracle`] and the optimizers validate them before calling in.
pub trait RoundOracle: Send + Sync + fmt::Debug {
    /// Round index `t >= 1`.
    fn round(&self) -> usize;
    fn dim_x(&self) -> usize;
    fn dim_y(&self) -> usize;

    fn f_value(&self, x: &Vector, y: &Vector) -> f64;
    /// Inner objective value, when the oracle can evaluate it.
    fn g_value(&self, _x: &Vector, _y: &Vector) -> Option<f64> {
        None
    }

    fn grad_f_x(&self, x: &Vector, y: &Vector) -> Vector;
    fn grad_f_y(&self, x: &Vector, y: &Vector) -> Vector;
    fn grad_g_y(&self, x: &Vector, y: &Vector) -> Vector;
    /// `∇²_y g(x, y) · v`, a `dim_y` vector.
    fn hess_g_yy_vec(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector;
    /// `∇_x ∇_y g(x, y) · v` for `v` in the inner space; returns a `dim_x` vector.
    fn cross_g_xy_vec(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector;

    fn has_exact_inner(&self) -> bool {
        false
    }
    /// Closed-form inner minimizer. `Some` iff [`RoundOracle::has_exact_inner`].
    fn y_star(&self, _x: &Vector) -> Option<Vector> {
        None
    }

    /// Lower bound on the smallest eigenvalue of `∇²_y g(x, ·)`.
    fn strong_convexity(&self, x: &Vector) -> f64;
    /// Upper bound on the largest eigenvalue of `∇²_y g(x, ·)`.
    fn inner_smoothness(&self, x: &Vector) -> f64;
}

/// Constants from the regularity assumptions that have a runtime role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityConstants {
    /// Strong-convexity modulus of `g_t` in `y`.
    pub mu_g: f64,
    /// Gradient Lipschitz bound.
    pub l1: f64,
    /// Diameter of the feasible set, `0` when unconstrained.
    pub d_bound: f64,
}

impl RegularityConstants {
    pub fn new(mu_g: f64, l1: f64, d_bound: f64) -> Result<Self> {
        if !(mu_g > 0.0 && l1 > 0.0 && d_bound >= 0.0) {
            return Err(OboError::Config(format!(
                "regularity constants must satisfy mu_g > 0, l1 > 0, d_bound >= 0 (got {mu_g}, {l1}, {d_bound})"
            )));
        }
        if mu_g > l1 {
            return Err(OboError::Config(format!(
                "mu_g ({mu_g}) must not exceed l1 ({l1})"
            )));
        }
        Ok(Self { mu_g, l1, d_bound })
    }
}

/// Threshold below which every entry of a [`ConsistencyReport`] must fall.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-4;

const REL_FLOOR: f64 = 1e-8;

/// Relative errors of each derivative callback against finite differences
/// or an algebraic identity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub grad_f_x: f64,
    pub grad_f_y: f64,
    /// `None` when the oracle does not expose `g_value`.
    pub grad_g_y: Option<f64>,
    /// `hess_g_yy_vec` against a central difference of `grad_g_y`.
    pub hess_vec: f64,
    /// `cross_g_xy_vec` against a central difference of `grad_g_y` in `x` (adjoint form).
    pub cross_vec: f64,
    /// `|<u, Hv> - <v, Hu>|`, relative.
    pub hess_symmetry: f64,
    /// Relative shortfall of `<v, Hv>` below `mu_g ‖v‖²`, zero when satisfied.
    pub positive_definite: f64,
}

impl ConsistencyReport {
    pub fn max_error(&self) -> f64 {
        [
            self.grad_f_x,
            self.grad_f_y,
            self.grad_g_y.unwrap_or(0.0),
            self.hess_vec,
            self.cross_vec,
            self.hess_symmetry,
            self.positive_definite,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_error() < CONSISTENCY_TOLERANCE
    }
}

fn relative_error(value: &Vector, reference: &Vector) -> f64 {
    (value - reference).norm() / reference.norm().max(REL_FLOOR)
}

fn central_gradient(func: impl Fn(&Vector) -> f64, at: &Vector, eps: f64) -> Vector {
    let mut probe = at.clone();
    Vector::from_fn(at.len(), |i, _| {
        let orig = probe[i];
        probe[i] = orig + eps;
        let plus = func(&probe);
        probe[i] = orig - eps;
        let minus = func(&probe);
        probe[i] = orig;
        (plus - minus) / (2.0 * eps)
    })
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Verifies the derivative callbacks of `oracle` at `(x, y)` with central
/// differences of step `eps`.
pub fn check_oracle(
    oracle: &dyn RoundOracle,
    x: &Vector,
    y: &Vector,
    eps: f64,
) -> Result<ConsistencyReport> {
    if !(eps > 1e-9 && eps < 1e-2) {
        return Err(OboError::Argument(format!(
            "finite-difference step {eps} outside (1e-9, 1e-2)"
        )));
    }
    ensure_dim(x, oracle.dim_x(), "check_oracle x")?;
    ensure_dim(y, oracle.dim_y(), "check_oracle y")?;
    ensure_finite(x, "check_oracle x")?;
    ensure_finite(y, "check_oracle y")?;

    let gfx = oracle.grad_f_x(x, y);
    let gfy = oracle.grad_f_y(x, y);
    let ggy = oracle.grad_g_y(x, y);
    ensure_dim(&gfx, oracle.dim_x(), "grad_f_x")?;
    ensure_dim(&gfy, oracle.dim_y(), "grad_f_y")?;
    ensure_dim(&ggy, oracle.dim_y(), "grad_g_y")?;
    for (v, ctx) in [(&gfx, "grad_f_x"), (&gfy, "grad_f_y"), (&ggy, "grad_g_y")] {
        ensure_finite(v, ctx)?;
    }
    if !oracle.f_value(x, y).is_finite() {
        return Err(OboError::Numerical {
            context: "f_value",
            iteration: None,
        });
    }

    let fd_fx = central_gradient(|xp| oracle.f_value(xp, y), x, eps);
    let fd_fy = central_gradient(|yp| oracle.f_value(x, yp), y, eps);
    let grad_g_y = match oracle.g_value(x, y) {
        Some(_) => {
            let fd = central_gradient(|yp| oracle.g_value(x, yp).unwrap_or(f64::NAN), y, eps);
            Some(relative_error(&ggy, &fd))
        }
        None => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(0x0b0_c4ec);
    let u = random_vector(&mut rng, oracle.dim_y());
    let v = random_vector(&mut rng, oracle.dim_y());
    let hu = oracle.hess_g_yy_vec(x, y, &u);
    let hv = oracle.hess_g_yy_vec(x, y, &v);
    ensure_dim(&hv, oracle.dim_y(), "hess_g_yy_vec")?;
    ensure_finite(&hv, "hess_g_yy_vec")?;

    let fd_hv = (oracle.grad_g_y(x, &(y + eps * &v)) - oracle.grad_g_y(x, &(y - eps * &v)))
        / (2.0 * eps);
    let hess_vec = relative_error(&hv, &fd_hv);

    let uhv = u.dot(&hv);
    let vhu = v.dot(&hu);
    let hess_symmetry =
        (uhv - vhu).abs() / (u.norm() * hv.norm() + v.norm() * hu.norm()).max(REL_FLOOR);

    let mu = oracle.strong_convexity(x);
    let vhv = v.dot(&hv);
    let positive_definite = ((mu * v.norm_squared() - vhv) / (mu * v.norm_squared())).max(0.0);

    // Adjoint check: <v, J_x(∇_y g) u> == <∇_x∇_y g · v, u>.
    let dx = random_vector(&mut rng, oracle.dim_x());
    let jac_u = (oracle.grad_g_y(&(x + eps * &dx), y) - oracle.grad_g_y(&(x - eps * &dx), y))
        / (2.0 * eps);
    let cross_v = oracle.cross_g_xy_vec(x, y, &v);
    ensure_dim(&cross_v, oracle.dim_x(), "cross_g_xy_vec")?;
    ensure_finite(&cross_v, "cross_g_xy_vec")?;
    let lhs = v.dot(&jac_u);
    let rhs = cross_v.dot(&dx);
    let cross_vec = (lhs - rhs).abs()
        / (v.norm() * jac_u.norm())
            .max(cross_v.norm() * dx.norm())
            .max(REL_FLOOR);

    Ok(ConsistencyReport {
        grad_f_x: relative_error(&gfx, &fd_fx),
        grad_f_y: relative_error(&gfy, &fd_fy),
        grad_g_y,
        hess_vec,
        cross_vec,
        hess_symmetry,
        positive_definite,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// `f ≡ 0`, `g = ½‖y‖²` (optionally with a planted fault in `grad_f_x`).
    #[derive(Debug)]
    pub(crate) struct Trivial {
        pub dx: usize,
        pub dy: usize,
    }

    impl RoundOracle for Trivial {
        fn round(&self) -> usize {
            1
        }
        fn dim_x(&self) -> usize {
            self.dx
        }
        fn dim_y(&self) -> usize {
            self.dy
        }
        fn f_value(&self, _x: &Vector, _y: &Vector) -> f64 {
            0.0
        }
        fn g_value(&self, _x: &Vector, y: &Vector) -> Option<f64> {
            Some(0.5 * y.norm_squared())
        }
        fn grad_f_x(&self, _x: &Vector, _y: &Vector) -> Vector {
            Vector::zeros(self.dx)
        }
        fn grad_f_y(&self, _x: &Vector, _y: &Vector) -> Vector {
            Vector::zeros(self.dy)
        }
        fn grad_g_y(&self, _x: &Vector, y: &Vector) -> Vector {
            y.clone()
        }
        fn hess_g_yy_vec(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Vector {
            v.clone()
        }
        fn cross_g_xy_vec(&self, _x: &Vector, _y: &Vector, _v: &Vector) -> Vector {
            Vector::zeros(self.dx)
        }
        fn has_exact_inner(&self) -> bool {
            true
        }
        fn y_star(&self, _x: &Vector) -> Option<Vector> {
            Some(Vector::zeros(self.dy))
        }
        fn strong_convexity(&self, _x: &Vector) -> f64 {
            1.0
        }
        fn inner_smoothness(&self, _x: &Vector) -> f64 {
            1.0
        }
    }

    /// `f = ½‖x‖² + ½‖y‖²` with `grad_f_x` doubled on purpose.
    #[derive(Debug)]
    struct PlantedFault;

    impl RoundOracle for PlantedFault {
        fn round(&self) -> usize {
            1
        }
        fn dim_x(&self) -> usize {
            2
        }
        fn dim_y(&self) -> usize {
            2
        }
        fn f_value(&self, x: &Vector, y: &Vector) -> f64 {
            0.5 * x.norm_squared() + 0.5 * y.norm_squared()
        }
        fn grad_f_x(&self, x: &Vector, _y: &Vector) -> Vector {
            2.0 * x
        }
        fn grad_f_y(&self, _x: &Vector, y: &Vector) -> Vector {
            y.clone()
        }
        fn grad_g_y(&self, _x: &Vector, y: &Vector) -> Vector {
            y.clone()
        }
        fn hess_g_yy_vec(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Vector {
            v.clone()
        }
        fn cross_g_xy_vec(&self, _x: &Vector, _y: &Vector, _v: &Vector) -> Vector {
            Vector::zeros(2)
        }
        fn strong_convexity(&self, _x: &Vector) -> f64 {
            1.0
        }
        fn inner_smoothness(&self, _x: &Vector) -> f64 {
            1.0
        }
    }

    #[test]
    fn trivial_oracle_passes() {
        let o = Trivial { dx: 3, dy: 4 };
        let x = Vector::from_vec(vec![0.3, -1.0, 2.0]);
        let y = Vector::from_vec(vec![1.0, 0.5, -0.25, 3.0]);
        let report = check_oracle(&o, &x, &y, 1e-5).unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(o.grad_f_x(&x, &y), Vector::zeros(3));
        let v = Vector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(o.hess_g_yy_vec(&x, &y, &v), v);
    }

    #[test]
    fn planted_fault_is_detected() {
        let x = Vector::from_vec(vec![1.0, -2.0]);
        let y = Vector::from_vec(vec![0.5, 0.5]);
        let report = check_oracle(&PlantedFault, &x, &y, 1e-5).unwrap();
        assert!(!report.passed());
        assert!((report.grad_f_x - 1.0).abs() < 1e-6, "{}", report.grad_f_x);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let o = Trivial { dx: 3, dy: 4 };
        let err = check_oracle(&o, &Vector::zeros(2), &Vector::zeros(4), 1e-5).unwrap_err();
        assert!(matches!(err, OboError::Dimension { .. }));
    }

    #[test]
    fn non_finite_point_is_an_error() {
        let o = Trivial { dx: 1, dy: 1 };
        let x = Vector::from_vec(vec![f64::INFINITY]);
        let err = check_oracle(&o, &x, &Vector::zeros(1), 1e-5).unwrap_err();
        assert!(matches!(err, OboError::Numerical { .. }));
    }

    #[test]
    fn eps_out_of_range() {
        let o = Trivial { dx: 1, dy: 1 };
        assert!(check_oracle(&o, &Vector::zeros(1), &Vector::zeros(1), 0.1).is_err());
    }

    #[test]
    fn constants_invariant() {
        assert!(RegularityConstants::new(2.0, 1.0, 0.0).is_err());
        assert!(RegularityConstants::new(0.5, 1.0, 0.0).is_ok());
    }
}
