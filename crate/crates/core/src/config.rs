//! Optimizer configuration and the advisory parameter check.

use serde::{Deserialize, Serialize};

use crate::error::{OboError, Result};
use crate::linear_solver::QSchedule;
use crate::oracle::RegularityConstants;

/// Projection domain for the outer variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Domain {
    #[default]
    None,
    Ball { center: Vec<f64>, radius: f64 },
    /// A length-1 `lo`/`hi` is broadcast to every coordinate.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    FixedStep,
    ConjugateGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Inner stepsize.
    pub alpha: f64,
    /// Outer stepsize.
    pub beta: f64,
    /// Window decay in `(0, 1]`.
    pub eta: f64,
    pub k_window: usize,
    /// Stepsize of the fixed-step linear solver.
    pub lambda_solver: f64,
    pub q0: usize,
    pub q_increment: f64,
    pub q_max: usize,
    /// Inner gradient steps per round (OAGD only).
    pub n_inner: usize,
    pub domain: Domain,
    pub solver: SolverKind,
    /// Start each linear solve from the previous round's solution instead of zero.
    pub warm_start: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.01,
            eta: 0.99,
            k_window: 10,
            lambda_solver: 0.5,
            q0: 1,
            q_increment: 0.5,
            q_max: 50,
            n_inner: 1,
            domain: Domain::None,
            solver: SolverKind::FixedStep,
            warm_start: false,
        }
    }
}

impl OptimizerConfig {
    /// Structural checks that do not depend on the problem constants.
    pub fn check(&self) -> Result<()> {
        // alpha = 0 / beta = 0 freeze the inner / outer variable.
        for (name, value) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(OboError::Config(format!(
                    "{name} must be finite and non-negative, got {value}"
                )));
            }
        }
        if !(self.lambda_solver.is_finite() && self.lambda_solver > 0.0) {
            return Err(OboError::Config(format!(
                "lambda_solver must be finite and positive, got {}",
                self.lambda_solver
            )));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(OboError::Config(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        if self.k_window == 0 {
            return Err(OboError::Config("k_window must be at least 1".into()));
        }
        if self.n_inner == 0 {
            return Err(OboError::Config("n_inner must be at least 1".into()));
        }
        if !(self.q_increment.is_finite() && self.q_increment >= 0.0) {
            return Err(OboError::Config(format!(
                "q_increment must be finite and non-negative, got {}",
                self.q_increment
            )));
        }
        if self.q_max < self.q0 {
            return Err(OboError::Config(format!(
                "q_max ({}) must be at least q0 ({})",
                self.q_max, self.q0
            )));
        }
        Ok(())
    }

    pub fn schedule(&self) -> QSchedule {
        QSchedule {
            q0: self.q0,
            q_increment: self.q_increment,
            q_max: self.q_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationResult {
    pub conditions: Vec<ConditionCheck>,
}

impl ValidationResult {
    pub fn all_passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&ConditionCheck> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

/// Smallest per-round Q growth that keeps the linear-solve error contracting
/// at least as fast as the inner iterate.
pub fn required_q_increment(alpha: f64, lambda_solver: f64, mu_g: f64) -> f64 {
    let inner = 1.0 - alpha * mu_g / 2.0;
    let solver = 1.0 - lambda_solver * mu_g;
    if solver == 0.0 {
        return 0.0;
    }
    inner.ln() / (2.0 * solver.ln())
}

/// Checks the stepsize and window conditions under which sublinear regret is
/// guaranteed. Advisory only: failures are reported, never raised.
pub fn validate_config(cfg: &OptimizerConfig, constants: &RegularityConstants) -> ValidationResult {
    let RegularityConstants { mu_g, l1, .. } = *constants;
    let mut conditions = Vec::with_capacity(4);

    conditions.push(ConditionCheck {
        name: "alpha <= 1/l1",
        passed: cfg.alpha <= 1.0 / l1,
        detail: format!("alpha = {}, 1/l1 = {}", cfg.alpha, 1.0 / l1),
    });
    conditions.push(ConditionCheck {
        name: "lambda_solver <= 1/l1",
        passed: cfg.lambda_solver <= 1.0 / l1,
        detail: format!("lambda_solver = {}, 1/l1 = {}", cfg.lambda_solver, 1.0 / l1),
    });

    let eta_floor = 1.0 - cfg.alpha * mu_g / 2.0;
    conditions.push(ConditionCheck {
        name: "eta in (1 - alpha*mu_g/2, 1]",
        passed: cfg.eta > eta_floor && cfg.eta <= 1.0,
        detail: format!("eta = {}, lower bound = {}", cfg.eta, eta_floor),
    });

    let required = required_q_increment(cfg.alpha, cfg.lambda_solver, mu_g);
    conditions.push(ConditionCheck {
        name: "q_increment >= log(1 - alpha*mu_g/2) / (2 log(1 - lambda_solver*mu_g))",
        passed: required.is_finite() && cfg.q_increment >= required,
        detail: format!("q_increment = {}, required = {}", cfg.q_increment, required),
    });

    ValidationResult { conditions }
}
