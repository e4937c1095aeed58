//! Post-hoc metrics over a run trajectory: bilevel local regret (window
//! evaluated at each round's own iterate, and the variant re-evaluating past
//! rounds at the current iterate), hypergradient error, inner error and
//! variation proxies.

use serde::Serialize;

use crate::error::{OboError, Result};
use crate::hypergrad::{approx_exact_hypergrad, DEFAULT_INNER_TOL, DEFAULT_SOLVE_TOL};
use crate::optimizers::{normalization, StepLog};
use crate::oracle::RoundOracle;
use crate::problems::ProblemStream;
use crate::types::{CompensatedSum, Vector};

/// Tolerances used for every "exact" measurement.
pub const MEASURE_INNER_TOL: f64 = DEFAULT_INNER_TOL;
pub const MEASURE_SOLVE_TOL: f64 = DEFAULT_SOLVE_TOL;

/// One round of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    /// `x_t`.
    pub x: Vector,
    /// `y_{t+1}`.
    pub y_next: Vector,
    /// Estimated hypergradient at `(x_t, y_{t+1})`.
    pub est_grad: Vector,
    /// Exact hypergradient at `(x_t, y_t*(x_t))`.
    pub exact_grad: Vector,
    /// `y_t*(x_t)`.
    pub y_star: Vector,
    /// `f_t(x_t, y_t*(x_t))`.
    pub f_at_optimum: f64,
    pub wallclock_ns: u64,
    /// `y_{t+1}*(x_t)`, absent on the last round.
    pub next_y_star: Option<Vector>,
    /// `f_{t+1}(x_t, y_{t+1}*(x_t))`, absent on the last round.
    pub next_f: Option<f64>,
}

impl RoundRecord {
    /// Measures the exact quantities of round `oracle.round()` for a finished step.
    pub fn measure(oracle: &dyn RoundOracle, step: &StepLog, wallclock_ns: u64) -> Result<Self> {
        let (exact_grad, y_star) = approx_exact_hypergrad(
            oracle,
            &step.x,
            Some(&step.y_next),
            MEASURE_INNER_TOL,
            MEASURE_SOLVE_TOL,
        )?;
        let f_at_optimum = oracle.f_value(&step.x, &y_star);
        Ok(Self {
            t: step.round,
            x: step.x.clone(),
            y_next: step.y_next.clone(),
            est_grad: step.record.grad.clone(),
            exact_grad,
            y_star,
            f_at_optimum,
            wallclock_ns,
            next_y_star: None,
            next_f: None,
        })
    }

    /// Evaluates the next round's inner minimizer and outer value at this round's `x_t`.
    pub fn attach_next(&mut self, next: &dyn RoundOracle) -> Result<()> {
        let y = crate::hypergrad::inner_minimizer(next, &self.x, Some(&self.y_star), MEASURE_INNER_TOL)?;
        self.next_f = Some(next.f_value(&self.x, &y));
        self.next_y_star = Some(y);
        Ok(())
    }
}

/// Append-only trajectory with contiguous rounds starting at 1.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    rows: Vec<RoundRecord>,
}

impl RunLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: RoundRecord) -> Result<()> {
        let expected = self.rows.len() + 1;
        if row.t != expected {
            return Err(OboError::Argument(format!(
                "run log expects round {expected}, got {}",
                row.t
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[RoundRecord] {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut [RoundRecord] {
        &mut self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn check_window(eta: f64, k: usize) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) || k == 0 {
        return Err(OboError::Argument(format!(
            "regret window needs eta in (0, 1] and k >= 1 (got {eta}, {k})"
        )));
    }
    Ok(())
}

/// Per-round regret `‖(1/W) Σ_{i<K} η^i ∇f_{t−i}(x_{t−i}, y*_{t−i}(x_{t−i}))‖²`,
/// with rounds before the first contributing zero.
pub fn blr_series(log: &RunLog, eta: f64, k: usize) -> Result<Vec<f64>> {
    check_window(eta, k)?;
    if log.is_empty() {
        return Err(OboError::EmptyLog);
    }
    let w = normalization(eta, k);
    let rows = log.rows();
    let dim = rows[0].exact_grad.len();
    Ok((0..rows.len())
        .map(|t| {
            let mut acc = Vector::zeros(dim);
            let mut weight = 1.0;
            for i in 0..k.min(t + 1) {
                acc.axpy(weight, &rows[t - i].exact_grad, 1.0);
                weight *= eta;
            }
            (acc / w).norm_squared()
        })
        .collect())
}

/// Per-round regret with every windowed past function re-evaluated at the
/// current iterate: `‖(1/W) Σ_{i<K} η^i ∇f_{t−i}(x_t, y*_{t−i}(x_t))‖²`.
///
/// Needs the stream so past oracles can be regenerated; costs `O(K)`
/// hypergradients per round.
pub fn blr_static_series(
    log: &RunLog,
    stream: &dyn ProblemStream,
    eta: f64,
    k: usize,
) -> Result<Vec<f64>> {
    check_window(eta, k)?;
    if log.is_empty() {
        return Err(OboError::EmptyLog);
    }
    let w = normalization(eta, k);
    let rows = log.rows();
    let mut out = Vec::with_capacity(rows.len());
    for (idx, row) in rows.iter().enumerate() {
        let mut acc = Vector::zeros(row.x.len());
        let mut weight = 1.0;
        for i in 0..k.min(idx + 1) {
            let grad = if i == 0 {
                row.exact_grad.clone()
            } else {
                let past = stream.oracle(row.t - i)?;
                approx_exact_hypergrad(
                    past.as_ref(),
                    &row.x,
                    Some(&row.y_star),
                    MEASURE_INNER_TOL,
                    MEASURE_SOLVE_TOL,
                )?
                .0
            };
            acc.axpy(weight, &grad, 1.0);
            weight *= eta;
        }
        out.push((acc / w).norm_squared());
    }
    Ok(out)
}

/// Running sums with compensated accumulation.
pub fn cumulative(series: &[f64]) -> Vec<f64> {
    let mut sum = CompensatedSum::default();
    series
        .iter()
        .map(|&v| {
            sum.add(v);
            sum.value()
        })
        .collect()
}

/// `‖∇f_t(x_t, y_t*(x_t)) − ∇̂f_t(x_t, y_{t+1})‖²` per round.
pub fn hypergrad_error_series(log: &RunLog) -> Vec<f64> {
    log.rows()
        .iter()
        .map(|r| (&r.exact_grad - &r.est_grad).norm_squared())
        .collect()
}

/// Variation proxies evaluated along the trajectory. The suprema over `x` in
/// the path-length and function-variation definitions are replaced by the
/// value at the iterate, so both proxies are lower bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariationStats {
    /// `Σ_t [f_{t+1}(x_t, y*_{t+1}(x_t)) − f_t(x_t, y*_t(x_t))]`, proxy (lower bound).
    pub v1_proxy: f64,
    /// `Σ_{t≥2} ‖y*_{t−1}(x_{t−1}) − y*_t(x_{t−1})‖²`, proxy (lower bound).
    pub h2_proxy: f64,
    /// `‖y_{t+1} − y_t*(x_t)‖²` per round.
    pub inner_err: Vec<f64>,
    /// Row `t` holds the `h2` term pairing rounds `t − 1` and `t` (zero at `t = 1`).
    pub h2_increments: Vec<f64>,
    /// Row `t` holds the `v1` term pairing rounds `t` and `t + 1` (zero on the last round).
    pub v1_increments: Vec<f64>,
}

pub fn variation_stats(log: &RunLog) -> VariationStats {
    let rows = log.rows();
    let inner_err = rows
        .iter()
        .map(|r| (&r.y_next - &r.y_star).norm_squared())
        .collect();
    let mut h2_increments = vec![0.0; rows.len()];
    let mut v1_increments = vec![0.0; rows.len()];
    for (idx, row) in rows.iter().enumerate() {
        if idx + 1 < rows.len() {
            if let Some(next) = &row.next_y_star {
                h2_increments[idx + 1] = (&row.y_star - next).norm_squared();
            }
            if let Some(next_f) = row.next_f {
                v1_increments[idx] = (next_f - row.f_at_optimum).abs();
            }
        }
    }
    let total = |v: &[f64]| {
        let mut s = CompensatedSum::default();
        v.iter().for_each(|&x| s.add(x));
        s.value()
    };
    VariationStats {
        v1_proxy: total(&v1_increments),
        h2_proxy: total(&h2_increments),
        inner_err,
        h2_increments,
        v1_increments,
    }
}
