//! Online updaters: SOBOW (window-averaged single-loop), OAGD and OGD.

mod projection;
mod window;

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use projection::{check_domain, contains, project};
pub use window::{normalization, window_average, WindowBuffer};

use crate::config::OptimizerConfig;
use crate::error::{OboError, Result};
use crate::hypergrad::{estimate_hypergrad, HypergradRecord};
use crate::linear_solver::{q_at, QSchedule};
use crate::oracle::RoundOracle;
use crate::types::{ensure_dim, ensure_finite, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sobow,
    Oagd,
    Ogd,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sobow => "sobow",
            OptimizerKind::Oagd => "oagd",
            OptimizerKind::Ogd => "ogd",
        }
    }
}

/// Live optimizer state at the start of round `t`.
#[derive(Debug, Clone)]
pub struct IterateState {
    pub t: usize,
    pub x: Vector,
    pub y: Vector,
    pub buffer: WindowBuffer,
    pub schedule: QSchedule,
    /// Previous solve, used only when `warm_start` is enabled.
    pub last_v: Option<Vector>,
}

impl IterateState {
    /// Initial state at `t = 1`; `x1` is projected onto the configured domain.
    pub fn new(x1: Vector, y1: Vector, cfg: &OptimizerConfig) -> Result<Self> {
        cfg.check()?;
        ensure_finite(&x1, "initial x")?;
        ensure_finite(&y1, "initial y")?;
        Ok(Self {
            t: 1,
            x: project(&x1, &cfg.domain)?,
            y: y1,
            buffer: WindowBuffer::new(cfg.k_window, cfg.eta)?,
            schedule: cfg.schedule(),
            last_v: None,
        })
    }
}

/// What one round did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub round: usize,
    /// `x_t`, the point the round's hypergradient was evaluated at.
    pub x: Vector,
    /// `y_{t+1}`.
    pub y_next: Vector,
    /// The current round's hypergradient estimate.
    pub record: HypergradRecord,
    /// The averaged direction actually applied to `x`.
    pub direction: Vector,
}

/// The previous `K - 1` oracles kept by OAGD, newest first.
#[derive(Debug, Clone)]
pub struct OracleWindow {
    capacity: usize,
    oracles: VecDeque<Arc<dyn RoundOracle>>,
}

impl OracleWindow {
    pub fn new(k_window: usize) -> Self {
        let capacity = k_window.saturating_sub(1);
        Self {
            capacity,
            oracles: VecDeque::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.oracles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.oracles.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<dyn RoundOracle>> {
        self.oracles.iter()
    }

    pub fn advance(&mut self, oracle: Arc<dyn RoundOracle>) {
        if self.capacity == 0 {
            return;
        }
        self.oracles.push_front(oracle);
        if self.oracles.len() > self.capacity {
            self.oracles.pop_back();
        }
    }
}

fn check_round(state: &IterateState, oracle: &dyn RoundOracle) -> Result<()> {
    if oracle.round() != state.t {
        return Err(OboError::Argument(format!(
            "oracle is for round {} but the state is at round {}",
            oracle.round(),
            state.t
        )));
    }
    ensure_dim(&state.x, oracle.dim_x(), "state x")?;
    ensure_dim(&state.y, oracle.dim_y(), "state y")
}

/// `y ← y − α ∇_y g(x, y)`.
fn inner_step(oracle: &dyn RoundOracle, x: &Vector, y: &Vector, alpha: f64) -> Result<Vector> {
    let mut next = oracle.grad_g_y(x, y);
    next.axpy(1.0, y, -alpha);
    ensure_finite(&next, "inner update")?;
    Ok(next)
}

fn solver_start(state: &IterateState, cfg: &OptimizerConfig, dim: usize) -> Vector {
    match (&state.last_v, cfg.warm_start) {
        (Some(v), true) if v.len() == dim => v.clone(),
        _ => Vector::zeros(dim),
    }
}

fn outer_step(x: &Vector, direction: &Vector, cfg: &OptimizerConfig) -> Result<Vector> {
    let mut moved = x.clone();
    moved.axpy(-cfg.beta, direction, 1.0);
    let next = project(&moved, &cfg.domain)?;
    ensure_finite(&next, "outer update")?;
    Ok(next)
}

/// One SOBOW round: single inner step, truncated linear solve at the new inner
/// point, store the estimate, projected step along the window average.
pub fn sobow_step(
    mut state: IterateState,
    oracle: &dyn RoundOracle,
    cfg: &OptimizerConfig,
) -> Result<(IterateState, StepLog)> {
    check_round(&state, oracle)?;
    let y_next = inner_step(oracle, &state.x, &state.y, cfg.alpha)?;
    let q = q_at(&state.schedule, state.t)?;
    let v0 = solver_start(&state, cfg, oracle.dim_y());
    let record = estimate_hypergrad(oracle, &state.x, &y_next, cfg, q, &v0)?;
    state.buffer.push(record.clone())?;
    let direction = window_average(&state.buffer)?;
    let x_next = outer_step(&state.x, &direction, cfg)?;

    let log = StepLog {
        round: state.t,
        x: std::mem::replace(&mut state.x, x_next),
        y_next: y_next.clone(),
        record: record.clone(),
        direction,
    };
    state.y = y_next;
    state.last_v = Some(record.v_q);
    state.t += 1;
    Ok((state, log))
}

/// Dispatches one round to the optimizer named by `kind`. `past` is only
/// used by OAGD.
pub fn step(
    kind: OptimizerKind,
    state: IterateState,
    oracle: &Arc<dyn RoundOracle>,
    past: &mut OracleWindow,
    cfg: &OptimizerConfig,
) -> Result<(IterateState, StepLog)> {
    match kind {
        OptimizerKind::Sobow => sobow_step(state, oracle.as_ref(), cfg),
        OptimizerKind::Ogd => ogd_step(state, oracle.as_ref(), cfg),
        OptimizerKind::Oagd => oagd_step(state, oracle, past, cfg),
    }
}

/// OGD: SOBOW with a window of one.
pub fn ogd_step(
    state: IterateState,
    oracle: &dyn RoundOracle,
    cfg: &OptimizerConfig,
) -> Result<(IterateState, StepLog)> {
    let single = OptimizerConfig {
        k_window: 1,
        ..cfg.clone()
    };
    let mut state = state;
    if state.buffer.capacity() != 1 {
        state.buffer = WindowBuffer::new(1, cfg.eta)?;
    }
    sobow_step(state, oracle, &single)
}

/// One OAGD round: `N` inner steps, then every windowed oracle (current and
/// up to `K - 1` past ones) is re-evaluated at the current pair `(x_t, y_{t+1})`,
/// each with its own linear solve. `past` is advanced to include `oracle`.
pub fn oagd_step(
    mut state: IterateState,
    oracle: &Arc<dyn RoundOracle>,
    past: &mut OracleWindow,
    cfg: &OptimizerConfig,
) -> Result<(IterateState, StepLog)> {
    check_round(&state, oracle.as_ref())?;
    let mut y_next = state.y.clone();
    for _ in 0..cfg.n_inner {
        y_next = inner_step(oracle.as_ref(), &state.x, &y_next, cfg.alpha)?;
    }
    let q = q_at(&state.schedule, state.t)?;
    let v0 = solver_start(&state, cfg, oracle.dim_y());
    let record = estimate_hypergrad(oracle.as_ref(), &state.x, &y_next, cfg, q, &v0)?;

    let mut estimates = Vec::with_capacity(1 + past.len());
    estimates.push(record.grad.clone());
    for previous in past.iter().take(cfg.k_window.saturating_sub(1)) {
        let past_v0 = Vector::zeros(previous.dim_y());
        let past_record = estimate_hypergrad(previous.as_ref(), &state.x, &y_next, cfg, q, &past_v0)?;
        estimates.push(past_record.grad);
    }
    let direction =
        window::weighted_average(estimates.iter(), cfg.eta, cfg.k_window, oracle.dim_x());
    let x_next = outer_step(&state.x, &direction, cfg)?;
    past.advance(Arc::clone(oracle));

    let log = StepLog {
        round: state.t,
        x: std::mem::replace(&mut state.x, x_next),
        y_next: y_next.clone(),
        record: record.clone(),
        direction,
    };
    state.y = y_next;
    state.last_v = Some(record.v_q);
    state.t += 1;
    Ok((state, log))
}
