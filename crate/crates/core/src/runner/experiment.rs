use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::ExperimentConfig;
use crate::config::{validate_config, ValidationResult};
use crate::error::Result;
use crate::metrics::{
    blr_series, blr_static_series, cumulative, hypergrad_error_series, variation_stats, RoundRecord,
    RunLog, VariationStats,
};
use crate::optimizers::{step, IterateState, OracleWindow};
use crate::oracle::{RegularityConstants, RoundOracle};
use crate::problems::{normal_vec, ProblemStream};
use crate::types::Vector;

pub const SUMMARY_SCHEMA: &str = "obo-summary v1";

/// Where and why a run stopped early.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunFailure {
    pub round: usize,
    pub message: String,
}

/// Per-round derived series. Disabled metrics are `None`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunSeries {
    pub blr_instant: Option<Vec<f64>>,
    pub blr_cumulative: Option<Vec<f64>>,
    pub blr_static_cumulative: Option<Vec<f64>>,
    pub hg_error: Option<Vec<f64>>,
    pub inner_err: Vec<f64>,
    pub variations: Option<VariationStats>,
    pub x_norm: Vec<f64>,
    pub y_norm: Vec<f64>,
    pub wallclock_ns: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub schema: &'static str,
    pub run_id: String,
    pub optimizer: &'static str,
    pub family: &'static str,
    pub horizon: usize,
    pub rounds_completed: usize,
    pub final_blr_cumulative: Option<f64>,
    pub final_blr_static_cumulative: Option<f64>,
    pub mean_hg_error_last_10pct: Option<f64>,
    /// Evaluated at the iterates rather than as a supremum over `x`.
    pub h2_proxy_lower_bound: Option<f64>,
    pub v1_proxy_lower_bound: Option<f64>,
    /// Time spent inside optimizer steps (metric evaluation excluded).
    pub wallclock_ns: u64,
    pub constants: RegularityConstants,
    pub validation: ValidationResult,
    pub error: Option<RunFailure>,
    pub config: ExperimentConfig,
}

/// Everything a run produced, before anything is written to disk.
#[derive(Debug, Clone)]
pub struct RunData {
    pub log: RunLog,
    pub series: RunSeries,
    pub summary: RunSummary,
}

/// Starting pair `(x_1, y_1)`: Gaussian draws from the init seed, scaled by
/// `init.x_std` and `init.y_std`.
pub fn initial_point(cfg: &ExperimentConfig, dim_x: usize, dim_y: usize) -> (Vector, Vector) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed());
    let x = normal_vec(&mut rng, dim_x) * cfg.init.x_std;
    let y = normal_vec(&mut rng, dim_y) * cfg.init.y_std;
    (x, y)
}

struct Driver<'a> {
    cfg: &'a ExperimentConfig,
    stream: &'a dyn ProblemStream,
    past: OracleWindow,
    lookahead: Option<Arc<dyn RoundOracle>>,
}

impl Driver<'_> {
    /// Runs round `state.t` and measures it.
    fn round(&mut self, state: IterateState) -> Result<(IterateState, RoundRecord)> {
        let t = state.t;
        let oracle = match self.lookahead.take() {
            Some(o) => o,
            None => self.stream.oracle(t)?,
        };
        let oc = &self.cfg.optimizer_cfg;
        let start = Instant::now();
        let (state, step) = step(self.cfg.optimizer, state, &oracle, &mut self.past, oc)?;
        let elapsed = start.elapsed().as_nanos() as u64;

        let mut record = RoundRecord::measure(oracle.as_ref(), &step, elapsed)?;
        if t < self.stream.horizon() {
            let next = self.stream.oracle(t + 1)?;
            if self.cfg.metrics.variations {
                record.attach_next(next.as_ref())?;
            }
            self.lookahead = Some(next);
        }
        Ok((state, record))
    }
}

/// Runs the configured experiment in memory.
///
/// Configuration problems are returned as errors. A failure while running
/// stops the run and is reported in `summary.error`; the rounds completed
/// before it are kept.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunData> {
    let stream = cfg.validate()?;
    execute_on(cfg, stream.as_ref())
}

pub(crate) fn execute_on(cfg: &ExperimentConfig, stream: &dyn ProblemStream) -> Result<RunData> {
    let constants = stream.constants();
    let validation = validate_config(&cfg.optimizer_cfg, &constants);
    for c in validation.conditions.iter().filter(|c| !c.passed) {
        log::warn!("{}: condition `{}` not met ({})", cfg.run_id, c.name, c.detail);
    }

    let (x1, y1) = initial_point(cfg, stream.dim_x(), stream.dim_y());
    let mut state = IterateState::new(x1, y1, &cfg.optimizer_cfg)?;
    let mut driver = Driver {
        cfg,
        stream,
        past: OracleWindow::new(cfg.optimizer_cfg.k_window),
        lookahead: None,
    };
    let horizon = stream.horizon();
    let mut log = RunLog::new();
    let mut failure = None;
    log::info!(
        "{}: {} on {} stream, {} rounds",
        cfg.run_id,
        cfg.optimizer.as_str(),
        stream.family().as_str(),
        horizon
    );
    for t in 1..=horizon {
        match driver.round(state) {
            Ok((next, record)) => {
                state = next;
                log.push(record)?;
            }
            Err(e) => {
                log::error!("{}: round {t} failed: {e}", cfg.run_id);
                failure = Some(RunFailure {
                    round: t,
                    message: e.to_string(),
                });
                break;
            }
        }
        if horizon >= 10 && t % (horizon / 10) == 0 {
            log::debug!("{}: round {t}/{horizon}", cfg.run_id);
        }
    }

    let series = compute_series(cfg, stream, &log)?;
    let summary = summarize(cfg, stream, &log, &series, constants, validation, failure);
    Ok(RunData { log, series, summary })
}

fn compute_series(cfg: &ExperimentConfig, stream: &dyn ProblemStream, log: &RunLog) -> Result<RunSeries> {
    if log.is_empty() {
        return Ok(RunSeries::default());
    }
    let flags = &cfg.metrics;
    let (eta, k) = cfg.regret_window();
    let blr_instant = if flags.blr { Some(blr_series(log, eta, k)?) } else { None };
    let blr_static_cumulative = if flags.blr_static {
        Some(cumulative(&blr_static_series(log, stream, eta, k)?))
    } else {
        None
    };
    let stats = variation_stats(log);
    let rows = log.rows();
    Ok(RunSeries {
        blr_cumulative: blr_instant.as_deref().map(cumulative),
        blr_instant,
        blr_static_cumulative,
        hg_error: flags.hg_error.then(|| hypergrad_error_series(log)),
        inner_err: stats.inner_err.clone(),
        variations: flags.variations.then_some(stats),
        x_norm: rows.iter().map(|r| r.x.norm()).collect(),
        y_norm: rows.iter().map(|r| r.y_next.norm()).collect(),
        wallclock_ns: flags.timing.then(|| rows.iter().map(|r| r.wallclock_ns).collect()),
    })
}

fn tail_mean(series: &[f64]) -> Option<f64> {
    if series.is_empty() {
        return None;
    }
    let n = series.len().div_ceil(10).max(1);
    let tail = &series[series.len() - n..];
    Some(tail.iter().sum::<f64>() / n as f64)
}

fn summarize(
    cfg: &ExperimentConfig,
    stream: &dyn ProblemStream,
    log: &RunLog,
    series: &RunSeries,
    constants: RegularityConstants,
    validation: ValidationResult,
    error: Option<RunFailure>,
) -> RunSummary {
    let last = |s: &Option<Vec<f64>>| s.as_ref().and_then(|v| v.last().copied());
    RunSummary {
        schema: SUMMARY_SCHEMA,
        run_id: cfg.run_id.clone(),
        optimizer: cfg.optimizer.as_str(),
        family: stream.family().as_str(),
        horizon: stream.horizon(),
        rounds_completed: log.len(),
        final_blr_cumulative: last(&series.blr_cumulative),
        final_blr_static_cumulative: last(&series.blr_static_cumulative),
        mean_hg_error_last_10pct: series.hg_error.as_deref().and_then(tail_mean),
        h2_proxy_lower_bound: series.variations.as_ref().map(|v| v.h2_proxy),
        v1_proxy_lower_bound: series.variations.as_ref().map(|v| v.v1_proxy),
        wallclock_ns: log.rows().iter().map(|r| r.wallclock_ns).sum(),
        constants,
        validation,
        error,
        config: cfg.clone(),
    }
}
