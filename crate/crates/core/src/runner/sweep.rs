use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::experiment::{execute, RunData};
use super::output::{format_real, write_artifacts, write_json, ArtifactSet};
use crate::config::{validate_config, ValidationResult};
use crate::error::{OboError, Result};
use crate::oracle::{check_oracle, CONSISTENCY_TOLERANCE};
use crate::problems::{normal_vec, split_seed};

/// A finished run together with the files it wrote.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub data: RunData,
    pub artifacts: ArtifactSet,
}

/// Runs one experiment and writes its artifacts to `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let data = execute(cfg)?;
    let artifacts = write_artifacts(&data, &cfg.output_dir)?;
    Ok(RunOutcome { data, artifacts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Eta,
    KWindow,
    NInner,
    Alpha,
    Beta,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Eta => "eta",
            SweepAxis::KWindow => "k_window",
            SweepAxis::NInner => "n_inner",
            SweepAxis::Alpha => "alpha",
            SweepAxis::Beta => "beta",
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        let as_count = || {
            if value.fract() == 0.0 && value >= 1.0 && value < u32::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(OboError::Config(format!(
                    "{} takes positive integers, got {value}",
                    self.as_str()
                )))
            }
        };
        match self {
            SweepAxis::Eta => cfg.optimizer_cfg.eta = value,
            SweepAxis::KWindow => cfg.optimizer_cfg.k_window = as_count()?,
            SweepAxis::NInner => cfg.optimizer_cfg.n_inner = as_count()?,
            SweepAxis::Alpha => cfg.optimizer_cfg.alpha = value,
            SweepAxis::Beta => cfg.optimizer_cfg.beta = value,
        }
        cfg.run_id = format!("{}_{}_{}", base.run_id, self.as_str(), format_real(value));
        Ok(cfg)
    }
}

impl FromStr for SweepAxis {
    type Err = OboError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "eta" => SweepAxis::Eta,
            "k_window" => SweepAxis::KWindow,
            "n_inner" => SweepAxis::NInner,
            "alpha" => SweepAxis::Alpha,
            "beta" => SweepAxis::Beta,
            other => {
                return Err(OboError::Config(format!(
                    "unknown sweep axis {other:?} (expected eta, k_window, n_inner, alpha or beta)"
                )))
            }
        })
    }
}

/// One line of a sweep or comparison summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunDigest {
    pub run_id: String,
    pub optimizer: String,
    pub family: String,
    pub rounds_completed: usize,
    pub final_blr_cumulative: Option<f64>,
    pub mean_hg_error_last_10pct: Option<f64>,
    pub wallclock_ns: u64,
    pub error: Option<String>,
}

impl RunDigest {
    fn from_data(data: &RunData) -> Self {
        let s = &data.summary;
        Self {
            run_id: s.run_id.clone(),
            optimizer: s.optimizer.into(),
            family: s.family.into(),
            rounds_completed: s.rounds_completed,
            final_blr_cumulative: s.final_blr_cumulative,
            mean_hg_error_last_10pct: s.mean_hg_error_last_10pct,
            wallclock_ns: s.wallclock_ns,
            error: s.error.as_ref().map(|e| format!("round {}: {}", e.round, e.message)),
        }
    }

    fn failed(cfg: &ExperimentConfig, err: &OboError) -> Self {
        Self {
            run_id: cfg.run_id.clone(),
            optimizer: cfg.optimizer.as_str().into(),
            family: cfg.stream.family.as_str().into(),
            rounds_completed: 0,
            final_blr_cumulative: None,
            mean_hg_error_last_10pct: None,
            wallclock_ns: 0,
            error: Some(err.to_string()),
        }
    }

    fn of(cfg: &ExperimentConfig, outcome: &Result<RunOutcome>) -> Self {
        match outcome {
            Ok(o) => Self::from_data(&o.data),
            Err(e) => Self::failed(cfg, e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub value: f64,
    #[serde(flatten)]
    pub run: RunDigest,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub base_run_id: String,
    pub axis: SweepAxis,
    /// In the order the values were given.
    pub runs: Vec<SweepEntry>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub summary: SweepSummary,
    pub summary_path: PathBuf,
    /// Per value; a failed run does not stop the others.
    pub runs: Vec<Result<RunOutcome>>,
}

/// One run per value along `axis`, all with the base seed. Writes each run's
/// artifacts and `<run_id>.sweep_<axis>.json` into the base output directory.
pub fn run_sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepOutcome> {
    if values.is_empty() {
        return Err(OboError::Config("sweep needs at least one value".into()));
    }
    let mut runs = Vec::with_capacity(values.len());
    let mut entries = Vec::with_capacity(values.len());
    for &value in values {
        let (cfg, outcome) = match axis.apply(base, value) {
            Ok(cfg) => {
                let outcome = run_experiment(&cfg);
                (cfg, outcome)
            }
            Err(e) => (base.clone(), Err(e)),
        };
        if let Err(e) = &outcome {
            log::error!("sweep {} = {value}: {e}", axis.as_str());
        }
        entries.push(SweepEntry {
            value,
            run: RunDigest::of(&cfg, &outcome),
        });
        runs.push(outcome);
    }
    let summary = SweepSummary {
        base_run_id: base.run_id.clone(),
        axis,
        runs: entries,
    };
    std::fs::create_dir_all(&base.output_dir)?;
    let summary_path = base
        .output_dir
        .join(format!("{}.sweep_{}.json", base.run_id, axis.as_str()));
    write_json(&summary, &summary_path)?;
    Ok(SweepOutcome {
        summary,
        summary_path,
        runs,
    })
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub rows: Vec<RunDigest>,
    pub table_path: PathBuf,
    pub runs: Vec<Result<RunOutcome>>,
}

/// Runs every configuration into `out` and writes `compare.json`.
pub fn compare(configs: &[ExperimentConfig], out: &Path) -> Result<CompareOutcome> {
    if configs.is_empty() {
        return Err(OboError::Config("compare needs at least one config".into()));
    }
    let mut seen = BTreeSet::new();
    for cfg in configs {
        if !seen.insert(cfg.run_id.as_str()) {
            return Err(OboError::Config(format!("duplicate run_id {:?}", cfg.run_id)));
        }
    }
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for cfg in configs {
        let cfg = ExperimentConfig {
            output_dir: out.to_path_buf(),
            ..cfg.clone()
        };
        let outcome = run_experiment(&cfg);
        rows.push(RunDigest::of(&cfg, &outcome));
        runs.push(outcome);
    }
    std::fs::create_dir_all(out)?;
    let table_path = out.join("compare.json");
    write_json(&rows, &table_path)?;
    Ok(CompareOutcome {
        rows,
        table_path,
        runs,
    })
}

/// Fixed-width text table of run digests.
pub fn format_table(rows: &[RunDigest]) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into());
    let mut out = format!(
        "{:<28} {:<6} {:<10} {:>7} {:>14} {:>14} {:>12}  {}\n",
        "run_id", "opt", "family", "rounds", "blr_cum", "hg_err_tail", "wall_ms", "error"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<28} {:<6} {:<10} {:>7} {:>14} {:>14} {:>12.1}  {}",
            r.run_id,
            r.optimizer,
            r.family,
            r.rounds_completed,
            opt(r.final_blr_cumulative),
            opt(r.mean_hg_error_last_10pct),
            r.wallclock_ns as f64 / 1e6,
            r.error.as_deref().unwrap_or("")
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    pub round: usize,
    pub point: &'static str,
    pub max_error: Option<f64>,
    pub passed: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub probes: Vec<ProbeResult>,
    pub validation: ValidationResult,
}

impl CheckReport {
    /// Oracle self-tests passed. Parameter conditions are advisory and not included.
    pub fn oracles_passed(&self) -> bool {
        self.probes.iter().all(|p| p.passed)
    }
}

const CHECK_TAG: u64 = 0xc0ffee;
const CHECK_EPS: f64 = 1e-5;

/// Oracle self-tests on the first, middle and last rounds plus the advisory
/// parameter conditions. Nothing is run or written.
pub fn check(cfg: &ExperimentConfig) -> Result<CheckReport> {
    let stream = cfg.validate()?;
    let validation = validate_config(&cfg.optimizer_cfg, &stream.constants());
    let horizon = stream.horizon();
    let rounds: BTreeSet<usize> = [1, horizon.div_ceil(2), horizon].into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(cfg.seed, CHECK_TAG));
    let (dx, dy) = (stream.dim_x(), stream.dim_y());
    let mut probes = Vec::new();
    for &t in &rounds {
        let oracle = stream.oracle(t)?;
        let points = [
            ("origin", normal_vec(&mut rng, dx) * 0.0, normal_vec(&mut rng, dy) * 0.0),
            ("random", normal_vec(&mut rng, dx), normal_vec(&mut rng, dy)),
        ];
        for (label, x, y) in points {
            let probe = match check_oracle(oracle.as_ref(), &x, &y, CHECK_EPS) {
                Ok(report) => ProbeResult {
                    round: t,
                    point: label,
                    max_error: Some(report.max_error()),
                    passed: report.passed(),
                    error: None,
                },
                Err(e) => ProbeResult {
                    round: t,
                    point: label,
                    max_error: None,
                    passed: false,
                    error: Some(e.to_string()),
                },
            };
            if !probe.passed {
                log::warn!(
                    "oracle check failed at round {t} ({label}): max error {:?}, tolerance {CONSISTENCY_TOLERANCE}",
                    probe.max_error
                );
            }
            probes.push(probe);
        }
    }
    Ok(CheckReport { probes, validation })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_names_round_trip() {
        for axis in [SweepAxis::Eta, SweepAxis::KWindow, SweepAxis::NInner, SweepAxis::Alpha, SweepAxis::Beta] {
            assert_eq!(axis.as_str().parse::<SweepAxis>().unwrap(), axis);
        }
        assert!(matches!("gamma".parse::<SweepAxis>(), Err(OboError::Config(_))));
    }

    #[test]
    fn integer_axes_reject_fractions() {
        let base = ExperimentConfig::default();
        assert!(SweepAxis::KWindow.apply(&base, 2.5).is_err());
        assert!(SweepAxis::NInner.apply(&base, 0.0).is_err());
        let cfg = SweepAxis::KWindow.apply(&base, 4.0).unwrap();
        assert_eq!(cfg.optimizer_cfg.k_window, 4);
        assert_eq!(cfg.run_id, "run_k_window_4");
    }

    #[test]
    fn empty_sweep_is_a_config_error() {
        let err = run_sweep(&ExperimentConfig::default(), SweepAxis::Eta, &[]).unwrap_err();
        assert!(matches!(err, OboError::Config(_)));
    }

    #[test]
    fn check_passes_on_default_stream() {
        let report = check(&ExperimentConfig::default()).unwrap();
        assert!(report.oracles_passed(), "{report:?}");
        assert_eq!(report.probes.len(), 6);
    }
}
