use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::OptimizerConfig;
use crate::error::{OboError, Result};
use crate::optimizers::{check_domain, OptimizerKind};
use crate::problems::{make_stream, split_seed, seed_tags, ProblemStream, StreamConfig};

/// Which metrics a run computes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsFlags {
    pub blr: bool,
    /// Re-evaluates past rounds at the current iterate; costs `O(K)` hypergradients per round.
    pub blr_static: bool,
    pub hg_error: bool,
    pub variations: bool,
    pub timing: bool,
    /// Regret window decay; defaults to the optimizer's `eta`.
    pub regret_eta: Option<f64>,
    /// Regret window length; defaults to the optimizer's `k_window`.
    pub regret_k: Option<usize>,
}

impl Default for MetricsFlags {
    fn default() -> Self {
        Self {
            blr: true,
            blr_static: false,
            hg_error: true,
            variations: true,
            timing: true,
            regret_eta: None,
            regret_k: None,
        }
    }
}

/// Scale of the Gaussian initial iterates (zero means start at the origin).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub x_std: f64,
    pub y_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run_id: String,
    pub output_dir: PathBuf,
    /// Master seed; the stream and initialization seeds are derived from it.
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub stream: StreamConfig,
    pub optimizer_cfg: OptimizerConfig,
    pub metrics: MetricsFlags,
    pub init: InitConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            optimizer: OptimizerKind::Sobow,
            stream: StreamConfig::default(),
            optimizer_cfg: OptimizerConfig::default(),
            metrics: MetricsFlags::default(),
            init: InitConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| OboError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OboError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| OboError::Config(format!("{}: {e}", path.display())))
    }

    /// Stream configuration with the seed derived from the master seed.
    pub fn seeded_stream(&self) -> StreamConfig {
        StreamConfig {
            seed: split_seed(self.seed, seed_tags::STREAM),
            ..self.stream.clone()
        }
    }

    pub fn init_seed(&self) -> u64 {
        split_seed(self.seed, seed_tags::INIT)
    }

    pub fn regret_window(&self) -> (f64, usize) {
        (
            self.metrics.regret_eta.unwrap_or(self.optimizer_cfg.eta),
            self.metrics.regret_k.unwrap_or(self.optimizer_cfg.k_window),
        )
    }

    /// Checks everything that can be checked without running, returning the built stream.
    pub fn validate(&self) -> Result<Box<dyn ProblemStream>> {
        check_run_id(&self.run_id)?;
        self.optimizer_cfg.check()?;
        let stream = make_stream(&self.seeded_stream())?;
        check_domain(&self.optimizer_cfg.domain, stream.dim_x())
            .map_err(|e| OboError::Config(e.to_string()))?;
        let (eta, k) = self.regret_window();
        if !(eta > 0.0 && eta <= 1.0) || k == 0 {
            return Err(OboError::Config(format!(
                "regret window needs eta in (0, 1] and k >= 1 (got {eta}, {k})"
            )));
        }
        for (name, v) in [("x_std", self.init.x_std), ("y_std", self.init.y_std)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(OboError::Config(format!("init.{name} must be finite and non-negative")));
            }
        }
        Ok(stream)
    }
}

/// Letters, digits, `-`, `_` and `.` only, not starting with `.`.
pub fn check_run_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(OboError::Config(format!("run_id {id:?} is not filesystem-safe")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        assert_eq!(ExperimentConfig::from_toml_str("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        for text in [
            "seeed = 1",
            "[optimizer_cfg]\netta = 0.5",
            "[stream]\nhorizn = 3",
            "[metrics]\nblr_statik = true",
            "[init]\nz_std = 1.0",
        ] {
            let err = ExperimentConfig::from_toml_str(text).unwrap_err();
            assert!(matches!(err, OboError::Config(_)), "{text}");
        }
    }

    #[test]
    fn parses_nested_sections() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            run_id = "hr-dyn"
            optimizer = "oagd"
            seed = 7
            [stream]
            family = "hyper_rep"
            horizon = 20
            drift = { kind = "staged", period = 5, magnitude = 0.5 }
            [optimizer_cfg]
            k_window = 3
            domain = { kind = "ball", center = [0.0, 1.0], radius = 2.0 }
            "#,
        )
        .unwrap();
        assert_eq!(cfg.optimizer, OptimizerKind::Oagd);
        assert_eq!(cfg.optimizer_cfg.k_window, 3);
        assert_eq!(cfg.regret_window(), (0.99, 3));
        assert!(cfg.validate().is_err(), "ball center has the wrong dimension");
    }

    #[test]
    fn run_ids_must_be_safe() {
        assert!(check_run_id("sobow-50_eta0.9").is_ok());
        for bad in ["", "../x", "a/b", ".hidden", "sp ace"] {
            assert!(check_run_id(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn seeds_are_derived_from_master() {
        let a = ExperimentConfig { seed: 1, ..Default::default() };
        let b = ExperimentConfig { seed: 2, ..Default::default() };
        assert_ne!(a.seeded_stream().seed, b.seeded_stream().seed);
        assert_ne!(a.seeded_stream().seed, a.init_seed());
    }
}
