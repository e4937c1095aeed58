#![allow(dead_code)]

use std::path::PathBuf;

use obo::optimizers::OptimizerKind;
use obo::runner::ExperimentConfig;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

/// A shipped example config with its output redirected.
pub fn shipped(name: &str, out: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_file(&config_path(name)).expect("shipped config parses");
    cfg.output_dir = out.to_path_buf();
    cfg
}

pub fn with_optimizer(cfg: &ExperimentConfig, kind: OptimizerKind) -> ExperimentConfig {
    ExperimentConfig {
        optimizer: kind,
        run_id: format!("{}_{}", cfg.run_id, kind.as_str()),
        ..cfg.clone()
    }
}

pub fn rel_err(a: &obo::Vector, b: &obo::Vector) -> f64 {
    (a - b).norm() / b.norm().max(1e-8)
}
