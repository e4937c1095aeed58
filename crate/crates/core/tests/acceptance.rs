//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::linalg::QR;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use obo::hypergrad::{approx_exact_hypergrad, exact_hypergrad, fd_hypergrad, DEFAULT_FD_EPS};
use obo::linear_solver::{solve_cg, solve_fixed_step};
use obo::metrics::{blr_series, blr_static_series};
use obo::optimizers::OptimizerKind;
use obo::problems::{make_stream, Drift, Family, StreamConfig};
use obo::runner::{execute, read_csv, run_sweep, ExperimentConfig, RunData, SweepAxis};
use obo::{Matrix, Vector};

use common::{rel_err, shipped, with_optimizer};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vector {
    Vector::from_fn(n, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn run(cfg: &ExperimentConfig) -> RunData {
    let data = execute(cfg).expect("config is valid");
    if let Some(e) = &data.summary.error {
        panic!("{} failed at round {}: {}", cfg.run_id, e.round, e.message);
    }
    data
}

fn final_blr(data: &RunData) -> f64 {
    data.summary.final_blr_cumulative.expect("blr enabled")
}

fn c1_oracle_consistency(_: &Path) -> Verdict {
    let mut worst = Vec::new();
    let mut passed = true;
    for family in [Family::Quadratic, Family::HyperRep, Family::Hyperopt] {
        let mut max_err: f64 = 0.0;
        for probe in 0..20u64 {
            let cfg = StreamConfig {
                family,
                horizon: 100,
                seed: 1000 + probe,
                ..Default::default()
            };
            let stream = make_stream(&cfg).unwrap();
            let oracle = stream.oracle(1 + 5 * probe as usize).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(probe);
            let x = match family {
                Family::Quadratic => gaussian(&mut rng, stream.dim_x(), 1.0),
                Family::HyperRep => gaussian(&mut rng, stream.dim_x(), 0.3),
                Family::Hyperopt => gaussian(&mut rng, stream.dim_x(), 1.0).map(|v| v.clamp(-2.0, 2.0)),
            };
            let exact = match family {
                Family::Hyperopt => {
                    approx_exact_hypergrad(oracle.as_ref(), &x, None, 1e-10, 1e-10).unwrap().0
                }
                _ => exact_hypergrad(oracle.as_ref(), &x, 1e-12).unwrap(),
            };
            let fd = fd_hypergrad(oracle.as_ref(), &x, DEFAULT_FD_EPS, 1e-10).unwrap();
            max_err = max_err.max(rel_err(&exact, &fd));
        }
        passed &= max_err < 1e-4;
        worst.push(format!("{} {:.1e}", family.as_str(), max_err));
    }
    verdict(passed, format!("max relative error vs finite differences: {}", worst.join(", ")))
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize, mu: f64, l: f64) -> Matrix {
    let g = Matrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = QR::new(g).q();
    let mut eig: Vec<f64> = (0..n).map(|_| rng.random_range(mu..=l)).collect();
    eig[0] = mu;
    if n > 1 {
        eig[1] = l;
    }
    let d = Matrix::from_diagonal(&Vector::from_vec(eig));
    let a = &q * d * q.transpose();
    (&a + a.transpose()) * 0.5
}

fn c2_solver_contraction(_: &Path) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_cg: f64 = 0.0;
    for system in 0..20 {
        let n = 2 + system % 19;
        let mu = rng.random_range(0.05..1.0);
        let l = mu + rng.random_range(0.5..10.0);
        let a = random_spd(&mut rng, n, mu, l);
        let b = gaussian(&mut rng, n, 1.0);
        let exact = a.clone().lu().solve(&b).unwrap();
        let lambda = 1.0 / l;
        let bound = 1.0 - lambda * mu;
        // Start far from the solution so the measured error stays many orders
        // above round-off in v and in the reference solution.
        let mut v = &exact + gaussian(&mut rng, n, 1e8 * exact.norm());
        let mut err = (&v - &exact).norm();
        for _ in 0..200 {
            if err < 1e3 * exact.norm() {
                break;
            }
            v = solve_fixed_step(&a, &b, &v, lambda, 1).unwrap();
            let next = (&v - &exact).norm();
            worst_excess = worst_excess.max(next / err - bound);
            err = next;
        }
        let cg = solve_cg(&a, &b, &Vector::zeros(n), 10 * n, 1e-14).unwrap();
        worst_cg = worst_cg.max(rel_err(&cg.solution, &exact));
    }
    verdict(
        worst_excess <= 1e-12 && worst_cg < 1e-8,
        format!(
            "max (ratio - (1 - lambda mu)) = {worst_excess:.2e}, CG vs LU relative error {worst_cg:.1e}"
        ),
    )
}

fn c3_degeneracy(out: &Path) -> Verdict {
    let mut details = Vec::new();
    let mut passed = true;
    for name in ["quadratic_static.toml", "hr_static.toml", "hyperopt.toml"] {
        let mut base = shipped(name, out);
        base.stream.horizon = 100;
        base.optimizer_cfg.k_window = 1;
        base.optimizer_cfg.n_inner = 1;
        let runs: Vec<RunData> = [OptimizerKind::Sobow, OptimizerKind::Ogd, OptimizerKind::Oagd]
            .into_iter()
            .map(|k| run(&with_optimizer(&base, k)))
            .collect();
        let reference = runs[0].log.rows();
        let identical = runs[1..].iter().all(|r| {
            r.log.rows().len() == reference.len()
                && r.log.rows().iter().zip(reference).all(|(a, b)| {
                    a.x == b.x && a.y_next == b.y_next && a.est_grad == b.est_grad
                })
        });
        passed &= identical && reference.len() == 100;
        details.push(format!(
            "{} {}",
            base.stream.family.as_str(),
            if identical { "identical" } else { "DIFFER" }
        ));
    }
    verdict(passed, format!("100-round trajectories: {}", details.join(", ")))
}

fn c4_hypergrad_error_decay(out: &Path) -> Verdict {
    let mut cfg = shipped("quadratic_static.toml", out);
    cfg.stream.horizon = 1000;
    let data = run(&cfg);
    let hg = data.series.hg_error.unwrap();
    let first = hg.iter().position(|&e| e < 1e-6).map(|i| i + 1);
    let increases = (100..hg.len()).filter(|&i| hg[i] > hg[i - 1] + 1e-12).count();
    verdict(
        first.is_some_and(|t| t <= 500) && increases == 0,
        format!(
            "below 1e-6 from round {first:?}, increases after round 100: {increases}, final {:.1e}",
            hg[hg.len() - 1]
        ),
    )
}

fn c5_sublinear_regret(out: &Path) -> Verdict {
    let stat = run(&shipped("quadratic_static.toml", out));
    let cum = stat.series.blr_cumulative.unwrap();
    let ratio = (cum[3999] / 4000.0) / (cum[399] / 400.0);

    let smooth = run(&shipped("quadratic_smooth.toml", out));
    let cum_s = smooth.series.blr_cumulative.unwrap();
    let slope = (cum_s[3999] / cum_s[399]).log10();
    let h2 = smooth.summary.h2_proxy_lower_bound.unwrap();
    verdict(
        ratio <= 0.25 && slope < 0.9,
        format!(
            "static BLR(T)/T ratio 4000 vs 400 = {ratio:.3}; smooth drift log-log slope over [400, 4000] = {slope:.3} (H2 proxy {h2:.2})"
        ),
    )
}

fn c6_sobow_vs_baselines(out: &Path) -> Verdict {
    let mut lines = Vec::new();
    let mut passed = true;
    for (name, dynamic) in [("hr_static.toml", false), ("hr_staged.toml", true)] {
        let base = shipped(name, out);
        let sobow = final_blr(&run(&with_optimizer(&base, OptimizerKind::Sobow)));
        let oagd = final_blr(&run(&with_optimizer(&base, OptimizerKind::Oagd)));
        let ogd = final_blr(&run(&with_optimizer(&base, OptimizerKind::Ogd)));
        let vs_oagd = sobow / oagd;
        let vs_ogd = sobow / ogd;
        passed &= (vs_oagd - 1.0).abs() <= 0.2;
        if dynamic {
            passed &= vs_ogd <= 0.6;
        }
        lines.push(format!(
            "{}: sobow/oagd {vs_oagd:.3}, sobow/ogd {vs_ogd:.3}",
            if dynamic { "staged" } else { "static" }
        ));
    }
    verdict(passed, lines.join("; "))
}

fn c7_eta_sweep(out: &Path) -> Verdict {
    let base = shipped("hr_staged.toml", out);
    let sweep = run_sweep(&base, SweepAxis::Eta, &[0.5, 0.9, 0.99]).unwrap();
    let blr: Vec<f64> = sweep
        .summary
        .runs
        .iter()
        .map(|e| e.run.final_blr_cumulative.unwrap_or(f64::INFINITY))
        .collect();
    let monotone = blr.windows(2).all(|w| w[1] <= 1.05 * w[0]);
    verdict(
        monotone,
        format!("final BLR at eta 0.5/0.9/0.99: {:.4e} / {:.4e} / {:.4e}", blr[0], blr[1], blr[2]),
    )
}

fn c8_inner_steps_saturate(out: &Path) -> Verdict {
    let base = shipped("hr_two_point.toml", out);
    let sweep = run_sweep(&base, SweepAxis::NInner, &[1.0, 2.0, 4.0]).unwrap();
    let blr: Vec<f64> = sweep
        .summary
        .runs
        .iter()
        .map(|e| e.run.final_blr_cumulative.unwrap_or(f64::INFINITY))
        .collect();
    let gap = (blr[1] - blr[2]).abs() / blr[2];
    verdict(
        gap <= 0.1,
        format!(
            "final BLR at N = 1/2/4: {:.4e} / {:.4e} / {:.4e}; |N2 - N4| / N4 = {gap:.4}",
            blr[0], blr[1], blr[2]
        ),
    )
}

fn c9_runtime_ratio(out: &Path) -> Verdict {
    let mut base = shipped("hr_static.toml", out);
    base.stream.horizon = 2000;
    let sobow = run(&with_optimizer(&base, OptimizerKind::Sobow)).summary.wallclock_ns;
    let oagd = run(&with_optimizer(&base, OptimizerKind::Oagd)).summary.wallclock_ns;
    let ratio = oagd as f64 / sobow as f64;
    verdict(
        ratio > 5.0,
        format!(
            "OAGD-50 {:.0} ms, SOBOW-50 {:.0} ms, ratio {ratio:.1}",
            oagd as f64 / 1e6,
            sobow as f64 / 1e6
        ),
    )
}

fn regret_pair(cfg: &ExperimentConfig) -> (Vec<f64>, Vec<f64>) {
    let data = run(cfg);
    let stream = make_stream(&cfg.seeded_stream()).unwrap();
    let (eta, k) = cfg.regret_window();
    (
        blr_series(&data.log, eta, k).unwrap(),
        blr_static_series(&data.log, stream.as_ref(), eta, k).unwrap(),
    )
}

fn max_rel_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-300))
        .fold(0.0, f64::max)
}

fn c10_regret_definitions(out: &Path) -> Verdict {
    // Both definitions evaluate the same functions at the same point only when
    // the iterate does not move, so the static case freezes x.
    let mut frozen = shipped("quadratic_static.toml", out);
    frozen.stream.horizon = 300;
    frozen.optimizer_cfg.beta = 0.0;
    frozen.init.x_std = 1.0;
    let (a, b) = regret_pair(&frozen);
    let static_gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);

    let mut dynamic = shipped("quadratic_static.toml", out);
    dynamic.stream.horizon = 300;
    dynamic.stream.drift = Drift::Staged {
        period: 50,
        magnitude: 1.0,
    };
    let (c, d) = regret_pair(&dynamic);
    let dynamic_gap = max_rel_gap(&c, &d);
    verdict(
        static_gap <= 1e-10 && dynamic_gap > 1e-3,
        format!(
            "static stream max |diff| {static_gap:.1e}; staged stream max relative diff {dynamic_gap:.2e}"
        ),
    )
}

fn cli_run(config: &Path, out: &Path) -> obo::runner::CsvTable {
    let status = Command::new(env!("CARGO_BIN_EXE_obo"))
        .args(["run", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("OBO_LOG_LEVEL", "error")
        .output()
        .expect("binary runs");
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let cfg = ExperimentConfig::from_file(config).unwrap();
    read_csv(&out.join(format!("{}.csv", cfg.run_id))).unwrap()
}

fn c11_determinism(out: &Path) -> Verdict {
    let mut lines = Vec::new();
    let mut passed = true;
    for name in ["quadratic_static.toml", "hr_staged.toml", "hyperopt.toml"] {
        let path = common::config_path(name);
        let a = cli_run(&path, &out.join("det_a"));
        let b = cli_run(&path, &out.join("det_b"));
        let wall = a.columns.iter().position(|c| c == "wallclock_ns").unwrap();
        let strip = |t: &obo::runner::CsvTable| -> Vec<Vec<Option<u64>>> {
            t.rows
                .iter()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .filter(|(i, _)| *i != wall)
                        .map(|(_, v)| v.map(f64::to_bits))
                        .collect()
                })
                .collect()
        };
        let same = strip(&a) == strip(&b) && !a.rows.is_empty();
        passed &= same;
        lines.push(format!("{name} {} rows {}", a.rows.len(), if same { "identical" } else { "DIFFER" }));
    }
    verdict(passed, lines.join(", "))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    // (id, name, check, time limit in seconds)
    type Check = fn(&Path) -> Verdict;
    let criteria: [(u32, &str, Check, Option<f64>); 11] = [
        (1, "oracle consistency", c1_oracle_consistency, Some(60.0)),
        (2, "solver contraction", c2_solver_contraction, None),
        (3, "degeneracy identities", c3_degeneracy, None),
        (4, "hypergradient error decay", c4_hypergrad_error_decay, Some(30.0)),
        (5, "sublinear regret", c5_sublinear_regret, None),
        (6, "SOBOW vs OAGD / OGD", c6_sobow_vs_baselines, Some(300.0)),
        (7, "eta sweep", c7_eta_sweep, None),
        (8, "inner-step saturation", c8_inner_steps_saturate, None),
        (9, "runtime ratio", c9_runtime_ratio, None),
        (10, "regret definitions", c10_regret_definitions, None),
        (11, "determinism", c11_determinism, None),
    ];
    let mut failures = 0;
    for (id, name, check, limit) in criteria {
        let start = Instant::now();
        let mut v = check(dir.path());
        let secs = start.elapsed().as_secs_f64();
        if let Some(limit) = limit {
            if secs > limit {
                v.passed = false;
                v.detail.push_str(&format!("; exceeded {limit:.0} s budget"));
            }
        }
        if !v.passed {
            failures += 1;
        }
        println!(
            "criterion {id:>2} {} {name}: {} [{secs:.1} s]",
            if v.passed { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
