//! Command-line companion to `rotsim-core`: plan files, parallel sweep
//! execution, CSV/JSON emission, the optimizer driver, and the built-in
//! self-test suite.

pub mod manifest;
pub mod optimize;
pub mod plan;
pub mod runner;
pub mod selftest;

use std::path::Path;

use anyhow::{bail, Context, Result};

use manifest::{sha256_hex, unix_now, RunManifest};
use plan::{OptimizeConfig, Plan};
use runner::ExecParams;

/// Sample-size fidelity for `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fidelity {
    /// Enforces at least 10^6 symbols per grid point.
    Paper,
    /// Uses the plan's `min_symbols` as given.
    Quick,
}

impl Fidelity {
    pub fn name(self) -> &'static str {
        match self {
            Fidelity::Paper => "paper",
            Fidelity::Quick => "quick",
        }
    }
}

/// Resolves a flag against its environment override (`ROTSIM_WORKERS`,
/// `ROTSIM_SEED`): the flag wins when given, then the env var, then the
/// default.
pub fn resolve_override<T: std::str::FromStr>(
    flag: Option<T>,
    env_var: &str,
    default: T,
) -> Result<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match std::env::var(env_var) {
        Ok(text) => text
            .parse()
            .map_err(|_| anyhow::anyhow!("bad {env_var} value `{text}`")),
        Err(_) => Ok(default),
    }
}

/// `simulate`: run a plan file, write `results.csv` and `manifest.json`
/// into the output directory.
pub fn cmd_simulate(
    plan_path: &Path,
    out_dir: &Path,
    workers: usize,
    seed_flag: Option<u64>,
    fidelity: Fidelity,
) -> Result<()> {
    let plan_bytes = std::fs::read(plan_path)
        .with_context(|| format!("reading plan {}", plan_path.display()))?;
    let plan_text = String::from_utf8(plan_bytes.clone()).context("plan is not UTF-8")?;
    let plan = Plan::parse(&plan_text)
        .with_context(|| format!("parsing plan {}", plan_path.display()))?;
    let master_seed = seed_flag.unwrap_or(plan.seed);
    let min_symbols = match fidelity {
        Fidelity::Paper => plan
            .min_symbols
            .max(rotsim_core::montecarlo::FIDELITY_MIN_SYMBOLS),
        Fidelity::Quick => plan.min_symbols,
    };
    let exec = ExecParams {
        min_symbols,
        shards: plan.shards,
        master_seed,
        workers,
    };
    let points = plan.expand();
    if points.is_empty() {
        bail!("plan expands to an empty grid");
    }
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let started = unix_now();
    let outcomes = runner::run_sweep(&points, &exec)?;
    let mut failures = 0usize;
    for (point, outcome) in points.iter().zip(&outcomes) {
        if let Err(msg) = outcome {
            failures += 1;
            eprintln!(
                "point skipped ({} {}QAM snr={} sigma2_p={}): {msg}",
                runner::receiver_name(point.receiver),
                point.qam_order,
                point.snr_db,
                point.sigma2_p
            );
        }
    }
    let csv = runner::csv_document(&points, &outcomes);
    let csv_path = out_dir.join("results.csv");
    std::fs::write(&csv_path, &csv).with_context(|| format!("writing {}", csv_path.display()))?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        plan_path: plan_path.display().to_string(),
        plan_sha256: sha256_hex(&plan_bytes),
        master_seed,
        fidelity: fidelity.name().to_string(),
        workers,
        started_unix: started,
        finished_unix: unix_now(),
        outputs: vec!["results.csv".to_string()],
    };
    manifest.write(out_dir)?;
    if failures == points.len() {
        bail!("all {failures} grid points failed");
    }
    Ok(())
}

/// `optimize`: run an optimizer config, write `trace.csv` and
/// `result.json`, print the incumbent descriptor.
pub fn cmd_optimize(config_path: &Path, out_dir: &Path, workers: usize) -> Result<()> {
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading config {}", config_path.display()))?;
    let cfg = OptimizeConfig::parse(&text)
        .with_context(|| format!("parsing config {}", config_path.display()))?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let (result, _report, outcome) = optimize::run_optimize(&cfg, workers)?;
    std::fs::write(out_dir.join("trace.csv"), optimize::trace_document(&outcome))?;
    std::fs::write(
        out_dir.join("result.json"),
        serde_json::to_string_pretty(&result)?,
    )?;
    println!("{}", result.descriptor);
    if result.noisy_objective {
        eprintln!(
            "warning: observed improvements are within the evaluation noise; \
             consider more symbols per evaluation"
        );
    }
    Ok(())
}

/// `selftest`: run all built-in checks, print one line each, and return
/// an error when any fails.
pub fn cmd_selftest() -> Result<()> {
    let mut failures = 0usize;
    for (name, outcome) in selftest::run_all() {
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failures > 0 {
        bail!("{failures} self-test check(s) failed");
    }
    Ok(())
}
