//! End-to-end checks of the `rotsim` binary: output files, rerun
//! determinism, and error diagnostics.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rotsim"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const SMALL_PLAN: &str = "\
channels = 2
qam_order = 16
snr_db = 18
sigma2_p = [1e-3, 1e-2]
rotation = kind=hadamard order=2
rotation = kind=identity
receiver = per-channel
min_symbols = 4000
shards = 4
seed = 11
";

#[test]
fn simulate_writes_outputs_and_reruns_identically() {
    let dir = std::env::temp_dir().join(format!("rotsim-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let plan = dir.join("plan.txt");
    write(&plan, SMALL_PLAN);
    let run = |out: &Path| {
        let status = bin()
            .args(["simulate", "--plan"])
            .arg(&plan)
            .arg("--out")
            .arg(out)
            .args(["--workers", "2"])
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read_to_string(out.join("results.csv")).unwrap()
    };
    let a = run(&dir.join("a"));
    let b = run(&dir.join("b"));
    assert_eq!(a, b, "rerun with the same seed must be byte-identical");
    assert_eq!(a.lines().count(), 5, "header plus four grid points");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("a/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["master_seed"], 11);
    assert_eq!(manifest["outputs"][0], "results.csv");
    assert_eq!(manifest["plan_sha256"].as_str().unwrap().len(), 64);
    // A seed override changes the seed column but keeps the schema.
    let c_dir = dir.join("c");
    let status = bin()
        .args(["simulate", "--plan"])
        .arg(&plan)
        .arg("--out")
        .arg(&c_dir)
        .args(["--seed", "12"])
        .status()
        .unwrap();
    assert!(status.success());
    let c = std::fs::read_to_string(c_dir.join("results.csv")).unwrap();
    assert_ne!(a, c);
    assert_eq!(a.lines().next(), c.lines().next());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn sweep_relative_air_peaks_at_moderate_phase_noise() {
    // 64QAM, rotation-free baseline vs the large-channel-count
    // surrogate: the AIR gain over the sigma2_p sweep peaks between
    // 1e-2 and 1e-1.
    let sweep = [1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1];
    let plan = rotsim::plan::Plan::parse(
        "channels = 2\n\
         qam_order = 64\n\
         snr_db = 22.5\n\
         sigma2_p = [1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1]\n\
         rotation = kind=identity\n\
         receiver = per-channel\n\
         channel = [phase-noise, asymptotic]\n\
         min_symbols = 50000\n\
         seed = 6\n",
    )
    .unwrap();
    let points = plan.expand();
    assert_eq!(points.len(), 2 * sweep.len());
    let exec = rotsim::runner::ExecParams {
        min_symbols: plan.min_symbols,
        shards: plan.shards,
        master_seed: plan.seed,
        workers: 2,
    };
    let outcomes = rotsim::runner::run_sweep(&points, &exec).unwrap();
    let csv = rotsim::runner::csv_document(&points, &outcomes);
    // Channel kind is the fastest axis: rows pair up per sigma2_p.
    let air: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(13).unwrap().parse().unwrap())
        .collect();
    let gains: Vec<f64> = (0..sweep.len()).map(|i| air[2 * i + 1] - air[2 * i]).collect();
    let peak = gains
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    assert!(
        (1e-2..=1e-1).contains(&sweep[peak]),
        "gain peak at sigma2_p = {} (gains {gains:?})",
        sweep[peak]
    );
}

#[test]
fn bad_plan_fails_with_line_diagnostic() {
    let dir = std::env::temp_dir().join(format!("rotsim-cli-bad-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let plan = dir.join("plan.txt");
    write(&plan, "channels = 2\nnot_a_key = 5\n");
    let output = bin()
        .args(["simulate", "--plan"])
        .arg(&plan)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 2"), "stderr: {stderr}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn optimize_writes_trace_and_result() {
    let dir = std::env::temp_dir().join(format!("rotsim-cli-opt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("opt.txt");
    write(
        &cfg,
        "objective = ser\nreceiver = per-channel\nqam_order = 4\nsnr_db = 12\nsigma2_p = 5e-2\n\
         budget = 10\ninitial_design = 8\nsymbols_per_eval = 2000\nshards = 2\nseed = 3\n",
    );
    let out = dir.join("out");
    let output = bin()
        .args(["optimize", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--workers", "2"])
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("kind=givens4"), "stdout: {stdout}");
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 11, "header plus ten evaluations");
    let result: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["evaluations"], 10);
    assert!(result["objective_value"].is_number());
    std::fs::remove_dir_all(&dir).ok();
}
