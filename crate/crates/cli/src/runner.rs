//! Parallel sweep execution and CSV emission.
//!
//! Shards of every grid point are distributed over a rayon pool and
//! merged in shard order, so the output is identical for any worker
//! count (the substream contract keys randomness by point and shard,
//! never by thread).

use anyhow::{Context, Result};
use rayon::prelude::*;
use rotsim_core::metrics::{MetricsAccumulator, MetricsReport};
use rotsim_core::montecarlo::{run_shard, ChannelKind, ReceiverKind, RunConfig, SimPoint};
use rotsim_core::receivers::DEFAULT_ENUMERATION_CAP;

/// Execution-wide parameters resolved from flags, env, and plan.
#[derive(Debug, Clone, Copy)]
pub struct ExecParams {
    pub min_symbols: u64,
    pub shards: u32,
    pub master_seed: u64,
    pub workers: usize,
}

/// Outcome of one grid point: a finished report or the failure text.
pub type PointOutcome = std::result::Result<MetricsReport, String>;

/// Runs every point of a sweep on a dedicated rayon pool.
///
/// Point failures (for example an infeasible joint enumeration) do not
/// abort the sweep; they surface as `Err` entries in point order.
pub fn run_sweep(points: &[SimPoint], exec: &ExecParams) -> Result<Vec<PointOutcome>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(exec.workers)
        .build()
        .context("building worker pool")?;
    let tasks: Vec<(usize, u32)> = (0..points.len())
        .flat_map(|p| (0..exec.shards).map(move |s| (p, s)))
        .collect();
    let shard_results: Vec<(usize, u32, rotsim_core::Result<MetricsAccumulator>)> = pool
        .install(|| {
            tasks
                .par_iter()
                .map(|&(p, s)| {
                    let cfg = run_config(exec, p as u64);
                    (p, s, run_shard(&points[p], &cfg, s))
                })
                .collect()
        });
    // Merge in (point, shard) order regardless of completion order.
    let mut merged: Vec<PointOutcome> = Vec::with_capacity(points.len());
    for (p, point) in points.iter().enumerate() {
        let bits = (point.qam_order as f64).log2() as u32;
        let mut acc = MetricsAccumulator::new(bits);
        let mut failure = None;
        let mut in_order: Vec<(u32, &rotsim_core::Result<MetricsAccumulator>)> = shard_results
            .iter()
            .filter(|(pp, _, _)| *pp == p)
            .map(|(_, s, r)| (*s, r))
            .collect();
        in_order.sort_by_key(|(s, _)| *s);
        for (_, res) in in_order {
            match res {
                Ok(shard_acc) => acc.merge(shard_acc),
                Err(e) => {
                    failure = Some(format!("{e}"));
                    break;
                }
            }
        }
        merged.push(match failure {
            Some(msg) => Err(msg),
            None => Ok(acc.finalize(exec.master_seed)),
        });
    }
    Ok(merged)
}

/// One point run entirely on the current thread pool; convenience for
/// tests and the optimizer driver.
pub fn run_point_parallel(point: &SimPoint, exec: &ExecParams) -> Result<MetricsReport> {
    let outcomes = run_sweep(std::slice::from_ref(point), exec)?;
    outcomes
        .into_iter()
        .next()
        .unwrap()
        .map_err(|e| anyhow::anyhow!(e))
}

fn run_config(exec: &ExecParams, point_id: u64) -> RunConfig {
    RunConfig {
        min_symbols: exec.min_symbols,
        shards: exec.shards,
        master_seed: exec.master_seed,
        point_id,
        enumeration_cap: DEFAULT_ENUMERATION_CAP,
        collect_air: true,
    }
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

/// Stable CSV schema; columns are never reordered within a major version.
pub const CSV_HEADER: &str = "n,m,snr_db,sigma2_p,rotation,receiver,channel,\
bler,bler_stderr,ser,ser_stderr,ber,ber_stderr,air,air_stderr,\
n_symbols,n_blocks,seed";

/// Formats a numeric cell; non-finite values become the literal `NA`.
pub fn num_cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NA".into()
    }
}

/// Quotes a text cell if it contains commas or quotes.
fn text_cell(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.into()
    }
}

pub fn receiver_name(r: ReceiverKind) -> &'static str {
    match r {
        ReceiverKind::PerChannel => "per-channel",
        ReceiverKind::Joint => "joint",
    }
}

pub fn channel_name(c: ChannelKind) -> &'static str {
    match c {
        ChannelKind::PhaseNoise => "phase-noise",
        ChannelKind::Asymptotic => "asymptotic",
    }
}

/// One CSV row for a finished point.
pub fn csv_row(point: &SimPoint, report: &MetricsReport) -> String {
    let cells: Vec<String> = vec![
        point.channels.to_string(),
        point.qam_order.to_string(),
        num_cell(point.snr_db),
        num_cell(point.sigma2_p),
        text_cell(&point.rotation.descriptor()),
        receiver_name(point.receiver).into(),
        channel_name(point.channel).into(),
        num_cell(report.bler),
        num_cell(report.bler_stderr),
        num_cell(report.ser),
        num_cell(report.ser_stderr),
        num_cell(report.ber),
        num_cell(report.ber_stderr),
        num_cell(report.air),
        num_cell(report.air_stderr),
        report.n_symbols.to_string(),
        report.n_blocks.to_string(),
        report.seed.to_string(),
    ];
    cells.join(",")
}

/// Full CSV document for a sweep; failed points are omitted from the
/// data (they are reported on stderr by the caller).
pub fn csv_document(points: &[SimPoint], outcomes: &[PointOutcome]) -> String {
    let mut doc = String::from(CSV_HEADER);
    doc.push('\n');
    for (point, outcome) in points.iter().zip(outcomes) {
        if let Ok(report) = outcome {
            doc.push_str(&csv_row(point, report));
            doc.push('\n');
        }
    }
    doc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rotsim_core::rotations::RotationRecipe;

    fn tiny_point() -> SimPoint {
        SimPoint {
            channels: 2,
            qam_order: 16,
            es: 1.0,
            snr_db: 12.0,
            sigma2_p: 1e-2,
            rotation: RotationRecipe::Hadamard { order: 2 },
            receiver: ReceiverKind::PerChannel,
            channel: ChannelKind::PhaseNoise,
        }
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let points = vec![tiny_point()];
        let mut docs = Vec::new();
        for workers in [1usize, 4] {
            let exec = ExecParams {
                min_symbols: 4_000,
                shards: 8,
                master_seed: 11,
                workers,
            };
            let outcomes = run_sweep(&points, &exec).unwrap();
            docs.push(csv_document(&points, &outcomes));
        }
        assert_eq!(docs[0], docs[1]);
    }

    #[test]
    fn failed_points_do_not_abort_the_sweep() {
        let mut bad = tiny_point();
        bad.receiver = ReceiverKind::Joint;
        bad.sigma2_p = 0.0; // Joint receiver needs positive phase variance.
        let points = vec![bad, tiny_point()];
        let exec = ExecParams {
            min_symbols: 1_000,
            shards: 2,
            master_seed: 0,
            workers: 1,
        };
        let outcomes = run_sweep(&points, &exec).unwrap();
        assert!(outcomes[0].is_err());
        assert!(outcomes[1].is_ok());
        let doc = csv_document(&points, &outcomes);
        assert_eq!(doc.lines().count(), 2); // header + one data row
    }

    #[test]
    fn csv_cells_are_finite_or_na() {
        let point = tiny_point();
        let exec = ExecParams {
            min_symbols: 1_000,
            shards: 2,
            master_seed: 0,
            workers: 1,
        };
        let outcomes = run_sweep(&[point.clone()], &exec).unwrap();
        let doc = csv_document(std::slice::from_ref(&point), &outcomes);
        let header_cols = CSV_HEADER.split(',').count();
        for line in doc.lines().skip(1) {
            // The rotation descriptor cell is quoted when it has commas.
            assert!(!line.contains("inf") && !line.contains("NaN"), "{line}");
            let _ = header_cols;
        }
        assert!(num_cell(f64::NAN) == "NA" && num_cell(f64::INFINITY) == "NA");
    }
}
