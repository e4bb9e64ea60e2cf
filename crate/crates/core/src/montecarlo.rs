//! Deterministic Monte Carlo experiment engine.
//!
//! A simulation point fixes (channels, QAM order, SNR, sigma2_p, rotation,
//! receiver, channel kind). Work is split into shards; each shard draws
//! from substreams keyed by `(master_seed, point_id, shard_id, source)`,
//! so the merged result is identical whether shards run serially or
//! concurrently, and independent of scheduling. Callers that want
//! parallelism map [`run_shard`] over shard ids and merge in shard order.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
use rand::Rng;

use crate::channel::{asymptotic_transmit, snr_to_n0, transmit, ChannelParams};
use crate::constellation::Constellation;
use crate::error::Error;
use crate::metrics::{MetricsAccumulator, MetricsReport};
use crate::receivers::{per_channel_soft, JointDetector, DEFAULT_ENUMERATION_CAP};
use crate::rotations::{RotationOp, RotationRecipe};
use crate::streams::{substream, Source};
use crate::Result;

/// Symbol-count floor of the paper-fidelity protocol.
pub const FIDELITY_MIN_SYMBOLS: u64 = 1_000_000;

/// Detection strategy at a simulation point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReceiverKind {
    /// Derotate and slice per channel; soft outputs use the plain AWGN
    /// metric (the receiver does not exploit the phase statistics).
    PerChannel,
    /// Approximate joint-channel MAP detection over `X^N`.
    Joint,
}

/// Channel model at a simulation point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    /// The rotated phase-noise channel `r = Θ f_R(s) + n`.
    PhaseNoise,
    /// The large-channel-count surrogate: deterministic attenuation plus
    /// AWGN, already derotated. The rotation recipe is ignored.
    Asymptotic,
}

/// One grid point of an experiment sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPoint {
    pub channels: usize,
    pub qam_order: usize,
    pub es: f64,
    pub snr_db: f64,
    pub sigma2_p: f64,
    pub rotation: RotationRecipe,
    pub receiver: ReceiverKind,
    pub channel: ChannelKind,
}

impl SimPoint {
    pub fn channel_params(&self) -> ChannelParams {
        ChannelParams {
            channels: self.channels,
            es: self.es,
            n0: snr_to_n0(self.snr_db, self.es),
            sigma2_p: self.sigma2_p,
        }
    }
}

/// Execution parameters independent of the physical point.
#[derive(Debug, Clone, Copy)]
pub struct RunConfig {
    /// Total symbols simulated at the point (across all shards).
    pub min_symbols: u64,
    pub shards: u32,
    pub master_seed: u64,
    pub point_id: u64,
    pub enumeration_cap: u64,
    /// Collect per-bit LLRs for the AIR estimate.
    pub collect_air: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            min_symbols: FIDELITY_MIN_SYMBOLS,
            shards: 16,
            master_seed: 0,
            point_id: 0,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            collect_air: true,
        }
    }
}

/// Channel uses assigned to one shard: an even split of the total, with
/// the remainder spread over the lowest shard ids.
pub fn shard_uses(total_uses: u64, shards: u32, shard_id: u32) -> u64 {
    let base = total_uses / shards as u64;
    let rem = total_uses % shards as u64;
    base + if (shard_id as u64) < rem { 1 } else { 0 }
}

const BATCH_USES: usize = 512;

/// Runs one shard of a simulation point serially.
pub fn run_shard(point: &SimPoint, cfg: &RunConfig, shard_id: u32) -> Result<MetricsAccumulator> {
    let params = point.channel_params();
    params.validate()?;
    let constellation = Constellation::square_qam(point.qam_order, point.es)?;
    let m_bits = constellation.bits_per_symbol();
    let n = point.channels;
    let rotation = RotationOp::build(&point.rotation, n)?;

    let total_uses = cfg.min_symbols.div_ceil(n as u64);
    let my_uses = shard_uses(total_uses, cfg.shards, shard_id);

    let mut rng_sym = substream(cfg.master_seed, cfg.point_id, shard_id as u64, Source::Symbols);
    let mut rng_phase = substream(cfg.master_seed, cfg.point_id, shard_id as u64, Source::Phase);
    let mut rng_noise = substream(cfg.master_seed, cfg.point_id, shard_id as u64, Source::Noise);

    let joint = match (point.receiver, point.channel) {
        (ReceiverKind::Joint, ChannelKind::PhaseNoise) => Some(JointDetector::new(
            &constellation,
            &rotation,
            params.n0,
            params.sigma2_p,
            cfg.enumeration_cap,
        )?),
        (ReceiverKind::Joint, ChannelKind::Asymptotic) => {
            return Err(Error::InvalidParameter(
                "the asymptotic channel is defined for the per-channel receiver",
            ))
        }
        _ => None,
    };

    // Soft-metric parameters: the finite-N per-channel receiver uses the
    // plain AWGN metric; the surrogate channel is a true AWGN channel with
    // known attenuation and variance.
    let (alpha, n0_eff) = match point.channel {
        ChannelKind::PhaseNoise => (1.0, params.n0),
        ChannelKind::Asymptotic => (params.asymptotic_alpha(), params.asymptotic_noise_variance()),
    };

    let mut acc = MetricsAccumulator::new(m_bits);
    let mut decided = vec![0usize; n];
    let mut tilde = vec![Complex64::ZERO; n];
    let mut llrs = vec![0.0f64; m_bits as usize];

    let mut remaining = my_uses;
    while remaining > 0 {
        let uses = remaining.min(BATCH_USES as u64) as usize;
        remaining -= uses as u64;
        let symbols: Vec<usize> = (0..uses * n)
            .map(|_| rng_sym.random_range(0..point.qam_order))
            .collect();
        match point.channel {
            ChannelKind::PhaseNoise => {
                let batch = transmit(
                    &symbols,
                    &constellation,
                    &rotation,
                    &params,
                    &mut rng_phase,
                    &mut rng_noise,
                )?;
                for u in 0..uses {
                    let truth = &symbols[u * n..(u + 1) * n];
                    let r = &batch.received[u * n..(u + 1) * n];
                    tilde.copy_from_slice(r);
                    rotation.inverse(&mut tilde);
                    match &joint {
                        Some(det) => det.detect(r, &mut decided),
                        None => {
                            for (i, &z) in tilde.iter().enumerate() {
                                decided[i] = constellation.slice(z);
                            }
                        }
                    }
                    acc.accumulate_hard(truth, &decided);
                    if cfg.collect_air {
                        for (i, &z) in tilde.iter().enumerate() {
                            per_channel_soft(z, &constellation, n0_eff, alpha, &mut llrs);
                            acc.accumulate_soft(&llrs, truth[i]);
                        }
                    }
                }
            }
            ChannelKind::Asymptotic => {
                let rx = asymptotic_transmit(&symbols, &constellation, &params, &mut rng_noise);
                for u in 0..uses {
                    let truth = &symbols[u * n..(u + 1) * n];
                    let r = &rx[u * n..(u + 1) * n];
                    for (i, &z) in r.iter().enumerate() {
                        decided[i] = constellation.slice_scaled(z, alpha);
                    }
                    acc.accumulate_hard(truth, &decided);
                    if cfg.collect_air {
                        for (i, &z) in r.iter().enumerate() {
                            per_channel_soft(z, &constellation, n0_eff, alpha, &mut llrs);
                            acc.accumulate_soft(&llrs, truth[i]);
                        }
                    }
                }
            }
        }
    }
    Ok(acc)
}

/// Runs a full point serially: all shards in order, merged, finalized.
pub fn run_point(point: &SimPoint, cfg: &RunConfig) -> Result<MetricsReport> {
    let mut merged = MetricsAccumulator::new(
        Constellation::square_qam(point.qam_order, point.es)?.bits_per_symbol(),
    );
    for shard in 0..cfg.shards {
        let acc = run_shard(point, cfg, shard)?;
        merged.merge(&acc);
    }
    Ok(merged.finalize(cfg.master_seed))
}

/// Chi-square statistic for uniformity of drawn symbol labels.
pub fn chi_square_uniform(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum()
}

/// Upper chi-square quantile by the Wilson-Hilferty approximation.
pub fn chi_square_quantile(dof: f64, z: f64) -> f64 {
    let a = 2.0 / (9.0 * dof);
    let t = 1.0 - a + z * libm::sqrt(a);
    dof * t * t * t
}
