//! The multichannel residual-phase-noise transmission model and its
//! large-channel-count asymptotic surrogate.
//!
//! The received signal is `r = Θ f_R(s) + n` with per-channel i.i.d.
//! zero-mean Gaussian phases of variance `sigma2_p` and circularly
//! symmetric complex AWGN of variance `n0`. The surrogate channel replaces
//! rotation, phase noise, and derotation by deterministic attenuation
//! `alpha = exp(-sigma2_p / 2)` plus AWGN of variance
//! `n0 + es (1 - exp(-sigma2_p))`.

use alloc::vec::Vec;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::constellation::Constellation;
use crate::error::Error;
use crate::rotations::RotationOp;
use crate::Result;

/// Channel parameters shared by both receivers and the Monte Carlo engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Number of complex channels rotated jointly.
    pub channels: usize,
    /// Average symbol energy per channel.
    pub es: f64,
    /// Complex AWGN variance per channel.
    pub n0: f64,
    /// Residual phase-noise variance, rad².
    pub sigma2_p: f64,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if self.channels < 1 {
            return Err(Error::InvalidParameter("channels must be >= 1"));
        }
        if !(self.n0 > 0.0) {
            return Err(Error::InvalidParameter("N0 must be positive"));
        }
        if !(self.sigma2_p >= 0.0) {
            return Err(Error::InvalidParameter("sigma2_p must be nonnegative"));
        }
        Ok(())
    }

    /// Attenuation of the asymptotic surrogate channel.
    pub fn asymptotic_alpha(&self) -> f64 {
        libm::exp(-self.sigma2_p / 2.0)
    }

    /// Total noise variance of the asymptotic surrogate channel.
    pub fn asymptotic_noise_variance(&self) -> f64 {
        self.n0 + self.es * (1.0 - libm::exp(-self.sigma2_p))
    }
}

/// `N0 = Es / 10^(snr_db / 10)`.
pub fn snr_to_n0(snr_db: f64, es: f64) -> f64 {
    es / libm::pow(10.0, snr_db / 10.0)
}

/// One batch of channel uses: drawn symbols, transmitted signals, phase
/// realizations, and received vectors, stored flat as `uses × channels`.
#[derive(Debug, Clone)]
pub struct TransmissionBatch {
    pub channels: usize,
    /// Symbol labels, one per channel use.
    pub symbols: Vec<usize>,
    /// Rotated (transmitted) signals.
    pub tx: Vec<Complex64>,
    /// Phase draws, radians.
    pub theta: Vec<f64>,
    /// Received signals.
    pub received: Vec<Complex64>,
}

impl TransmissionBatch {
    pub fn uses(&self) -> usize {
        self.symbols.len() / self.channels
    }
}

#[inline]
pub(crate) fn complex_awgn<R: Rng>(variance: f64, rng: &mut R) -> Complex64 {
    let sigma = libm::sqrt(variance / 2.0);
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * sigma, im * sigma)
}

/// Transmits symbol labels through `r = Θ f_R(s) + n`.
///
/// `symbols.len()` must be a multiple of `params.channels`; the rotation is
/// applied per channel use. Phase and noise draws come from separate
/// streams so that either source can be switched off or checked in
/// isolation.
pub fn transmit<R1: Rng, R2: Rng>(
    symbols: &[usize],
    constellation: &Constellation,
    rotation: &RotationOp,
    params: &ChannelParams,
    rng_phase: &mut R1,
    rng_noise: &mut R2,
) -> Result<TransmissionBatch> {
    params.validate()?;
    let n = params.channels;
    if rotation.channels() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: rotation.channels(),
        });
    }
    if symbols.len() % n != 0 {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: symbols.len(),
        });
    }
    let sigma_p = libm::sqrt(params.sigma2_p);
    let mut tx = Vec::with_capacity(symbols.len());
    let mut theta = Vec::with_capacity(symbols.len());
    let mut received = Vec::with_capacity(symbols.len());
    for chunk in symbols.chunks_exact(n) {
        let base = tx.len();
        for &label in chunk {
            tx.push(constellation.point(label));
        }
        rotation.forward(&mut tx[base..]);
        for &s in &tx[base..] {
            let th = if sigma_p > 0.0 {
                let z: f64 = rng_phase.sample(StandardNormal);
                z * sigma_p
            } else {
                0.0
            };
            theta.push(th);
            let rotated = s * Complex64::from_polar(1.0, th);
            received.push(rotated + complex_awgn(params.n0, rng_noise));
        }
    }
    Ok(TransmissionBatch {
        channels: n,
        symbols: symbols.to_vec(),
        tx,
        theta,
        received,
    })
}

/// Transmits symbol labels through the asymptotic surrogate channel,
/// returning the post-derotation signal `r = alpha s + n'` directly.
pub fn asymptotic_transmit<R: Rng>(
    symbols: &[usize],
    constellation: &Constellation,
    params: &ChannelParams,
    rng_noise: &mut R,
) -> Vec<Complex64> {
    let alpha = params.asymptotic_alpha();
    let var = params.asymptotic_noise_variance();
    symbols
        .iter()
        .map(|&label| constellation.point(label) * alpha + complex_awgn(var, rng_noise))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotations::{RotationOp, RotationRecipe};
    use crate::streams::{substream, Source};
    use rand::Rng;

    fn qam(m: usize) -> Constellation {
        Constellation::square_qam(m, 1.0).unwrap()
    }

    #[test]
    fn snr_conversion() {
        assert!((snr_to_n0(0.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((snr_to_n0(10.0, 1.0) - 0.1).abs() < 1e-15);
        assert!((snr_to_n0(22.5, 1.0) - 10f64.powf(-2.25)).abs() < 1e-15);
    }

    #[test]
    fn degenerate_noiseless_limit() {
        let c = qam(16);
        let rot = RotationOp::build(&RotationRecipe::Hadamard { order: 2 }, 2).unwrap();
        let params = ChannelParams {
            channels: 2,
            es: 1.0,
            n0: 1e-30,
            sigma2_p: 0.0,
        };
        let mut rp = substream(1, 0, 0, Source::Phase);
        let mut rn = substream(1, 0, 0, Source::Noise);
        let symbols = [3usize, 7, 11, 0];
        let batch = transmit(&symbols, &c, &rot, &params, &mut rp, &mut rn).unwrap();
        for (r, t) in batch.received.iter().zip(&batch.tx) {
            assert!((r - t).norm() < 1e-12);
        }
        assert_eq!(batch.uses(), 2);
        assert!(batch.theta.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn draw_statistics() {
        let c = qam(4);
        let rot = RotationOp::build(&RotationRecipe::Identity, 1).unwrap();
        let params = ChannelParams {
            channels: 1,
            es: 1.0,
            n0: 0.25,
            sigma2_p: 4e-2,
        };
        let mut rp = substream(2, 0, 0, Source::Phase);
        let mut rn = substream(2, 0, 0, Source::Noise);
        let mut rs = substream(2, 0, 0, Source::Symbols);
        let n = 1_000_000usize;
        let symbols: Vec<usize> = (0..n).map(|_| rs.random_range(0..4)).collect();
        let batch = transmit(&symbols, &c, &rot, &params, &mut rp, &mut rn).unwrap();
        let var_theta =
            batch.theta.iter().map(|t| t * t).sum::<f64>() / n as f64;
        assert!((var_theta / params.sigma2_p - 1.0).abs() < 0.01);
        let noise_power = batch
            .received
            .iter()
            .zip(&batch.tx)
            .zip(&batch.theta)
            .map(|((r, t), th)| (r - t * Complex64::from_polar(1.0, *th)).norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!((noise_power / params.n0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn rotation_leaves_awgn_statistics() {
        // With sigma2_p = 0, r - f_R(s) is distributed like n.
        let c = qam(16);
        let rot = RotationOp::build(&RotationRecipe::Hadamard { order: 4 }, 4).unwrap();
        let params = ChannelParams {
            channels: 4,
            es: 1.0,
            n0: 0.5,
            sigma2_p: 0.0,
        };
        let mut rp = substream(3, 0, 0, Source::Phase);
        let mut rn = substream(3, 0, 0, Source::Noise);
        let mut rs = substream(3, 0, 0, Source::Symbols);
        let n = 1_000_000usize;
        let symbols: Vec<usize> = (0..n).map(|_| rs.random_range(0..16)).collect();
        let batch = transmit(&symbols, &c, &rot, &params, &mut rp, &mut rn).unwrap();
        let mut var_re = 0.0;
        let mut var_im = 0.0;
        for (r, t) in batch.received.iter().zip(&batch.tx) {
            let d = r - t;
            var_re += d.re * d.re;
            var_im += d.im * d.im;
        }
        var_re /= n as f64;
        var_im /= n as f64;
        assert!((var_re / (params.n0 / 2.0) - 1.0).abs() < 0.01);
        assert!((var_im / (params.n0 / 2.0) - 1.0).abs() < 0.01);
    }

    #[test]
    fn seeded_batches_are_identical() {
        let c = qam(64);
        let rot = RotationOp::build(&RotationRecipe::Ser4, 2).unwrap();
        let params = ChannelParams {
            channels: 2,
            es: 1.0,
            n0: 0.01,
            sigma2_p: 1e-2,
        };
        let symbols = [5usize, 60, 17, 2, 33, 8];
        let run = || {
            let mut rp = substream(9, 4, 1, Source::Phase);
            let mut rn = substream(9, 4, 1, Source::Noise);
            transmit(&symbols, &c, &rot, &params, &mut rp, &mut rn).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.received, b.received);
        assert_eq!(a.theta, b.theta);
    }

    #[test]
    fn asymptotic_closed_forms() {
        let params = ChannelParams {
            channels: 1,
            es: 1.0,
            n0: 0.1,
            sigma2_p: 1e-2,
        };
        assert!((params.asymptotic_alpha() - (-0.005f64).exp()).abs() < 1e-15);
        let extra = 1.0 - (-0.01f64).exp();
        assert!((params.asymptotic_noise_variance() - (0.1 + extra)).abs() < 1e-15);

        let zero = ChannelParams {
            sigma2_p: 0.0,
            ..params
        };
        assert_eq!(zero.asymptotic_alpha(), 1.0);
        assert_eq!(zero.asymptotic_noise_variance(), zero.n0);
    }

    #[test]
    fn asymptotic_regression_recovers_alpha() {
        let c = qam(64);
        let params = ChannelParams {
            channels: 1,
            es: 1.0,
            n0: 0.05,
            sigma2_p: 2e-2,
        };
        let mut rn = substream(4, 0, 0, Source::Noise);
        let mut rs = substream(4, 0, 0, Source::Symbols);
        let n = 1_000_000usize;
        let symbols: Vec<usize> = (0..n).map(|_| rs.random_range(0..64)).collect();
        let rx = asymptotic_transmit(&symbols, &c, &params, &mut rn);
        let mut num = Complex64::ZERO;
        let mut den = 0.0;
        for (r, &label) in rx.iter().zip(&symbols) {
            let s = c.point(label);
            num += r * s.conj();
            den += s.norm_sqr();
        }
        let alpha_hat = (num / den).re;
        assert!((alpha_hat / params.asymptotic_alpha() - 1.0).abs() < 0.005);
    }
}
