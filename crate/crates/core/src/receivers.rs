//! Symbol detection: the approximate joint-channel MAP receiver, the
//! per-channel derotate-and-slice receiver with soft bit outputs, and a
//! numerical-integration posterior oracle used as ground truth for the
//! Tikhonov and Bessel approximations in the joint metric.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;

use crate::constellation::Constellation;
use crate::error::Error;
use crate::rotations::RotationOp;
use crate::Result;

/// LLR magnitude clamp, in nats.
pub const LLR_CLAMP: f64 = 50.0;

/// Default cap on the joint-detector candidate count.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 24;

// ---------------------------------------------------------------------------
// Candidate table shared by the joint detector and the oracle
// ---------------------------------------------------------------------------

/// Rotated candidate vectors for every element of `X^N`, in odometer order
/// over per-channel labels (channel N-1 fastest).
struct CandidateTable {
    channels: usize,
    order: usize,
    /// `n_candidates × channels` rotated signals.
    tilde: Vec<Complex64>,
}

impl CandidateTable {
    fn build(constellation: &Constellation, rotation: &RotationOp, cap: u64) -> Result<Self> {
        let n = rotation.channels();
        let m = constellation.order();
        let size = (m as u64).checked_pow(n as u32).ok_or(Error::EnumerationTooLarge {
            size: u64::MAX,
            cap,
        })?;
        if size > cap {
            return Err(Error::EnumerationTooLarge { size, cap });
        }
        let n_cand = size as usize;
        let mut tilde = Vec::with_capacity(n_cand * n);
        let mut labels = vec![0usize; n];
        for _ in 0..n_cand {
            let base = tilde.len();
            for &l in labels.iter() {
                tilde.push(constellation.point(l));
            }
            rotation.forward(&mut tilde[base..]);
            // Odometer increment, last channel fastest.
            for pos in (0..n).rev() {
                labels[pos] += 1;
                if labels[pos] < m {
                    break;
                }
                labels[pos] = 0;
            }
        }
        Ok(Self {
            channels: n,
            order: m,
            tilde,
        })
    }

    fn candidates(&self) -> usize {
        self.tilde.len() / self.channels
    }

    /// Per-channel labels of candidate `idx`.
    fn labels(&self, idx: usize, out: &mut [usize]) {
        let mut rest = idx;
        for pos in (0..self.channels).rev() {
            out[pos] = rest % self.order;
            rest /= self.order;
        }
    }
}

// ---------------------------------------------------------------------------
// Joint-channel receiver
// ---------------------------------------------------------------------------

/// Approximate joint-channel MAP detector.
///
/// Maximizes `Σ_i [ |η_i| - |s̃_i|²/N0 - ½ ln|η_i| ]` over `X^N`, with
/// `η_i = 2 r_i s̃_i* / N0 + 1/sigma2_p`, entirely in the log domain.
/// When the rotation is the identity the metric factorizes over channels
/// and is maximized per channel.
pub struct JointDetector {
    channels: usize,
    /// Unrotated constellation points, used by the factorized path.
    points: Vec<Complex64>,
    /// Full rotated candidate table; absent when the metric factorizes.
    table: Option<CandidateTable>,
    n0: f64,
    inv_sigma2: f64,
}

impl JointDetector {
    pub fn new(
        constellation: &Constellation,
        rotation: &RotationOp,
        n0: f64,
        sigma2_p: f64,
        cap: u64,
    ) -> Result<Self> {
        if !(sigma2_p > 0.0) {
            return Err(Error::ZeroPhaseVariance);
        }
        if !(n0 > 0.0) {
            return Err(Error::InvalidParameter("N0 must be positive"));
        }
        let table = if rotation.is_identity() {
            None
        } else {
            Some(CandidateTable::build(constellation, rotation, cap)?)
        };
        Ok(Self {
            channels: rotation.channels(),
            points: constellation.points().to_vec(),
            table,
            n0,
            inv_sigma2: 1.0 / sigma2_p,
        })
    }

    #[inline]
    fn channel_metric(&self, r: Complex64, tilde: Complex64) -> f64 {
        let eta_re = 2.0 * (r.re * tilde.re + r.im * tilde.im) / self.n0 + self.inv_sigma2;
        let eta_im = 2.0 * (r.im * tilde.re - r.re * tilde.im) / self.n0;
        let eta_abs = libm::sqrt(eta_re * eta_re + eta_im * eta_im);
        eta_abs - tilde.norm_sqr() / self.n0 - 0.5 * libm::log(eta_abs)
    }

    /// Detects one channel use; returns per-channel labels. Ties break to
    /// the lowest candidate index.
    pub fn detect(&self, r: &[Complex64], labels_out: &mut [usize]) {
        let n = self.channels;
        debug_assert_eq!(r.len(), n);
        debug_assert_eq!(labels_out.len(), n);
        let table = match &self.table {
            None => {
                // Unrotated: the metric separates; argmax per channel over X.
                for i in 0..n {
                    let mut best = 0usize;
                    let mut best_metric = f64::NEG_INFINITY;
                    for (l, &p) in self.points.iter().enumerate() {
                        let metric = self.channel_metric(r[i], p);
                        if metric > best_metric {
                            best_metric = metric;
                            best = l;
                        }
                    }
                    labels_out[i] = best;
                }
                return;
            }
            Some(table) => table,
        };
        let mut best = 0usize;
        let mut best_metric = f64::NEG_INFINITY;
        for cand in 0..table.candidates() {
            let row = &table.tilde[cand * n..(cand + 1) * n];
            let mut metric = 0.0;
            for i in 0..n {
                metric += self.channel_metric(r[i], row[i]);
            }
            if metric > best_metric {
                best_metric = metric;
                best = cand;
            }
        }
        table.labels(best, labels_out);
    }
}

// ---------------------------------------------------------------------------
// Exact-posterior oracle
// ---------------------------------------------------------------------------

/// Ground-truth MAP detector evaluating the per-channel phase integral
/// `∫ CN(r; s̃ e^{jθ}, N0) N(θ; 0, sigma2_p) dθ` by adaptive Simpson
/// quadrature in the log domain.
///
/// Intended for small `N` and small constellations (test/validation use).
pub struct ExactPosteriorOracle {
    table: CandidateTable,
    n0: f64,
    sigma2_p: f64,
    rel_tol: f64,
}

/// Outcome of one adaptive quadrature evaluation.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureOutcome {
    pub value: f64,
    pub converged: bool,
    pub achieved_rel_tol: f64,
}

// 16-point Gauss-Legendre nodes (positive half) and weights on [-1, 1].
const GL16_X: [f64; 8] = [
    0.095_012_509_837_637_44,
    0.281_603_550_779_258_9,
    0.458_016_777_657_227_4,
    0.617_876_244_402_643_8,
    0.755_404_408_355_003_0,
    0.865_631_202_387_831_8,
    0.944_575_023_073_232_6,
    0.989_400_934_991_649_9,
];
const GL16_W: [f64; 8] = [
    0.189_450_610_455_068_5,
    0.182_603_415_044_923_6,
    0.169_156_519_395_002_5,
    0.149_595_988_816_576_7,
    0.124_628_971_255_533_9,
    0.095_158_511_682_492_8,
    0.062_253_523_938_647_9,
    0.027_152_459_411_754_1,
];

/// Composite 16-point Gauss-Legendre over [a, b] split into `panels`.
fn composite_gl16(f: &impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let scale = 0.5 * h;
        let mut acc = 0.0;
        for k in 0..8 {
            acc += GL16_W[k] * (f(mid - scale * GL16_X[k]) + f(mid + scale * GL16_X[k]));
        }
        total += scale * acc;
    }
    total
}

impl ExactPosteriorOracle {
    pub fn new(
        constellation: &Constellation,
        rotation: &RotationOp,
        n0: f64,
        sigma2_p: f64,
    ) -> Result<Self> {
        if !(n0 > 0.0) {
            return Err(Error::InvalidParameter("N0 must be positive"));
        }
        if !(sigma2_p >= 0.0) {
            return Err(Error::InvalidParameter("sigma2_p must be nonnegative"));
        }
        let table = CandidateTable::build(constellation, rotation, DEFAULT_ENUMERATION_CAP)?;
        Ok(Self {
            table,
            n0,
            sigma2_p,
            rel_tol: 1e-9,
        })
    }

    /// Log of the phase-marginalized channel likelihood, with normalization
    /// constants included.
    fn log_channel_likelihood(&self, r: Complex64, tilde: Complex64) -> QuadratureOutcome {
        if self.sigma2_p == 0.0 {
            // Integrand collapses to a delta at θ = 0.
            let v = -(r - tilde).norm_sqr() / self.n0
                - libm::log(core::f64::consts::PI * self.n0);
            return QuadratureOutcome {
                value: v,
                converged: true,
                achieved_rel_tol: 0.0,
            };
        }
        let sigma_p = libm::sqrt(self.sigma2_p);
        let half = 8.0 * sigma_p;
        let log_norm = -libm::log(core::f64::consts::PI * self.n0)
            - 0.5 * libm::log(2.0 * core::f64::consts::PI * self.sigma2_p);
        // |r - s e^{j theta}|^2 = |r|^2 + |s|^2 - 2 Re(r conj(s) e^{-j theta}),
        // so the exponent is  c + k cos(theta - phi) - theta^2 / (2 sigma^2)
        // with k e^{j phi} = 2 r conj(s) / N0.
        let kappa = 2.0 * r * tilde.conj() / self.n0;
        let (k, phi) = (kappa.norm(), kappa.arg());
        let c = -(r.norm_sqr() + tilde.norm_sqr()) / self.n0;
        let inv_s2 = 1.0 / self.sigma2_p;
        let h = |theta: f64| k * libm::cos(theta - phi) - 0.5 * theta * theta * inv_s2;
        let hp = |theta: f64| -k * libm::sin(theta - phi) - theta * inv_s2;
        let hpp = |theta: f64| -k * libm::cos(theta - phi) - inv_s2;
        // Locate the exponent's peak: coarse scan, then Newton refinement.
        let refine = |start: f64| -> f64 {
            let mut t = start;
            for _ in 0..40 {
                let curv = hpp(t);
                if !(curv < 0.0) {
                    break;
                }
                let step = -hp(t) / curv;
                let next = (t + step).clamp(-half, half);
                if libm::fabs(next - t) < 1e-15 {
                    t = next;
                    break;
                }
                t = next;
            }
            t
        };
        let scan = 64;
        let mut t0 = -half;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=scan {
            let theta = -half + 2.0 * half * i as f64 / scan as f64;
            let v = h(theta);
            if v > best {
                best = v;
                t0 = theta;
            }
        }
        let t_star = refine(t0);
        let h_star = h(t_star).max(best);
        // Laplace width at the peak; a floor keeps flat exponents covered.
        let width = 1.0 / libm::sqrt((-hpp(t_star)).max(1.0 / (half * half)));
        // Dominant window, plus the neighboring cosine peaks when the
        // domain is wide enough for them to carry non-negligible mass.
        let mut windows: Vec<(f64, f64)> = Vec::new();
        let mut push_window = |center: f64, w: f64| {
            let a = (center - 12.0 * w).max(-half);
            let b = (center + 12.0 * w).min(half);
            if b > a {
                windows.push((a, b));
            }
        };
        push_window(t_star, width);
        for dir in [-1.0, 1.0] {
            let alias = t_star + dir * 2.0 * core::f64::consts::PI;
            if libm::fabs(alias) < half + 1.0 {
                let t_a = refine(alias.clamp(-half, half));
                if h(t_a) > h_star - 40.0 {
                    let w_a = 1.0 / libm::sqrt((-hpp(t_a)).max(1.0 / (half * half)));
                    push_window(t_a, w_a);
                }
            }
        }
        // Merge overlaps so no interval is integrated twice.
        windows.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (a, b) in windows {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        let f = |theta: f64| libm::exp(h(theta) - h_star);
        let mut integral = 0.0;
        let mut worst_rel = 0.0f64;
        for (a, b) in merged {
            let mut panels = (((b - a) / width).max(2.0) * 0.5) as usize;
            panels = panels.clamp(2, 64);
            let mut coarse = composite_gl16(&f, a, b, panels);
            let mut fine = composite_gl16(&f, a, b, 2 * panels);
            let mut rel = libm::fabs(fine - coarse) / (libm::fabs(fine) + 1e-300);
            while rel > self.rel_tol && panels < 512 {
                panels *= 2;
                coarse = fine;
                fine = composite_gl16(&f, a, b, 2 * panels);
                rel = libm::fabs(fine - coarse) / (libm::fabs(fine) + 1e-300);
            }
            worst_rel = worst_rel.max(rel);
            integral += fine;
        }
        QuadratureOutcome {
            value: libm::log(integral.max(1e-300)) + h_star + c + log_norm,
            converged: worst_rel <= self.rel_tol * 100.0,
            achieved_rel_tol: worst_rel,
        }
    }

    /// Unnormalized log-posterior of every candidate in `X^N`.
    pub fn log_posteriors(&self, r: &[Complex64]) -> Result<Vec<f64>> {
        let n = self.table.channels;
        if r.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: r.len(),
            });
        }
        let mut out = Vec::with_capacity(self.table.candidates());
        let mut worst = 0.0f64;
        let mut converged = true;
        for cand in 0..self.table.candidates() {
            let row = &self.table.tilde[cand * n..(cand + 1) * n];
            let mut log_p = 0.0;
            for i in 0..n {
                let q = self.log_channel_likelihood(r[i], row[i]);
                converged &= q.converged;
                worst = worst.max(q.achieved_rel_tol);
                log_p += q.value;
            }
            out.push(log_p);
        }
        if !converged {
            return Err(Error::QuadratureNotConverged { achieved: worst });
        }
        Ok(out)
    }

    /// Normalized posterior PMF over `X^N`.
    pub fn posterior_pmf(&self, r: &[Complex64]) -> Result<Vec<f64>> {
        let logs = self.log_posteriors(r)?;
        let max = logs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut pmf: Vec<f64> = logs.iter().map(|&l| libm::exp(l - max)).collect();
        let total: f64 = pmf.iter().sum();
        for p in pmf.iter_mut() {
            *p /= total;
        }
        Ok(pmf)
    }

    /// MAP decision; ties break to the lowest candidate index.
    pub fn detect(&self, r: &[Complex64], labels_out: &mut [usize]) -> Result<()> {
        let logs = self.log_posteriors(r)?;
        let mut best = 0;
        let mut best_log = f64::NEG_INFINITY;
        for (cand, &l) in logs.iter().enumerate() {
            if l > best_log {
                best_log = l;
                best = cand;
            }
        }
        self.table.labels(best, labels_out);
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Per-channel receiver
// ---------------------------------------------------------------------------

/// Derotates and slices per channel; `scratch` must have length N.
/// Returns decisions through `labels_out`.
pub fn per_channel_detect(
    r: &[Complex64],
    rotation: &RotationOp,
    constellation: &Constellation,
    labels_out: &mut [usize],
) {
    debug_assert_eq!(r.len(), rotation.channels());
    let mut tilde = r.to_vec();
    rotation.inverse(&mut tilde);
    for (i, &z) in tilde.iter().enumerate() {
        labels_out[i] = constellation.slice(z);
    }
}

/// Per-bit LLRs for one derotated channel observation under the
/// mismatched Gaussian decoding metric with attenuation `alpha` and noise
/// variance `n0_eff`. Natural log; clamped to ±[`LLR_CLAMP`].
///
/// For the finite-N per-channel receiver `alpha = 1` and `n0_eff = N0`;
/// the asymptotic channel uses its closed-form attenuation and variance.
pub fn per_channel_soft(
    r_tilde: Complex64,
    constellation: &Constellation,
    n0_eff: f64,
    alpha: f64,
    llrs_out: &mut [f64],
) {
    let m_bits = constellation.bits_per_symbol() as usize;
    debug_assert_eq!(llrs_out.len(), m_bits);
    // Online log-sum-exp accumulators per (bit, value).
    let mut max1 = [f64::NEG_INFINITY; 16];
    let mut sum1 = [0.0f64; 16];
    let mut max0 = [f64::NEG_INFINITY; 16];
    let mut sum0 = [0.0f64; 16];
    for (label, &x) in constellation.points().iter().enumerate() {
        let metric = -(r_tilde - alpha * x).norm_sqr() / n0_eff;
        for k in 0..m_bits {
            let bit = (label >> (m_bits - 1 - k)) & 1 == 1;
            let (max, sum) = if bit {
                (&mut max1[k], &mut sum1[k])
            } else {
                (&mut max0[k], &mut sum0[k])
            };
            if metric > *max {
                *sum = *sum * libm::exp(*max - metric) + 1.0;
                *max = metric;
            } else {
                *sum += libm::exp(metric - *max);
            }
        }
    }
    for k in 0..m_bits {
        let llr = (max1[k] + libm::log(sum1[k])) - (max0[k] + libm::log(sum0[k]));
        llrs_out[k] = llr.clamp(-LLR_CLAMP, LLR_CLAMP);
    }
}
