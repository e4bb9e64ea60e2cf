//! BLER/SER/BER/AIR estimation with mergeable accumulators.
//!
//! Hard counters follow the usual definitions: a block error is any wrong
//! symbol among the N jointly rotated channels, symbol errors are counted
//! per channel, and bit errors come from label XOR popcounts. The AIR is
//! the per-bit mismatched-decoding rate in bits per complex symbol,
//! estimated from LLRs with a maximization over an LLR scaling factor
//! (the unscaled estimator is the special case s = 1).

use alloc::vec::Vec;

use crate::constellation::bit_errors;

const LN2: f64 = core::f64::consts::LN_2;

/// `log2(1 + exp(u))`, overflow-safe.
#[inline]
fn log2_1p_exp(u: f64) -> f64 {
    if u > 0.0 {
        u / LN2 + libm::log1p(libm::exp(-u)) / LN2
    } else {
        libm::log1p(libm::exp(u)) / LN2
    }
}

/// Mergeable error and AIR statistics for one simulation point.
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    pub n_blocks: u64,
    pub n_block_errors: u64,
    pub n_symbols: u64,
    pub n_symbol_errors: u64,
    pub n_bits: u64,
    pub n_bit_errors: u64,
    bits_per_symbol: u32,
    /// Signed LLRs `(2b - 1) L`, in accumulation order, grouped per symbol.
    air_terms: Vec<f32>,
}

impl MetricsAccumulator {
    pub fn new(bits_per_symbol: u32) -> Self {
        Self {
            bits_per_symbol,
            ..Default::default()
        }
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.bits_per_symbol
    }

    /// Counts one block of per-channel decisions against the truth.
    pub fn accumulate_hard(&mut self, truth: &[usize], decided: &[usize]) {
        debug_assert_eq!(truth.len(), decided.len());
        self.n_blocks += 1;
        let mut any = false;
        for (&t, &d) in truth.iter().zip(decided) {
            self.n_symbols += 1;
            self.n_bits += self.bits_per_symbol as u64;
            if t != d {
                any = true;
                self.n_symbol_errors += 1;
                self.n_bit_errors += bit_errors(t, d) as u64;
            }
        }
        if any {
            self.n_block_errors += 1;
        }
    }

    /// Records one symbol's LLRs against its true label for AIR estimation.
    pub fn accumulate_soft(&mut self, llrs: &[f64], true_label: usize) {
        let m = self.bits_per_symbol as usize;
        debug_assert_eq!(llrs.len(), m);
        for (k, &l) in llrs.iter().enumerate() {
            let bit = (true_label >> (m - 1 - k)) & 1 == 1;
            let sign = if bit { 1.0 } else { -1.0 };
            self.air_terms.push((sign * l) as f32);
        }
    }

    /// Merges another accumulator; associative and commutative for the
    /// counters, order-preserving concatenation for the AIR terms.
    pub fn merge(&mut self, other: &MetricsAccumulator) {
        debug_assert_eq!(self.bits_per_symbol, other.bits_per_symbol);
        self.n_blocks += other.n_blocks;
        self.n_block_errors += other.n_block_errors;
        self.n_symbols += other.n_symbols;
        self.n_symbol_errors += other.n_symbol_errors;
        self.n_bits += other.n_bits;
        self.n_bit_errors += other.n_bit_errors;
        self.air_terms.extend_from_slice(&other.air_terms);
    }

    pub fn has_soft(&self) -> bool {
        !self.air_terms.is_empty()
    }

    /// Finalizes rates, stderrs, and the AIR estimate.
    pub fn finalize(&self, seed: u64) -> MetricsReport {
        let rate = |errors: u64, total: u64| -> (f64, f64) {
            if total == 0 {
                return (f64::NAN, f64::NAN);
            }
            let p = errors as f64 / total as f64;
            let se = libm::sqrt(p * (1.0 - p) / total as f64);
            (p, se)
        };
        let (bler, bler_stderr) = rate(self.n_block_errors, self.n_blocks);
        let (ser, ser_stderr) = rate(self.n_symbol_errors, self.n_symbols);
        let (ber, ber_stderr) = rate(self.n_bit_errors, self.n_bits);
        let (air, air_stderr) = if self.has_soft() {
            air_from_signed_llrs(&self.air_terms, self.bits_per_symbol)
        } else {
            (f64::NAN, f64::NAN)
        };
        MetricsReport {
            bler,
            bler_stderr,
            ser,
            ser_stderr,
            ber,
            ber_stderr,
            air,
            air_stderr,
            n_blocks: self.n_blocks,
            n_symbols: self.n_symbols,
            n_bits: self.n_bits,
            seed,
        }
    }
}

/// Point estimates with Monte Carlo standard errors and provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub bler: f64,
    pub bler_stderr: f64,
    pub ser: f64,
    pub ser_stderr: f64,
    pub ber: f64,
    pub ber_stderr: f64,
    /// Bits per complex symbol; NaN when no soft outputs were collected.
    pub air: f64,
    pub air_stderr: f64,
    pub n_blocks: u64,
    pub n_symbols: u64,
    pub n_bits: u64,
    pub seed: u64,
}

/// Mean penalty `(1/n) Σ log2(1 + exp(-s z))` over signed LLRs.
fn mean_penalty(terms: &[f32], s: f64) -> f64 {
    let mut acc = 0.0;
    for &z in terms {
        acc += log2_1p_exp(-s * z as f64);
    }
    acc / terms.len() as f64
}

/// AIR and its standard error from signed LLRs `(2b-1) L`, maximizing over
/// the LLR scaling. The penalty is convex in the scale, so a ternary search
/// over log-scale finds the optimum.
pub fn air_from_signed_llrs(terms: &[f32], bits_per_symbol: u32) -> (f64, f64) {
    if terms.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = bits_per_symbol as f64;
    let n_symbols = terms.len() / bits_per_symbol as usize;
    // Ternary search on u = ln s over a wide bracket.
    let mut lo = libm::log(1e-4);
    let mut hi = libm::log(1e2);
    for _ in 0..60 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if mean_penalty(terms, libm::exp(a)) < mean_penalty(terms, libm::exp(b)) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let s_opt = libm::exp(0.5 * (lo + hi));
    // Include s = 1 (the matched case) in the comparison so a matched
    // metric is never penalized by bracket granularity.
    let (s_best, penalty) = {
        let p_opt = mean_penalty(terms, s_opt);
        let p_one = mean_penalty(terms, 1.0);
        if p_one <= p_opt {
            (1.0, p_one)
        } else {
            (s_opt, p_opt)
        }
    };
    let _ = penalty;
    // Per-symbol contributions at the optimal scale give both the AIR
    // (their mean) and its standard error (their sample spread).
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for chunk in terms.chunks_exact(bits_per_symbol as usize) {
        let mut c = m;
        for &z in chunk {
            c -= log2_1p_exp(-s_best * z as f64);
        }
        sum += c;
        sum_sq += c * c;
    }
    let n = n_symbols as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    let stderr = libm::sqrt(var / n);
    (mean, stderr)
}

/// Per-bit AIR estimate from one batch of LLRs and true bits, as used by
/// the per-symbol soft path. Exposed for direct use and tests.
pub fn air_from_llrs(llrs: &[f64], true_bits: &[bool], bits_per_symbol: u32) -> (f64, f64) {
    debug_assert_eq!(llrs.len(), true_bits.len());
    let terms: Vec<f32> = llrs
        .iter()
        .zip(true_bits)
        .map(|(&l, &b)| (if b { l } else { -l }) as f32)
        .collect();
    air_from_signed_llrs(&terms, bits_per_symbol)
}

/// Metrics of a rotated run relative to an unrotated baseline: error-rate
/// ratios and the AIR difference. Ratios with a zero denominator are NaN
/// ("undefined"), never infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeReport {
    pub bler_ratio: f64,
    pub ser_ratio: f64,
    pub ber_ratio: f64,
    pub air_diff: f64,
}

pub fn relative_report(rotated: &MetricsReport, unrotated: &MetricsReport) -> RelativeReport {
    let ratio = |a: f64, b: f64| if b == 0.0 { f64::NAN } else { a / b };
    RelativeReport {
        bler_ratio: ratio(rotated.bler, unrotated.bler),
        ser_ratio: ratio(rotated.ser, unrotated.ser),
        ber_ratio: ratio(rotated.ber, unrotated.ber),
        air_diff: rotated.air - unrotated.air,
    }
}
