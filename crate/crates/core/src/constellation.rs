//! Gray-labeled square-QAM constellations normalized to average symbol
//! energy `Es`.
//!
//! Labeling convention: reflected binary Gray code applied independently
//! per axis, with the in-phase bits first (most significant) and the
//! quadrature bits last. Axis position 0 corresponds to the most positive
//! coordinate, so the all-zeros label lands in the first quadrant.

use alloc::vec::Vec;
use num_complex::Complex64;

use crate::error::Error;
use crate::Result;

/// A complex point set with per-point bit labels and energy normalization.
#[derive(Debug, Clone)]
pub struct Constellation {
    order: usize,
    bits_per_symbol: u32,
    es: f64,
    /// Points indexed by label value.
    points: Vec<Complex64>,
}

/// Inverse of the reflected Gray code `a -> a ^ (a >> 1)`.
fn gray_inverse(g: usize) -> usize {
    let mut b = 0;
    let mut x = g;
    while x > 0 {
        b ^= x;
        x >>= 1;
    }
    b
}

impl Constellation {
    /// Builds a Gray-labeled square QAM of order `m` in {4, 16, 64, 256, 1024}.
    pub fn square_qam(m: usize, es: f64) -> Result<Self> {
        if !matches!(m, 4 | 16 | 64 | 256 | 1024) {
            return Err(Error::UnsupportedQamOrder(m));
        }
        if !(es > 0.0) {
            return Err(Error::InvalidParameter("Es must be positive"));
        }
        let bits_per_symbol = m.trailing_zeros();
        let side = 1usize << (bits_per_symbol / 2);
        let axis_bits = bits_per_symbol / 2;

        // Odd-integer grid; axis position a maps to coordinate side-1-2a.
        let axis_power: f64 = (0..side)
            .map(|a| {
                let c = (side as f64 - 1.0) - 2.0 * a as f64;
                c * c
            })
            .sum::<f64>()
            / side as f64;
        let scale = libm::sqrt(es / (2.0 * axis_power));

        let mut points = Vec::with_capacity(m);
        for label in 0..m {
            let gi = label >> axis_bits;
            let gq = label & ((1 << axis_bits) - 1);
            let ai = gray_inverse(gi) as f64;
            let aq = gray_inverse(gq) as f64;
            let re = ((side as f64 - 1.0) - 2.0 * ai) * scale;
            let im = ((side as f64 - 1.0) - 2.0 * aq) * scale;
            points.push(Complex64::new(re, im));
        }
        Ok(Self {
            order: m,
            bits_per_symbol,
            es,
            points,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.bits_per_symbol
    }

    pub fn es(&self) -> f64 {
        self.es
    }

    /// The point carrying the given label value.
    #[inline]
    pub fn point(&self, label: usize) -> Complex64 {
        self.points[label]
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Maps a bit string (most significant bit first) to its point.
    pub fn map_bits(&self, bits: &[bool]) -> Result<Complex64> {
        if bits.len() != self.bits_per_symbol as usize {
            return Err(Error::BadBitLength {
                expected: self.bits_per_symbol as usize,
                got: bits.len(),
            });
        }
        let label = bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
        Ok(self.points[label])
    }

    /// Recovers the bit string of a point index (label value).
    pub fn demap_symbol(&self, label: usize) -> Vec<bool> {
        (0..self.bits_per_symbol)
            .rev()
            .map(|k| (label >> k) & 1 == 1)
            .collect()
    }

    /// Minimum-distance decision, lowest label on ties.
    #[inline]
    pub fn slice(&self, r: Complex64) -> usize {
        self.slice_scaled(r, 1.0)
    }

    /// Minimum-distance decision against the attenuated constellation
    /// `alpha * x`, lowest label on ties.
    pub fn slice_scaled(&self, r: Complex64, alpha: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (label, x) in self.points.iter().enumerate() {
            let d = (r - alpha * x).norm_sqr();
            if d < best_d {
                best_d = d;
                best = label;
            }
        }
        best
    }

    /// Mean of `|x|^2` over the points.
    pub fn mean_energy(&self) -> f64 {
        self.points.iter().map(|x| x.norm_sqr()).sum::<f64>() / self.order as f64
    }

    /// Mean of `x^2` over the points; zero for square QAM, the
    /// circular-symmetry condition of the asymptotic channel.
    pub fn pseudo_moment(&self) -> Complex64 {
        self.points.iter().map(|x| x * x).sum::<Complex64>() / self.order as f64
    }
}

/// Bits differing between two labels.
#[inline]
pub fn bit_errors(a: usize, b: usize) -> u32 {
    (a ^ b).count_ones()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qpsk_points() {
        let c = Constellation::square_qam(4, 1.0).unwrap();
        let s = core::f64::consts::FRAC_1_SQRT_2;
        for p in c.points() {
            assert!((p.re.abs() - s).abs() < 1e-12);
            assert!((p.im.abs() - s).abs() < 1e-12);
        }
        // "00" lands in the first quadrant.
        let p = c.map_bits(&[false, false]).unwrap();
        assert!(p.re > 0.0 && p.im > 0.0);
    }

    #[test]
    fn qam16_scale() {
        let c = Constellation::square_qam(16, 1.0).unwrap();
        // Mean power of the {±1, ±3}² grid is 10.
        let scale = 1.0 / 10.0f64.sqrt();
        let max_coord = c
            .points()
            .iter()
            .map(|p| p.re.abs().max(p.im.abs()))
            .fold(0.0f64, f64::max);
        assert!((max_coord - 3.0 * scale).abs() < 1e-12);
    }

    #[test]
    fn energy_normalization() {
        for &m in &[4usize, 16, 64, 256, 1024] {
            for &es in &[1.0, 2.5] {
                let c = Constellation::square_qam(m, es).unwrap();
                assert!((c.mean_energy() - es).abs() < 1e-12, "m={m}");
                assert!(c.pseudo_moment().norm() < 1e-12, "m={m}");
            }
        }
        assert!(matches!(
            Constellation::square_qam(8, 1.0),
            Err(Error::UnsupportedQamOrder(8))
        ));
        assert!(Constellation::square_qam(4, 0.0).is_err());
    }

    #[test]
    fn gray_property_all_orders() {
        // Laterally adjacent lattice points differ in exactly one bit.
        for &m in &[4usize, 16, 64, 256, 1024] {
            let c = Constellation::square_qam(m, 1.0).unwrap();
            // Distance between adjacent coordinates.
            let dmin = 2.0
                * c.points()
                    .iter()
                    .map(|p| p.re.abs().min(p.im.abs()))
                    .fold(f64::INFINITY, f64::min);
            for a in 0..m {
                for b in 0..m {
                    let pa = c.point(a);
                    let pb = c.point(b);
                    if (pa - pb).norm() < dmin * 1.001 && a != b {
                        assert_eq!(bit_errors(a, b), 1, "labels {a} {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn map_demap_round_trip() {
        let c = Constellation::square_qam(64, 1.0).unwrap();
        for label in 0..64 {
            let bits = c.demap_symbol(label);
            let p = c.map_bits(&bits).unwrap();
            assert_eq!(p, c.point(label));
        }
        assert!(c.map_bits(&[true, false]).is_err());
    }

    #[test]
    fn slicer_ties_lowest_label() {
        let c = Constellation::square_qam(4, 1.0).unwrap();
        // The origin is equidistant from all four points.
        assert_eq!(c.slice(Complex64::ZERO), 0);
        for label in 0..4 {
            assert_eq!(c.slice(c.point(label)), label);
        }
    }
}
