//! N-bit uniform digitalization of a weight vector.
//!
//! `[w_min, w_max]` is split into `2^N - 1` equal intervals; each weight maps
//! to its nearest boundary. The boundary index is stored in natural binary,
//! least significant bit first, so bit `i` of a parameter carries weight
//! `Δ·2^i`. The range scalars travel outside the bitstream, error free.

use alloc::vec::Vec;

use bitvec::prelude::*;

use crate::{Error, Result};

pub const MAX_BITS: u32 = 16;

pub type Bits = BitVec<u64, Lsb0>;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedPayload {
    bits: Bits,
    n_bits: u32,
    dim: usize,
    w_min: f64,
    w_max: f64,
}

fn check_bits(n_bits: u32) -> Result<()> {
    if !(1..=MAX_BITS).contains(&n_bits) {
        return Err(Error::invalid("n_bits", alloc::format!("{n_bits} outside 1..={MAX_BITS}")));
    }
    Ok(())
}

fn check_finite(w: &[f64]) -> Result<()> {
    match w.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

/// Quantizes `w` over its own range.
pub fn quantize(w: &[f64], n_bits: u32) -> Result<QuantizedPayload> {
    check_bits(n_bits)?;
    check_finite(w)?;
    if w.is_empty() {
        return Err(Error::invalid("w", "empty vector"));
    }
    let (lo, hi) = w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    quantize_with_range(w, n_bits, lo, hi)
}

/// Quantizes `w` over a caller-supplied range. Values outside the range clamp
/// to the end boundaries.
pub fn quantize_with_range(w: &[f64], n_bits: u32, w_min: f64, w_max: f64) -> Result<QuantizedPayload> {
    check_bits(n_bits)?;
    check_finite(w)?;
    if !(w_min.is_finite() && w_max.is_finite()) || w_min > w_max {
        return Err(Error::invalid("range", "need finite w_min <= w_max"));
    }
    let levels = max_index(n_bits);
    let step = step_size(w_min, w_max, n_bits);
    let n = n_bits as usize;
    let mut bits: Bits = BitVec::repeat(false, w.len() * n);
    for (d, &v) in w.iter().enumerate() {
        let index = if step == 0.0 {
            0
        } else {
            // libm::round is half away from zero.
            libm::round((v - w_min) / step).clamp(0.0, f64::from(levels)) as u32
        };
        bits[d * n..(d + 1) * n].store_le(index);
    }
    Ok(QuantizedPayload { bits, n_bits, dim: w.len(), w_min, w_max })
}

/// Largest index, `2^N - 1`.
pub fn max_index(n_bits: u32) -> u32 {
    (1u32 << n_bits) - 1
}

/// Interval width Δ = (w_max − w_min)/(2^N − 1).
pub fn step_size(w_min: f64, w_max: f64, n_bits: u32) -> f64 {
    (w_max - w_min) / f64::from(max_index(n_bits))
}

impl QuantizedPayload {
    /// Reassembles a payload from a received bitstream and the side-channel range.
    pub fn from_parts(bits: Bits, n_bits: u32, dim: usize, w_min: f64, w_max: f64) -> Result<Self> {
        check_bits(n_bits)?;
        if bits.len() != dim * n_bits as usize {
            return Err(Error::LengthMismatch { expected: dim * n_bits as usize, actual: bits.len() });
        }
        if w_min.is_nan() || w_max.is_nan() || w_min > w_max {
            return Err(Error::invalid("range", "need w_min <= w_max"));
        }
        Ok(Self { bits, n_bits, dim, w_min, w_max })
    }

    pub fn bits(&self) -> &BitSlice<u64, Lsb0> {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut BitSlice<u64, Lsb0> {
        &mut self.bits
    }

    pub fn n_bits(&self) -> u32 {
        self.n_bits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn w_min(&self) -> f64 {
        self.w_min
    }

    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    /// `M_w = w_max − w_min`.
    pub fn range(&self) -> f64 {
        self.w_max - self.w_min
    }

    pub fn step(&self) -> f64 {
        step_size(self.w_min, self.w_max, self.n_bits)
    }

    pub fn len_bits(&self) -> usize {
        self.bits.len()
    }

    /// Boundary index of parameter `d`.
    pub fn index(&self, d: usize) -> u32 {
        let n = self.n_bits as usize;
        self.bits[d * n..(d + 1) * n].load_le::<u32>()
    }

    pub fn indices(&self) -> Vec<u32> {
        (0..self.dim).map(|d| self.index(d)).collect()
    }

    /// `w_min + index·Δ`; the top index maps to `w_max` exactly.
    pub fn value_of(&self, index: u32) -> f64 {
        let top = max_index(self.n_bits);
        if self.w_max == self.w_min || index == 0 {
            self.w_min
        } else if index >= top {
            self.w_max
        } else {
            self.w_min + f64::from(index) * self.step()
        }
    }

    pub fn dequantize(&self) -> Vec<f64> {
        (0..self.dim).map(|d| self.value_of(self.index(d))).collect()
    }
}

/// Shorthand for [`QuantizedPayload::dequantize`].
pub fn dequantize(p: &QuantizedPayload) -> Vec<f64> {
    p.dequantize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn endpoints_map_to_extreme_codes() {
        let p = quantize(&[-1.0, 0.25, 3.0], 3).unwrap();
        assert_eq!(p.index(0), 0);
        assert_eq!(p.bits()[0..3], bits![0, 0, 0]);
        assert_eq!(p.index(2), 7);
        assert_eq!(p.bits()[6..9], bits![1, 1, 1]);
        let back = p.dequantize();
        assert_eq!(back[0], -1.0);
        assert_eq!(back[2], 3.0);
    }

    #[test]
    fn lsb_comes_first() {
        // index 1 of 7 → bits 1,0,0
        let p = quantize_with_range(&[1.0 / 7.0], 3, 0.0, 1.0).unwrap();
        assert_eq!(p.index(0), 1);
        assert_eq!(p.bits()[0..3], bits![1, 0, 0]);
    }

    #[test]
    fn constant_vector_is_degenerate() {
        let p = quantize(&[2.5; 4], 8).unwrap();
        assert_eq!(p.indices(), vec![0; 4]);
        assert_eq!(p.step(), 0.0);
        assert_eq!(p.dequantize(), vec![2.5; 4]);
    }

    #[test]
    fn known_eight_bit_value() {
        let p = quantize_with_range(&[0.3], 8, 0.0, 1.0).unwrap();
        assert_eq!(p.index(0), 77);
        assert!((p.dequantize()[0] - 77.0 / 255.0).abs() < 1e-15);
        assert!((p.dequantize()[0] - 0.30196).abs() < 1e-5);
    }

    #[test]
    fn ties_round_away_from_zero() {
        // N = 1: Δ = 1 and 0.5 sits exactly between the two boundaries.
        let p = quantize_with_range(&[0.5], 1, 0.0, 1.0).unwrap();
        assert_eq!(p.index(0), 1);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(quantize(&[1.0, f64::INFINITY], 8), Err(Error::NonFinite(1)));
        assert!(quantize(&[1.0], 0).is_err());
        assert!(quantize(&[1.0], 17).is_err());
        assert!(quantize(&[], 8).is_err());
        assert!(quantize_with_range(&[0.0], 8, 1.0, 0.0).is_err());
    }

    #[test]
    fn top_index_is_exact_max() {
        for n in 1..=16 {
            let p = quantize(&[0.1, 0.7], n).unwrap();
            assert_eq!(p.value_of(max_index(n)), 0.7);
        }
    }

    proptest! {
        #[test]
        fn round_trip_within_half_step(
            w in proptest::collection::vec(-100.0f64..100.0, 1..64),
            n in 1u32..=16,
        ) {
            let p = quantize(&w, n).unwrap();
            let half = p.step() / 2.0;
            for (a, b) in w.iter().zip(p.dequantize()) {
                prop_assert!((a - b).abs() <= half * (1.0 + 1e-9) + 1e-12, "{} vs {} (Δ/2 = {})", a, b, half);
            }
        }

        #[test]
        fn indices_are_monotone(mut w in proptest::collection::vec(-10.0f64..10.0, 2..64), n in 1u32..=16) {
            let p = quantize(&w, n).unwrap();
            let mut pairs: Vec<(f64, u32)> = w.drain(..).zip(p.indices()).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            prop_assert!(pairs.windows(2).all(|x| x[0].1 <= x[1].1));
        }

        #[test]
        fn pack_unpack_is_exact(idx in proptest::collection::vec(0u32..65_536, 1..40), n in 1u32..=16) {
            let top = max_index(n);
            let idx: Vec<u32> = idx.into_iter().map(|i| i & top).collect();
            let w: Vec<f64> = idx.iter().map(|&i| f64::from(i)).collect();
            let p = quantize_with_range(&w, n, 0.0, f64::from(top)).unwrap();
            prop_assert_eq!(p.indices(), idx);
        }
    }
}
