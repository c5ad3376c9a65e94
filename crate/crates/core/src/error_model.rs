//! Bit-error distortion of a quantized model.
//!
//! The analytic side assumes every bit flips independently with probability
//! `b` and keeps only the outcomes with at most one flip per parameter: a flip
//! of bit `i` moves the weight by `±Δ·2^i`. The injector flips bits fully
//! independently; [`InjectionMode::AtMostOne`] exists to check the analytic
//! formulas against the model they are derived from.

use alloc::vec::Vec;

use rand::distr::{Bernoulli, Distribution};

use crate::quantizer::{self, QuantizedPayload};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InjectionMode {
    /// Every bit flips independently.
    #[default]
    Independent,
    /// Per parameter, apply the flips only when exactly one of its bits flipped.
    AtMostOne,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitErrorSpec {
    pub ber: f64,
    pub seed: u64,
    pub mode: InjectionMode,
}

impl BitErrorSpec {
    pub fn new(ber: f64, seed: u64) -> Result<Self> {
        if !(0.0..=0.5).contains(&ber) {
            return Err(Error::invalid("ber", alloc::format!("{ber} outside [0, 0.5]")));
        }
        Ok(Self { ber, seed, mode: InjectionMode::Independent })
    }

    pub fn at_most_one(mut self) -> Self {
        self.mode = InjectionMode::AtMostOne;
        self
    }
}

/// Flips payload bits at rate `spec.ber` using stream `stream_id`. Range
/// scalars are left untouched.
pub fn inject_bit_errors(p: &QuantizedPayload, spec: &BitErrorSpec, stream_id: u64) -> Result<QuantizedPayload> {
    if !(0.0..=0.5).contains(&spec.ber) {
        return Err(Error::invalid("ber", alloc::format!("{} outside [0, 0.5]", spec.ber)));
    }
    let mut out = p.clone();
    if spec.ber == 0.0 {
        return Ok(out);
    }
    let flip = Bernoulli::new(spec.ber).expect("ber checked above");
    let mut rng = rng::stream(spec.seed, stream_id);
    let bits = out.bits_mut();
    match spec.mode {
        InjectionMode::Independent => {
            for i in 0..bits.len() {
                if flip.sample(&mut rng) {
                    let v = bits[i];
                    bits.set(i, !v);
                }
            }
        }
        InjectionMode::AtMostOne => {
            let n = p.n_bits() as usize;
            for d in 0..p.dim() {
                let mut flipped = None;
                let mut count = 0;
                for i in 0..n {
                    if flip.sample(&mut rng) {
                        count += 1;
                        flipped = Some(i);
                    }
                }
                if let (1, Some(i)) = (count, flipped) {
                    let at = d * n + i;
                    let v = bits[at];
                    bits.set(at, !v);
                }
            }
        }
    }
    Ok(out)
}

/// Expected distortion `E[δ(w_d) | w_d]` of one parameter under the at-most-one-flip model:
/// `b(1−b)^{N−1} Δ Σ_i (1 − 2 w_d^{(i)}) 2^i`.
pub fn expected_param_bias(w_d: f64, w_min: f64, w_max: f64, n_bits: u32, ber: f64) -> Result<f64> {
    let p = quantizer::quantize_with_range(&[w_d], n_bits, w_min, w_max)?;
    Ok(expected_bias_of_index(p.index(0), n_bits, p.step(), ber))
}

/// [`expected_param_bias`] for a parameter already known by its boundary index.
pub fn expected_bias_of_index(index: u32, n_bits: u32, step: f64, ber: f64) -> f64 {
    let signed: f64 = (0..n_bits)
        .map(|i| {
            let digit = (index >> i) & 1;
            (1.0 - 2.0 * f64::from(digit)) * libm::ldexp(1.0, i as i32)
        })
        .sum();
    single_flip_probability(ber, n_bits) * step * signed
}

/// `b(1−b)^{N−1}`: probability that a given bit is the only one flipped.
pub fn single_flip_probability(ber: f64, n_bits: u32) -> f64 {
    ber * libm::pow(1.0 - ber, f64::from(n_bits) - 1.0)
}

/// `(4^N − 1) / (3 (2^N − 1)²)`: the per-parameter squared-error factor in units of `M_w²`.
pub fn distortion_factor(n_bits: u32) -> f64 {
    let two_n = libm::ldexp(1.0, n_bits as i32);
    (two_n * two_n - 1.0) / (3.0 * (two_n - 1.0) * (two_n - 1.0))
}

/// Mean squared model error `D(4^N−1)/(3(2^N−1)²) · b(1−b)^{N−1} · M_w²`.
pub fn expected_model_mse(dim: usize, n_bits: u32, ber: f64, range: f64) -> Result<f64> {
    if dim == 0 || n_bits == 0 {
        return Err(Error::invalid("dim/n_bits", "must be at least 1"));
    }
    if !(0.0..=0.5).contains(&ber) {
        return Err(Error::invalid("ber", alloc::format!("{ber} outside [0, 0.5]")));
    }
    if range.is_nan() || range < 0.0 {
        return Err(Error::invalid("range", "must be non-negative"));
    }
    Ok(dim as f64 * distortion_factor(n_bits) * single_flip_probability(ber, n_bits) * range * range)
}

/// `‖w̃ − w‖²`.
pub fn measure_model_error(w: &[f64], w_tilde: &[f64]) -> Result<f64> {
    if w.len() != w_tilde.len() {
        return Err(Error::LengthMismatch { expected: w.len(), actual: w_tilde.len() });
    }
    Ok(w.iter().zip(w_tilde).map(|(a, b)| (b - a) * (b - a)).sum())
}

/// Per-parameter `w̃ − w` (helper for bias checks).
pub fn distortion(w: &[f64], w_tilde: &[f64]) -> Result<Vec<f64>> {
    if w.len() != w_tilde.len() {
        return Err(Error::LengthMismatch { expected: w.len(), actual: w_tilde.len() });
    }
    Ok(w.iter().zip(w_tilde).map(|(a, b)| b - a).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::{quantize, quantize_with_range};
    use rand::Rng;

    fn uniform_weights(dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng::stream(seed, 0);
        let mut w: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        w[0] = 0.0;
        w[1] = 1.0;
        w
    }

    #[test]
    fn zero_ber_leaves_payload() {
        let p = quantize(&[0.1, 0.5, 0.9], 8).unwrap();
        let spec = BitErrorSpec::new(0.0, 1).unwrap();
        assert_eq!(inject_bit_errors(&p, &spec, 0).unwrap(), p);
    }

    #[test]
    fn ber_domain_is_guarded() {
        assert!(BitErrorSpec::new(0.51, 1).is_err());
        assert!(BitErrorSpec::new(-0.1, 1).is_err());
        assert!(BitErrorSpec::new(0.5, 1).is_ok());
        assert!(expected_model_mse(1, 8, 0.6, 1.0).is_err());
    }

    #[test]
    fn flip_count_concentrates() {
        let w = uniform_weights(125_000, 3);
        let p = quantize(&w, 8).unwrap();
        let spec = BitErrorSpec::new(0.01, 17).unwrap();
        let q = inject_bit_errors(&p, &spec, 4).unwrap();
        let flips = p.bits().iter().zip(q.bits().iter()).filter(|(a, b)| **a != **b).count() as f64;
        let n = 1e6;
        assert!((flips - 1e4).abs() <= 3.0 * (n * 0.01 * 0.99f64).sqrt(), "{flips}");
        assert_eq!((q.w_min(), q.w_max()), (p.w_min(), p.w_max()));
    }

    #[test]
    fn injection_is_deterministic() {
        let p = quantize(&uniform_weights(1000, 1), 8).unwrap();
        let spec = BitErrorSpec::new(0.05, 2).unwrap();
        assert_eq!(inject_bit_errors(&p, &spec, 9).unwrap(), inject_bit_errors(&p, &spec, 9).unwrap());
        assert_ne!(inject_bit_errors(&p, &spec, 9).unwrap(), inject_bit_errors(&p, &spec, 10).unwrap());
    }

    #[test]
    fn bias_signs_at_extremes() {
        let (b, n) = (0.01f64, 8u32);
        let full = (1u32 << n) - 1;
        let step = 1.0 / f64::from(full);
        let expect = b * (1.0 - b).powi(7) * step * f64::from(full);
        let top = expected_param_bias(1.0, 0.0, 1.0, n, b).unwrap();
        let bottom = expected_param_bias(0.0, 0.0, 1.0, n, b).unwrap();
        assert!((top + expect).abs() < 1e-15 && top < 0.0);
        assert!((bottom - expect).abs() < 1e-15 && bottom > 0.0);
    }

    #[test]
    fn two_bit_bias_by_enumeration() {
        // N=2, index 01. Exactly-one-flip outcomes: bit0 → index 00 (−Δ), bit1 → index 11 (+2Δ).
        let (b, step) = (0.1, 1.0 / 3.0);
        let oracle = b * (1.0 - b) * (-step) + b * (1.0 - b) * (2.0 * step);
        let got = expected_param_bias(1.0 / 3.0, 0.0, 1.0, 2, b).unwrap();
        assert!((got - oracle).abs() < 1e-15);
        assert!((got - b * (1.0 - b) * step).abs() < 1e-15);
    }

    #[test]
    fn mse_special_cases() {
        assert_eq!(expected_model_mse(10, 8, 0.0, 2.0).unwrap(), 0.0);
        for b in [0.001, 0.1, 0.4] {
            let got = expected_model_mse(7, 1, b, 3.0).unwrap();
            assert!((got - 7.0 * b * 9.0).abs() < 1e-12);
        }
        let got = expected_model_mse(1, 8, 0.01, 1.0).unwrap();
        let frozen = 65535.0 / 195075.0 * 0.01 * 0.99f64.powi(7);
        assert!((got - frozen).abs() < 1e-15);
        assert!((got - 3.13e-3).abs() < 1e-5);
    }

    #[test]
    fn mse_matches_at_most_one_flip_monte_carlo() {
        // Every parameter sits at a random index; the truncated injector realises
        // the analytic model exactly, so the sample mean converges to it.
        let dim = 200_000;
        let w = uniform_weights(dim, 5);
        let p = quantize(&w, 8).unwrap();
        let wq = p.dequantize();
        let spec = BitErrorSpec::new(0.01, 23).unwrap().at_most_one();
        let reps = 50;
        let mut per_param = Vec::with_capacity(reps);
        for rep in 0..reps {
            let noisy = inject_bit_errors(&p, &spec, rep as u64).unwrap().dequantize();
            per_param.push(measure_model_error(&wq, &noisy).unwrap() / dim as f64);
        }
        let mean = per_param.iter().sum::<f64>() / reps as f64;
        let expected = expected_model_mse(1, 8, 0.01, p.range()).unwrap();
        assert!((mean / expected - 1.0).abs() < 0.02, "mean {mean} expected {expected}");
    }

    fn mean_and_stderr(d: &[f64]) -> (f64, f64) {
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        (mean, (var / n).sqrt())
    }

    #[test]
    fn bias_matches_monte_carlo() {
        let n = 8;
        let b = 0.01;
        let trials = 400_000;
        for index in [0u32, 37, 128, 255] {
            let w = vec![f64::from(index); trials];
            let p = quantize_with_range(&w, n, 0.0, 255.0).unwrap();
            let expected = expected_bias_of_index(index, n, 1.0, b);

            let truncated = BitErrorSpec::new(b, 31).unwrap().at_most_one();
            let noisy = inject_bit_errors(&p, &truncated, u64::from(index)).unwrap().dequantize();
            let (mean, se) = mean_and_stderr(&distortion(&p.dequantize(), &noisy).unwrap());
            assert!((mean - expected).abs() < 4.0 * se, "truncated, index {index}: {mean} vs {expected}");

            // Fully independent flips have mean bΔΣ(1−2w⁽ⁱ⁾)2ⁱ, i.e. the analytic
            // value without the (1−b)^{N−1} factor.
            let independent = BitErrorSpec::new(b, 31).unwrap();
            let noisy = inject_bit_errors(&p, &independent, u64::from(index)).unwrap().dequantize();
            let (mean, se) = mean_and_stderr(&distortion(&p.dequantize(), &noisy).unwrap());
            let gap = (1.0 - (1.0 - b).powi(7)) * expected.abs() / (1.0 - b).powi(7);
            assert!((mean - expected).abs() < 4.0 * se + gap, "independent, index {index}: {mean} vs {expected}");
        }
    }

    #[test]
    fn model_error_basics() {
        assert_eq!(measure_model_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(measure_model_error(&[0.0], &[1.0]).unwrap(), 1.0);
        assert!(measure_model_error(&[0.0], &[1.0, 2.0]).is_err());
        let a = uniform_weights(1000, 8);
        let b = uniform_weights(1000, 9);
        let oracle: f64 = {
            let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| y - x).collect();
            diffs.iter().map(|d| d * d).fold(0.0, |s, v| s + v)
        };
        let got = measure_model_error(&a, &b).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle);
    }
}
