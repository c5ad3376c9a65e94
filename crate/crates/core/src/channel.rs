//! BPSK over AWGN.
//!
//! SNR is Es/N0 per channel symbol with unit-energy symbols, so the noise
//! variance per real dimension is `1 / (2 * 10^(snr_db / 10))`. Users working
//! in Eb/N0 at rate 1/2 should subtract `10 * log10(2)` dB first.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::{self, Purpose};
use crate::{Error, Result};

/// LLR magnitude emitted in noiseless mode.
pub const NOISELESS_LLR: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChannelConfig {
    /// Es/N0 in dB; `f64::INFINITY` selects the noiseless channel.
    pub snr_db: f64,
    pub seed: u64,
}

impl ChannelConfig {
    pub fn new(snr_db: f64, seed: u64) -> Result<Self> {
        if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
            return Err(Error::invalid("snr_db", "must be a number or +inf"));
        }
        Ok(Self { snr_db, seed })
    }

    pub fn noiseless(seed: u64) -> Self {
        Self { snr_db: f64::INFINITY, seed }
    }

    pub fn is_noiseless(&self) -> bool {
        self.snr_db == f64::INFINITY
    }

    /// Per-dimension noise variance σ². Zero for the noiseless channel.
    pub fn noise_variance(&self) -> f64 {
        if self.is_noiseless() {
            0.0
        } else {
            1.0 / (2.0 * libm::pow(10.0, self.snr_db / 10.0))
        }
    }

    /// Modulates `codeword` (0 → +1, 1 → −1), adds noise from stream
    /// `stream_id` and returns LLRs `2y/σ²`.
    pub fn transmit(&self, codeword: &[u8], stream_id: u64) -> Result<Vec<f64>> {
        if let Some(i) = codeword.iter().position(|&b| b > 1) {
            return Err(Error::invalid("codeword", alloc::format!("bit {i} is not 0/1")));
        }
        if self.is_noiseless() {
            return Ok(codeword.iter().map(|&b| if b == 0 { NOISELESS_LLR } else { -NOISELESS_LLR }).collect());
        }
        let var = self.noise_variance();
        let sigma = libm::sqrt(var);
        let mut rng = rng::stream(self.seed, stream_id);
        Ok(codeword
            .iter()
            .map(|&b| {
                let x = if b == 0 { 1.0 } else { -1.0 };
                let noise: f64 = rng.sample(StandardNormal);
                2.0 * (x + sigma * noise) / var
            })
            .collect())
    }

    /// Monte Carlo hard-decision BER without coding, over `num_bits` random bits.
    pub fn uncoded_ber(&self, num_bits: usize) -> Result<f64> {
        if num_bits < 10_000 {
            return Err(Error::invalid("num_bits", "at least 10^4 bits required"));
        }
        if self.is_noiseless() {
            return Ok(0.0);
        }
        let sigma = libm::sqrt(self.noise_variance());
        let mut bits = rng::keyed(self.seed, Purpose::UncodedBaseline, &[0]);
        let mut noise = rng::keyed(self.seed, Purpose::UncodedBaseline, &[1]);
        let errors = (0..num_bits)
            .filter(|_| {
                let b: bool = bits.random();
                let x = if b { -1.0 } else { 1.0 };
                let y = x + sigma * noise.sample::<f64, _>(StandardNormal);
                (y < 0.0) != b
            })
            .count();
        Ok(errors as f64 / num_bits as f64)
    }
}
