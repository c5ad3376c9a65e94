//! Rate-1/2 (3,6)-regular LDPC codes.
//!
//! [`LdpcCode::construct`] builds a parity-check matrix from a seed, prepares
//! the systematic encoder, and reseeds when the matrix turns out rank
//! deficient. Decoding is flooding min-sum with parity-check early
//! termination ([`decoder`]).

pub mod decoder;
pub mod encoder;
pub mod matrix;

pub use decoder::{decode_budgets, DecodeResult, DecoderConfig, NORMALIZED_FACTOR};
pub use encoder::SystematicEncoder;
pub use matrix::ParityCheckMatrix;

use crate::{Error, Result};

/// Column weight of the constructed codes.
pub const COLUMN_DEGREE: usize = 3;
/// Row weight of the constructed codes.
pub const ROW_DEGREE: usize = 6;
/// Reseeds tried after the requested seed before giving up on full rank.
pub const MAX_RANK_RETRIES: u32 = 16;
pub const DEFAULT_CODE_LENGTH: usize = 1008;
/// Information bits per frame of the default rate-1/2 code.
pub const DEFAULT_INFO_BITS: usize = DEFAULT_CODE_LENGTH / 2;

/// A parity-check matrix together with its systematic encoder.
#[derive(Debug, Clone)]
pub struct LdpcCode {
    h: ParityCheckMatrix,
    encoder: SystematicEncoder,
    requested_seed: u64,
}

impl LdpcCode {
    /// Builds the (3,6)-regular code of length `n` for `seed`.
    ///
    /// If elimination finds the matrix rank deficient, construction is
    /// repeated with `seed + 1`, `seed + 2`, ... up to [`MAX_RANK_RETRIES`]
    /// times. The result is a pure function of `(n, seed)`.
    pub fn construct(n: usize, seed: u64) -> Result<Self> {
        let mut last_rank = 0;
        for retry in 0..=MAX_RANK_RETRIES {
            let h = ParityCheckMatrix::regular(n, seed.wrapping_add(u64::from(retry)))?;
            match SystematicEncoder::prepare(&h) {
                Ok(encoder) => return Ok(Self { h, encoder, requested_seed: seed }),
                Err(Error::RankDeficient { rank, .. }) => last_rank = rank,
                Err(e) => return Err(e),
            }
        }
        Err(Error::RankDeficient { retries: MAX_RANK_RETRIES, rank: last_rank, rows: n / 2 })
    }

    /// Wraps an externally supplied matrix (for example one read from an alist file).
    pub fn from_matrix(h: ParityCheckMatrix) -> Result<Self> {
        let encoder = SystematicEncoder::prepare(&h)?;
        let requested_seed = h.seed();
        Ok(Self { h, encoder, requested_seed })
    }

    pub fn matrix(&self) -> &ParityCheckMatrix {
        &self.h
    }

    pub fn encoder(&self) -> &SystematicEncoder {
        &self.encoder
    }

    /// Codeword length.
    pub fn n(&self) -> usize {
        self.h.cols()
    }

    /// Information bits per codeword.
    pub fn k(&self) -> usize {
        self.encoder.k()
    }

    /// The seed passed to [`LdpcCode::construct`]. The matrix itself may come
    /// from a later reseed, see [`ParityCheckMatrix::seed`].
    pub fn requested_seed(&self) -> u64 {
        self.requested_seed
    }

    pub fn encode(&self, msg: &[u8]) -> Result<alloc::vec::Vec<u8>> {
        self.encoder.encode(msg)
    }

    /// Plain min-sum decoding with budget `max_iters`.
    pub fn decode(&self, llrs: &[f64], max_iters: u32) -> Result<DecodeResult> {
        decoder::decode(self, llrs, max_iters, &DecoderConfig::default())
    }

    pub fn decode_with(&self, llrs: &[f64], max_iters: u32, config: &DecoderConfig) -> Result<DecodeResult> {
        decoder::decode(self, llrs, max_iters, config)
    }

    pub fn syndrome_ok(&self, hard_bits: &[u8]) -> Result<bool> {
        self.h.syndrome_ok(hard_bits)
    }
}
