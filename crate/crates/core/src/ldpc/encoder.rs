//! Systematic encoding through GF(2) elimination of the parity-check matrix.
//!
//! Reduced row echelon form of `H` picks one pivot column per check. The
//! remaining `k = n - rank` columns carry the message; every pivot bit is the
//! parity of the message bits its reduced row touches. Codewords are emitted
//! in the original column order of `H`, so `H * encode(m) = 0` holds without
//! permuting anything.

use alloc::vec;
use alloc::vec::Vec;

use super::ParityCheckMatrix;
use crate::{Error, Result};

type Word = u64;
const WORD_BITS: usize = Word::BITS as usize;

fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD_BITS)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystematicEncoder {
    n: usize,
    /// Column of H holding message bit `j`.
    info_cols: Vec<usize>,
    /// Column of H determined by reduced row `i`.
    parity_cols: Vec<usize>,
    /// Row `i` of the parity map, as a bitset over message indices.
    parity_rows: Vec<Word>,
    words_per_row: usize,
}

impl SystematicEncoder {
    /// Eliminates `h`. Fails with [`Error::RankDeficient`] unless `h` has full row rank.
    pub fn prepare(h: &ParityCheckMatrix) -> Result<Self> {
        let (m, n) = (h.rows(), h.cols());
        let wpr = words_for(n);
        let mut dense = vec![0 as Word; m * wpr];
        for (r, c) in h.entries() {
            dense[r * wpr + c / WORD_BITS] |= 1 << (c % WORD_BITS);
        }

        let mut pivot_cols = Vec::with_capacity(m);
        let mut pivot_row = 0;
        for c in 0..n {
            if pivot_row == m {
                break;
            }
            let (w, bit) = (c / WORD_BITS, 1 << (c % WORD_BITS));
            let Some(found) = (pivot_row..m).find(|&r| dense[r * wpr + w] & bit != 0) else {
                continue;
            };
            if found != pivot_row {
                for i in 0..wpr {
                    dense.swap(found * wpr + i, pivot_row * wpr + i);
                }
            }
            let (before, rest) = dense.split_at_mut(pivot_row * wpr);
            let (pivot, after) = rest.split_at_mut(wpr);
            for row in before.chunks_exact_mut(wpr).chain(after.chunks_exact_mut(wpr)) {
                if row[w] & bit != 0 {
                    row.iter_mut().zip(pivot.iter()).for_each(|(a, b)| *a ^= b);
                }
            }
            pivot_cols.push(c);
            pivot_row += 1;
        }
        if pivot_row < m {
            return Err(Error::RankDeficient { retries: 0, rank: pivot_row, rows: m });
        }

        let mut is_pivot = vec![false; n];
        pivot_cols.iter().for_each(|&c| is_pivot[c] = true);
        let info_cols: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
        let k = info_cols.len();
        let words_per_row = words_for(k);
        let mut parity_rows = vec![0 as Word; m * words_per_row];
        for i in 0..m {
            let row = &dense[i * wpr..(i + 1) * wpr];
            for (j, &c) in info_cols.iter().enumerate() {
                if row[c / WORD_BITS] >> (c % WORD_BITS) & 1 == 1 {
                    parity_rows[i * words_per_row + j / WORD_BITS] |= 1 << (j % WORD_BITS);
                }
            }
        }
        Ok(Self { n, info_cols, parity_cols: pivot_cols, parity_rows, words_per_row })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.info_cols.len()
    }

    /// Codeword positions of the message bits, in message order.
    pub fn info_cols(&self) -> &[usize] {
        &self.info_cols
    }

    /// Codeword positions fixed by the parity equations.
    pub fn parity_cols(&self) -> &[usize] {
        &self.parity_cols
    }

    /// Maps `k` message bits (0/1) to an `n`-bit codeword of `H`.
    pub fn encode(&self, msg: &[u8]) -> Result<Vec<u8>> {
        let k = self.k();
        if msg.len() != k {
            return Err(Error::LengthMismatch { expected: k, actual: msg.len() });
        }
        let mut packed = vec![0 as Word; self.words_per_row];
        for (j, &b) in msg.iter().enumerate() {
            packed[j / WORD_BITS] |= Word::from(b & 1) << (j % WORD_BITS);
        }
        let mut codeword = vec![0u8; self.n];
        for (&c, &b) in self.info_cols.iter().zip(msg) {
            codeword[c] = b & 1;
        }
        for (i, &c) in self.parity_cols.iter().enumerate() {
            let row = &self.parity_rows[i * self.words_per_row..(i + 1) * self.words_per_row];
            let ones: u32 = row.iter().zip(&packed).map(|(a, b)| (a & b).count_ones()).sum();
            codeword[c] = (ones & 1) as u8;
        }
        Ok(codeword)
    }

    /// Reads the message back out of a codeword (or any hard decision).
    pub fn extract(&self, codeword: &[u8]) -> Vec<u8> {
        self.info_cols.iter().map(|&c| codeword[c]).collect()
    }
}
