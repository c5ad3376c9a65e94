//! Flooding min-sum decoding with parity-check early termination.

use alloc::vec;
use alloc::vec::Vec;

use super::LdpcCode;
use crate::{Error, Result};

/// Check-to-variable message magnitude limit.
pub const MESSAGE_CLIP: f64 = 1e3;
/// Scaling used when normalized min-sum is switched on.
pub const NORMALIZED_FACTOR: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecoderConfig {
    /// Multiplier on check-node outputs; `None` is plain min-sum.
    pub normalization: Option<f64>,
    pub clip: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self { normalization: None, clip: MESSAGE_CLIP }
    }
}

impl DecoderConfig {
    pub fn normalized() -> Self {
        Self { normalization: Some(NORMALIZED_FACTOR), ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeResult {
    /// Decoded message bits.
    pub bits: Vec<u8>,
    /// Full `n`-bit hard decision after the last executed iteration.
    pub hard_decision: Vec<u8>,
    /// Iterations actually executed, in `1..=Q`.
    pub iterations_used: u32,
    /// Whether `hard_decision` satisfies every check.
    pub parity_ok: bool,
}

pub(crate) fn decode(code: &LdpcCode, llrs: &[f64], max_iters: u32, config: &DecoderConfig) -> Result<DecodeResult> {
    let mut out = decode_budgets(code, llrs, &[max_iters], config)?;
    Ok(out.pop().expect("one budget in, one result out"))
}

/// Decodes one frame for several budgets at once.
///
/// `budgets` must be non-decreasing and at least 1. Entry `i` of the result is
/// exactly what [`LdpcCode::decode_with`] returns for budget `budgets[i]`:
/// iterations are deterministic, so a smaller budget sees a prefix of the
/// larger run.
pub fn decode_budgets(
    code: &LdpcCode,
    llrs: &[f64],
    budgets: &[u32],
    config: &DecoderConfig,
) -> Result<Vec<DecodeResult>> {
    let h = code.matrix();
    let n = h.cols();
    if llrs.len() != n {
        return Err(Error::LengthMismatch { expected: n, actual: llrs.len() });
    }
    if let Some(i) = llrs.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    if budgets.is_empty() || budgets[0] == 0 || budgets.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("max_iters", "budgets must be non-decreasing and at least 1"));
    }
    let scale = config.normalization.unwrap_or(1.0);
    let clip = config.clip;
    let max_budget = *budgets.last().expect("non-empty");

    let mut c2v = vec![0.0f64; h.num_edges()];
    let mut totals: Vec<f64> = llrs.to_vec();
    let mut next_totals = vec![0.0f64; n];
    let mut v2c: Vec<f64> = Vec::new();
    let mut hard = vec![0u8; n];
    let mut results = Vec::with_capacity(budgets.len());
    let mut pending = budgets.iter().copied().peekable();

    for iter in 1..=max_budget {
        next_totals.copy_from_slice(llrs);
        for r in 0..h.rows() {
            let edges = h.row_range(r);
            let cols = h.row(r);
            let c2v_row = &mut c2v[edges];
            v2c.clear();
            let mut negative = false;
            let (mut min1, mut min2, mut arg) = (f64::INFINITY, f64::INFINITY, usize::MAX);
            for (slot, (&c, &old)) in cols.iter().zip(c2v_row.iter()).enumerate() {
                let m = totals[c] - old;
                v2c.push(m);
                negative ^= m < 0.0;
                let mag = m.abs();
                let below = mag < min1;
                min2 = if below { min1 } else { min2.min(mag) };
                arg = if below { slot } else { arg };
                min1 = if below { mag } else { min1 };
            }
            let low = (min1 * scale).min(clip);
            let high = (min2 * scale).min(clip);
            for (slot, ((&c, msg_out), &m)) in cols.iter().zip(c2v_row.iter_mut()).zip(&v2c).enumerate() {
                let mag = if slot == arg { high } else { low };
                let msg = if negative ^ (m < 0.0) { -mag } else { mag };
                *msg_out = msg;
                next_totals[c] += msg;
            }
        }
        core::mem::swap(&mut totals, &mut next_totals);
        for (b, &t) in hard.iter_mut().zip(&totals) {
            *b = u8::from(t < 0.0);
        }
        let parity_ok = h.checks_pass(&hard);
        if parity_ok {
            let result = snapshot(code, &hard, iter, true);
            while pending.next().is_some() {
                results.push(result.clone());
            }
            return Ok(results);
        }
        while pending.next_if_eq(&iter).is_some() {
            results.push(snapshot(code, &hard, iter, false));
        }
    }
    Ok(results)
}

fn snapshot(code: &LdpcCode, hard: &[u8], iterations_used: u32, parity_ok: bool) -> DecodeResult {
    DecodeResult { bits: code.encoder().extract(hard), hard_decision: hard.to_vec(), iterations_used, parity_ok }
}
