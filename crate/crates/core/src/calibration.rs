//! Monte Carlo measurement of BER versus (SNR, iteration budget).
//!
//! Every frame is keyed by `(seed, snr, frame index)` and is decoded once for
//! all budgets still being measured, so all cells of one SNR row see the same
//! noise realizations. Frames are generated in batches through an
//! [`Executor`] and ingested strictly in frame order: a cell stops at the same
//! frame whatever the batch size or worker count.

use alloc::vec::Vec;

use bitvec::prelude::*;
use rand::Rng;

use crate::channel::ChannelConfig;
use crate::exec::Executor;
use crate::ldpc::{decode_budgets, DecoderConfig, LdpcCode};
use crate::rng::{self, Purpose};
use crate::schedule::{CalibrationEntry, CalibrationTable, CellStatus};
use crate::{Error, Result};

pub const MIN_ERROR_BITS_FLOOR: u64 = 50;
pub const MAX_FRAMES_FLOOR: u64 = 100;
/// Two-sided 95% normal quantile used for all confidence intervals.
pub const CONFIDENCE_Z: f64 = 1.96;
/// Frames generated per executor call.
pub const FRAME_BATCH: usize = 512;

pub const DEFAULT_SNR_POINTS: [f64; 2] = [1.5, 2.5];
pub const DEFAULT_Q_POINTS: [u32; 10] = [2, 4, 6, 8, 12, 16, 20, 24, 32, 52];

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CalibrationJob {
    /// Es/N0 values in dB; `+inf` is the noiseless sentinel.
    pub snr_points: Vec<f64>,
    /// Strictly ascending iteration budgets.
    pub q_points: Vec<u32>,
    pub min_error_bits: u64,
    pub max_frames: u64,
    pub seed: u64,
    pub decoder: DecoderConfig,
}

impl CalibrationJob {
    pub fn new(
        snr_points: Vec<f64>,
        q_points: Vec<u32>,
        min_error_bits: u64,
        max_frames: u64,
        seed: u64,
    ) -> Result<Self> {
        let job = Self { snr_points, q_points, min_error_bits, max_frames, seed, decoder: DecoderConfig::default() };
        job.validate()?;
        Ok(job)
    }

    pub fn with_defaults(seed: u64) -> Self {
        Self {
            snr_points: DEFAULT_SNR_POINTS.to_vec(),
            q_points: DEFAULT_Q_POINTS.to_vec(),
            min_error_bits: 100,
            max_frames: 20_000,
            seed,
            decoder: DecoderConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_points.is_empty() || self.snr_points.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return Err(Error::invalid("snr_points", "need at least one SNR, each a number or +inf"));
        }
        if self.q_points.is_empty() || self.q_points[0] == 0 || self.q_points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("q_points", "must be non-empty, strictly ascending and at least 1"));
        }
        if self.min_error_bits < MIN_ERROR_BITS_FLOOR {
            return Err(Error::invalid("min_error_bits", "must be at least 50"));
        }
        if self.max_frames < MAX_FRAMES_FLOOR {
            return Err(Error::invalid("max_frames", "must be at least 100"));
        }
        Ok(())
    }
}

/// Wilson score interval for `errors` successes in `trials`; returns `(center, halfwidth)`.
pub fn wilson_interval(errors: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.5, 0.5);
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * libm::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
    (center, half)
}

/// Fraction of positions where the two bit strings differ.
pub fn measure_round_ber(decoded: &BitSlice<u64, Lsb0>, truth: &BitSlice<u64, Lsb0>) -> Result<f64> {
    if decoded.len() != truth.len() {
        return Err(Error::LengthMismatch { expected: truth.len(), actual: decoded.len() });
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let errors = decoded.iter().by_vals().zip(truth.iter().by_vals()).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / truth.len() as f64)
}

/// Per-frame outcome for each requested budget: (information-bit errors, iterations used).
fn run_frame(
    code: &LdpcCode,
    channel: &ChannelConfig,
    budgets: &[u32],
    decoder: &DecoderConfig,
    frame: u64,
) -> Result<Vec<(u32, u32)>> {
    let snr_key = channel.snr_db.to_bits();
    let mut info_rng = rng::keyed(channel.seed, Purpose::InfoWord, &[snr_key, frame]);
    let msg: Vec<u8> = (0..code.k()).map(|_| info_rng.random::<bool>() as u8).collect();
    let codeword = code.encode(&msg)?;
    let llrs = channel.transmit(&codeword, rng::stream_id(Purpose::ChannelNoise, &[snr_key, frame]))?;
    let results = decode_budgets(code, &llrs, budgets, decoder)?;
    Ok(results
        .iter()
        .map(|r| {
            let errors = r.bits.iter().zip(&msg).filter(|(a, b)| a != b).count() as u32;
            (errors, r.iterations_used)
        })
        .collect())
}

#[derive(Debug, Clone, Default)]
struct Cell {
    frames: u64,
    errors: u64,
    iterations: u64,
    done: bool,
}

fn measure_row<X: Executor>(
    job: &CalibrationJob,
    code: &LdpcCode,
    snr_db: f64,
    exec: &X,
) -> Result<Vec<CalibrationEntry>> {
    let channel = ChannelConfig::new(snr_db, job.seed)?;
    let k = code.k() as u64;
    let mut cells: Vec<Cell> = alloc::vec![Cell::default(); job.q_points.len()];
    // The noiseless channel never errs; one frame records the iteration count.
    let max_frames = if channel.is_noiseless() { 1 } else { job.max_frames };
    let mut next_frame = 0u64;
    while next_frame < max_frames && cells.iter().any(|c| !c.done) {
        let active: Vec<usize> = (0..cells.len()).filter(|&i| !cells[i].done).collect();
        let budgets: Vec<u32> = active.iter().map(|&i| job.q_points[i]).collect();
        let batch = FRAME_BATCH.min((max_frames - next_frame) as usize);
        let outcomes = exec.map(batch, |j| run_frame(code, &channel, &budgets, &job.decoder, next_frame + j as u64));
        for outcome in outcomes {
            let outcome = outcome?;
            for (&i, &(errors, iters)) in active.iter().zip(&outcome) {
                let cell = &mut cells[i];
                if cell.done {
                    continue;
                }
                cell.frames += 1;
                cell.errors += u64::from(errors);
                cell.iterations += u64::from(iters);
                cell.done = cell.errors >= job.min_error_bits || cell.frames >= max_frames;
            }
        }
        next_frame += batch as u64;
    }

    Ok(job
        .q_points
        .iter()
        .zip(&cells)
        .map(|(&q, cell)| {
            let bits = cell.frames * k;
            let (center, half) = wilson_interval(cell.errors, bits, CONFIDENCE_Z);
            let (ber, status) = if channel.is_noiseless() {
                (cell.errors as f64 / bits as f64, CellStatus::Exact)
            } else if cell.errors >= job.min_error_bits {
                (cell.errors as f64 / bits as f64, CellStatus::Resolved)
            } else {
                (center + half, CellStatus::UnderResolved)
            };
            CalibrationEntry {
                snr_db,
                q,
                ber,
                ci_halfwidth: if channel.is_noiseless() { 0.0 } else { half },
                frames: cell.frames,
                error_bits: cell.errors,
                mean_iters: cell.iterations as f64 / cell.frames as f64,
                status,
            }
        })
        .collect())
}

/// Measures every (SNR, Q) cell of `job` on `code`.
pub fn run_calibration<X: Executor>(job: &CalibrationJob, code: &LdpcCode, exec: &X) -> Result<CalibrationTable> {
    job.validate()?;
    let mut entries = Vec::with_capacity(job.snr_points.len() * job.q_points.len());
    for &snr in &job.snr_points {
        entries.extend(measure_row(job, code, snr, exec)?);
    }
    Ok(CalibrationTable::new(code.n(), code.requested_seed(), entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;

    /// Executor that evaluates items in reverse to expose order dependence.
    struct Reversed;

    impl Executor for Reversed {
        fn map<T: Send, F: Fn(usize) -> T + Sync + Send>(&self, n: usize, f: F) -> Vec<T> {
            let mut out: Vec<T> = (0..n).rev().map(f).collect();
            out.reverse();
            out
        }
    }

    fn small_job(snr: Vec<f64>) -> CalibrationJob {
        CalibrationJob::new(snr, alloc::vec![1, 3, 10], 50, 300, 11).unwrap()
    }

    #[test]
    fn ber_measure_examples() {
        let a = bitvec![u64, Lsb0; 0; 1000];
        let mut b = a.clone();
        assert_eq!(measure_round_ber(&a, &b).unwrap(), 0.0);
        b.set(17, true);
        assert_eq!(measure_round_ber(&a, &b).unwrap(), 0.001);
        let c = !a.clone();
        assert_eq!(measure_round_ber(&a, &c).unwrap(), 1.0);
        assert!(measure_round_ber(&a[..10], &c).is_err());
    }

    #[test]
    fn wilson_matches_reference_values() {
        // statsmodels proportion_confint(method="wilson") uses z = 1.959964..; tolerances cover the z gap
        let (c, h) = wilson_interval(10, 100, 1.96);
        let z2 = 1.96f64 * 1.96;
        let oracle_c = (0.1 + z2 / 200.0) / (1.0 + z2 / 100.0);
        let oracle_h = 1.96 / (1.0 + z2 / 100.0) * (0.09f64 / 100.0 + z2 / 40_000.0).sqrt();
        assert!((c - oracle_c).abs() < 1e-15 && (h - oracle_h).abs() < 1e-15);
        assert!((c - 0.11479739928279428).abs() < 1e-5 && (h - 0.059568262222119195).abs() < 1e-5);
        let (c0, h0) = wilson_interval(0, 1_000_000, 1.96);
        assert!(((c0 + h0) / 3.841444063944944e-6 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn job_validation() {
        assert!(CalibrationJob::new(alloc::vec![1.0], alloc::vec![4, 2], 100, 100, 0).is_err());
        assert!(CalibrationJob::new(alloc::vec![1.0], alloc::vec![2, 4], 49, 100, 0).is_err());
        assert!(CalibrationJob::new(alloc::vec![1.0], alloc::vec![2, 4], 50, 99, 0).is_err());
        assert!(CalibrationJob::new(alloc::vec![f64::NAN], alloc::vec![2], 50, 100, 0).is_err());
        assert!(CalibrationJob::new(alloc::vec![], alloc::vec![2], 50, 100, 0).is_err());
        CalibrationJob::with_defaults(0).validate().unwrap();
    }

    #[test]
    fn noiseless_sentinel_is_exact() {
        let code = LdpcCode::construct(96, 3).unwrap();
        let t = run_calibration(&small_job(alloc::vec![f64::INFINITY]), &code, &Sequential).unwrap();
        for e in &t.entries {
            assert_eq!((e.ber, e.status, e.mean_iters), (0.0, CellStatus::Exact, 1.0));
        }
    }

    #[test]
    fn deterministic_and_order_independent() {
        let code = LdpcCode::construct(96, 3).unwrap();
        let job = small_job(alloc::vec![0.0, 2.0]);
        let a = run_calibration(&job, &code, &Sequential).unwrap();
        let b = run_calibration(&job, &code, &Reversed).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.entries.len(), 6);
        for e in &a.entries {
            match e.status {
                CellStatus::Resolved => assert!(e.error_bits >= 50 && e.frames <= 300),
                CellStatus::UnderResolved => assert!(e.error_bits < 50 && e.frames == 300),
                CellStatus::Exact => unreachable!(),
            }
            assert!(e.mean_iters >= 1.0 && e.mean_iters <= f64::from(e.q));
        }
    }

    #[test]
    fn more_iterations_do_not_hurt_on_shared_frames() {
        let code = LdpcCode::construct(96, 3).unwrap();
        let job = CalibrationJob::new(alloc::vec![1.0], alloc::vec![1, 3, 10], 1000, 400, 5).unwrap();
        let t = run_calibration(&job, &code, &Sequential).unwrap();
        let row = t.row(1.0).unwrap();
        // identical frames for every budget; only the decoder differs
        assert!(row.iter().all(|e| e.frames == 400));
        assert!(row[0].error_bits > row[2].error_bits, "{row:?}");
    }
}
