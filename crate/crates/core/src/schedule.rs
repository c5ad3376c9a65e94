//! Per-round BER targets and the BER → iteration-budget lookup.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Two SNR values are treated as the same operating point when they differ by
/// less than this (dB). Guards against decimal round trips through CSV.
pub const SNR_MATCH_TOLERANCE: f64 = 1e-9;

/// Target BER decaying as `1/(r+1)²` from `b0` at round 0 to `b_last` at round `R−1`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BerSchedule {
    b0: f64,
    b_last: f64,
    rounds: usize,
}

impl BerSchedule {
    pub fn new(b0: f64, b_last: f64, rounds: usize) -> Result<Self> {
        if rounds < 2 {
            return Err(Error::invalid("rounds", "schedule needs R > 1"));
        }
        if !(b_last > 0.0 && b0 > b_last && b0 <= 0.5) {
            return Err(Error::invalid("b0/b_last", "need 0.5 >= b0 > b_last > 0"));
        }
        Ok(Self { b0, b_last, rounds })
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }

    pub fn b_last(&self) -> f64 {
        self.b_last
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// Offset `c = (b_last·R² − b0)/(R² − 1)` the schedule decays towards.
    pub fn offset(&self) -> f64 {
        let r2 = (self.rounds * self.rounds) as f64;
        (self.b_last * r2 - self.b0) / (r2 - 1.0)
    }

    /// `b_r = (b0 − b_last)R²/((R²−1)(r+1)²) + (b_last·R² − b0)/(R²−1)`.
    ///
    /// The two end rounds return `b0` and `b_last` as stored; every other
    /// round is the formula in double precision.
    pub fn target_ber(&self, r: usize) -> Result<f64> {
        if r >= self.rounds {
            return Err(Error::RoundOutOfRange { round: r, rounds: self.rounds });
        }
        if r == 0 {
            return Ok(self.b0);
        }
        if r == self.rounds - 1 {
            return Ok(self.b_last);
        }
        Ok(self.formula(r))
    }

    pub(crate) fn formula(&self, r: usize) -> f64 {
        let r2 = (self.rounds * self.rounds) as f64;
        let k = (r + 1) as f64;
        (self.b0 - self.b_last) * r2 / ((r2 - 1.0) * k * k) + self.offset()
    }

    pub fn targets(&self) -> Vec<f64> {
        (0..self.rounds).map(|r| self.target_ber(r).expect("in range")).collect()
    }
}

/// Both sides of `Σ_r b_r(1−b_r)^{N−1}/√T ≤ (ϑ/√T)(2 − E/T)` for `b_r = ϑ/(r+1)²`, `T = RE`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SumBound {
    pub lhs: f64,
    pub rhs: f64,
}

pub fn schedule_sum_bound(theta: f64, rounds: usize, local_steps: usize, n_bits: u32) -> Result<SumBound> {
    if !(0.0..=0.5).contains(&theta) {
        return Err(Error::invalid("theta", "must lie in [0, 0.5]"));
    }
    if rounds < 2 || local_steps == 0 {
        return Err(Error::invalid("rounds/local_steps", "need R > 1 and E >= 1"));
    }
    let t = (rounds * local_steps) as f64;
    let sqrt_t = libm::sqrt(t);
    let sum: f64 = (0..rounds)
        .map(|r| {
            let k = (r + 1) as f64;
            let b = theta / (k * k);
            b * libm::pow(1.0 - b, f64::from(n_bits) - 1.0)
        })
        .sum();
    Ok(SumBound { lhs: sum / sqrt_t, rhs: theta / sqrt_t * (2.0 - local_steps as f64 / t) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CellStatus {
    /// At least `min_error_bits` errors observed.
    Resolved,
    /// Stopped at `max_frames` with fewer errors; `ber` is the upper confidence bound.
    UnderResolved,
    /// Noiseless channel; `ber` is exactly zero.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CalibrationEntry {
    pub snr_db: f64,
    pub q: u32,
    pub ber: f64,
    pub ci_halfwidth: f64,
    pub frames: u64,
    pub error_bits: u64,
    /// Mean iterations actually executed per frame.
    pub mean_iters: f64,
    pub status: CellStatus,
}

/// Measured (SNR, Q) → BER mapping for one code.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CalibrationTable {
    pub code_n: usize,
    pub code_seed: u64,
    pub entries: Vec<CalibrationEntry>,
}

/// Result of [`CalibrationTable::q_for_target`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QLookup {
    pub q: u32,
    /// No tabulated budget reaches the target; `q` is the largest one.
    pub saturated: bool,
}

fn same_snr(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() < SNR_MATCH_TOLERANCE
}

impl CalibrationTable {
    pub fn new(code_n: usize, code_seed: u64, mut entries: Vec<CalibrationEntry>) -> Self {
        entries.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db).then(a.q.cmp(&b.q)));
        Self { code_n, code_seed, entries }
    }

    /// Entries at `snr_db`, ascending in `q`.
    pub fn row(&self, snr_db: f64) -> Result<Vec<&CalibrationEntry>> {
        let mut row: Vec<&CalibrationEntry> = self.entries.iter().filter(|e| same_snr(e.snr_db, snr_db)).collect();
        if row.is_empty() {
            return Err(Error::UnknownSnr { snr_db });
        }
        row.sort_by_key(|e| e.q);
        Ok(row)
    }

    pub fn snr_points(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for e in &self.entries {
            if !out.iter().any(|&s| same_snr(s, e.snr_db)) {
                out.push(e.snr_db);
            }
        }
        out
    }

    pub fn entry(&self, snr_db: f64, q: u32) -> Result<&CalibrationEntry> {
        self.row(snr_db)?.into_iter().find(|e| e.q == q).ok_or(Error::MissingCell { snr_db, q })
    }

    /// Smallest tabulated Q whose measured BER is at most `target_ber`; the
    /// largest Q with `saturated` set when none qualifies.
    pub fn q_for_target(&self, snr_db: f64, target_ber: f64) -> Result<QLookup> {
        let row = self.row(snr_db)?;
        match row.iter().find(|e| e.ber <= target_ber) {
            Some(e) => Ok(QLookup { q: e.q, saturated: false }),
            None => Ok(QLookup { q: row.last().expect("non-empty row").q, saturated: true }),
        }
    }

    pub fn max_q(&self, snr_db: f64) -> Result<u32> {
        Ok(self.row(snr_db)?.last().expect("non-empty row").q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct transcription of the schedule formula, evaluated in extended steps.
    fn schedule_oracle(b0: f64, bl: f64, rounds: usize, r: usize) -> f64 {
        let rr = (rounds as f64).powi(2);
        (b0 - bl) * rr / ((rr - 1.0) * ((r + 1) as f64).powi(2)) + (bl * rr - b0) / (rr - 1.0)
    }

    #[test]
    fn endpoints_and_known_value() {
        let s = BerSchedule::new(1e-1, 1e-4, 50).unwrap();
        assert_eq!(s.target_ber(0).unwrap(), 1e-1);
        assert_eq!(s.target_ber(49).unwrap(), 1e-4);
        assert!((s.formula(0) / 1e-1 - 1.0).abs() < 1e-15);
        assert!((s.formula(49) / 1e-4 - 1.0).abs() < 1e-14);
        // exact rational evaluation, rounded to f64
        let b9 = s.target_ber(9).unwrap();
        assert!((b9 - 1.059423769507803e-3).abs() < 1e-17, "{b9:e}");
        assert!((b9 - schedule_oracle(1e-1, 1e-4, 50, 9)).abs() < 1e-18);
        assert!(matches!(s.target_ber(50), Err(Error::RoundOutOfRange { round: 50, rounds: 50 })));
    }

    #[test]
    fn rejects_bad_schedules() {
        assert!(BerSchedule::new(1e-1, 1e-4, 1).is_err());
        assert!(BerSchedule::new(1e-4, 1e-1, 10).is_err());
        assert!(BerSchedule::new(1e-1, 0.0, 10).is_err());
    }

    #[test]
    fn proportional_part_scales_as_inverse_square() {
        let s = BerSchedule::new(1e-1, 1e-4, 50).unwrap();
        let c = s.offset();
        let k0 = s.target_ber(1).unwrap() - c;
        let k0 = k0 * 4.0;
        for r in 1..49 {
            let k = (s.target_ber(r).unwrap() - c) * ((r + 1) as f64).powi(2);
            assert!((k / k0 - 1.0).abs() < 1e-12, "r={r}");
        }
    }

    #[test]
    fn sum_bound_examples() {
        let zero = schedule_sum_bound(0.0, 10, 5, 8).unwrap();
        assert_eq!((zero.lhs, zero.rhs), (0.0, 0.0));
        let b = schedule_sum_bound(0.1, 50, 5, 8).unwrap();
        assert!(b.lhs > 0.0 && b.rhs > 0.0 && b.lhs < b.rhs);
        // lhs shrinks like 1/√T
        let mut prev = f64::INFINITY;
        for rounds in [10, 100, 1000, 10_000] {
            let b = schedule_sum_bound(0.1, rounds, 5, 8).unwrap();
            assert!(b.lhs < prev);
            prev = b.lhs;
        }
        assert!(prev < 1e-2);
    }

    fn table(bers: &[f64]) -> CalibrationTable {
        let entries = bers
            .iter()
            .enumerate()
            .map(|(i, &ber)| CalibrationEntry {
                snr_db: 2.5,
                q: 2 * (i as u32 + 1),
                ber,
                ci_halfwidth: 0.0,
                frames: 100,
                error_bits: 100,
                mean_iters: 1.0,
                status: CellStatus::Resolved,
            })
            .collect();
        CalibrationTable::new(1008, 7, entries)
    }

    #[test]
    fn lookup_edges() {
        let t = table(&[1e-1, 1e-2, 1e-3, 1e-4]);
        assert_eq!(t.q_for_target(2.5, 0.5).unwrap(), QLookup { q: 2, saturated: false });
        assert_eq!(t.q_for_target(2.5, 1e-3).unwrap(), QLookup { q: 6, saturated: false });
        assert_eq!(t.q_for_target(2.5, 1e-6).unwrap(), QLookup { q: 8, saturated: true });
        assert_eq!(t.q_for_target(1.5, 1e-3), Err(Error::UnknownSnr { snr_db: 1.5 }));
        assert_eq!(t.q_for_target(2.5 + 1e-12, 1e-3).unwrap().q, 6);
    }

    proptest! {
        #[test]
        fn schedule_strictly_decreasing(b0 in 1e-3f64..0.5, ratio in 1.001f64..1e4, rounds in 2usize..400) {
            let s = BerSchedule::new(b0, b0 / ratio, rounds).unwrap();
            let t = s.targets();
            prop_assert!(t.windows(2).all(|w| w[0] > w[1]));
        }

        #[test]
        fn sum_bound_holds(theta in 0.0f64..=0.5, rounds in 2usize..2000, e in 1usize..20, n in 1u32..=16) {
            let b = schedule_sum_bound(theta, rounds, e, n).unwrap();
            prop_assert!(b.lhs <= b.rhs);
        }

        #[test]
        fn lookup_monotone_in_target(
            mut bers in proptest::collection::vec(1e-7f64..0.5, 1..12),
            t1 in 1e-8f64..0.6,
            t2 in 1e-8f64..0.6,
        ) {
            bers.sort_by(|a, b| b.total_cmp(a));
            let t = table(&bers);
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(t.q_for_target(2.5, lo).unwrap().q >= t.q_for_target(2.5, hi).unwrap().q);
        }
    }
}
