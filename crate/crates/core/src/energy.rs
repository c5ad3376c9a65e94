//! Energy ledger and the convergence-bound calculator.

use alloc::vec::Vec;

use crate::error_model::distortion_factor;
use crate::{Error, Result};

const PICO: f64 = 1e-12;
const MILLI: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnergyModel {
    pub decode_pj_per_bit_iter: f64,
    pub tx_rx_pj_per_bit: f64,
    pub train_mj_per_epoch: f64,
    pub code_rate: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self { decode_pj_per_bit_iter: 20.1, tx_rx_pj_per_bit: 81.2, train_mj_per_epoch: 13.7, code_rate: 0.5 }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("decode_pj_per_bit_iter", self.decode_pj_per_bit_iter),
            ("tx_rx_pj_per_bit", self.tx_rx_pj_per_bit),
            ("train_mj_per_epoch", self.train_mj_per_epoch),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, "must be finite and non-negative"));
            }
        }
        if !(self.code_rate > 0.0 && self.code_rate <= 1.0) {
            return Err(Error::invalid("code_rate", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Joules to decode `bits` payload bits at `mean_iterations` iterations each.
    pub fn decoding_energy(&self, bits: f64, mean_iterations: f64) -> f64 {
        bits * mean_iterations * self.decode_pj_per_bit_iter * PICO
    }

    /// Joules to move `payload_bits` over the link once coded at `code_rate`.
    pub fn transceiver_energy(&self, payload_bits: f64) -> f64 {
        payload_bits / self.code_rate * self.tx_rx_pj_per_bit * PICO
    }

    /// Joules to move `bits` over the link without coding.
    pub fn uncoded_transceiver_energy(&self, bits: f64) -> f64 {
        bits * self.tx_rx_pj_per_bit * PICO
    }

    pub fn training_energy(&self, epochs: f64) -> f64 {
        epochs * self.train_mj_per_epoch * MILLI
    }
}

/// Inputs of the convergence bound. `dim` is the parameter count, `range`
/// bounds `max(w) − min(w)` in every round.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundConstants {
    pub smoothness: f64,
    pub sigma_local2: f64,
    pub sigma_global2: f64,
    pub initial_gap: f64,
    pub range: f64,
    pub dim: usize,
    pub clients: usize,
    pub local_steps: usize,
    pub rounds: usize,
    pub n_bits: u32,
    pub eta: f64,
}

impl BoundConstants {
    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("smoothness", self.smoothness),
            ("sigma_local2", self.sigma_local2),
            ("sigma_global2", self.sigma_global2),
            ("initial_gap", self.initial_gap),
            ("range", self.range),
        ];
        for (name, v) in reals {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, "must be finite and non-negative"));
            }
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::invalid("eta", "must be positive"));
        }
        if self.clients == 0 || self.local_steps == 0 || self.rounds == 0 {
            return Err(Error::invalid("clients/local_steps/rounds", "must be at least 1"));
        }
        if self.n_bits == 0 || self.n_bits > crate::quantizer::MAX_BITS {
            return Err(Error::invalid("n_bits", "must lie in 1..=16"));
        }
        Ok(())
    }

    /// `1/(L√(RE))`, the step size of the simplified bound.
    pub fn simplified_eta(&self) -> f64 {
        1.0 / (self.smoothness * libm::sqrt((self.rounds * self.local_steps) as f64))
    }
}

/// `1 − ((K+L)/K)·L·η − 2L²η²E(E−1) ≥ 0`.
pub fn lr_condition_holds(c: &BoundConstants) -> bool {
    lr_condition_margin(c) >= 0.0
}

pub fn lr_condition_margin(c: &BoundConstants) -> f64 {
    let (l, eta, k) = (c.smoothness, c.eta, c.clients as f64);
    let e = c.local_steps as f64;
    1.0 - (k + l) / k * l * eta - 2.0 * l * l * eta * eta * e * (e - 1.0)
}

fn ber_sum(bers: &[f64], n_bits: u32) -> f64 {
    bers.iter().map(|&b| b * libm::pow(1.0 - b, f64::from(n_bits) - 1.0)).sum()
}

/// Per-term breakdown of a bound evaluation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundTerms {
    pub initial: f64,
    pub bit_errors: f64,
    pub gradient_noise: f64,
    pub client_drift: f64,
    pub total: f64,
}

impl BoundTerms {
    fn from_parts(initial: f64, bit_errors: f64, gradient_noise: f64, client_drift: f64) -> Self {
        let total = initial + bit_errors + gradient_noise + client_drift;
        Self { initial, bit_errors, gradient_noise, client_drift, total }
    }
}

/// Constants of the simplified `1/√T` form.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimplifiedConstants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundReport {
    pub lr_condition: bool,
    pub lr_margin: f64,
    /// Four-term bound at the supplied `eta`.
    pub full: BoundTerms,
    pub simplified_eta: f64,
    pub simplified_constants: SimplifiedConstants,
    /// Simplified bound at `simplified_eta`.
    pub simplified: BoundTerms,
    pub simplified_lr_condition: bool,
}

/// Four-term bound on the average squared gradient norm at step size `c.eta`.
pub fn convergence_bound_terms(c: &BoundConstants, bers: &[f64]) -> Result<BoundTerms> {
    c.validate()?;
    if bers.len() != c.rounds {
        return Err(Error::LengthMismatch { expected: c.rounds, actual: bers.len() });
    }
    if bers.iter().any(|b| !(0.0..=0.5).contains(b)) {
        return Err(Error::invalid("bers", "each BER must lie in [0, 0.5]"));
    }
    let (l, eta, k) = (c.smoothness, c.eta, c.clients as f64);
    let e = c.local_steps as f64;
    let t = (c.rounds * c.local_steps) as f64;
    let lp1 = l + 1.0;
    let initial = 2.0 * c.initial_gap / (eta * t);
    let bit_errors = lp1 * lp1 * c.dim as f64 * c.range * c.range * distortion_factor(c.n_bits) / (eta * t)
        * ber_sum(bers, c.n_bits);
    let gradient_noise = l * lp1 * eta * (c.sigma_local2 + c.sigma_global2) / k;
    let client_drift = l * l * eta * eta * c.sigma_local2 * (k + 1.0) * (e - 1.0) / k;
    Ok(BoundTerms::from_parts(initial, bit_errors, gradient_noise, client_drift))
}

pub fn convergence_bound_rhs(c: &BoundConstants, bers: &[f64]) -> Result<f64> {
    Ok(convergence_bound_terms(c, bers)?.total)
}

pub fn simplified_constants(c: &BoundConstants) -> SimplifiedConstants {
    let (l, k) = (c.smoothness, c.clients as f64);
    let e = c.local_steps as f64;
    let lp1 = l + 1.0;
    SimplifiedConstants {
        c0: 2.0 * l * c.initial_gap,
        c1: l * lp1 * lp1 * c.dim as f64 * c.range * c.range * distortion_factor(c.n_bits),
        c2: lp1 * (c.sigma_local2 + c.sigma_global2) / k,
        c3: l * l * c.sigma_local2 * (k + 1.0) * (e - 1.0) / k,
    }
}

/// Full report: the four-term bound at `c.eta` and the simplified form at `1/(L√T)`.
pub fn bound_report(c: &BoundConstants, bers: &[f64]) -> Result<BoundReport> {
    let full = convergence_bound_terms(c, bers)?;
    let tc = simplified_constants(c);
    let t = (c.rounds * c.local_steps) as f64;
    let sqrt_t = libm::sqrt(t);
    let simplified =
        BoundTerms::from_parts(tc.c0 / sqrt_t, tc.c1 * ber_sum(bers, c.n_bits) / sqrt_t, tc.c2 / sqrt_t, tc.c3 / t);
    let at_simplified_eta = BoundConstants { eta: c.simplified_eta(), ..*c };
    Ok(BoundReport {
        lr_condition: lr_condition_holds(c),
        lr_margin: lr_condition_margin(c),
        full,
        simplified_eta: at_simplified_eta.eta,
        simplified_constants: tc,
        simplified,
        simplified_lr_condition: lr_condition_holds(&at_simplified_eta),
    })
}

/// Sum of per-round energies; kept separate so the ledger total is one fold.
pub fn total_energy(per_round: &[f64]) -> f64 {
    per_round.iter().sum()
}

/// Bound totals for `rounds` in `sweep` with the given per-round BER generator.
pub fn bound_sweep<F: Fn(usize) -> Vec<f64>>(
    base: &BoundConstants,
    sweep: &[usize],
    bers_for: F,
) -> Result<Vec<(usize, f64)>> {
    sweep
        .iter()
        .map(|&rounds| {
            let mut c = BoundConstants { rounds, ..*base };
            c.eta = c.simplified_eta();
            Ok((rounds, convergence_bound_rhs(&c, &bers_for(rounds))?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::BerSchedule;
    use alloc::vec;
    use proptest::prelude::*;

    fn collapse(rounds: usize, local_steps: usize) -> BoundConstants {
        let t = (rounds * local_steps) as f64;
        BoundConstants {
            smoothness: 1.0,
            sigma_local2: 0.0,
            sigma_global2: 0.0,
            initial_gap: 1.0,
            range: 1.0,
            dim: 100,
            clients: 10,
            local_steps,
            rounds,
            n_bits: 8,
            eta: 1.0 / t.sqrt(),
        }
    }

    #[test]
    fn table_two_rows() {
        let m = EnergyModel::default();
        let bits = 60e6 * 8.0;
        assert!((m.decoding_energy(bits, 10.0) - 96.48e-3).abs() < 1e-12);
        assert!((m.transceiver_energy(bits) - 77.952e-3).abs() < 1e-12);
        assert!((m.uncoded_transceiver_energy(bits) - 38.976e-3).abs() < 1e-12);
        assert_eq!(m.decoding_energy(bits, 0.0), 0.0);
        assert_eq!(m.transceiver_energy(0.0), 0.0);
        assert!((m.decoding_energy(504.0, 24.0) - 504.0 * 24.0 * 20.1e-12).abs() < 1e-22);
        assert!((m.training_energy(2.0) - 27.4e-3).abs() < 1e-15);
    }

    #[test]
    fn energy_model_validation() {
        assert!(EnergyModel { code_rate: 0.0, ..EnergyModel::default() }.validate().is_err());
        assert!(EnergyModel { tx_rx_pj_per_bit: -1.0, ..EnergyModel::default() }.validate().is_err());
        EnergyModel::default().validate().unwrap();
    }

    #[test]
    fn lr_condition_examples() {
        let mut c = collapse(100, 5);
        c.eta = f64::MIN_POSITIVE;
        assert!(lr_condition_holds(&c));
        c.eta = 1.0;
        // 1 − 1.1 − 40
        assert!((lr_condition_margin(&c) + 40.1).abs() < 1e-12);
        assert!(!lr_condition_holds(&c));
        let mut big = collapse(10_000, 5);
        big.eta = big.simplified_eta();
        assert!(lr_condition_holds(&big));
    }

    #[test]
    fn collapse_to_two_over_root_t() {
        for (rounds, e) in [(100, 5), (1000, 5), (37, 3)] {
            let c = collapse(rounds, e);
            let rhs = convergence_bound_rhs(&c, &vec![0.0; rounds]).unwrap();
            let expect = 2.0 / ((rounds * e) as f64).sqrt();
            assert!((rhs / expect - 1.0).abs() < 1e-12);
            let report = bound_report(&c, &vec![0.0; rounds]).unwrap();
            assert!((report.simplified.total / expect - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn simplified_form_matches_full_bound_at_its_eta() {
        let mut c = BoundConstants {
            smoothness: 2.0,
            sigma_local2: 0.3,
            sigma_global2: 0.2,
            initial_gap: 1.5,
            range: 0.8,
            dim: 1000,
            clients: 10,
            local_steps: 5,
            rounds: 200,
            n_bits: 8,
            eta: 0.0,
        };
        c.eta = c.simplified_eta();
        let bers = BerSchedule::new(1e-1, 1e-4, 200).unwrap().targets();
        let full = convergence_bound_terms(&c, &bers).unwrap();
        let report = bound_report(&c, &bers).unwrap();
        let th = &report.simplified;
        assert!((th.initial / full.initial - 1.0).abs() < 1e-12);
        assert!((th.bit_errors / full.bit_errors - 1.0).abs() < 1e-12);
        assert!((th.gradient_noise / full.gradient_noise - 1.0).abs() < 1e-12);
        // the printed C3 carries an extra L² relative to substituting η
        assert!((th.client_drift / full.client_drift - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_ber_drops_bit_error_term() {
        let c = collapse(50, 5);
        let terms = convergence_bound_terms(&c, &vec![0.0; 50]).unwrap();
        assert_eq!(terms.bit_errors, 0.0);
        assert!(convergence_bound_terms(&c, &vec![0.0; 49]).is_err());
        assert!(convergence_bound_terms(&c, &vec![0.6; 50]).is_err());
    }

    #[test]
    fn scheduled_bound_vanishes_with_rounds() {
        let base = BoundConstants { sigma_local2: 0.1, sigma_global2: 0.1, ..collapse(10, 5) };
        // b_last = b0/R² makes the offset zero, so b_r = b0/(r+1)² exactly
        let pure = |r: usize| BerSchedule::new(1e-1, 1e-1 / (r * r) as f64, r).unwrap().targets();
        let sweep = bound_sweep(&base, &[10, 100, 1000, 10_000], pure).unwrap();
        assert!(sweep.windows(2).all(|w| w[1].1 < w[0].1), "{sweep:?}");
        assert!(sweep[3].1 < 0.1 * sweep[0].1);
        // a fixed floor b_last leaves Σb_r ~ R·b_last and the bit-error term grows like √R
        let floored =
            bound_sweep(&base, &[1000, 10_000, 100_000], |r| BerSchedule::new(1e-1, 1e-4, r).unwrap().targets())
                .unwrap();
        assert!(floored[2].1 > floored[1].1, "{floored:?}");
    }

    proptest! {
        #[test]
        fn bound_monotone_in_each_ber(
            bers in proptest::collection::vec(0.0f64..0.12, 5),
            idx in 0usize..5,
            bump in 0.0f64..0.005,
        ) {
            // b(1−b)^{N−1} increases on [0, 1/N] = [0, 0.125] for N = 8
            let c = BoundConstants { rounds: 5, ..collapse(5, 5) };
            let mut raised = bers.clone();
            raised[idx] = (raised[idx] + bump).min(0.125);
            prop_assert!(convergence_bound_rhs(&c, &raised).unwrap() >= convergence_bound_rhs(&c, &bers).unwrap());
        }

        #[test]
        fn energy_additive(parts in proptest::collection::vec(0.0f64..1.0, 0..50)) {
            let m = EnergyModel::default();
            let per_round: Vec<f64> = parts.iter().map(|&p| m.decoding_energy(p * 1e6, 3.0)).collect();
            let total: f64 = per_round.iter().sum();
            prop_assert_eq!(total_energy(&per_round), total);
        }
    }
}
