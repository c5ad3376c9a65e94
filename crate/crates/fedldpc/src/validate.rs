//! Property suites run by `fedldpc validate` and the acceptance test.

use std::fmt;

use fedldpc_core::energy::{bound_report, convergence_bound_rhs, lr_condition_holds, BoundConstants, EnergyModel};
use fedldpc_core::error_model::{expected_model_mse, inject_bit_errors, measure_model_error, BitErrorSpec};
use fedldpc_core::exec::Executor;
use fedldpc_core::fl::{Dataset, ModelSpec, Objective};
use fedldpc_core::quantizer::{quantize, quantize_with_range, step_size, QuantizedPayload};
use fedldpc_core::rng::{self, Purpose};
use fedldpc_core::schedule::{schedule_sum_bound, BerSchedule};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    ModelError,
    SumBound,
    Energy,
    Quantizer,
    Gradients,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 6] = ["lemma1", "corollary1", "energy", "quantizer", "gradients", "all"];

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "lemma1" => Suite::ModelError,
            "corollary1" => Suite::SumBound,
            "energy" => Suite::Energy,
            "quantizer" => Suite::Quantizer,
            "gradients" => Suite::Gradients,
            "all" => Suite::All,
            _ => return None,
        })
    }
}

/// One comparison. `tolerance` is relative unless the name says otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn relative(name: impl Into<String>, observed: f64, expected: f64, tolerance: f64) -> Self {
        let err = if expected == 0.0 { observed.abs() } else { ((observed - expected) / expected).abs() };
        Self { name: name.into(), observed, expected, tolerance, pass: err <= tolerance }
    }

    /// `observed <= expected`.
    pub fn at_most(name: impl Into<String>, observed: f64, expected: f64) -> Self {
        Self { name: name.into(), observed, expected, tolerance: 0.0, pass: observed <= expected }
    }

    /// A yes/no property, recorded as 1 or 0.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        let v = if ok { 1.0 } else { 0.0 };
        Self { name: name.into(), observed: v, expected: 1.0, tolerance: 0.0, pass: ok }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: observed {:.6e} expected {:.6e} tolerance {:.1e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.observed,
            self.expected,
            self.tolerance
        )
    }
}

pub fn run_suite<X: Executor>(suite: Suite, seed: u64, exec: &X) -> Vec<Check> {
    match suite {
        Suite::ModelError => model_error(seed, exec),
        Suite::SumBound => schedule_and_sum_bound(),
        Suite::Energy => energy(),
        Suite::Quantizer => quantizer(seed),
        Suite::Gradients => gradients(seed, 100),
        Suite::All => {
            let mut all = model_error(seed, exec);
            all.extend(schedule_and_sum_bound());
            all.extend(energy());
            all.extend(quantizer(seed));
            all.extend(gradients(seed, 100));
            all
        }
    }
}

/// Payload energies of a 60M-parameter model at 8 bits per parameter.
pub fn energy_table_checks() -> Vec<Check> {
    let m = EnergyModel::default();
    let bits = 60e6 * 8.0;
    vec![
        Check::relative("decoding energy, 10 iterations (J)", m.decoding_energy(bits, 10.0), 96.5e-3, 5e-3),
        Check::relative("coded transceiver energy (J)", m.transceiver_energy(bits), 78e-3, 5e-3),
        Check::relative("uncoded transceiver energy (J)", m.uncoded_transceiver_energy(bits), 39e-3, 1e-2),
    ]
}

/// Step-size condition at `1/(L√(RE))` for large R, and the closed-form collapse.
pub fn bound_checks() -> Vec<Check> {
    let mut out = Vec::new();
    let base = BoundConstants {
        smoothness: 1.0,
        sigma_local2: 0.0,
        sigma_global2: 0.0,
        initial_gap: 1.0,
        range: 1.0,
        dim: 42,
        clients: 10,
        local_steps: 5,
        rounds: 100,
        n_bits: 8,
        eta: 1.0,
    };
    for rounds in [100, 1_000, 10_000, 100_000] {
        let mut c = BoundConstants { rounds, ..base };
        c.eta = c.simplified_eta();
        out.push(Check::holds(format!("step-size condition at 1/(L*sqrt(RE)), R={rounds}"), lr_condition_holds(&c)));
    }
    for rounds in [100, 1_000] {
        let mut c = BoundConstants { rounds, ..base };
        c.eta = c.simplified_eta();
        let zeros = vec![0.0; rounds];
        let expected = 2.0 / ((rounds * c.local_steps) as f64).sqrt();
        let got = convergence_bound_rhs(&c, &zeros).unwrap_or(f64::NAN);
        out.push(Check::relative(format!("error-free collapse 2/sqrt(RE), R={rounds}"), got, expected, 1e-12));
        let simplified = bound_report(&c, &zeros).map_or(f64::NAN, |r| r.simplified.total);
        out.push(Check::relative(format!("simplified form collapse, R={rounds}"), simplified, expected, 1e-12));
    }
    out.push(Check::holds(
        "step-size condition fails at L=1, K=10, E=5, eta=1",
        !lr_condition_holds(&BoundConstants { eta: 1.0, ..base }),
    ));
    out
}

pub fn energy() -> Vec<Check> {
    let mut out = energy_table_checks();
    out.extend(bound_checks());
    out
}

/// Analytic vs Monte Carlo squared model error under independent bit flips.
/// The error is measured against the quantized model, so quantization noise
/// does not enter.
pub fn model_error_checks<X: Executor>(seed: u64, exec: &X, dim: usize, reps: usize) -> Vec<Check> {
    let n_bits = 8;
    let mut r = rng::keyed(seed, Purpose::ModelInit, &[0x1e33a]);
    let mut w: Vec<f64> = (0..dim).map(|_| r.random::<f64>()).collect();
    w[0] = 0.0;
    w[dim - 1] = 1.0;
    let p = quantize_with_range(&w, n_bits, 0.0, 1.0).expect("unit range");
    let clean = p.dequantize();
    [1e-2, 1e-3]
        .into_iter()
        .map(|ber| {
            let spec = BitErrorSpec::new(ber, seed).expect("valid ber");
            let errs = exec.map(reps, |rep| {
                let id = rng::stream_id(Purpose::BitFlips, &[ber.to_bits(), rep as u64]);
                let noisy = inject_bit_errors(&p, &spec, id).expect("valid payload").dequantize();
                measure_model_error(&clean, &noisy).expect("same length")
            });
            let mean = errs.iter().sum::<f64>() / reps as f64;
            let expected = expected_model_mse(dim, n_bits, ber, 1.0).expect("valid inputs");
            Check::relative(format!("squared model error, b={ber:e}, D={dim}, {reps} reps"), mean, expected, 0.10)
        })
        .collect()
}

pub fn model_error<X: Executor>(seed: u64, exec: &X) -> Vec<Check> {
    model_error_checks(seed, exec, 100_000, 100)
}

/// Schedule endpoints and shape for the default (0.1, 1e-4, 50) schedule.
pub fn schedule_checks() -> Vec<Check> {
    let s = BerSchedule::new(1e-1, 1e-4, 50).expect("valid schedule");
    let t = s.targets();
    let mut out = vec![
        Check::relative("schedule first round", t[0], 1e-1, 1e-15),
        Check::relative("schedule last round", t[49], 1e-4, 1e-15),
    ];
    let c = s.offset();
    let scaled: Vec<f64> = t.iter().enumerate().map(|(r, b)| (b - c) * ((r + 1) * (r + 1)) as f64).collect();
    let worst = scaled.iter().map(|v| ((v - scaled[0]) / scaled[0]).abs()).fold(0.0, f64::max);
    out.push(Check::at_most("schedule (b_r - c)(r+1)^2 max relative spread", worst, 1e-12));
    out
}

/// Sum bound over a grid, and the left side shrinking as R grows.
pub fn sum_bound_checks() -> Vec<Check> {
    let mut out = Vec::new();
    for theta in [0.01, 0.1, 0.5] {
        let mut previous = f64::INFINITY;
        let mut decreasing = true;
        for rounds in [10, 100, 1000] {
            let sb = schedule_sum_bound(theta, rounds, 5, 8).expect("valid inputs");
            out.push(Check::at_most(format!("sum bound theta={theta} R={rounds}"), sb.lhs, sb.rhs));
            decreasing &= sb.lhs < previous;
            previous = sb.lhs;
        }
        out.push(Check::holds(format!("sum bound left side decreasing in R, theta={theta}"), decreasing));
    }
    out
}

pub fn schedule_and_sum_bound() -> Vec<Check> {
    let mut out = schedule_checks();
    out.extend(sum_bound_checks());
    out
}

fn max_abs_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn quantizer(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let mut r = rng::keyed(seed, Purpose::ModelInit, &[0x9a4e]);
    for n_bits in [1, 4, 8, 16] {
        let w: Vec<f64> = (0..4096).map(|_| r.random_range(-3.0..3.0)).collect();
        let p = quantize(&w, n_bits).expect("finite weights");
        let back = p.dequantize();
        let half = step_size(p.w_min(), p.w_max(), n_bits) / 2.0;
        out.push(Check::at_most(
            format!("round-trip error within half a step, N={n_bits}"),
            max_abs_error(&w, &back),
            half * (1.0 + 1e-12),
        ));
        let again = quantize_with_range(&back, n_bits, p.w_min(), p.w_max()).expect("same range");
        out.push(Check::holds(format!("requantizing is the identity, N={n_bits}"), again == p));
        let rebuilt = QuantizedPayload::from_parts(p.bits().to_bitvec(), n_bits, p.dim(), p.w_min(), p.w_max());
        out.push(Check::holds(format!("bitstream rebuilds the payload, N={n_bits}"), rebuilt.is_ok_and(|q| q == p)));
        out.push(Check::holds(format!("payload length D*N, N={n_bits}"), p.len_bits() == w.len() * n_bits as usize));
    }
    let flat = quantize(&[0.25; 8], 8).expect("finite weights");
    out.push(Check::holds("constant model round-trips exactly", flat.dequantize() == vec![0.25; 8]));
    out
}

/// Central-difference gradient check on `instances` random problems per model kind.
pub fn gradients(seed: u64, instances: usize) -> Vec<Check> {
    [ModelSpec::logistic(5, 3), ModelSpec::mlp(4, 6, 3)]
        .into_iter()
        .map(|spec| {
            let mut worst: f64 = 0.0;
            for inst in 0..instances {
                let mut r = rng::keyed(seed, Purpose::DatasetSample, &[spec.param_count() as u64, inst as u64]);
                let samples = 8;
                let x: Vec<f64> = (0..samples * spec.input_dim).map(|_| r.random_range(-2.0..2.0)).collect();
                let y: Vec<usize> = (0..samples).map(|_| r.random_range(0..spec.classes)).collect();
                let data = Dataset::new(x, y, spec.input_dim, spec.classes).expect("consistent shapes");
                let w: Vec<f64> = (0..spec.param_count()).map(|_| r.random_range(-1.5..1.5)).collect();
                let idx: Vec<usize> = (0..samples).collect();
                let mut g = vec![0.0; w.len()];
                spec.loss_and_grad(&w, &data, &idx, &mut g);
                worst = worst.max(relative_error(&g, &central_difference(&spec, &w, &data, &idx)));
            }
            let name = match spec.kind {
                fedldpc_core::fl::ModelKind::LogisticRegression => "logistic regression",
                fedldpc_core::fl::ModelKind::MlpOneHidden { .. } => "one-hidden-layer MLP",
            };
            Check::at_most(format!("{name} gradient worst relative error over {instances} instances"), worst, 1e-5)
        })
        .collect()
}

pub fn central_difference<O: Objective>(obj: &O, w: &[f64], data: &Dataset, samples: &[usize]) -> Vec<f64> {
    let mut probe = w.to_vec();
    (0..w.len())
        .map(|j| {
            let h = 1e-6 * w[j].abs().max(1.0);
            probe[j] = w[j] + h;
            let up = obj.loss(&probe, data, samples);
            probe[j] = w[j] - h;
            let down = obj.loss(&probe, data, samples);
            probe[j] = w[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or `‖a − b‖` when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fedldpc_core::exec::Sequential;

    #[test]
    fn instant_suites_pass() {
        for c in schedule_and_sum_bound().into_iter().chain(energy()).chain(quantizer(3)).chain(gradients(3, 5)) {
            assert!(c.pass, "{c}");
        }
    }

    #[test]
    fn small_model_error_run_is_close() {
        // Smaller model, more slack: checks the wiring, not the accuracy.
        for c in model_error_checks(1, &Sequential, 20_000, 20) {
            assert!(((c.observed - c.expected) / c.expected).abs() < 0.2, "{c}");
        }
    }

    #[test]
    fn check_formatting() {
        let c = Check::relative("x", 1.0, 2.0, 0.1);
        assert!(!c.pass);
        assert!(c.to_string().starts_with("FAIL x: observed 1.000000e0 expected 2.000000e0"));
        assert!(Check::relative("z", 0.0, 0.0, 0.0).pass);
    }

    #[test]
    fn suite_names() {
        for name in Suite::NAMES {
            assert!(Suite::parse(name).is_some());
        }
        assert!(Suite::parse("lemma2").is_none());
    }
}
