//! The round loop: broadcast, local SGD, aggregation.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use super::dataset::{sample_batch, Dataset};
use super::model::{accuracy, Objective};
use crate::channel::ChannelConfig;
use crate::energy::EnergyModel;
use crate::error_model::{inject_bit_errors, BitErrorSpec};
use crate::exec::Executor;
use crate::ldpc::{DecoderConfig, LdpcCode};
use crate::quantizer::{quantize, QuantizedPayload};
use crate::rng::{self, Purpose};
use crate::schedule::{BerSchedule, CalibrationTable};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Mode {
    /// Every frame is encoded, sent through the channel and decoded.
    Physical,
    /// Bit flips at the round's BER target; iterations imputed from calibration.
    Statistical,
    /// Clients receive the quantized model without errors.
    ErrorFree,
}

/// How the downlink operating point is chosen each round.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LinkPolicy {
    Adaptive(BerSchedule),
    FixedQ(u32),
    FixedBer(f64),
    /// Explicit BER target per round.
    PerRound(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlConfig {
    pub clients: usize,
    pub rounds: usize,
    pub local_steps: usize,
    pub eta: f64,
    pub batch_size: usize,
    pub n_bits: u32,
    pub mode: Mode,
    pub policy: LinkPolicy,
    pub snr_db: f64,
    pub seed: u64,
    pub decoder: DecoderConfig,
    pub energy: EnergyModel,
}

impl FlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 || self.rounds == 0 || self.local_steps == 0 || self.batch_size == 0 {
            return Err(Error::invalid("fl", "clients, rounds, local_steps and batch_size must be at least 1"));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::invalid("eta", "must be positive"));
        }
        if self.n_bits == 0 || self.n_bits > crate::quantizer::MAX_BITS {
            return Err(Error::invalid("n_bits", "must lie in 1..=16"));
        }
        match &self.policy {
            LinkPolicy::Adaptive(s) if s.rounds() != self.rounds => {
                Err(Error::invalid("schedule", "schedule length differs from rounds"))
            }
            LinkPolicy::FixedQ(0) => Err(Error::invalid("fixed_q", "must be at least 1")),
            LinkPolicy::FixedBer(b) if !(0.0..=0.5).contains(b) => {
                Err(Error::invalid("fixed_ber", "must lie in [0, 0.5]"))
            }
            LinkPolicy::PerRound(v) if v.len() != self.rounds => {
                Err(Error::invalid("per_round", "one BER per round required"))
            }
            LinkPolicy::PerRound(v) if v.iter().any(|b| !(0.0..=0.5).contains(b)) => {
                Err(Error::invalid("per_round", "each BER must lie in [0, 0.5]"))
            }
            _ => self.energy.validate(),
        }
    }
}

/// Code and calibration the link needs. Physical mode needs both; statistical
/// mode needs the table to impute iterations (without it energy is not charged).
#[derive(Debug, Clone, Copy, Default)]
pub struct LinkAssets<'a> {
    pub code: Option<&'a LdpcCode>,
    pub table: Option<&'a CalibrationTable>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoundRecord {
    pub round: usize,
    /// BER the link aims for: the schedule or fixed target, the table BER for a
    /// fixed budget, zero in error-free mode.
    pub target_ber: f64,
    /// Iteration budget; `None` when no decoding is modelled.
    pub q_r: Option<u32>,
    /// Payload bit errors over payload bits, pooled over clients.
    pub measured_ber: f64,
    /// Mean decoder iterations per frame.
    pub mean_iters: f64,
    /// Decoding energy (J) over all clients.
    pub energy_j: f64,
    pub train_loss: f64,
    pub test_acc: f64,
    /// Frame-iterations over all clients.
    pub total_iterations: f64,
    pub frames: u64,
    /// No tabulated budget reached `target_ber`.
    pub saturated: bool,
    /// Mean over clients of `‖w̃ − w‖²`.
    pub model_error: f64,
    pub link_energy_j: f64,
    pub training_energy_j: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExperimentSummary {
    pub final_test_acc: f64,
    pub final_train_loss: f64,
    /// Accuracy of the client average after the last round's local training.
    pub client_average_test_acc: f64,
    pub total_decoding_energy_j: f64,
    pub total_link_energy_j: f64,
    pub total_training_energy_j: f64,
    pub total_iterations: f64,
    pub saturated_rounds: Vec<usize>,
    pub param_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub rounds: Vec<RoundRecord>,
    pub summary: ExperimentSummary,
    pub final_weights: Vec<f64>,
}

/// Training data split into per-client shards plus the held-out test set.
#[derive(Debug, Clone, Copy)]
pub struct FlData<'a> {
    pub train: &'a Dataset,
    pub test: &'a Dataset,
    pub shards: &'a [Vec<usize>],
}

/// Result of [`local_sgd`].
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub weights: Vec<f64>,
    pub delta: Vec<f64>,
}

/// `steps` SGD steps from `start`. With `batch_size` at least the shard size
/// every step uses the full shard in order; otherwise each batch is drawn with
/// replacement from `rng`.
#[allow(clippy::too_many_arguments)]
pub fn local_sgd<O: Objective + ?Sized, R: rand::Rng>(
    obj: &O,
    data: &Dataset,
    shard: &[usize],
    start: &[f64],
    steps: usize,
    eta: f64,
    batch_size: usize,
    rng: &mut R,
) -> core::result::Result<LocalUpdate, alloc::string::String> {
    if shard.is_empty() {
        return Err("empty shard".into());
    }
    let mut w = start.to_vec();
    let mut grad = vec![0.0; w.len()];
    for step in 0..steps {
        let batch;
        let samples = if batch_size >= shard.len() {
            shard
        } else {
            batch = sample_batch(shard, batch_size, rng);
            &batch[..]
        };
        let loss = obj.loss_and_grad(&w, data, samples, &mut grad);
        if !loss.is_finite() {
            return Err(alloc::format!("non-finite loss at local step {step}"));
        }
        if let Some(j) = grad.iter().position(|g| !g.is_finite()) {
            return Err(alloc::format!("non-finite gradient component {j} at local step {step}"));
        }
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi -= eta * gi;
        }
    }
    let delta = w.iter().zip(start).map(|(a, b)| a - b).collect();
    Ok(LocalUpdate { weights: w, delta })
}

/// `w + mean(deltas)`.
pub fn aggregate(w: &[f64], deltas: &[Vec<f64>]) -> Result<Vec<f64>> {
    if deltas.is_empty() {
        return Err(Error::invalid("deltas", "need at least one client update"));
    }
    if let Some(d) = deltas.iter().find(|d| d.len() != w.len()) {
        return Err(Error::LengthMismatch { expected: w.len(), actual: d.len() });
    }
    let k = deltas.len() as f64;
    Ok((0..w.len()).map(|j| w[j] + deltas.iter().map(|d| d[j]).sum::<f64>() / k).collect())
}

/// Per-round link operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
struct OperatingPoint {
    target_ber: f64,
    q: Option<u32>,
    saturated: bool,
    /// Mean iterations from calibration at `(snr, q)`.
    table_iters: Option<f64>,
}

fn operating_point(cfg: &FlConfig, assets: &LinkAssets<'_>, round: usize) -> Result<OperatingPoint> {
    if cfg.mode == Mode::ErrorFree {
        return Ok(OperatingPoint { target_ber: 0.0, q: None, saturated: false, table_iters: None });
    }
    let target = match &cfg.policy {
        LinkPolicy::Adaptive(s) => Some(s.target_ber(round)?),
        LinkPolicy::FixedBer(b) => Some(*b),
        LinkPolicy::PerRound(v) => Some(v[round]),
        LinkPolicy::FixedQ(_) => None,
    };
    let Some(table) = assets.table else {
        if cfg.mode == Mode::Physical {
            return Err(Error::MissingAsset("calibration table"));
        }
        return match target {
            Some(b) => Ok(OperatingPoint { target_ber: b, q: None, saturated: false, table_iters: None }),
            None => Err(Error::MissingAsset("calibration table")),
        };
    };
    let (target_ber, q, saturated) = match (target, &cfg.policy) {
        (Some(b), _) => {
            let lookup = table.q_for_target(cfg.snr_db, b)?;
            (b, lookup.q, lookup.saturated)
        }
        (None, LinkPolicy::FixedQ(q)) => (table.entry(cfg.snr_db, *q)?.ber, *q, false),
        _ => unreachable!("every policy yields a target or a budget"),
    };
    let table_iters = Some(table.entry(cfg.snr_db, q)?.mean_iters);
    Ok(OperatingPoint { target_ber, q: Some(q), saturated, table_iters })
}

/// What one client received and what it cost.
#[derive(Debug, Clone)]
struct Downlink {
    received: Vec<f64>,
    bit_errors: u64,
    payload_bits: u64,
    frames: u64,
    /// Frame-iterations spent.
    iterations: f64,
    /// Bits charged to the decoder.
    decoded_bits: f64,
}

fn physical_downlink(
    cfg: &FlConfig,
    code: &LdpcCode,
    payload: &QuantizedPayload,
    q: u32,
    round: usize,
    client: usize,
) -> Result<Downlink> {
    let k = code.k();
    let bits = payload.bits();
    let channel = ChannelConfig::new(cfg.snr_db, cfg.seed)?;
    let mut received = payload.clone();
    let mut bit_errors = 0u64;
    let mut iterations = 0u64;
    let frames = bits.len().div_ceil(k);
    let mut msg = vec![0u8; k];
    for f in 0..frames {
        let chunk = &bits[f * k..((f + 1) * k).min(bits.len())];
        msg.iter_mut().for_each(|b| *b = 0);
        for (m, b) in msg.iter_mut().zip(chunk.iter().by_vals()) {
            *m = u8::from(b);
        }
        let codeword = code.encode(&msg)?;
        let id = rng::stream_id(Purpose::ChannelNoise, &[round as u64, client as u64, f as u64]);
        let llrs = channel.transmit(&codeword, id)?;
        let out = code.decode_with(&llrs, q, &cfg.decoder)?;
        iterations += u64::from(out.iterations_used);
        let dest = &mut received.bits_mut()[f * k..((f + 1) * k).min(bits.len())];
        for (j, &b) in out.bits[..chunk.len()].iter().enumerate() {
            let bit = b == 1;
            if bit != chunk[j] {
                bit_errors += 1;
            }
            dest.set(j, bit);
        }
    }
    Ok(Downlink {
        received: received.dequantize(),
        bit_errors,
        payload_bits: bits.len() as u64,
        frames: frames as u64,
        iterations: iterations as f64,
        decoded_bits: (frames * k) as f64,
    })
}

fn statistical_downlink(
    cfg: &FlConfig,
    frame_info_bits: usize,
    payload: &QuantizedPayload,
    point: &OperatingPoint,
    round: usize,
    client: usize,
) -> Result<Downlink> {
    let spec = BitErrorSpec::new(point.target_ber.min(0.5), cfg.seed)?;
    let id = rng::stream_id(Purpose::BitFlips, &[round as u64, client as u64]);
    let noisy = inject_bit_errors(payload, &spec, id)?;
    let bit_errors = noisy.bits().iter().by_vals().zip(payload.bits().iter().by_vals()).filter(|(a, b)| a != b).count();
    let payload_bits = payload.len_bits();
    let frames = payload_bits.div_ceil(frame_info_bits);
    let mean = point.table_iters.unwrap_or(0.0);
    Ok(Downlink {
        received: noisy.dequantize(),
        bit_errors: bit_errors as u64,
        payload_bits: payload_bits as u64,
        frames: frames as u64,
        iterations: frames as f64 * mean,
        decoded_bits: payload_bits as f64,
    })
}

fn squared_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Runs all rounds. Deterministic in `cfg.seed` whatever `exec` does.
pub fn run_experiment<O: Objective + ?Sized, X: Executor>(
    cfg: &FlConfig,
    obj: &O,
    data: FlData<'_>,
    assets: LinkAssets<'_>,
    exec: &X,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    if data.shards.len() != cfg.clients {
        return Err(Error::invalid("shards", "one shard per client required"));
    }
    if let Some(c) = data.shards.iter().position(|s| s.is_empty()) {
        return Err(Error::Training { round: 0, client: c, reason: "empty shard".to_string() });
    }
    if cfg.mode == Mode::Physical && assets.code.is_none() {
        return Err(Error::MissingAsset("LDPC code"));
    }
    // statistical mode sizes frames like the physical link would
    let frame_info_bits = assets.code.map_or(crate::ldpc::DEFAULT_INFO_BITS, |c| c.k());
    let train_all = data.train.indices();
    let test_all = data.test.indices();
    let mut w = obj.init(&mut rng::keyed(cfg.seed, Purpose::ModelInit, &[]));
    if w.len() != obj.dim() {
        return Err(Error::LengthMismatch { expected: obj.dim(), actual: w.len() });
    }
    let mut records = Vec::with_capacity(cfg.rounds);
    let mut client_average = w.clone();

    for round in 0..cfg.rounds {
        let point = operating_point(cfg, &assets, round)?;
        let payload = quantize(&w, cfg.n_bits)?;
        let reference = payload.dequantize();

        let outcomes = exec.map(cfg.clients, |client| -> Result<(Downlink, LocalUpdate)> {
            let link = match cfg.mode {
                Mode::ErrorFree => Downlink {
                    received: reference.clone(),
                    bit_errors: 0,
                    payload_bits: payload.len_bits() as u64,
                    frames: 0,
                    iterations: 0.0,
                    decoded_bits: 0.0,
                },
                Mode::Statistical => statistical_downlink(cfg, frame_info_bits, &payload, &point, round, client)?,
                Mode::Physical => {
                    let code = assets.code.expect("checked above");
                    physical_downlink(
                        cfg,
                        code,
                        &payload,
                        point.q.expect("physical mode resolves a budget"),
                        round,
                        client,
                    )?
                }
            };
            let mut batch_rng = rng::keyed(cfg.seed, Purpose::MiniBatch, &[round as u64, client as u64]);
            let update = local_sgd(
                obj,
                data.train,
                &data.shards[client],
                &link.received,
                cfg.local_steps,
                cfg.eta,
                cfg.batch_size,
                &mut batch_rng,
            )
            .map_err(|reason| Error::Training { round, client, reason })?;
            Ok((link, update))
        });

        let mut deltas = Vec::with_capacity(cfg.clients);
        let (mut errors, mut bits, mut frames) = (0u64, 0u64, 0u64);
        let (mut iterations, mut decoded_bits, mut distortion) = (0.0, 0.0, 0.0);
        let mut finals = Vec::with_capacity(cfg.clients);
        for outcome in outcomes {
            let (link, update) = outcome?;
            errors += link.bit_errors;
            bits += link.payload_bits;
            frames += link.frames;
            iterations += link.iterations;
            decoded_bits += link.decoded_bits;
            distortion += squared_error(&link.received, &w);
            deltas.push(update.delta);
            finals.push(update.weights);
        }
        w = aggregate(&w, &deltas)?;
        if let Some(j) = w.iter().position(|v| !v.is_finite()) {
            return Err(Error::Training {
                round,
                client: 0,
                reason: alloc::format!("aggregated weight {j} is not finite"),
            });
        }
        if round + 1 == cfg.rounds {
            client_average = aggregate(&vec![0.0; w.len()], &finals)?;
        }

        let mean_iters = if frames == 0 { 0.0 } else { iterations / frames as f64 };
        let energy_j = cfg.energy.decoding_energy(decoded_bits, mean_iters);
        let link_energy_j = if cfg.mode == Mode::ErrorFree { 0.0 } else { cfg.energy.transceiver_energy(bits as f64) };
        let epochs: f64 =
            data.shards.iter().map(|s| (cfg.local_steps * cfg.batch_size.min(s.len())) as f64 / s.len() as f64).sum();
        records.push(RoundRecord {
            round,
            target_ber: point.target_ber,
            q_r: point.q,
            measured_ber: if bits == 0 { 0.0 } else { errors as f64 / bits as f64 },
            mean_iters,
            energy_j,
            train_loss: obj.loss(&w, data.train, &train_all),
            test_acc: accuracy(obj, &w, data.test, &test_all),
            total_iterations: iterations,
            frames,
            saturated: point.saturated,
            model_error: distortion / cfg.clients as f64,
            link_energy_j,
            training_energy_j: cfg.energy.training_energy(epochs),
        });
    }

    let last = records.last().expect("at least one round");
    let summary = ExperimentSummary {
        final_test_acc: last.test_acc,
        final_train_loss: last.train_loss,
        client_average_test_acc: accuracy(obj, &client_average, data.test, &test_all),
        total_decoding_energy_j: records.iter().map(|r| r.energy_j).sum(),
        total_link_energy_j: records.iter().map(|r| r.link_energy_j).sum(),
        total_training_energy_j: records.iter().map(|r| r.training_energy_j).sum(),
        total_iterations: records.iter().map(|r| r.total_iterations).sum(),
        saturated_rounds: records.iter().filter(|r| r.saturated).map(|r| r.round).collect(),
        param_count: w.len(),
    };
    Ok(ExperimentResult { rounds: records, summary, final_weights: w })
}
