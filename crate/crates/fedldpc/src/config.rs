//! Experiment configuration.
//!
//! The file is TOML with the sections listed in [`SCHEMA`]. Loading runs two
//! passes and reports every problem together: a schema pass (unknown sections
//! or keys, wrong value types), then a semantic pass (ranges, cross-field
//! consistency).

use std::fmt;
use std::path::{Path, PathBuf};

use fedldpc_core::calibration::{CalibrationJob, DEFAULT_Q_POINTS, DEFAULT_SNR_POINTS};
use fedldpc_core::energy::{BoundConstants, EnergyModel};
use fedldpc_core::fl::{BlobParams, FlConfig, LinkPolicy, Mode, ModelSpec, PartitionKind};
use fedldpc_core::ldpc::{DecoderConfig, DEFAULT_CODE_LENGTH, NORMALIZED_FACTOR};
use fedldpc_core::schedule::BerSchedule;
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Int,
    Float,
    Str,
    Bool,
    /// A float, or the string `"inf"` for the noiseless channel.
    Snr,
    SnrList,
    IntList,
    FloatList,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Kind::Int => "an integer",
            Kind::Float => "a number",
            Kind::Str => "a string",
            Kind::Bool => "a boolean",
            Kind::Snr => "a number or \"inf\"",
            Kind::SnrList => "a list of numbers or \"inf\"",
            Kind::IntList => "a list of integers",
            Kind::FloatList => "a list of numbers",
        };
        f.write_str(s)
    }
}

pub const SCHEMA: &[(&str, &[(&str, Kind)])] = &[
    ("run", &[("seed", Kind::Int), ("mode", Kind::Str), ("out", Kind::Str)]),
    ("code", &[("n", Kind::Int), ("seed", Kind::Int), ("alist", Kind::Str)]),
    ("channel", &[("snr_db", Kind::Snr), ("decoder", Kind::Str), ("normalization", Kind::Float)]),
    (
        "calibration",
        &[
            ("snr_points", Kind::SnrList),
            ("q_points", Kind::IntList),
            ("min_error_bits", Kind::Int),
            ("max_frames", Kind::Int),
            ("seed", Kind::Int),
            ("table", Kind::Str),
        ],
    ),
    (
        "schedule",
        &[
            ("policy", Kind::Str),
            ("b0", Kind::Float),
            ("b_last", Kind::Float),
            ("fixed_q", Kind::Int),
            ("fixed_ber", Kind::Float),
            ("per_round", Kind::FloatList),
        ],
    ),
    (
        "fl",
        &[
            ("clients", Kind::Int),
            ("rounds", Kind::Int),
            ("local_steps", Kind::Int),
            ("eta", Kind::Float),
            ("batch_size", Kind::Int),
            ("n_bits", Kind::Int),
            ("partition", Kind::Str),
        ],
    ),
    ("model", &[("kind", Kind::Str), ("hidden", Kind::Int)]),
    (
        "dataset",
        &[
            ("kind", Kind::Str),
            ("classes", Kind::Int),
            ("dim", Kind::Int),
            ("per_class", Kind::Int),
            ("spread", Kind::Float),
            ("separation", Kind::Float),
            ("offset", Kind::Float),
            ("seed", Kind::Int),
            ("path", Kind::Str),
            ("label_column", Kind::Int),
            ("has_header", Kind::Bool),
        ],
    ),
    (
        "energy",
        &[
            ("decode_pj_per_bit_iter", Kind::Float),
            ("tx_rx_pj_per_bit", Kind::Float),
            ("train_mj_per_epoch", Kind::Float),
            ("code_rate", Kind::Float),
        ],
    ),
    (
        "bound",
        &[
            ("smoothness", Kind::Float),
            ("sigma_local2", Kind::Float),
            ("sigma_global2", Kind::Float),
            ("initial_gap", Kind::Float),
            ("range", Kind::Float),
            ("eta", Kind::Float),
        ],
    ),
];

/// Every problem found in a configuration, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config: {}", self.0.join("; "))
    }
}

impl std::error::Error for ConfigErrors {}

fn kind_matches(kind: Kind, v: &Value) -> bool {
    let snr = |v: &Value| matches!(v, Value::Float(_) | Value::Integer(_)) || v.as_str() == Some("inf");
    match kind {
        Kind::Int => v.is_integer(),
        Kind::Float => matches!(v, Value::Float(_) | Value::Integer(_)),
        Kind::Str => v.is_str(),
        Kind::Bool => v.is_bool(),
        Kind::Snr => snr(v),
        Kind::SnrList => v.as_array().is_some_and(|a| a.iter().all(snr)),
        Kind::IntList => v.as_array().is_some_and(|a| a.iter().all(Value::is_integer)),
        Kind::FloatList => {
            v.as_array().is_some_and(|a| a.iter().all(|x| matches!(x, Value::Float(_) | Value::Integer(_))))
        }
    }
}

/// Unknown sections and keys and type mismatches.
pub fn check_schema(table: &Table) -> Vec<String> {
    let mut errors = Vec::new();
    for (section, value) in table {
        let Some((_, keys)) = SCHEMA.iter().find(|(s, _)| s == section) else {
            errors.push(format!("unknown section [{section}]"));
            continue;
        };
        let Some(body) = value.as_table() else {
            errors.push(format!("[{section}] must be a table"));
            continue;
        };
        for (key, v) in body {
            match keys.iter().find(|(k, _)| k == key) {
                None => errors.push(format!("unknown key {section}.{key}")),
                Some((_, kind)) if !kind_matches(*kind, v) => errors.push(format!("{section}.{key} must be {kind}")),
                Some(_) => {}
            }
        }
    }
    errors
}

/// Typed reads over a schema-checked table; range problems accumulate.
struct Reader<'a> {
    table: &'a Table,
    errors: Vec<String>,
}

impl<'a> Reader<'a> {
    /// The value at `section.key` when it has the schema's type; anything the
    /// schema pass already rejected reads as absent.
    fn value(&self, section: &str, key: &str) -> Option<&'a Value> {
        let v = self.table.get(section)?.as_table()?.get(key)?;
        let (_, keys) = SCHEMA.iter().find(|(s, _)| *s == section)?;
        let (_, kind) = keys.iter().find(|(k, _)| *k == key)?;
        kind_matches(*kind, v).then_some(v)
    }

    fn has(&self, section: &str, key: &str) -> bool {
        self.value(section, key).is_some()
    }

    fn int(&mut self, section: &str, key: &str, default: u64) -> u64 {
        match self.value(section, key).and_then(Value::as_integer) {
            None => default,
            Some(v) if v < 0 => {
                self.errors.push(format!("{section}.{key} must be non-negative"));
                default
            }
            Some(v) => v as u64,
        }
    }

    fn count(&mut self, section: &str, key: &str, default: usize, min: usize) -> usize {
        let v = self.int(section, key, default as u64) as usize;
        if v < min {
            self.errors.push(format!("{section}.{key} must be at least {min}"));
        }
        v
    }

    fn float(&mut self, section: &str, key: &str, default: f64) -> f64 {
        self.value(section, key).map_or(default, as_float)
    }

    fn opt_float(&mut self, section: &str, key: &str) -> Option<f64> {
        self.value(section, key).map(as_float)
    }

    fn string(&mut self, section: &str, key: &str, default: &str) -> String {
        self.value(section, key).and_then(Value::as_str).unwrap_or(default).to_string()
    }

    fn opt_string(&mut self, section: &str, key: &str) -> Option<String> {
        self.value(section, key).and_then(Value::as_str).map(str::to_string)
    }

    fn choice<T: Copy>(&mut self, section: &str, key: &str, default: &str, options: &[(&str, T)]) -> T {
        let s = self.string(section, key, default);
        match options.iter().find(|(name, _)| *name == s) {
            Some((_, v)) => *v,
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.errors.push(format!("{section}.{key} must be one of {}", names.join("|")));
                options[0].1
            }
        }
    }

    fn check(&mut self, ok: bool, message: impl Into<String>) {
        if !ok {
            self.errors.push(message.into());
        }
    }
}

fn as_float(v: &Value) -> f64 {
    match v {
        Value::Float(f) => *f,
        Value::Integer(i) => *i as f64,
        Value::String(s) if s == "inf" => f64::INFINITY,
        _ => f64::NAN,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Blobs(BlobParams),
    Csv { path: PathBuf, label_column: Option<usize>, has_header: bool },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSection {
    pub smoothness: f64,
    pub sigma_local2: f64,
    pub sigma_global2: f64,
    pub initial_gap: f64,
    pub range: f64,
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub mode: Mode,
    pub out: Option<PathBuf>,
    pub code_n: usize,
    pub code_seed: u64,
    pub alist: Option<PathBuf>,
    pub snr_db: f64,
    pub decoder: DecoderConfig,
    pub calibration: CalibrationJob,
    pub table: Option<PathBuf>,
    pub policy: LinkPolicy,
    pub clients: usize,
    pub rounds: usize,
    pub local_steps: usize,
    pub eta: f64,
    pub batch_size: usize,
    pub n_bits: u32,
    pub partition: PartitionKind,
    pub model_kind: fedldpc_core::fl::ModelKind,
    pub dataset: DatasetSource,
    pub energy: EnergyModel,
    pub bound: BoundSection,
    /// The file as read, with command-line overrides applied and `run.out` removed.
    pub snapshot: Table,
}

/// Command-line values that replace file values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub out: Option<PathBuf>,
}

pub fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Physical => "physical",
        Mode::Statistical => "statistical",
        Mode::ErrorFree => "error_free",
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, ConfigErrors> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigErrors(vec![format!("cannot read {}: {e}", path.display())]))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, overrides)
    }

    /// Parses `text`; relative paths inside it resolve against `base`.
    pub fn parse(text: &str, base: &Path, overrides: &Overrides) -> Result<Self, ConfigErrors> {
        let mut table: Table = text.parse().map_err(|e: toml::de::Error| {
            ConfigErrors(vec![format!("TOML syntax: {}", e.message().replace('\n', " "))])
        })?;
        let schema_errors = check_schema(&table);
        apply_overrides(&mut table, overrides);
        let mut r = Reader { table: &table, errors: schema_errors };
        let resolve = |p: String| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };

        let seed = r.int("run", "seed", 0);
        let modes = [("statistical", Mode::Statistical), ("physical", Mode::Physical), ("error_free", Mode::ErrorFree)];
        let mode = r.choice("run", "mode", "statistical", &modes);
        let out = r.opt_string("run", "out").map(PathBuf::from);

        let code_n = r.count("code", "n", DEFAULT_CODE_LENGTH, 12);
        r.check(code_n.is_multiple_of(2), "code.n must be even");
        let code_seed = r.int("code", "seed", 1);
        let alist = r.opt_string("code", "alist").map(resolve);

        let snr_db = r.float("channel", "snr_db", 2.5);
        r.check(!snr_db.is_nan(), "channel.snr_db must be a number or \"inf\"");
        let normalized = r.choice("channel", "decoder", "min_sum", &[("min_sum", false), ("normalized_min_sum", true)]);
        let factor = r.opt_float("channel", "normalization");
        r.check(!(factor.is_some() && !normalized), "channel.normalization needs decoder = \"normalized_min_sum\"");
        let decoder = if normalized {
            let f = factor.unwrap_or(NORMALIZED_FACTOR);
            r.check(f > 0.0 && f <= 1.0, "channel.normalization must lie in (0, 1]");
            DecoderConfig { normalization: Some(f), ..DecoderConfig::default() }
        } else {
            DecoderConfig::default()
        };

        let snr_points = match r.value("calibration", "snr_points").and_then(Value::as_array) {
            Some(a) => a.iter().map(as_float).collect(),
            None => DEFAULT_SNR_POINTS.to_vec(),
        };
        let q_points: Vec<u32> = match r.value("calibration", "q_points").and_then(Value::as_array) {
            Some(a) => a.iter().filter_map(Value::as_integer).map(|q| q.clamp(0, i64::from(u32::MAX)) as u32).collect(),
            None => DEFAULT_Q_POINTS.to_vec(),
        };
        let calibration = CalibrationJob {
            snr_points,
            q_points,
            min_error_bits: r.int("calibration", "min_error_bits", 100),
            max_frames: r.int("calibration", "max_frames", 20_000),
            seed: r.int("calibration", "seed", seed),
            decoder,
        };
        if let Err(e) = calibration.validate() {
            r.errors.push(format!("calibration: {e}"));
        }
        let table_path = r.opt_string("calibration", "table").map(resolve);

        let clients = r.count("fl", "clients", 10, 1);
        let rounds = r.count("fl", "rounds", 30, 1);
        let local_steps = r.count("fl", "local_steps", 5, 1);
        let eta = r.float("fl", "eta", 0.01);
        r.check(eta.is_finite() && eta > 0.0, "fl.eta must be positive");
        let batch_size = r.count("fl", "batch_size", 64, 1);
        let n_bits = r.count("fl", "n_bits", 8, 1);
        r.check(n_bits <= 16, "fl.n_bits must be at most 16");
        let partition =
            r.choice("fl", "partition", "iid", &[("iid", PartitionKind::Iid), ("non_iid", PartitionKind::NonIid)]);

        let policies = [("adaptive", 0u8), ("fixed_q", 1), ("fixed_ber", 2), ("per_round", 3)];
        let policy = match r.choice("schedule", "policy", "adaptive", &policies) {
            0 => {
                let b0 = r.float("schedule", "b0", 1e-1);
                let b_last = r.float("schedule", "b_last", 1e-4);
                match BerSchedule::new(b0, b_last, rounds) {
                    Ok(s) => LinkPolicy::Adaptive(s),
                    Err(e) => {
                        r.errors.push(format!("schedule: {e}"));
                        LinkPolicy::FixedBer(0.0)
                    }
                }
            }
            1 => {
                r.check(r.has("schedule", "fixed_q"), "schedule.fixed_q is required for policy fixed_q");
                let q = r.int("schedule", "fixed_q", 1) as u32;
                r.check(q >= 1, "schedule.fixed_q must be at least 1");
                LinkPolicy::FixedQ(q)
            }
            2 => {
                r.check(r.has("schedule", "fixed_ber"), "schedule.fixed_ber is required for policy fixed_ber");
                LinkPolicy::FixedBer(r.float("schedule", "fixed_ber", 0.0))
            }
            _ => {
                let v: Vec<f64> = r
                    .value("schedule", "per_round")
                    .and_then(Value::as_array)
                    .map(|a| a.iter().map(as_float).collect())
                    .unwrap_or_default();
                r.check(v.len() == rounds, format!("schedule.per_round needs {rounds} entries, got {}", v.len()));
                LinkPolicy::PerRound(v)
            }
        };

        let kinds = [("logistic_regression", false), ("mlp_one_hidden", true)];
        let model_kind = if r.choice("model", "kind", "logistic_regression", &kinds) {
            fedldpc_core::fl::ModelKind::MlpOneHidden { hidden: r.count("model", "hidden", 16, 1) }
        } else {
            r.check(!r.has("model", "hidden"), "model.hidden only applies to mlp_one_hidden");
            fedldpc_core::fl::ModelKind::LogisticRegression
        };

        let dataset = if r.choice("dataset", "kind", "synthetic_blobs", &[("synthetic_blobs", false), ("csv", true)]) {
            let path = r.opt_string("dataset", "path");
            r.check(path.is_some(), "dataset.path is required for kind csv");
            let label_column =
                r.value("dataset", "label_column").and_then(Value::as_integer).map(|v| v.max(0) as usize);
            let has_header = r.value("dataset", "has_header").and_then(Value::as_bool).unwrap_or(true);
            DatasetSource::Csv { path: resolve(path.unwrap_or_default()), label_column, has_header }
        } else {
            let p = BlobParams {
                classes: r.count("dataset", "classes", 2, 2),
                dim: r.count("dataset", "dim", 20, 1),
                per_class: r.count("dataset", "per_class", 1000, 1),
                spread: r.float("dataset", "spread", 2.0),
                separation: r.float("dataset", "separation", 1.0),
                offset: r.float("dataset", "offset", 10.0),
                seed: r.int("dataset", "seed", seed),
            };
            r.check(p.spread.is_finite() && p.spread >= 0.0, "dataset.spread must be non-negative");
            r.check(p.separation.is_finite() && p.separation >= 0.0, "dataset.separation must be non-negative");
            r.check(p.offset.is_finite(), "dataset.offset must be finite");
            DatasetSource::Blobs(p)
        };

        let defaults = EnergyModel::default();
        let energy = EnergyModel {
            decode_pj_per_bit_iter: r.float("energy", "decode_pj_per_bit_iter", defaults.decode_pj_per_bit_iter),
            tx_rx_pj_per_bit: r.float("energy", "tx_rx_pj_per_bit", defaults.tx_rx_pj_per_bit),
            train_mj_per_epoch: r.float("energy", "train_mj_per_epoch", defaults.train_mj_per_epoch),
            code_rate: r.float("energy", "code_rate", defaults.code_rate),
        };
        if let Err(e) = energy.validate() {
            r.errors.push(format!("energy: {e}"));
        }

        let bound = BoundSection {
            smoothness: r.float("bound", "smoothness", 1.0),
            sigma_local2: r.float("bound", "sigma_local2", 0.0),
            sigma_global2: r.float("bound", "sigma_global2", 0.0),
            initial_gap: r.float("bound", "initial_gap", 1.0),
            range: r.float("bound", "range", 1.0),
            eta: r.opt_float("bound", "eta"),
        };
        for (name, v) in [
            ("smoothness", bound.smoothness),
            ("sigma_local2", bound.sigma_local2),
            ("sigma_global2", bound.sigma_global2),
            ("initial_gap", bound.initial_gap),
            ("range", bound.range),
        ] {
            r.check(v.is_finite() && v >= 0.0, format!("bound.{name} must be non-negative"));
        }
        r.check(
            bound.smoothness > 0.0 || bound.eta.is_some(),
            "bound.smoothness must be positive unless bound.eta is set",
        );
        r.check(bound.eta.is_none_or(|e| e > 0.0), "bound.eta must be positive");

        if !r.errors.is_empty() {
            return Err(ConfigErrors(r.errors));
        }
        Ok(Self {
            seed,
            mode,
            out: overrides.out.clone().or(out),
            code_n,
            code_seed,
            alist,
            snr_db,
            decoder,
            calibration,
            table: table_path,
            policy,
            clients,
            rounds,
            local_steps,
            eta,
            batch_size,
            n_bits: n_bits as u32,
            partition,
            model_kind,
            dataset,
            energy,
            bound,
            snapshot: without_out(table),
        })
    }

    pub fn fl_config(&self) -> FlConfig {
        FlConfig {
            clients: self.clients,
            rounds: self.rounds,
            local_steps: self.local_steps,
            eta: self.eta,
            batch_size: self.batch_size,
            n_bits: self.n_bits,
            mode: self.mode,
            policy: self.policy.clone(),
            snr_db: self.snr_db,
            seed: self.seed,
            decoder: self.decoder,
            energy: self.energy,
        }
    }

    pub fn model_spec(&self, input_dim: usize, classes: usize) -> ModelSpec {
        ModelSpec { kind: self.model_kind, input_dim, classes }
    }

    /// Bound inputs for a model with `dim` parameters.
    pub fn bound_constants(&self, dim: usize) -> BoundConstants {
        let mut c = BoundConstants {
            smoothness: self.bound.smoothness,
            sigma_local2: self.bound.sigma_local2,
            sigma_global2: self.bound.sigma_global2,
            initial_gap: self.bound.initial_gap,
            range: self.bound.range,
            dim,
            clients: self.clients,
            local_steps: self.local_steps,
            rounds: self.rounds,
            n_bits: self.n_bits,
            eta: 1.0,
        };
        c.eta = self.bound.eta.unwrap_or_else(|| c.simplified_eta());
        c
    }

    /// Whether training cannot run without a calibration table: physical mode
    /// maps targets to budgets, and a fixed budget needs its tabulated BER.
    pub fn needs_table(&self) -> bool {
        match self.mode {
            Mode::Physical => true,
            Mode::Statistical => matches!(self.policy, LinkPolicy::FixedQ(_)),
            Mode::ErrorFree => false,
        }
    }

    /// Canonical TOML of the effective configuration.
    pub fn snapshot_toml(&self) -> String {
        toml::to_string(&self.snapshot).expect("a parsed table serializes")
    }
}

/// Where results go is not part of the experiment.
fn without_out(mut table: Table) -> Table {
    if let Some(run) = table.get_mut("run").and_then(Value::as_table_mut) {
        run.remove("out");
    }
    table
}

fn apply_overrides(table: &mut Table, o: &Overrides) {
    let run = table.entry("run").or_insert_with(|| Value::Table(Table::new()));
    let Some(run) = run.as_table_mut() else { return };
    if let Some(seed) = o.seed {
        run.insert("seed".into(), Value::Integer(seed as i64));
    }
    if let Some(mode) = o.mode {
        run.insert("mode".into(), Value::String(mode_name(mode).into()));
    }
}
