//! Command implementations shared by the binary and the tests.
//!
//! Each command writes into one output directory: the effective config, the
//! calibration reference hash, CSVs and a JSON summary. Outputs depend only on
//! the config and seed, never on the worker count.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use fedldpc_core::calibration::run_calibration;
use fedldpc_core::energy::{bound_report, BoundReport};
use fedldpc_core::exec::Executor;
use fedldpc_core::fl::{
    partition, run_experiment, synthetic_blobs, train_test_split, Dataset, ExperimentResult, FlData, LinkAssets,
    LinkPolicy, Mode, Split,
};
use fedldpc_core::ldpc::LdpcCode;
use fedldpc_core::schedule::CalibrationTable;
use serde_json::json;

use crate::config::{mode_name, ConfigErrors, DatasetSource, ExperimentConfig};
use crate::formats;
use crate::validate::{run_suite, Check, Suite};

pub const DEFAULT_OUT_DIR: &str = "out";
pub const TABLE_FILE: &str = "calibration.csv";
pub const TABLE_HASH_FILE: &str = "calibration.sha256";
pub const TABLE_SUMMARY_FILE: &str = "calibration_summary.txt";
pub const CONFIG_SNAPSHOT_FILE: &str = "config.toml";
pub const ROUNDS_FILE: &str = "rounds.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const BOUND_FILE: &str = "bound.json";
pub const ALIST_FILE: &str = "code.alist";

#[derive(Debug)]
pub enum AppError {
    /// Bad command line or configuration; exit code 2.
    Config(Vec<String>),
    /// Failure while running; exit code 1. `module` names where it happened.
    Runtime { module: &'static str, message: String },
}

impl AppError {
    pub fn runtime(module: &'static str, e: impl fmt::Display) -> Self {
        AppError::Runtime { module, message: e.to_string() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        AppError::Config(vec![message.into()])
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Runtime { .. } => 1,
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // One line whatever the inner messages contain.
        let flat = |s: &str| s.replace(['\n', '\r'], " ");
        match self {
            AppError::Config(errs) => write!(f, "config: {}", flat(&errs.join("; "))),
            AppError::Runtime { module, message } => write!(f, "{module}: {}", flat(message)),
        }
    }
}

impl std::error::Error for AppError {}

impl From<ConfigErrors> for AppError {
    fn from(e: ConfigErrors) -> Self {
        AppError::Config(e.0)
    }
}

fn io(path: &Path, e: std::io::Error) -> AppError {
    AppError::runtime("io", format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), AppError> {
    fs::write(path, contents).map_err(|e| io(path, e))
}

pub fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn prepare_out(cfg: &ExperimentConfig) -> Result<PathBuf, AppError> {
    let dir = out_dir(cfg);
    fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
    write_file(&dir.join(CONFIG_SNAPSHOT_FILE), cfg.snapshot_toml())?;
    Ok(dir)
}

/// The configured code: read from an alist file, or constructed from the seed.
pub fn build_code(cfg: &ExperimentConfig) -> Result<LdpcCode, AppError> {
    match &cfg.alist {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
            let h = formats::read_alist(&text, &path.display().to_string(), cfg.code_seed)
                .map_err(|e| AppError::runtime("ldpc_codec", e))?;
            LdpcCode::from_matrix(h).map_err(|e| AppError::runtime("ldpc_codec", e))
        }
        None => LdpcCode::construct(cfg.code_n, cfg.code_seed).map_err(|e| AppError::runtime("ldpc_codec", e)),
    }
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset, AppError> {
    match &cfg.dataset {
        DatasetSource::Blobs(p) => synthetic_blobs(p).map_err(|e| AppError::runtime("dataset", e)),
        DatasetSource::Csv { path, label_column, has_header } => {
            formats::read_dataset_csv(path, *label_column, *has_header).map_err(|e| AppError::runtime("dataset", e))
        }
    }
}

/// Seeded 80/20 split and client shards.
pub fn prepare_data(cfg: &ExperimentConfig, data: &Dataset) -> Result<(Split, Vec<Vec<usize>>), AppError> {
    let split = train_test_split(data, cfg.seed).map_err(|e| AppError::runtime("dataset", e))?;
    let shards = partition(split.train.labels(), cfg.clients, cfg.partition, cfg.seed)
        .map_err(|e| AppError::runtime("dataset", e))?;
    Ok((split, shards))
}

/// Calibration table named by the config, with the SHA-256 of its bytes.
pub fn load_table(path: &Path) -> Result<(CalibrationTable, String), AppError> {
    let bytes = fs::read(path).map_err(|e| io(path, e))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| AppError::runtime("calibration", format!("{}: not UTF-8", path.display())))?;
    let table =
        formats::read_table(&text, &path.display().to_string()).map_err(|e| AppError::runtime("calibration", e))?;
    Ok((table, formats::sha256_hex(&bytes)))
}

pub fn calibrate<X: Executor>(cfg: &ExperimentConfig, exec: &X) -> Result<PathBuf, AppError> {
    let code = build_code(cfg)?;
    let table = run_calibration(&cfg.calibration, &code, exec).map_err(|e| AppError::runtime("calibration", e))?;
    let dir = prepare_out(cfg)?;
    let csv = formats::write_table(&table);
    write_file(&dir.join(TABLE_FILE), &csv)?;
    write_file(&dir.join(TABLE_HASH_FILE), format!("{}  {TABLE_FILE}\n", formats::sha256_hex(csv.as_bytes())))?;
    write_file(&dir.join(TABLE_SUMMARY_FILE), formats::table_summary(&table))?;
    Ok(dir)
}

/// What `train` produced.
#[derive(Debug)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub result: ExperimentResult,
    pub warnings: Vec<String>,
}

fn json_real(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(x.to_string())
    }
}

pub fn train<X: Executor>(cfg: &ExperimentConfig, exec: &X) -> Result<TrainOutcome, AppError> {
    if cfg.needs_table() && cfg.table.is_none() {
        return Err(AppError::config(format!(
            "calibration.table is required for mode {} with this schedule",
            mode_name(cfg.mode)
        )));
    }
    let table = match (&cfg.table, cfg.mode) {
        (Some(path), Mode::Physical | Mode::Statistical) => Some(load_table(path)?),
        _ => None,
    };
    let code = if cfg.mode == Mode::Physical { Some(build_code(cfg)?) } else { None };
    if let (Some((t, _)), Some(code)) = (&table, &code) {
        if t.code_n != code.n() || t.code_seed != code.requested_seed() {
            return Err(AppError::runtime(
                "calibration",
                format!(
                    "table is for n={} code_seed={}, config code is n={} seed={}",
                    t.code_n,
                    t.code_seed,
                    code.n(),
                    code.requested_seed()
                ),
            ));
        }
    }
    let data = load_dataset(cfg)?;
    let (split, shards) = prepare_data(cfg, &data)?;
    let spec = cfg.model_spec(data.dim(), data.classes());
    spec.validate().map_err(|e| AppError::runtime("fl_engine", e))?;
    let fl = cfg.fl_config();
    let assets = LinkAssets { code: code.as_ref(), table: table.as_ref().map(|(t, _)| t) };
    let fl_data = FlData { train: &split.train, test: &split.test, shards: &shards };
    let result = run_experiment(&fl, &spec, fl_data, assets, exec).map_err(|e| AppError::runtime("fl_engine", e))?;

    let mut warnings = Vec::new();
    if cfg.mode == Mode::Statistical && table.is_none() {
        warnings.push("no calibration table: decoding iterations and energy are not imputed".to_string());
    }
    if !result.summary.saturated_rounds.is_empty() {
        warnings.push(format!(
            "no tabulated budget reached the target BER in rounds {:?}; the largest budget was used",
            result.summary.saturated_rounds
        ));
    }

    let dir = prepare_out(cfg)?;
    write_file(&dir.join(ROUNDS_FILE), formats::write_rounds(&result.rounds))?;
    let table_hash = table.as_ref().map(|(_, h)| h.clone());
    if let (Some(hash), Some(path)) = (&table_hash, &cfg.table) {
        let name = path.file_name().map_or_else(|| TABLE_FILE.into(), |n| n.to_string_lossy().into_owned());
        write_file(&dir.join(TABLE_HASH_FILE), format!("{hash}  {name}\n"))?;
    }
    let s = &result.summary;
    let summary = json!({
        "mode": mode_name(cfg.mode),
        "seed": cfg.seed,
        "snr_db": json_real(cfg.snr_db),
        "rounds": cfg.rounds,
        "clients": cfg.clients,
        "param_count": s.param_count,
        "final_test_acc": s.final_test_acc,
        "final_train_loss": s.final_train_loss,
        "client_average_test_acc": s.client_average_test_acc,
        "total_iterations": s.total_iterations,
        "total_decoding_energy_j": s.total_decoding_energy_j,
        "total_link_energy_j": s.total_link_energy_j,
        "total_training_energy_j": s.total_training_energy_j,
        "total_energy_j": s.total_decoding_energy_j + s.total_link_energy_j + s.total_training_energy_j,
        "saturated_rounds": s.saturated_rounds,
        "calibration_sha256": table_hash,
        "warnings": warnings,
    });
    let text = serde_json::to_string_pretty(&summary).map_err(|e| AppError::runtime("io", e))?;
    write_file(&dir.join(SUMMARY_FILE), text + "\n")?;
    Ok(TrainOutcome { dir, result, warnings })
}

/// Per-round BERs the configured schedule implies, for the bound evaluator.
pub fn schedule_bers(cfg: &ExperimentConfig, table: Option<&CalibrationTable>) -> Result<Vec<f64>, AppError> {
    if cfg.mode == Mode::ErrorFree {
        return Ok(vec![0.0; cfg.rounds]);
    }
    match &cfg.policy {
        LinkPolicy::Adaptive(s) => Ok(s.targets()),
        LinkPolicy::FixedBer(b) => Ok(vec![*b; cfg.rounds]),
        LinkPolicy::PerRound(v) => Ok(v.clone()),
        LinkPolicy::FixedQ(q) => {
            let t =
                table.ok_or_else(|| AppError::config("calibration.table is required to bound a fixed_q schedule"))?;
            let ber = t.entry(cfg.snr_db, *q).map_err(|e| AppError::runtime("ber_scheduler", e))?.ber;
            Ok(vec![ber.min(0.5); cfg.rounds])
        }
    }
}

/// Parameter count of the configured model without training it.
pub fn param_count(cfg: &ExperimentConfig) -> Result<usize, AppError> {
    let (dim, classes) = match &cfg.dataset {
        DatasetSource::Blobs(p) => (p.dim, p.classes),
        DatasetSource::Csv { .. } => {
            let d = load_dataset(cfg)?;
            (d.dim(), d.classes())
        }
    };
    Ok(cfg.model_spec(dim, classes).param_count())
}

pub fn bound(cfg: &ExperimentConfig) -> Result<(PathBuf, BoundReport), AppError> {
    let table = match &cfg.table {
        Some(path) if matches!(cfg.policy, LinkPolicy::FixedQ(_)) => Some(load_table(path)?.0),
        _ => None,
    };
    let bers = schedule_bers(cfg, table.as_ref())?;
    let constants = cfg.bound_constants(param_count(cfg)?);
    let report = bound_report(&constants, &bers).map_err(|e| AppError::runtime("analytics_energy", e))?;
    let dir = prepare_out(cfg)?;
    let body = json!({ "constants": constants, "bers": bers, "report": report });
    let text = serde_json::to_string_pretty(&body).map_err(|e| AppError::runtime("io", e))?;
    write_file(&dir.join(BOUND_FILE), text + "\n")?;
    Ok((dir, report))
}

pub fn export_alist(cfg: &ExperimentConfig) -> Result<PathBuf, AppError> {
    let code = build_code(cfg)?;
    let dir = prepare_out(cfg)?;
    let path = dir.join(ALIST_FILE);
    write_file(&path, formats::write_alist(code.matrix()))?;
    Ok(path)
}

pub fn validate<X: Executor>(suite: Suite, seed: u64, exec: &X) -> Vec<Check> {
    run_suite(suite, seed, exec)
}
