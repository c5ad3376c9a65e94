use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid code length {0}: must be even and at least 12")]
    InvalidCodeLength(usize),
    #[error("parity-check matrix still rank deficient after {retries} reseeds (last rank {rank} of {rows})")]
    RankDeficient { retries: u32, rank: usize, rows: usize },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("round {round} out of range for a {rounds}-round schedule")]
    RoundOutOfRange { round: usize, rounds: usize },
    #[error("calibration table has no entries for {snr_db} dB")]
    UnknownSnr { snr_db: f64 },
    #[error("calibration table has no entry for {snr_db} dB at Q={q}")]
    MissingCell { snr_db: f64, q: u32 },
    #[error("missing link asset: {0}")]
    MissingAsset(&'static str),
    #[error("training failed in round {round}, client {client}: {reason}")]
    Training { round: usize, client: usize, reason: String },
    #[error("dataset error: {0}")]
    Dataset(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
