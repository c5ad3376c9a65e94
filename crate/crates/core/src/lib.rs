//! Link-level simulation of wireless federated learning with adaptive LDPC
//! decoding-iteration control.
//!
//! The crate is `no_std` (it needs `alloc`). Every random draw comes from a
//! counter-based stream keyed by a seed and a tuple of identifiers, so results
//! do not depend on execution order or on the [`exec::Executor`] used to fan
//! work out.
//!
//! Layout:
//!
//! - [`ldpc`]: (3,6)-regular code construction, systematic encoder, min-sum decoder.
//! - [`channel`]: BPSK over AWGN producing LLR frames.
//! - [`quantizer`]: N-bit uniform digitalization of model weights.
//! - [`error_model`]: analytic distortion formulas and a bit-flip injector.
//! - [`schedule`]: per-round BER targets and the BER to iteration-budget lookup.
//! - [`calibration`]: Monte Carlo measurement of BER versus (SNR, max iterations).
//! - [`fl`]: models, datasets and the federated training loop.
//! - [`energy`]: decoder/transceiver energy ledger and the convergence bound.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod calibration;
pub mod channel;
pub mod energy;
pub mod error;
pub mod error_model;
pub mod exec;
pub mod fl;
pub mod ldpc;
pub mod quantizer;
pub mod rng;
pub mod schedule;

pub use error::{Error, Result};
