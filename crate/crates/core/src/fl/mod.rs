//! Federated training over a simulated downlink.
//!
//! Each round the server quantizes the global model and broadcasts it to
//! every client. What a client receives depends on [`Mode`]: the full coded
//! link, bit flips at the round's BER target, or the exact quantized model.
//! Clients run local SGD from what they received and the server adds the
//! mean of their updates to its own copy. The uplink is error-free.

pub mod dataset;
pub mod engine;
pub mod model;

pub use dataset::{partition, synthetic_blobs, train_test_split, BlobParams, Dataset, PartitionKind, Split};
pub use engine::{
    aggregate, local_sgd, run_experiment, ExperimentResult, ExperimentSummary, FlConfig, FlData, LinkAssets,
    LinkPolicy, LocalUpdate, Mode, RoundRecord,
};
pub use model::{accuracy, ModelKind, ModelSpec, Objective, Quadratic};
