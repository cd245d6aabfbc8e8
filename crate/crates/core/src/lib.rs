//! Federated training of an uncertainty-aware multi-modal trajectory predictor.
//!
//! The crate simulates a fleet of vehicles, each holding private driving
//! scenarios, that jointly train a Laplace-mixture trajectory predictor:
//!
//! * [`scenario`]: synthetic two-regime data and its client partition.
//! * [`predictor`]: the model, its parameter layout and analytic gradients.
//! * [`objective`]: best-mode Laplace NLL plus soft-target cross entropy.
//! * [`trainer`]: client-local AdamW.
//! * [`federation`]: weighted client sampling and model averaging.
//! * [`selection`]: NLL / aleatoric-uncertainty driven client selection.
//! * [`metrics`]: minADE, minFDE, miss rate and NLL on held-out data.
//! * [`format`]: the dataset and parameter file formats.

pub mod error;
pub mod federation;
pub mod format;
pub mod metrics;
pub mod objective;
pub mod predictor;
pub mod rng;
pub mod scenario;
pub mod selection;
pub mod trainer;

pub use error::{Error, Result};
pub use federation::{aggregate, run_fltp, run_local, sample_weighted, FlConfig, RoundLog};
pub use metrics::{evaluate, EvalReport};
pub use objective::{local_objective, total_loss, LossBreakdown};
pub use predictor::{forward, init_params, loss_and_grad, ModelDims, ParamVector, PredictionOutput};
pub use scenario::{
    partition_clients, validation_split, AgentTrack, ClientDataset, GeneratorConfig, Regime, Scenario,
};
pub use selection::{run_alfltp, select_au, select_nll, AlConfig, SelectionMetric};
pub use trainer::{client_update, OptimizerState, TrainHyper};
