//! Collaborative training protocols, activation defenses and
//! communication accounting.

pub mod config;
pub mod defense;
pub mod fedavg;
pub mod ledger;
pub mod protocol;

pub use crate::model::{adapter_backward, apply_adapter, AdapterParams};
pub use config::{Mode, RoundConfig};
pub use defense::{apply_defense, DefenseCache, DefenseConfig};
pub use fedavg::fedavg_aggregate;
pub use ledger::{CommLedger, Direction, Message, MessageKind, BYTES_PER_ELEMENT};
pub use protocol::{
    centralized_step, epoch_batches, init_model, run_centralized, run_fedavg, run_hybrid, run_split, split_round,
    train, ClientState, LocalOptimizer, RoundRecord, ServerState, TrainOutcome,
};
