//! Shared actor, twin critics and the TD3 trainer used to drive segment
//! re-splitting, with replay storage and a binary checkpoint format.

pub mod adam;
pub mod checkpoint;
pub mod nn;
pub mod replay;
pub mod td3;

use thiserror::Error;

pub use nn::{Mlp, MlpSpec};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use td3::{Td3Agent, Td3Config, UpdateStats};

/// Per-agent observation width.
pub const OBS_DIM: usize = 11;
/// Raw action width: gate, ratio, bias, inflation.
pub const ACT_DIM: usize = 4;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite network input")]
    NonFinite,
    #[error("cannot sample from an empty replay buffer")]
    EmptyBuffer,
    #[error("invalid trainer setting: {0}")]
    Config(String),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint truncated or malformed: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
