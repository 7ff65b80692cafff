//! Training, prediction and experiment drivers behind the `swinseg` binary.

pub mod config;
pub mod data;
pub mod error;
pub mod experiments;
pub mod predict;
pub mod pretext;
pub mod table;
pub mod train;

pub use config::{ChannelMode, PretextConfig, RootConfig, TrainConfig, TransferMode};
pub use error::{AppError, Result};
