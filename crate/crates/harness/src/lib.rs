//! Experiment drivers, configuration and persistence behind the `gradguard`
//! command.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod drivers;
pub mod error;
pub mod output;

pub use checkpoint::Checkpoint;
pub use config::Settings;
pub use error::{HarnessError, Result};
