//! Session orchestration for parbci: configuration, the closed-loop engine
//! fusing the pupil and EEG pipelines with the menu, the event log, replay
//! and the operator console socket.

pub mod config;
pub mod console;
pub mod engine;
pub mod log;
pub mod session;

use thiserror::Error;

pub use config::SessionConfig;
pub use engine::{Engine, Input};
pub use log::{Body, Command, Record, SessionKind};

#[derive(Debug, Error)]
pub enum HubError {
    #[error("config error: {0}")]
    Config(String),
    #[error("log line {line}: {message}")]
    Log { line: usize, message: String },
    #[error("stream underrun: {0}")]
    Underrun(String),
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HubError {
    /// Process exit code: 1 for configuration problems, 2 for everything
    /// that fails at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            HubError::Config(_) => 1,
            _ => 2,
        }
    }
}
