//! Command-line harness around `chdm-core`: configuration files, hierarchy
//! caches, closed-loop episodes, logs and snapshots.

pub mod cache;
pub mod config;
pub mod evaluate;
pub mod output;
pub mod sim;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(chdm_core::Error),
    #[error("no decision profile meets the chance constraint at t = {time}")]
    Infeasible { time: usize },
    #[error("cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<chdm_core::Error> for Error {
    fn from(e: chdm_core::Error) -> Self {
        match e {
            chdm_core::Error::Config(m) => Error::Config(m),
            other => Error::Core(other),
        }
    }
}

/// Process exit status for an error: 2 for configuration problems, 3 when
/// planning was aborted as infeasible, 1 otherwise.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Infeasible { .. } => 3,
        _ => 1,
    }
}
