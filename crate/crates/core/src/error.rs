use alloc::string::String;

use crate::game::Player;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("state index {index} out of range ({len} states)")]
    StateOutOfRange { index: usize, len: usize },
    #[error("{player} action index {index} out of range ({len} actions)")]
    ActionOutOfRange {
        player: Player,
        index: usize,
        len: usize,
    },
    #[error("transition ({state}, {ego}, {env}) -> {target} leaves the state space")]
    InvalidTransition {
        state: usize,
        ego: usize,
        env: usize,
        target: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("distribution is not normalized (sum = {sum})")]
    NotNormalized { sum: f64 },
    #[error("invalid probability {value} at index {index}")]
    InvalidProbability { index: usize, value: f64 },
    #[error("no policy available for level {level}")]
    MissingLevel { level: usize },
    #[error("no {player} policy row for state {state} at level {level}")]
    MissingPolicyRow {
        player: Player,
        level: usize,
        state: usize,
    },
    #[error("kernel has no row for augmented state {0}")]
    MissingKernelRow(usize),
    #[error("inconsistent observation: state {state} has zero predicted probability")]
    InconsistentObservation { state: usize },
    #[error("no robust feasible sequence")]
    NoRobustFeasibleSequence,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("configuration error: {0}")]
    Config(String),
}
