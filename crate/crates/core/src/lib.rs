//! Decision making against a bounded-rationality opponent in finite two-player
//! dynamic games.
//!
//! The crate is `no_std` (it needs `alloc`) and is organised bottom-up:
//!
//! - [`game`]: the finite game abstraction, tabular games and policy tables.
//! - [`hierarchy`]: level-k softmax policies built recursively from level-0 anchors.
//! - [`inference`]: the augmented (state, level) kernel, prediction and the
//!   Bayesian filter over the opponent's hidden level.
//! - [`planner`]: exact expected-reward and time-joint chance-constraint
//!   evaluators, the profile optimizer, receding-horizon execution and a
//!   maximin baseline.
//! - [`traffic`]: intersection, overtaking and merging driving scenarios.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
pub mod game;
pub mod hierarchy;
pub mod inference;
pub mod planner;
pub mod simplex;
pub mod traffic;

pub use error::{Error, Result};
pub use game::{Game, GameSpec, Player, PolicyTable, SafeSets};
pub use hierarchy::{Hierarchy, LevelZero, QTable};
pub use inference::{AugmentedKernel, Belief, History, SparseDist};
pub use planner::{DecisionProfile, PlanResult, Planner, SolverOptions};
