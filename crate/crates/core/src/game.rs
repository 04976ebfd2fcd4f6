//! Finite two-player dynamic games.
//!
//! Player 1 is the ego agent and player 2 the environment (opponent). States and
//! actions are dense indices; domain types are mapped onto them by scenario
//! codecs. Rewards are functions of the successor state only, so the reward
//! collected for a step `(x, u1, u2)` is `R(T(x, u1, u2))`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::{Error, Result};

/// Tolerance on row sums of stochastic tables.
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Player {
    /// Player 1, the agent we control.
    Ego,
    /// Player 2, the interacting environment.
    Env,
}

impl Player {
    pub fn opponent(self) -> Player {
        match self {
            Player::Ego => Player::Env,
            Player::Env => Player::Ego,
        }
    }

    /// 1 for the ego agent, 2 for the environment.
    pub fn number(self) -> u8 {
        match self {
            Player::Ego => 1,
            Player::Env => 2,
        }
    }
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Player::Ego => f.write_str("ego"),
            Player::Env => f.write_str("env"),
        }
    }
}

/// A finite two-player dynamic game with deterministic transitions.
pub trait Game {
    fn num_states(&self) -> usize;

    fn num_actions(&self, player: Player) -> usize;

    /// Successor of `state` under the action pair. Must be total over in-range
    /// arguments.
    fn transition(&self, state: usize, ego: usize, env: usize) -> usize;

    /// Reward of `player` for arriving in `state`.
    fn reward(&self, player: Player, state: usize) -> f64;

    /// Membership of `state` in the safe set at absolute time `time`.
    fn is_safe(&self, time: usize, state: usize) -> bool;

    fn discount(&self) -> f64;

    fn horizon(&self) -> usize;

    /// Transition seen from `player`'s side: `own` is `player`'s action.
    fn play(&self, state: usize, player: Player, own: usize, opp: usize) -> usize {
        match player {
            Player::Ego => self.transition(state, own, opp),
            Player::Env => self.transition(state, opp, own),
        }
    }

    /// Structural problems that cannot be expressed through the trait methods,
    /// such as tables of the wrong length.
    fn shape_violations(&self) -> Vec<Violation> {
        Vec::new()
    }
}

impl<G: Game + ?Sized> Game for &G {
    fn num_states(&self) -> usize {
        (**self).num_states()
    }
    fn num_actions(&self, player: Player) -> usize {
        (**self).num_actions(player)
    }
    fn transition(&self, state: usize, ego: usize, env: usize) -> usize {
        (**self).transition(state, ego, env)
    }
    fn reward(&self, player: Player, state: usize) -> f64 {
        (**self).reward(player, state)
    }
    fn is_safe(&self, time: usize, state: usize) -> bool {
        (**self).is_safe(time, state)
    }
    fn discount(&self) -> f64 {
        (**self).discount()
    }
    fn horizon(&self) -> usize {
        (**self).horizon()
    }
    fn shape_violations(&self) -> Vec<Violation> {
        (**self).shape_violations()
    }
}

/// Time-indexed safe sets `X_t`.
#[derive(Debug, Clone, PartialEq)]
pub enum SafeSets {
    /// Every state is safe at every time.
    All,
    /// The same membership mask at every time.
    Invariant(Vec<bool>),
    /// `masks[t]` for `t < masks.len()`; the last mask repeats afterwards.
    Schedule(Vec<Vec<bool>>),
}

impl SafeSets {
    pub fn contains(&self, time: usize, state: usize) -> bool {
        match self {
            SafeSets::All => true,
            SafeSets::Invariant(mask) => mask.get(state).copied().unwrap_or(false),
            SafeSets::Schedule(masks) => match masks.get(time).or_else(|| masks.last()) {
                Some(mask) => mask.get(state).copied().unwrap_or(false),
                None => true,
            },
        }
    }
}

/// A game given by explicit tables.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    pub num_states: usize,
    pub num_ego_actions: usize,
    pub num_env_actions: usize,
    /// Successor table indexed by `(state * num_ego_actions + ego) * num_env_actions + env`.
    pub transitions: Vec<usize>,
    pub ego_reward: Vec<f64>,
    pub env_reward: Vec<f64>,
    pub safe_sets: SafeSets,
    /// Discount factor λ in (0, 1].
    pub discount: f64,
    /// Planning horizon N ≥ 1.
    pub horizon: usize,
}

impl GameSpec {
    /// Tabulates `transition` over all triples.
    pub fn from_fn(
        num_states: usize,
        num_ego_actions: usize,
        num_env_actions: usize,
        transition: impl Fn(usize, usize, usize) -> usize,
        ego_reward: Vec<f64>,
        env_reward: Vec<f64>,
        discount: f64,
        horizon: usize,
    ) -> Self {
        let mut transitions = Vec::with_capacity(num_states * num_ego_actions * num_env_actions);
        for x in 0..num_states {
            for u1 in 0..num_ego_actions {
                for u2 in 0..num_env_actions {
                    transitions.push(transition(x, u1, u2));
                }
            }
        }
        GameSpec {
            num_states,
            num_ego_actions,
            num_env_actions,
            transitions,
            ego_reward,
            env_reward,
            safe_sets: SafeSets::All,
            discount,
            horizon,
        }
    }

    pub fn with_safe_sets(mut self, safe_sets: SafeSets) -> Self {
        self.safe_sets = safe_sets;
        self
    }

    fn transition_index(&self, state: usize, ego: usize, env: usize) -> usize {
        (state * self.num_ego_actions + ego) * self.num_env_actions + env
    }
}

impl Game for GameSpec {
    fn num_states(&self) -> usize {
        self.num_states
    }

    fn num_actions(&self, player: Player) -> usize {
        match player {
            Player::Ego => self.num_ego_actions,
            Player::Env => self.num_env_actions,
        }
    }

    fn transition(&self, state: usize, ego: usize, env: usize) -> usize {
        self.transitions[self.transition_index(state, ego, env)]
    }

    fn reward(&self, player: Player, state: usize) -> f64 {
        match player {
            Player::Ego => self.ego_reward[state],
            Player::Env => self.env_reward[state],
        }
    }

    fn is_safe(&self, time: usize, state: usize) -> bool {
        self.safe_sets.contains(time, state)
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn shape_violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let expected = self.num_states * self.num_ego_actions * self.num_env_actions;
        if self.transitions.len() != expected {
            out.push(Violation::TableLength {
                table: "transitions",
                expected,
                got: self.transitions.len(),
            });
        }
        for (table, len) in [("ego_reward", self.ego_reward.len()), ("env_reward", self.env_reward.len())] {
            if len != self.num_states {
                out.push(Violation::TableLength {
                    table,
                    expected: self.num_states,
                    got: len,
                });
            }
        }
        let masks: &[Vec<bool>] = match &self.safe_sets {
            SafeSets::All => &[],
            SafeSets::Invariant(mask) => core::slice::from_ref(mask),
            SafeSets::Schedule(masks) => masks,
        };
        for mask in masks {
            if mask.len() != self.num_states {
                out.push(Violation::TableLength {
                    table: "safe_sets",
                    expected: self.num_states,
                    got: mask.len(),
                });
            }
        }
        out
    }
}

/// A violated game invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TableLength {
        table: &'static str,
        expected: usize,
        got: usize,
    },
    Empty { what: &'static str },
    TransitionOutOfRange {
        state: usize,
        ego: usize,
        env: usize,
        target: usize,
    },
    NonFiniteReward { player: Player, state: usize },
    DiscountOutOfRange(f64),
    ZeroHorizon,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TableLength { table, expected, got } => {
                write!(f, "{table} has length {got}, expected {expected}")
            }
            Violation::Empty { what } => write!(f, "{what} is empty"),
            Violation::TransitionOutOfRange { state, ego, env, target } => write!(
                f,
                "transition ({state}, {ego}, {env}) maps to out-of-range state {target}"
            ),
            Violation::NonFiniteReward { player, state } => {
                write!(f, "{player} reward at state {state} is not finite")
            }
            Violation::DiscountOutOfRange(d) => write!(f, "discount out of (0,1]: {d}"),
            Violation::ZeroHorizon => f.write_str("horizon must be at least 1"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every game invariant and reports each violation with the offending
/// indices. Enumerates all `(state, u1, u2)` triples.
pub fn validate_game<G: Game + ?Sized>(game: &G) -> ValidationReport {
    let mut violations = game.shape_violations();
    if !violations.is_empty() {
        // Trait lookups could index out of bounds.
        return ValidationReport { violations };
    }
    let n = game.num_states();
    let n1 = game.num_actions(Player::Ego);
    let n2 = game.num_actions(Player::Env);
    for (what, len) in [("state space", n), ("ego action set", n1), ("env action set", n2)] {
        if len == 0 {
            violations.push(Violation::Empty { what });
        }
    }
    for x in 0..n {
        for u1 in 0..n1 {
            for u2 in 0..n2 {
                let target = game.transition(x, u1, u2);
                if target >= n {
                    violations.push(Violation::TransitionOutOfRange {
                        state: x,
                        ego: u1,
                        env: u2,
                        target,
                    });
                }
            }
        }
        for player in [Player::Ego, Player::Env] {
            if !game.reward(player, x).is_finite() {
                violations.push(Violation::NonFiniteReward { player, state: x });
            }
        }
    }
    let d = game.discount();
    if !(d > 0.0 && d <= 1.0) {
        violations.push(Violation::DiscountOutOfRange(d));
    }
    if game.horizon() == 0 {
        violations.push(Violation::ZeroHorizon);
    }
    ValidationReport { violations }
}

/// Outcome of a single step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub next: usize,
    pub ego_reward: f64,
    pub env_reward: f64,
}

/// Advances the game by one step with range checking.
pub fn step<G: Game + ?Sized>(game: &G, state: usize, ego: usize, env: usize) -> Result<Step> {
    check_state(game, state)?;
    check_action(game, Player::Ego, ego)?;
    check_action(game, Player::Env, env)?;
    let next = game.transition(state, ego, env);
    if next >= game.num_states() {
        return Err(Error::InvalidTransition {
            state,
            ego,
            env,
            target: next,
        });
    }
    Ok(Step {
        next,
        ego_reward: game.reward(Player::Ego, next),
        env_reward: game.reward(Player::Env, next),
    })
}

pub(crate) fn check_state<G: Game + ?Sized>(game: &G, state: usize) -> Result<()> {
    let len = game.num_states();
    if state >= len {
        return Err(Error::StateOutOfRange { index: state, len });
    }
    Ok(())
}

pub(crate) fn check_action<G: Game + ?Sized>(game: &G, player: Player, action: usize) -> Result<()> {
    let len = game.num_actions(player);
    if action >= len {
        return Err(Error::ActionOutOfRange {
            player,
            index: action,
            len,
        });
    }
    Ok(())
}

/// Validates a probability vector: entries in [0, 1], sum within [`ROW_SUM_TOL`].
pub fn check_distribution(probs: &[f64]) -> Result<()> {
    for (index, &value) in probs.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidProbability { index, value });
        }
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::NotNormalized { sum });
    }
    Ok(())
}

/// A stochastic policy `π^{i,k}(x, u)` of one player at one level.
///
/// Rows are stored per state, so a table may cover only the states that were
/// needed so far. Every stored row is a probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    level: usize,
    player: Player,
    num_actions: usize,
    rows: BTreeMap<usize, Vec<f64>>,
}

impl PolicyTable {
    pub fn new(level: usize, player: Player, num_actions: usize) -> Self {
        PolicyTable {
            level,
            player,
            num_actions,
            rows: BTreeMap::new(),
        }
    }

    /// Builds a table covering states `0..rows.len()`.
    pub fn from_rows(level: usize, player: Player, rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_actions = rows.first().map_or(0, Vec::len);
        let mut table = PolicyTable::new(level, player, num_actions);
        for (state, row) in rows.into_iter().enumerate() {
            table.insert(state, row)?;
        }
        Ok(table)
    }

    pub fn uniform(level: usize, player: Player, num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        let mut table = PolicyTable::new(level, player, num_actions);
        for state in 0..num_states {
            table.rows.insert(state, alloc::vec![p; num_actions]);
        }
        table
    }

    /// Deterministic policy choosing `actions[x]` in state `x`.
    pub fn one_hot(level: usize, player: Player, actions: &[usize], num_actions: usize) -> Result<Self> {
        let mut table = PolicyTable::new(level, player, num_actions);
        for (state, &a) in actions.iter().enumerate() {
            table.insert(state, one_hot_row(a, num_actions)?)?;
        }
        Ok(table)
    }

    pub fn insert(&mut self, state: usize, row: Vec<f64>) -> Result<()> {
        if row.len() != self.num_actions {
            return Err(Error::DimensionMismatch {
                expected: self.num_actions,
                got: row.len(),
            });
        }
        check_distribution(&row)?;
        self.rows.insert(state, row);
        Ok(())
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn player(&self) -> Player {
        self.player
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, state: usize) -> Option<&[f64]> {
        self.rows.get(&state).map(Vec::as_slice)
    }

    pub fn prob(&self, state: usize, action: usize) -> Option<f64> {
        self.row(state).and_then(|r| r.get(action).copied())
    }

    pub fn contains(&self, state: usize) -> bool {
        self.rows.contains_key(&state)
    }

    /// Number of stored rows.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// True when every state in `0..num_states` has a row.
    pub fn covers(&self, num_states: usize) -> bool {
        (0..num_states).all(|x| self.rows.contains_key(&x))
    }

    /// Stored rows in increasing state order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows.iter().map(|(&x, r)| (x, r.as_slice()))
    }

    pub(crate) fn insert_unchecked(&mut self, state: usize, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.num_actions);
        self.rows.insert(state, row);
    }
}

pub fn one_hot_row(action: usize, num_actions: usize) -> Result<Vec<f64>> {
    if action >= num_actions {
        return Err(Error::DimensionMismatch {
            expected: num_actions,
            got: action,
        });
    }
    let mut row = alloc::vec![0.0; num_actions];
    row[action] = 1.0;
    Ok(row)
}
