//! Level-k opponent models.
//!
//! A level-k player best-responds, through a softmax decision rule, to the
//! opponent modelled at level k-1. Level 0 is a non-strategic anchor supplied by
//! the caller. Q-values maximize over open-loop own action sequences of the
//! expected discounted reward, with the opponent's actions drawn per visited
//! state from its policy.
//!
//! Policies can be built eagerly over the whole state space
//! ([`build_hierarchy`]) or on demand for the states a caller actually needs
//! ([`Hierarchy::ensure`]); both paths share [`q_row`] and produce identical rows.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::game::{check_distribution, Game, Player, PolicyTable};
use crate::{Error, Result};

/// Tabulated Q-function of one player.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub level: usize,
    pub player: Player,
    pub num_actions: usize,
    /// Row-major `num_states x num_actions` values.
    pub values: Vec<f64>,
}

impl QTable {
    pub fn num_states(&self) -> usize {
        if self.num_actions == 0 {
            0
        } else {
            self.values.len() / self.num_actions
        }
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.num_actions..(state + 1) * self.num_actions]
    }
}

/// `exp(q / temperature)` normalized, with the row maximum subtracted first.
pub fn softmax_row(q: &[f64], temperature: f64) -> Vec<f64> {
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = q.iter().map(|&v| libm::exp((v - max) / temperature)).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// Softmax policy at unit temperature.
pub fn softmax_policy(q: &QTable) -> PolicyTable {
    softmax_policy_with(q, 1.0)
}

pub fn softmax_policy_with(q: &QTable, temperature: f64) -> PolicyTable {
    let mut table = PolicyTable::new(q.level, q.player, q.num_actions);
    for x in 0..q.num_states() {
        table.insert_unchecked(x, softmax_row(q.row(x), temperature));
    }
    table
}

/// Q-values of `player` at `state` for each of its first actions.
///
/// `opponent` must hold rows for every state reachable from `state` in fewer
/// than `horizon` steps.
pub fn q_row<G: Game + ?Sized>(
    game: &G,
    player: Player,
    opponent: &PolicyTable,
    state: usize,
) -> Result<Vec<f64>> {
    let own = game.num_actions(player);
    let horizon = game.horizon();
    let tail_len = horizon.saturating_sub(1);
    let mut seq = alloc::vec![0usize; horizon.max(1)];
    let mut out = Vec::with_capacity(own);
    for first in 0..own {
        seq[0] = first;
        let mut best = f64::NEG_INFINITY;
        // Odometer over the remaining own actions.
        for s in &mut seq[1..] {
            *s = 0;
        }
        loop {
            let v = expected_return(game, player, opponent, state, &seq[..horizon], 1.0)?;
            if v > best {
                best = v;
            }
            if !advance(&mut seq[1..=tail_len], own) {
                break;
            }
        }
        out.push(best);
    }
    Ok(out)
}

fn advance(digits: &mut [usize], base: usize) -> bool {
    for d in digits.iter_mut().rev() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

fn expected_return<G: Game + ?Sized>(
    game: &G,
    player: Player,
    opponent: &PolicyTable,
    state: usize,
    seq: &[usize],
    weight: f64,
) -> Result<f64> {
    let Some((&own, rest)) = seq.split_first() else {
        return Ok(0.0);
    };
    let row = opponent.row(state).ok_or(Error::MissingPolicyRow {
        player: opponent.player(),
        level: opponent.level(),
        state,
    })?;
    let mut total = 0.0;
    for (opp, &p) in row.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let next = game.play(state, player, own, opp);
        let here = weight * game.reward(player, next);
        let later = expected_return(game, player, opponent, next, rest, weight * game.discount())?;
        total += p * (here + later);
    }
    Ok(total)
}

/// Full Q-table of `player` against `opponent`, which must cover every state.
pub fn compute_q<G: Game + ?Sized>(game: &G, player: Player, opponent: &PolicyTable) -> Result<QTable> {
    if opponent.player() != player.opponent() {
        return Err(Error::InvalidArgument(alloc::format!(
            "Q of {player} needs an opponent policy, got a {} policy",
            opponent.player()
        )));
    }
    let own = game.num_actions(player);
    let mut values = Vec::with_capacity(game.num_states() * own);
    for x in 0..game.num_states() {
        values.extend(q_row(game, player, opponent, x)?);
    }
    Ok(QTable {
        level: opponent.level() + 1,
        player,
        num_actions: own,
        values,
    })
}

/// States reachable from `roots` in at most `depth` steps, roots included.
pub fn reachable<G: Game + ?Sized>(game: &G, roots: &[usize], depth: usize) -> BTreeSet<usize> {
    let n1 = game.num_actions(Player::Ego);
    let n2 = game.num_actions(Player::Env);
    let mut seen: BTreeSet<usize> = roots.iter().copied().collect();
    let mut frontier: Vec<usize> = seen.iter().copied().collect();
    for _ in 0..depth {
        let mut next = Vec::new();
        for &x in &frontier {
            for u1 in 0..n1 {
                for u2 in 0..n2 {
                    let y = game.transition(x, u1, u2);
                    if seen.insert(y) {
                        next.push(y);
                    }
                }
            }
        }
        frontier = next;
    }
    seen
}

/// Source of level-0 policy rows.
pub trait LevelZero {
    fn level0_row(&self, player: Player, state: usize) -> Result<Vec<f64>>;
}

/// Level-0 anchors given as explicit tables.
#[derive(Debug, Clone, Copy)]
pub struct Level0Tables<'a> {
    pub ego: &'a PolicyTable,
    pub env: &'a PolicyTable,
}

impl LevelZero for Level0Tables<'_> {
    fn level0_row(&self, player: Player, state: usize) -> Result<Vec<f64>> {
        let table = match player {
            Player::Ego => self.ego,
            Player::Env => self.env,
        };
        table
            .row(state)
            .map(<[f64]>::to_vec)
            .ok_or(Error::MissingPolicyRow { player, level: 0, state })
    }
}

/// How a policy table came to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Anchor,
    /// Softmax best response to the opponent's table at `level`.
    BestResponse { to: Player, level: usize },
}

/// Level-k policies of both players for `k = 0..=k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    k_max: usize,
    temperature: f64,
    ego: Vec<PolicyTable>,
    env: Vec<PolicyTable>,
}

impl Hierarchy {
    /// An empty hierarchy to be filled by [`Hierarchy::ensure`].
    pub fn new(k_max: usize, num_ego_actions: usize, num_env_actions: usize, temperature: f64) -> Self {
        Hierarchy {
            k_max,
            temperature,
            ego: (0..=k_max).map(|k| PolicyTable::new(k, Player::Ego, num_ego_actions)).collect(),
            env: (0..=k_max).map(|k| PolicyTable::new(k, Player::Env, num_env_actions)).collect(),
        }
    }

    /// Reassembles a hierarchy from stored tables (one per level and player).
    pub fn from_tables(k_max: usize, temperature: f64, ego: Vec<PolicyTable>, env: Vec<PolicyTable>) -> Result<Self> {
        for (player, tables) in [(Player::Ego, &ego), (Player::Env, &env)] {
            if tables.len() != k_max + 1 {
                return Err(Error::DimensionMismatch {
                    expected: k_max + 1,
                    got: tables.len(),
                });
            }
            for (k, t) in tables.iter().enumerate() {
                if t.level() != k || t.player() != player {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "table {k} of {player} is labelled level {} of {}",
                        t.level(),
                        t.player()
                    )));
                }
                for (_, row) in t.iter() {
                    check_distribution(row)?;
                }
            }
        }
        Ok(Hierarchy {
            k_max,
            temperature,
            ego,
            env,
        })
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn policy(&self, player: Player, level: usize) -> Option<&PolicyTable> {
        self.tables(player).get(level)
    }

    pub fn tables(&self, player: Player) -> &[PolicyTable] {
        match player {
            Player::Ego => &self.ego,
            Player::Env => &self.env,
        }
    }

    pub fn env_policies(&self) -> &[PolicyTable] {
        &self.env
    }

    pub fn ego_policies(&self) -> &[PolicyTable] {
        &self.ego
    }

    pub fn provenance(&self, player: Player, level: usize) -> Option<Provenance> {
        if level > self.k_max {
            return None;
        }
        Some(match level {
            0 => Provenance::Anchor,
            k => Provenance::BestResponse {
                to: player.opponent(),
                level: k - 1,
            },
        })
    }

    fn table_mut(&mut self, player: Player, level: usize) -> &mut PolicyTable {
        match player {
            Player::Ego => &mut self.ego[level],
            Player::Env => &mut self.env[level],
        }
    }

    /// Makes sure `player`'s level-`level` table has rows for `states`,
    /// computing whatever lower-level rows they depend on.
    pub fn ensure<G, L>(&mut self, game: &G, level0: &L, player: Player, level: usize, states: &[usize]) -> Result<()>
    where
        G: Game + ?Sized,
        L: LevelZero + ?Sized,
    {
        if level > self.k_max {
            return Err(Error::MissingLevel { level });
        }
        let table = &self.tables(player)[level];
        let missing: BTreeSet<usize> = states.iter().copied().filter(|&x| !table.contains(x)).collect();
        if missing.is_empty() {
            return Ok(());
        }
        let missing: Vec<usize> = missing.into_iter().collect();
        if level == 0 {
            for &x in &missing {
                let row = level0.level0_row(player, x)?;
                self.table_mut(player, 0).insert(x, row)?;
            }
            return Ok(());
        }
        let horizon = game.horizon().max(1);
        let needed: Vec<usize> = reachable(game, &missing, horizon - 1).into_iter().collect();
        self.ensure(game, level0, player.opponent(), level - 1, &needed)?;
        let opponent = &self.tables(player.opponent())[level - 1];
        let mut rows = Vec::with_capacity(missing.len());
        for &x in &missing {
            let q = q_row(game, player, opponent, x)?;
            rows.push(softmax_row(&q, self.temperature));
        }
        let table = self.table_mut(player, level);
        for (x, row) in missing.into_iter().zip(rows) {
            table.insert_unchecked(x, row);
        }
        Ok(())
    }

    /// Fills every table over the whole state space.
    pub fn ensure_all<G, L>(&mut self, game: &G, level0: &L) -> Result<()>
    where
        G: Game + ?Sized,
        L: LevelZero + ?Sized,
    {
        let all: Vec<usize> = (0..game.num_states()).collect();
        for k in 0..=self.k_max {
            self.ensure(game, level0, Player::Ego, k, &all)?;
            self.ensure(game, level0, Player::Env, k, &all)?;
        }
        Ok(())
    }
}

/// Builds level-0..`k_max` policies of both players over the full state space.
///
/// No hard constraints are imposed here; safety enters only through whatever
/// penalties the game's rewards carry.
pub fn build_hierarchy<G: Game + ?Sized>(
    game: &G,
    k_max: usize,
    level0_ego: &PolicyTable,
    level0_env: &PolicyTable,
) -> Result<Hierarchy> {
    build_hierarchy_with(game, k_max, level0_ego, level0_env, 1.0)
}

pub fn build_hierarchy_with<G: Game + ?Sized>(
    game: &G,
    k_max: usize,
    level0_ego: &PolicyTable,
    level0_env: &PolicyTable,
    temperature: f64,
) -> Result<Hierarchy> {
    let n = game.num_states();
    for (player, t) in [(Player::Ego, level0_ego), (Player::Env, level0_env)] {
        if t.player() != player || t.num_actions() != game.num_actions(player) {
            return Err(Error::InvalidArgument(alloc::format!("level-0 table for {player} has the wrong shape")));
        }
        if !t.covers(n) {
            return Err(Error::InvalidArgument(alloc::format!(
                "level-0 table for {player} does not cover all {n} states"
            )));
        }
    }
    let mut ego = alloc::vec![level0_ego.clone()];
    let mut env = alloc::vec![level0_env.clone()];
    for k in 1..=k_max {
        let env_k = softmax_policy_with(&compute_q(game, Player::Env, &ego[k - 1])?, temperature);
        let ego_k = softmax_policy_with(&compute_q(game, Player::Ego, &env[k - 1])?, temperature);
        env.push(env_k);
        ego.push(ego_k);
    }
    Ok(Hierarchy {
        k_max,
        temperature,
        ego,
        env,
    })
}
