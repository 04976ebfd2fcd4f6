//! Random small games and independent brute-force oracles.
//!
//! Nothing here calls the library's evaluators: paths are enumerated
//! explicitly from the game tables and the policy rows.
#![allow(dead_code)]

use chdm_core::game::{Game, GameSpec, Player, PolicyTable, SafeSets};
use chdm_core::inference::{build_kernel, AugmentedKernel, SparseDist};
use chdm_core::planner::DecisionProfile;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random probability vector; with `sparse` some entries are exactly zero.
pub fn random_dist(rng: &mut impl Rng, n: usize, sparse: bool) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n)
            .map(|_| if sparse && rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.05..1.0) })
            .collect();
        let total: f64 = v.iter().sum();
        if total > 0.0 {
            v.iter_mut().for_each(|p| *p /= total);
            return v;
        }
    }
}

/// A planning instance: game, env policies per level, kernel, belief,
/// profile and decision time.
pub struct Instance {
    pub game: GameSpec,
    pub env: Vec<PolicyTable>,
    pub kernel: AugmentedKernel,
    pub num_levels: usize,
    pub belief: SparseDist,
    pub profile: DecisionProfile,
    pub time: usize,
}

impl Instance {
    pub fn horizon(&self) -> usize {
        self.game.horizon
    }

    pub fn reward(&self) -> impl Fn(usize) -> f64 + '_ {
        move |x| self.game.ego_reward[x]
    }

    pub fn safe(&self) -> impl Fn(usize, usize) -> bool + '_ {
        move |t, x| self.game.safe_sets.contains(t, x)
    }
}

/// `|X×K| ≤ 24`, `|U¹|, |U²| ≤ 3`, `N ≤ 3`, time-varying safe sets.
pub fn random_instance(rng: &mut impl Rng) -> Instance {
    let num_levels = rng.gen_range(1..=3);
    let num_states = rng.gen_range(2..=24 / num_levels);
    let n1 = rng.gen_range(1..=3);
    let n2 = rng.gen_range(1..=3);
    let horizon = rng.gen_range(1..=3);
    let time = rng.gen_range(0..3);
    let transitions: Vec<usize> = (0..num_states * n1 * n2).map(|_| rng.gen_range(0..num_states)).collect();
    let ego_reward: Vec<f64> = (0..num_states).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let env_reward: Vec<f64> = (0..num_states).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let masks: Vec<Vec<bool>> = (0..time + horizon + 2)
        .map(|_| (0..num_states).map(|_| rng.gen_bool(0.75)).collect())
        .collect();
    let game = GameSpec {
        num_states,
        num_ego_actions: n1,
        num_env_actions: n2,
        transitions,
        ego_reward,
        env_reward,
        safe_sets: SafeSets::Schedule(masks),
        discount: rng.gen_range(0.5..=1.0),
        horizon,
    };
    let env: Vec<PolicyTable> = (0..num_levels)
        .map(|k| {
            let rows = (0..num_states).map(|_| random_dist(rng, n2, true)).collect();
            PolicyTable::from_rows(k, Player::Env, rows).unwrap()
        })
        .collect();
    let kernel = build_kernel(&game, &env).unwrap();
    let dim = num_states * num_levels;
    let support = rng.gen_range(1..=dim.min(6));
    let weights = random_dist(rng, support, false);
    let support = rand::seq::index::sample(rng, dim, support);
    let belief = SparseDist::new(dim, support.into_iter().zip(weights)).unwrap();
    let profile = random_profile(rng, horizon, n1);
    Instance {
        game,
        env,
        kernel,
        num_levels,
        belief,
        profile,
        time,
    }
}

pub fn random_profile(rng: &mut impl Rng, horizon: usize, n1: usize) -> DecisionProfile {
    if rng.gen_bool(0.2) {
        let actions: Vec<usize> = (0..horizon).map(|_| rng.gen_range(0..n1)).collect();
        return DecisionProfile::vertex(&actions, n1);
    }
    DecisionProfile::new((0..horizon).map(|_| random_dist(rng, n1, true)).collect()).unwrap()
}

/// Every sequence over `base` of length `len`, lexicographic.
pub fn sequences(base: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..base).map(move |a| {
                    let mut s = prefix.clone();
                    s.push(a);
                    s
                })
            })
            .collect();
    }
    out
}

/// Exhaustive path enumeration: `(expected discounted reward, probability of
/// staying safe at every stage)`.
pub fn path_oracle(inst: &Instance) -> (f64, f64) {
    let g = &inst.game;
    let k = inst.num_levels;
    let n = inst.horizon();
    let ego_seqs = sequences(g.num_ego_actions, n);
    let env_seqs = sequences(g.num_env_actions, n);
    let (mut reward, mut safe) = (0.0, 0.0);
    for (aug, b) in inst.belief.iter() {
        let (x0, level) = (aug / k, aug % k);
        for us in &ego_seqs {
            let w_ego: f64 = us.iter().enumerate().map(|(t, &u)| inst.profile.stage(t)[u]).product();
            for vs in &env_seqs {
                let mut x = x0;
                let mut w = b * w_ego;
                let mut total = 0.0;
                let mut ok = true;
                for t in 0..n {
                    w *= inst.env[level].prob(x, vs[t]).unwrap();
                    x = g.transition(x, us[t], vs[t]);
                    total += g.discount.powi(t as i32) * g.ego_reward[x];
                    ok &= g.safe_sets.contains(inst.time + t + 1, x);
                }
                reward += w * total;
                if ok {
                    safe += w;
                }
            }
        }
    }
    (reward, safe)
}

/// Monte Carlo estimate of the safe probability and its standard error.
pub fn monte_carlo_safe(inst: &Instance, samples: usize, rng: &mut impl Rng) -> (f64, f64) {
    let g = &inst.game;
    let k = inst.num_levels;
    let entries: Vec<(usize, f64)> = inst.belief.iter().collect();
    let draw = |probs: &mut dyn Iterator<Item = f64>, u: f64| {
        let mut acc = 0.0;
        let mut last = 0;
        for (i, p) in probs.enumerate() {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
        last
    };
    let mut hits = 0usize;
    for _ in 0..samples {
        let i = draw(&mut entries.iter().map(|e| e.1), rng.gen());
        let (mut x, level) = (entries[i].0 / k, entries[i].0 % k);
        let mut ok = true;
        for t in 0..inst.horizon() {
            let u = draw(&mut inst.profile.stage(t).iter().copied(), rng.gen());
            let v = draw(&mut inst.env[level].row(x).unwrap().iter().copied(), rng.gen());
            x = g.transition(x, u, v);
            if !g.safe_sets.contains(inst.time + t + 1, x) {
                ok = false;
                break;
            }
        }
        hits += ok as usize;
    }
    let p = hits as f64 / samples as f64;
    (p, (p * (1.0 - p) / samples as f64).sqrt())
}

/// Dense one-step prediction in stacked-matrix form
/// `next = (γᵀ ⊗ I) [P(·|·,u_1); …; P(·|·,u_m)] π`, with every `P(·|·,u)`
/// assembled from the game tables and the env policies.
pub fn dense_predict(game: &GameSpec, env: &[PolicyTable], current: &[f64], gamma: &[f64]) -> Vec<f64> {
    let k = env.len();
    let dim = game.num_states * k;
    let m = game.num_ego_actions;
    // stacked[u * dim + i][j] = P(x̄_i | x̄_j, u)
    let mut stacked = vec![vec![0.0; dim]; m * dim];
    for u in 0..m {
        for j in 0..dim {
            let (xj, kj) = (j / k, j % k);
            for u2 in 0..game.num_env_actions {
                let xi = game.transition(xj, u, u2);
                stacked[u * dim + xi * k + kj][j] += env[kj].prob(xj, u2).unwrap();
            }
        }
    }
    let mut out = vec![0.0; dim];
    for (u, &g) in gamma.iter().enumerate() {
        for i in 0..dim {
            let row = &stacked[u * dim + i];
            out[i] += g * row.iter().zip(current).map(|(p, c)| p * c).sum::<f64>();
        }
    }
    out
}

/// A random tabular game with `|X| ≤ max_states` for hierarchy checks.
pub fn random_game(rng: &mut impl Rng, max_states: usize) -> GameSpec {
    let num_states = rng.gen_range(1..=max_states);
    let n1 = rng.gen_range(1..=3);
    let n2 = rng.gen_range(1..=3);
    let table: Vec<usize> = (0..num_states * n1 * n2).map(|_| rng.gen_range(0..num_states)).collect();
    GameSpec::from_fn(
        num_states,
        n1,
        n2,
        |x, a, b| table[(x * n1 + a) * n2 + b],
        (0..num_states).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        (0..num_states).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        rng.gen_range(0.5..=1.0),
        rng.gen_range(1..=3),
    )
}

pub fn random_policy(rng: &mut impl Rng, level: usize, player: Player, num_states: usize, n: usize) -> PolicyTable {
    let rows = (0..num_states).map(|_| random_dist(rng, n, true)).collect();
    PolicyTable::from_rows(level, player, rows).unwrap()
}

/// Open-loop expectimax by enumeration: for each first action, the best own
/// sequence against every opponent sequence weighted by its path probability.
pub fn q_oracle(game: &GameSpec, player: Player, opponent: &PolicyTable) -> Vec<Vec<f64>> {
    let n = game.horizon;
    let own = game.num_actions(player);
    let opp = game.num_actions(player.opponent());
    let own_seqs = sequences(own, n);
    let opp_seqs = sequences(opp, n);
    (0..game.num_states)
        .map(|x0| {
            (0..own)
                .map(|first| {
                    own_seqs
                        .iter()
                        .filter(|s| s[0] == first)
                        .map(|s| {
                            opp_seqs
                                .iter()
                                .map(|o| {
                                    let mut x = x0;
                                    let mut w = 1.0;
                                    let mut total = 0.0;
                                    for t in 0..n {
                                        w *= opponent.prob(x, o[t]).unwrap();
                                        x = match player {
                                            Player::Ego => game.transition(x, s[t], o[t]),
                                            Player::Env => game.transition(x, o[t], s[t]),
                                        };
                                        total += game.discount.powi(t as i32) * game.reward(player, x);
                                    }
                                    w * total
                                })
                                .sum::<f64>()
                        })
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect()
        })
        .collect()
}
