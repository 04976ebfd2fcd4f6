//! Augmented-state prediction and Bayesian inference of the opponent's level.
//!
//! The augmented state pairs a physical state `x` with the opponent's hidden
//! level `σ ∈ K`. The level never changes, and the opponent's action acts as a
//! disturbance drawn from its level-σ policy. Distributions over the augmented
//! space are kept sparse because the physical state is observed exactly and
//! predictions only spread over a few reachable states.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::game::{Game, Player, PolicyTable, ROW_SUM_TOL};
use crate::hierarchy::{reachable, Hierarchy, LevelZero};
use crate::{Error, Result};

/// `(x, σ)` with `σ` an index into the kernel's level set `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AugmentedState {
    pub state: usize,
    pub level: usize,
}

impl AugmentedState {
    pub fn index(self, num_levels: usize) -> usize {
        self.state * num_levels + self.level
    }

    pub fn from_index(index: usize, num_levels: usize) -> Self {
        AugmentedState {
            state: index / num_levels,
            level: index % num_levels,
        }
    }
}

/// A sparse non-negative vector over `0..dim`, sorted by index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseDist {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseDist {
    /// Sorts, merges duplicate indices and drops exact zeros.
    pub fn new(dim: usize, entries: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, p) in entries {
            if i >= dim {
                return Err(Error::StateOutOfRange { index: i, len: dim });
            }
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::InvalidProbability { index: i, value: p });
            }
            *acc.entry(i).or_insert(0.0) += p;
        }
        Ok(SparseDist::from_map(dim, acc))
    }

    fn from_map(dim: usize, map: BTreeMap<usize, f64>) -> Self {
        SparseDist {
            dim,
            entries: map.into_iter().filter(|&(_, p)| p != 0.0).collect(),
        }
    }

    pub fn point(dim: usize, index: usize) -> Self {
        SparseDist {
            dim,
            entries: alloc::vec![(index, 1.0)],
        }
    }

    pub fn from_dense(values: &[f64]) -> Result<Self> {
        SparseDist::new(values.len(), values.iter().copied().enumerate())
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.dim];
        for &(i, p) in &self.entries {
            out[i] = p;
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.entries.binary_search_by_key(&index, |&(i, _)| i) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|&(_, p)| p).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Zeroes every entry for which `keep` is false and returns the removed mass.
    pub fn retain_mass(&mut self, mut keep: impl FnMut(usize) -> bool) -> f64 {
        let mut removed = 0.0;
        self.entries.retain(|&(i, p)| {
            if keep(i) {
                true
            } else {
                removed += p;
                false
            }
        });
        removed
    }
}

/// Posterior over augmented states at decision time `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    dist: SparseDist,
    num_levels: usize,
    time: usize,
}

impl Belief {
    pub fn new(dist: SparseDist, num_levels: usize, time: usize) -> Result<Self> {
        if num_levels == 0 || dist.dim() % num_levels != 0 {
            return Err(Error::DimensionMismatch {
                expected: num_levels,
                got: dist.dim(),
            });
        }
        for (i, p) in dist.iter() {
            if p > 1.0 {
                return Err(Error::InvalidProbability { index: i, value: p });
            }
        }
        let sum = dist.total();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Belief { dist, num_levels, time })
    }

    pub fn dist(&self) -> &SparseDist {
        &self.dist
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn num_levels(&self) -> usize {
        self.num_levels
    }

    /// `P(σ = K[k] | ξ_t)` for each level index.
    pub fn level_marginals(&self) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.num_levels];
        for (i, p) in self.dist.iter() {
            out[i % self.num_levels] += p;
        }
        out
    }

    /// Physical states carrying mass, in increasing order.
    pub fn physical_support(&self) -> Vec<usize> {
        let mut states: Vec<usize> = self.dist.iter().map(|(i, _)| i / self.num_levels).collect();
        states.dedup();
        states
    }
}

/// Point mass on `state` with `level_prior[k]` on `(state, k)`.
pub fn init_belief(num_states: usize, state: usize, level_prior: &[f64]) -> Result<Belief> {
    if state >= num_states {
        return Err(Error::StateOutOfRange {
            index: state,
            len: num_states,
        });
    }
    crate::game::check_distribution(level_prior)?;
    let k = level_prior.len();
    let dist = SparseDist::new(
        num_states * k,
        level_prior
            .iter()
            .enumerate()
            .map(|(level, &p)| (AugmentedState { state, level }.index(k), p)),
    )?;
    Belief::new(dist, k, 0)
}

/// Sparse transition kernel `P(x̄' | x̄, u¹)` of the augmented state.
///
/// Rows exist for the physical states added so far, for every level in `K`
/// and every ego action. Targets keep the source level.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedKernel {
    num_states: usize,
    num_ego_actions: usize,
    levels: Vec<usize>,
    rows: BTreeMap<usize, Vec<Vec<(usize, f64)>>>,
}

impl AugmentedKernel {
    /// An empty kernel over `num_states x levels.len()` augmented states;
    /// `levels` are the opponent levels forming `K`.
    pub fn new(num_states: usize, num_ego_actions: usize, levels: Vec<usize>) -> Self {
        AugmentedKernel {
            num_states,
            num_ego_actions,
            levels,
            rows: BTreeMap::new(),
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn num_ego_actions(&self) -> usize {
        self.num_ego_actions
    }

    /// Size of the augmented space `|X x K|`.
    pub fn dim(&self) -> usize {
        self.num_states * self.levels.len()
    }

    /// Targets of `(source, action)`, or `None` if that row was never built.
    pub fn row(&self, source: usize, action: usize) -> Option<&[(usize, f64)]> {
        self.rows.get(&source).and_then(|r| r.get(action)).map(Vec::as_slice)
    }

    /// `P(target | source, action)`.
    pub fn prob(&self, target: usize, source: usize, action: usize) -> f64 {
        self.row(source, action)
            .and_then(|r| r.iter().find(|&&(t, _)| t == target))
            .map_or(0.0, |&(_, p)| p)
    }

    pub fn has_state(&self, state: usize) -> bool {
        self.rows.contains_key(&AugmentedState { state, level: 0 }.index(self.levels.len()))
    }

    /// Builds rows for every level at each of `states`. `env_policies[k]` is the
    /// opponent's level-k table and must hold rows for those states.
    pub fn extend<G: Game + ?Sized>(
        &mut self,
        game: &G,
        env_policies: &[PolicyTable],
        states: impl IntoIterator<Item = usize>,
    ) -> Result<()> {
        if game.num_states() != self.num_states || game.num_actions(Player::Ego) != self.num_ego_actions {
            return Err(Error::DimensionMismatch {
                expected: self.num_states,
                got: game.num_states(),
            });
        }
        let k_count = self.levels.len();
        let n2 = game.num_actions(Player::Env);
        for x in states {
            if self.has_state(x) {
                continue;
            }
            crate::game::check_state(game, x)?;
            for (sigma, &level) in self.levels.iter().enumerate() {
                let policy = env_policies.get(level).ok_or(Error::MissingLevel { level })?;
                let pi = policy.row(x).ok_or(Error::MissingPolicyRow {
                    player: Player::Env,
                    level,
                    state: x,
                })?;
                if pi.len() != n2 {
                    return Err(Error::DimensionMismatch {
                        expected: n2,
                        got: pi.len(),
                    });
                }
                let mut per_action = Vec::with_capacity(self.num_ego_actions);
                for u1 in 0..self.num_ego_actions {
                    let mut targets: BTreeMap<usize, f64> = BTreeMap::new();
                    for (u2, &p) in pi.iter().enumerate() {
                        if p == 0.0 {
                            continue;
                        }
                        let y = game.transition(x, u1, u2);
                        let target = AugmentedState { state: y, level: sigma }.index(k_count);
                        *targets.entry(target).or_insert(0.0) += p;
                    }
                    per_action.push(targets.into_iter().collect());
                }
                self.rows.insert(AugmentedState { state: x, level: sigma }.index(k_count), per_action);
            }
        }
        Ok(())
    }
}

/// Kernel over the full state space with `K = {0, .., env_policies.len() - 1}`.
pub fn build_kernel<G: Game + ?Sized>(game: &G, env_policies: &[PolicyTable]) -> Result<AugmentedKernel> {
    build_kernel_for_levels(game, env_policies, (0..env_policies.len()).collect())
}

/// Kernel over the full state space for an explicit level set `K`.
pub fn build_kernel_for_levels<G: Game + ?Sized>(
    game: &G,
    env_policies: &[PolicyTable],
    levels: Vec<usize>,
) -> Result<AugmentedKernel> {
    let mut kernel = AugmentedKernel::new(game.num_states(), game.num_actions(Player::Ego), levels);
    kernel.extend(game, env_policies, 0..game.num_states())?;
    Ok(kernel)
}

/// One-step prediction: `next(x̄') = Σ_x̄ Σ_u γ(u) P(x̄' | x̄, u) current(x̄)`.
///
/// `current` may be a sub-probability vector, with mass on violating paths already removed.
pub fn predict(kernel: &AugmentedKernel, current: &SparseDist, gamma: &[f64]) -> Result<SparseDist> {
    if gamma.len() != kernel.num_ego_actions {
        return Err(Error::DimensionMismatch {
            expected: kernel.num_ego_actions,
            got: gamma.len(),
        });
    }
    if current.dim() != kernel.dim() {
        return Err(Error::DimensionMismatch {
            expected: kernel.dim(),
            got: current.dim(),
        });
    }
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for (source, mass) in current.iter() {
        let rows = kernel.rows.get(&source).ok_or(Error::MissingKernelRow(source))?;
        for (u, &g) in gamma.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for &(target, p) in &rows[u] {
                *acc.entry(target).or_insert(0.0) += g * p * mass;
            }
        }
    }
    Ok(SparseDist::from_map(current.dim(), acc))
}

/// Bayesian update after executing `action` and observing physical state
/// `observed`:
/// `π(x̄) ∝ 1{x̄ ∈ {y} x K} P(x̄ | ·, u)ᵀ π_prev`.
pub fn bayes_update(kernel: &AugmentedKernel, prior: &Belief, action: usize, observed: usize) -> Result<Belief> {
    let masses = observation_masses(kernel, prior, action, observed)?;
    let total: f64 = masses.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InconsistentObservation { state: observed });
    }
    posterior_from_masses(kernel, prior, observed, &masses, total)
}

/// [`bayes_update`] with every level's unnormalized mass floored at `floor`,
/// for use when the exact update reports an inconsistent observation.
pub fn bayes_update_floored(
    kernel: &AugmentedKernel,
    prior: &Belief,
    action: usize,
    observed: usize,
    floor: f64,
) -> Result<Belief> {
    let mut masses = observation_masses(kernel, prior, action, observed)?;
    for m in &mut masses {
        *m = m.max(floor);
    }
    let total: f64 = masses.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InconsistentObservation { state: observed });
    }
    posterior_from_masses(kernel, prior, observed, &masses, total)
}

fn observation_masses(kernel: &AugmentedKernel, prior: &Belief, action: usize, observed: usize) -> Result<Vec<f64>> {
    if observed >= kernel.num_states {
        return Err(Error::StateOutOfRange {
            index: observed,
            len: kernel.num_states,
        });
    }
    if action >= kernel.num_ego_actions {
        return Err(Error::ActionOutOfRange {
            player: Player::Ego,
            index: action,
            len: kernel.num_ego_actions,
        });
    }
    if prior.num_levels != kernel.num_levels() || prior.dist.dim() != kernel.dim() {
        return Err(Error::DimensionMismatch {
            expected: kernel.dim(),
            got: prior.dist.dim(),
        });
    }
    let k = kernel.num_levels();
    let mut masses = alloc::vec![0.0; k];
    for (source, p) in prior.dist.iter() {
        let row = kernel.row(source, action).ok_or(Error::MissingKernelRow(source))?;
        let sigma = source % k;
        let target = AugmentedState {
            state: observed,
            level: sigma,
        }
        .index(k);
        if let Some(&(_, q)) = row.iter().find(|&&(t, _)| t == target) {
            masses[sigma] += q * p;
        }
    }
    Ok(masses)
}

fn posterior_from_masses(
    kernel: &AugmentedKernel,
    prior: &Belief,
    observed: usize,
    masses: &[f64],
    total: f64,
) -> Result<Belief> {
    let k = kernel.num_levels();
    let dist = SparseDist::new(
        kernel.dim(),
        masses.iter().enumerate().map(|(sigma, &m)| {
            (
                AugmentedState {
                    state: observed,
                    level: sigma,
                }
                .index(k),
                m / total,
            )
        }),
    )?;
    Ok(Belief {
        dist,
        num_levels: k,
        time: prior.time + 1,
    })
}

/// Evidence `ξ_t`: observations `y_0..y_t` and executed ego actions `u_0..u_{t-1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct History {
    observations: Vec<usize>,
    actions: Vec<usize>,
}

impl History {
    pub fn new(initial: usize) -> Self {
        History {
            observations: alloc::vec![initial],
            actions: Vec::new(),
        }
    }

    pub fn record(&mut self, action: usize, observed: usize) {
        self.actions.push(action);
        self.observations.push(observed);
    }

    pub fn observations(&self) -> &[usize] {
        &self.observations
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    /// Current time `t`.
    pub fn time(&self) -> usize {
        self.actions.len()
    }

    /// Runs the filter from `level_prior` over the whole history.
    pub fn posterior(&self, kernel: &AugmentedKernel, level_prior: &[f64]) -> Result<Belief> {
        let mut belief = init_belief(kernel.num_states(), self.observations[0], level_prior)?;
        for (&u, &y) in self.actions.iter().zip(&self.observations[1..]) {
            belief = bayes_update(kernel, &belief, u, y)?;
        }
        Ok(belief)
    }
}

/// A lazily grown opponent model: level-k policies plus the augmented kernel
/// over the states visited so far.
#[derive(Debug, Clone)]
pub struct OpponentModel {
    pub hierarchy: Hierarchy,
    pub kernel: AugmentedKernel,
}

impl OpponentModel {
    pub fn new(hierarchy: Hierarchy, kernel: AugmentedKernel) -> Self {
        OpponentModel { hierarchy, kernel }
    }

    /// Makes kernel rows available for every state reachable from `roots` in
    /// at most `depth` steps.
    pub fn ensure_around<G, L>(&mut self, game: &G, level0: &L, roots: &[usize], depth: usize) -> Result<()>
    where
        G: Game + ?Sized,
        L: LevelZero + ?Sized,
    {
        let states: Vec<usize> = reachable(game, roots, depth)
            .into_iter()
            .filter(|&x| !self.kernel.has_state(x))
            .collect();
        if states.is_empty() {
            return Ok(());
        }
        for &level in self.kernel.levels().to_vec().iter() {
            self.hierarchy.ensure(game, level0, Player::Env, level, &states)?;
        }
        self.kernel.extend(game, self.hierarchy.env_policies(), states)
    }
}
