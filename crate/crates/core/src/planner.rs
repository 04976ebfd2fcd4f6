//! Chance-constrained receding-horizon planning over randomized open-loop
//! profiles.
//!
//! A [`DecisionProfile`] holds one distribution over ego actions per stage of
//! the horizon. For a given profile the expected discounted reward and the
//! probability of staying in the safe sets at every stage are evaluated
//! exactly by propagating the augmented-state distribution through the
//! kernel. Both quantities are multilinear in the profile (affine in each
//! stage), which the optimizer exploits for exact gradients and for solving
//! the max-probability problem by vertex enumeration.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::game::{check_distribution, Game, Player};
use crate::inference::{predict, AugmentedKernel, Belief, SparseDist};
use crate::simplex;
use crate::{Error, Result};

const FEASIBILITY_TOL: f64 = 1e-12;

/// `Γ = (γ_0, …, γ_{N-1})`, each `γ_τ` a distribution over ego actions.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionProfile {
    gammas: Vec<Vec<f64>>,
}

impl DecisionProfile {
    pub fn new(gammas: Vec<Vec<f64>>) -> Result<Self> {
        let width = gammas.first().map_or(0, Vec::len);
        for g in &gammas {
            if g.len() != width {
                return Err(Error::DimensionMismatch {
                    expected: width,
                    got: g.len(),
                });
            }
            check_distribution(g)?;
        }
        Ok(DecisionProfile { gammas })
    }

    pub fn uniform(horizon: usize, num_actions: usize) -> Self {
        DecisionProfile {
            gammas: alloc::vec![alloc::vec![1.0 / num_actions as f64; num_actions]; horizon],
        }
    }

    /// Deterministic profile playing `actions[τ]` at stage τ.
    pub fn vertex(actions: &[usize], num_actions: usize) -> Self {
        let gammas = actions
            .iter()
            .map(|&a| {
                let mut g = alloc::vec![0.0; num_actions];
                g[a] = 1.0;
                g
            })
            .collect();
        DecisionProfile { gammas }
    }

    pub fn horizon(&self) -> usize {
        self.gammas.len()
    }

    pub fn num_actions(&self) -> usize {
        self.gammas.first().map_or(0, Vec::len)
    }

    pub fn stage(&self, tau: usize) -> &[f64] {
        &self.gammas[tau]
    }

    pub fn stages(&self) -> &[Vec<f64>] {
        &self.gammas
    }

    /// `γ_{0|t}`, the distribution the executed action is drawn from.
    pub fn first(&self) -> &[f64] {
        &self.gammas[0]
    }

    fn with_stage(&self, tau: usize, gamma: Vec<f64>) -> Self {
        let mut out = self.clone();
        out.gammas[tau] = gamma;
        out
    }

    /// Stage-wise `(1 - alpha) * self + alpha * other`.
    fn blend(&self, other: &Self, alpha: f64) -> Self {
        let gammas = self
            .gammas
            .iter()
            .zip(&other.gammas)
            .map(|(a, b)| simplex::project(&a.iter().zip(b).map(|(x, y)| (1.0 - alpha) * x + alpha * y).collect::<Vec<_>>()))
            .collect();
        DecisionProfile { gammas }
    }
}

/// Optimizer output for one decision step.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub profile: DecisionProfile,
    pub expected_reward: f64,
    pub constraint_probability: f64,
    /// Whether `constraint_probability ≥ 1 - ε`.
    pub feasible: bool,
    /// Projected-gradient iterations over all starts.
    pub iterations: usize,
    /// Set when no profile meets the chance constraint and the result is the
    /// max-probability profile instead.
    pub fallback_applied: bool,
    /// Vertex profiles enumerated for the warm start.
    pub vertices_evaluated: usize,
}

/// Everything a single optimization needs.
pub struct PlanningProblem<'a, R, S> {
    pub kernel: &'a AugmentedKernel,
    /// `R¹(x)` for physical state `x`; the same for every level.
    pub reward: R,
    /// Membership `x ∈ X_time`.
    pub safe: S,
    pub belief: &'a SparseDist,
    pub epsilon: f64,
    pub discount: f64,
    pub horizon: usize,
    /// Absolute time `t` of the decision; stage τ lands at `t + τ + 1`.
    pub time: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMethod {
    /// Partial derivatives from stage-wise vertex evaluations (exact for
    /// multilinear objectives).
    Analytic,
    /// Central differences with the given step.
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Penalty weights are `reward_scale * penalty_base^j` for `j = 1..=penalty_rounds`.
    pub penalty_base: f64,
    pub penalty_rounds: usize,
    pub gradient: GradientMethod,
    pub fd_step: f64,
    /// Refuse to enumerate more vertex profiles than this.
    pub max_vertices: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 60,
            penalty_base: 100.0,
            penalty_rounds: 3,
            gradient: GradientMethod::Analytic,
            fd_step: 1e-5,
            max_vertices: 100_000,
        }
    }
}

fn check_profile(kernel: &AugmentedKernel, profile: &DecisionProfile) -> Result<()> {
    if profile.num_actions() != kernel.num_ego_actions() {
        return Err(Error::DimensionMismatch {
            expected: kernel.num_ego_actions(),
            got: profile.num_actions(),
        });
    }
    Ok(())
}

/// `E{Σ_τ λ^τ R¹(x_{τ+1|t}) | ξ_t}` under `profile`.
pub fn expected_reward(
    kernel: &AugmentedKernel,
    reward: impl Fn(usize) -> f64,
    belief: &SparseDist,
    profile: &DecisionProfile,
    discount: f64,
) -> Result<f64> {
    check_profile(kernel, profile)?;
    let k = kernel.num_levels();
    let mut dist = belief.clone();
    let mut weight = 1.0;
    let mut total = 0.0;
    for gamma in profile.stages() {
        dist = predict(kernel, &dist, gamma)?;
        let stage: f64 = dist.iter().map(|(i, p)| reward(i / k) * p).sum();
        total += weight * stage;
        weight *= discount;
    }
    Ok(total)
}

/// `P{x_{τ+1|t} ∈ X_{t+τ+1} ∀τ | ξ_t}`: propagate, accumulate the mass that
/// leaves the safe set, zero it, continue.
pub fn constraint_probability(
    kernel: &AugmentedKernel,
    safe: impl Fn(usize, usize) -> bool,
    belief: &SparseDist,
    profile: &DecisionProfile,
    time: usize,
) -> Result<f64> {
    check_profile(kernel, profile)?;
    let k = kernel.num_levels();
    let mut dist = belief.clone();
    let mut violated = 0.0;
    for (tau, gamma) in profile.stages().iter().enumerate() {
        dist = predict(kernel, &dist, gamma)?;
        let at = time + tau + 1;
        violated += dist.retain_mass(|i| safe(at, i / k));
    }
    Ok((1.0 - violated).clamp(0.0, 1.0))
}

impl<R, S> PlanningProblem<'_, R, S>
where
    R: Fn(usize) -> f64,
    S: Fn(usize, usize) -> bool,
{
    fn threshold(&self) -> f64 {
        1.0 - self.epsilon
    }

    /// Restricts the kernel to the augmented states reachable from the belief
    /// within the horizon and indexes them densely.
    fn compile(&self) -> Result<Compiled> {
        let k = self.kernel.num_levels();
        let n = self.kernel.num_ego_actions();
        let mut local: BTreeMap<usize, usize> = BTreeMap::new();
        let mut globals: Vec<usize> = Vec::new();
        let mut depth: Vec<usize> = Vec::new();
        let mut b = Vec::new();
        for (i, p) in self.belief.iter() {
            local.insert(i, globals.len());
            globals.push(i);
            depth.push(0);
            b.push(p);
        }
        let mut offsets = alloc::vec![0];
        let mut edges: Vec<(u32, f64)> = Vec::new();
        let mut next = 0;
        while next < globals.len() {
            let (source, d) = (globals[next], depth[next]);
            if d < self.horizon {
                for u in 0..n {
                    let row = self.kernel.row(source, u).ok_or(Error::MissingKernelRow(source))?;
                    for &(target, p) in row {
                        let j = *local.entry(target).or_insert_with(|| {
                            globals.push(target);
                            depth.push(d + 1);
                            globals.len() - 1
                        });
                        edges.push((j as u32, p));
                    }
                    offsets.push(edges.len());
                }
            } else {
                offsets.extend(core::iter::repeat_n(edges.len(), n));
            }
            next += 1;
        }
        b.resize(globals.len(), 0.0);
        let rewards = globals.iter().map(|&i| (self.reward)(i / k)).collect();
        let safe = (0..self.horizon)
            .map(|tau| globals.iter().map(|&i| (self.safe)(self.time + tau + 1, i / k)).collect())
            .collect();
        Ok(Compiled {
            n,
            discount: self.discount,
            b,
            rewards,
            safe,
            offsets,
            edges,
        })
    }
}

/// A planning problem restricted to its reachable augmented states, with
/// per-action rows in compressed form.
struct Compiled {
    n: usize,
    discount: f64,
    b: Vec<f64>,
    rewards: Vec<f64>,
    /// `safe[τ][j]`: membership of local state `j` in `X_{t+τ+1}`.
    safe: Vec<Vec<bool>>,
    offsets: Vec<usize>,
    edges: Vec<(u32, f64)>,
}

impl Compiled {
    fn row(&self, i: usize, u: usize) -> &[(u32, f64)] {
        &self.edges[self.offsets[i * self.n + u]..self.offsets[i * self.n + u + 1]]
    }

    /// `out = Σ_u γ(u) P_u d`.
    fn push_forward(&self, d: &[f64], gamma: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (i, &mass) in d.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for (u, &g) in gamma.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let w = g * mass;
                for &(j, p) in self.row(i, u) {
                    out[j as usize] += w * p;
                }
            }
        }
    }

    /// Expected reward and `1 - violated mass`, without clamping.
    fn evaluate(&self, profile: &DecisionProfile) -> (f64, f64) {
        let m = self.b.len();
        let (mut d, mut dn) = (self.b.clone(), alloc::vec![0.0; m]);
        let (mut c, mut cn) = (self.b.clone(), alloc::vec![0.0; m]);
        let (mut reward, mut violated, mut weight) = (0.0, 0.0, 1.0);
        for (tau, gamma) in profile.stages().iter().enumerate() {
            self.push_forward(&d, gamma, &mut dn);
            self.push_forward(&c, gamma, &mut cn);
            reward += weight * dn.iter().zip(&self.rewards).map(|(p, r)| p * r).sum::<f64>();
            for (j, x) in cn.iter_mut().enumerate() {
                if !self.safe[tau][j] {
                    violated += *x;
                    *x = 0.0;
                }
            }
            weight *= self.discount;
            core::mem::swap(&mut d, &mut dn);
            core::mem::swap(&mut c, &mut cn);
        }
        (reward, 1.0 - violated)
    }

    /// Exact partial derivatives of [`Compiled::evaluate`] by a backward
    /// (adjoint) sweep.
    fn gradient(&self, profile: &DecisionProfile) -> Vec<Vec<(f64, f64)>> {
        let m = self.b.len();
        let horizon = profile.horizon();
        // Stage inputs: unmasked for the reward, masked for the constraint.
        let mut plain = alloc::vec![self.b.clone()];
        let mut masked = alloc::vec![self.b.clone()];
        for (tau, gamma) in profile.stages().iter().enumerate().take(horizon - 1) {
            let mut d = alloc::vec![0.0; m];
            self.push_forward(&plain[tau], gamma, &mut d);
            plain.push(d);
            let mut c = alloc::vec![0.0; m];
            self.push_forward(&masked[tau], gamma, &mut c);
            for (j, x) in c.iter_mut().enumerate() {
                if !self.safe[tau][j] {
                    *x = 0.0;
                }
            }
            masked.push(c);
        }
        let weights: Vec<f64> = (0..horizon).scan(1.0, |w, _| {
            let cur = *w;
            *w *= self.discount;
            Some(cur)
        })
        .collect();
        // Sensitivities of both outputs to the stage output y_{τ+1}; the
        // continuation part comes from stage τ + 1.
        let mut cont_r = alloc::vec![0.0; m];
        let mut cont_p = alloc::vec![0.0; m];
        let mut out = alloc::vec![Vec::new(); horizon];
        for tau in (0..horizon).rev() {
            let gy_r: Vec<f64> = (0..m).map(|j| weights[tau] * self.rewards[j] + cont_r[j]).collect();
            let gy_p: Vec<f64> = (0..m)
                .map(|j| if self.safe[tau][j] { cont_p[j] } else { -1.0 })
                .collect();
            let gamma = profile.stage(tau);
            let mut grad = alloc::vec![(0.0, 0.0); self.n];
            let mut next_r = alloc::vec![0.0; m];
            let mut next_p = alloc::vec![0.0; m];
            for i in 0..m {
                let (dr, dp) = (plain[tau][i], masked[tau][i]);
                for (u, g) in grad.iter_mut().enumerate() {
                    let (mut hr, mut hp) = (0.0, 0.0);
                    for &(j, p) in self.row(i, u) {
                        hr += p * gy_r[j as usize];
                        hp += p * gy_p[j as usize];
                    }
                    g.0 += dr * hr;
                    g.1 += dp * hp;
                    next_r[i] += gamma[u] * hr;
                    next_p[i] += gamma[u] * hp;
                }
            }
            out[tau] = grad;
            cont_r = next_r;
            cont_p = next_p;
        }
        out
    }
}

/// Exact gradient of `(reward, probability)` with respect to every `γ_τ(u)`,
/// treating the stage weights as free variables.
pub fn analytic_gradient<R, S>(problem: &PlanningProblem<'_, R, S>, profile: &DecisionProfile) -> Result<Vec<Vec<(f64, f64)>>>
where
    R: Fn(usize) -> f64,
    S: Fn(usize, usize) -> bool,
{
    check_profile(problem.kernel, profile)?;
    check_horizon(problem, profile)?;
    Ok(problem.compile()?.gradient(profile))
}

/// Central finite-difference gradient of `(reward, probability)`.
///
/// The evaluators are polynomial in the raw stage weights, so perturbations are
/// applied directly without renormalizing.
pub fn finite_difference_gradient<R, S>(
    problem: &PlanningProblem<'_, R, S>,
    profile: &DecisionProfile,
    step: f64,
) -> Result<Vec<Vec<(f64, f64)>>>
where
    R: Fn(usize) -> f64,
    S: Fn(usize, usize) -> bool,
{
    check_profile(problem.kernel, profile)?;
    check_horizon(problem, profile)?;
    Ok(fd_gradient(&problem.compile()?, profile, step))
}

fn fd_gradient(compiled: &Compiled, profile: &DecisionProfile, step: f64) -> Vec<Vec<(f64, f64)>> {
    let n = profile.num_actions();
    let mut out = Vec::with_capacity(profile.horizon());
    for tau in 0..profile.horizon() {
        let mut row = Vec::with_capacity(n);
        for u in 0..n {
            let mut plus = profile.stage(tau).to_vec();
            let mut minus = plus.clone();
            plus[u] += step;
            minus[u] -= step;
            let hi = compiled.evaluate(&profile.with_stage(tau, plus));
            let lo = compiled.evaluate(&profile.with_stage(tau, minus));
            row.push(((hi.0 - lo.0) / (2.0 * step), (hi.1 - lo.1) / (2.0 * step)));
        }
        out.push(row);
    }
    out
}

fn check_horizon<R, S>(problem: &PlanningProblem<'_, R, S>, profile: &DecisionProfile) -> Result<()> {
    if profile.horizon() != problem.horizon || problem.horizon == 0 {
        return Err(Error::DimensionMismatch {
            expected: problem.horizon,
            got: profile.horizon(),
        });
    }
    Ok(())
}

/// All `|U¹|^N` action sequences in lexicographic order.
pub fn vertex_sequences(num_actions: usize, horizon: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = num_actions.checked_pow(horizon as u32).unwrap_or(usize::MAX);
    (0..total).map(move |mut code| {
        let mut seq = alloc::vec![0; horizon];
        for slot in seq.iter_mut().rev() {
            *slot = code % num_actions;
            code /= num_actions;
        }
        seq
    })
}

#[derive(Debug, Clone)]
struct Candidate {
    profile: DecisionProfile,
    reward: f64,
    probability: f64,
}

struct Solver<'a> {
    compiled: &'a Compiled,
    threshold: f64,
    options: &'a SolverOptions,
}

impl Solver<'_> {
    fn evaluate(&self, profile: &DecisionProfile) -> (f64, f64) {
        let (r, p) = self.compiled.evaluate(profile);
        (r, p.clamp(0.0, 1.0))
    }

    fn penalized(&self, values: (f64, f64), mu: f64) -> f64 {
        let shortfall = (self.threshold - values.1).max(0.0);
        values.0 - 0.5 * mu * shortfall * shortfall
    }

    fn feasible(&self, probability: f64) -> bool {
        probability >= self.threshold - FEASIBILITY_TOL
    }

    /// Continuous iterates must meet the threshold outright; the tolerance
    /// only absorbs rounding in the vertex sums.
    fn strictly_feasible(&self, probability: f64) -> bool {
        probability >= self.threshold
    }
}

/// Maximizes expected reward subject to the chance constraint `P ≥ 1 - ε`.
///
/// Every vertex profile is evaluated first. Because both functions are
/// multilinear, the maximum constraint probability is attained at a vertex, so
/// the enumeration decides feasibility exactly. If the best feasible vertex is
/// not already optimal, projected-gradient ascent on a quadratic-penalty
/// objective starts from it and from the uniform profile, and each run is
/// pulled back onto the feasible side by bisecting towards the best feasible
/// vertex. The result is never worse than the best feasible vertex.
pub fn optimize<R, S>(problem: &PlanningProblem<'_, R, S>, options: &SolverOptions) -> Result<PlanResult>
where
    R: Fn(usize) -> f64,
    S: Fn(usize, usize) -> bool,
{
    if !(0.0..=1.0).contains(&problem.epsilon) {
        return Err(Error::InvalidArgument(alloc::format!("epsilon {} out of [0,1]", problem.epsilon)));
    }
    if problem.horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if problem.belief.dim() != problem.kernel.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.kernel.dim(),
            got: problem.belief.dim(),
        });
    }
    let mass = problem.belief.total();
    if (mass - 1.0).abs() > crate::game::ROW_SUM_TOL {
        return Err(Error::NotNormalized { sum: mass });
    }
    let n = problem.kernel.num_ego_actions();
    let count = n.checked_pow(problem.horizon as u32).unwrap_or(usize::MAX);
    if count > options.max_vertices {
        return Err(Error::InvalidArgument(alloc::format!("{count} vertex profiles exceed the enumeration cap")));
    }
    let compiled = problem.compile()?;
    let solver = Solver {
        compiled: &compiled,
        threshold: problem.threshold(),
        options,
    };

    let mut best_feasible: Option<Candidate> = None;
    let mut most_probable: Option<Candidate> = None;
    let mut best_reward_any = f64::NEG_INFINITY;
    let mut reward_scale: f64 = 1.0;
    for seq in vertex_sequences(n, problem.horizon) {
        let profile = DecisionProfile::vertex(&seq, n);
        let (reward, probability) = solver.evaluate(&profile);
        reward_scale = reward_scale.max(reward.abs());
        best_reward_any = best_reward_any.max(reward);
        let cand = Candidate {
            profile,
            reward,
            probability,
        };
        if solver.feasible(probability) && best_feasible.as_ref().is_none_or(|b| reward > b.reward) {
            best_feasible = Some(cand.clone());
        }
        let better_p = match &most_probable {
            None => true,
            Some(b) => {
                probability > b.probability + FEASIBILITY_TOL
                    || ((probability - b.probability).abs() <= FEASIBILITY_TOL && reward > b.reward)
            }
        };
        if better_p {
            most_probable = Some(cand);
        }
    }

    let Some(anchor) = best_feasible else {
        let fallback = most_probable.expect("at least one vertex");
        return Ok(PlanResult {
            profile: fallback.profile,
            expected_reward: fallback.reward,
            constraint_probability: fallback.probability,
            feasible: false,
            iterations: 0,
            fallback_applied: true,
            vertices_evaluated: count,
        });
    };

    let mut best = anchor.clone();
    let mut iterations = 0;
    // The unconstrained optimum is a vertex; nothing to gain if we hold it.
    if anchor.reward < best_reward_any - 1e-12 * reward_scale {
        let starts = [anchor.profile.clone(), DecisionProfile::uniform(problem.horizon, n)];
        for start in starts {
            let (end, its) = solver.ascend(start, reward_scale);
            iterations += its;
            let cand = solver.restore_feasibility(&anchor, end);
            if cand.reward > best.reward {
                best = cand;
            }
        }
    }

    Ok(PlanResult {
        feasible: solver.feasible(best.probability),
        profile: best.profile,
        expected_reward: best.reward,
        constraint_probability: best.probability,
        iterations,
        fallback_applied: false,
        vertices_evaluated: count,
    })
}

impl Solver<'_> {
    fn ascend(&self, start: DecisionProfile, reward_scale: f64) -> (DecisionProfile, usize) {
        let options = self.options;
        let mut current = start;
        let mut iterations = 0;
        for round in 1..=options.penalty_rounds {
            let mu = reward_scale * libm::pow(options.penalty_base, round as f64);
            let mut values = self.evaluate(&current);
            for _ in 0..options.max_iterations {
                iterations += 1;
                let parts = match options.gradient {
                    GradientMethod::Analytic => self.compiled.gradient(&current),
                    GradientMethod::FiniteDifference => fd_gradient(self.compiled, &current, options.fd_step),
                };
                let shortfall = (self.threshold - values.1).max(0.0);
                let grad: Vec<Vec<f64>> = parts
                    .iter()
                    .map(|row| row.iter().map(|&(dr, dp)| dr + mu * shortfall * dp).collect())
                    .collect();
                let gmax = grad.iter().flatten().fold(0.0f64, |m, g| m.max(g.abs()));
                if gmax == 0.0 {
                    break;
                }
                let here = self.penalized(values, mu);
                let mut step = 1.0 / gmax;
                let mut moved = false;
                for _ in 0..40 {
                    let trial = DecisionProfile {
                        gammas: current
                            .gammas
                            .iter()
                            .zip(&grad)
                            .map(|(g, d)| simplex::project(&g.iter().zip(d).map(|(a, b)| a + step * b).collect::<Vec<_>>()))
                            .collect(),
                    };
                    let ascent: f64 = trial
                        .gammas
                        .iter()
                        .flatten()
                        .zip(current.gammas.iter().flatten())
                        .zip(grad.iter().flatten())
                        .map(|((t, c), g)| (t - c) * g)
                        .sum();
                    let trial_values = self.evaluate(&trial);
                    if ascent > 0.0 && self.penalized(trial_values, mu) >= here + 1e-4 * ascent {
                        let change = trial
                            .gammas
                            .iter()
                            .flatten()
                            .zip(current.gammas.iter().flatten())
                            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                        current = trial;
                        values = trial_values;
                        moved = change > 1e-12;
                        break;
                    }
                    step *= 0.5;
                }
                if !moved {
                    break;
                }
            }
        }
        (current, iterations)
    }

    /// Largest step from the feasible `anchor` towards `target` that keeps the
    /// chance constraint, found by bisection.
    fn restore_feasibility(&self, anchor: &Candidate, target: DecisionProfile) -> Candidate {
        let (r, p) = self.evaluate(&target);
        if self.strictly_feasible(p) {
            return Candidate {
                profile: target,
                reward: r,
                probability: p,
            };
        }
        let mut best = anchor.clone();
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            let profile = anchor.profile.blend(&target, mid);
            let (r, p) = self.evaluate(&profile);
            if self.strictly_feasible(p) {
                lo = mid;
                if r > best.reward {
                    best = Candidate {
                        profile,
                        reward: r,
                        probability: p,
                    };
                }
            } else {
                hi = mid;
            }
        }
        best
    }
}

/// Receding-horizon settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Planner {
    pub epsilon: f64,
    pub discount: f64,
    pub horizon: usize,
    pub options: SolverOptions,
}

impl Planner {
    pub fn plan(
        &self,
        kernel: &AugmentedKernel,
        reward: impl Fn(usize) -> f64,
        safe: impl Fn(usize, usize) -> bool,
        belief: &Belief,
    ) -> Result<PlanResult> {
        let problem = PlanningProblem {
            kernel,
            reward,
            safe,
            belief: belief.dist(),
            epsilon: self.epsilon,
            discount: self.discount,
            horizon: self.horizon,
            time: belief.time(),
        };
        optimize(&problem, &self.options)
    }

    /// Plans at the belief's time and draws the executed ego action from the
    /// first stage of the optimized profile.
    pub fn receding_horizon_step<Rng: rand::Rng + ?Sized>(
        &self,
        kernel: &AugmentedKernel,
        reward: impl Fn(usize) -> f64,
        safe: impl Fn(usize, usize) -> bool,
        belief: &Belief,
        rng: &mut Rng,
    ) -> Result<(usize, PlanResult)> {
        let plan = self.plan(kernel, reward, safe, belief)?;
        let action = simplex::sample(plan.profile.first(), rng);
        Ok((action, plan))
    }
}

/// Worst-case optimal open-loop ego sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct MaximinPlan {
    pub actions: Vec<usize>,
    pub value: f64,
}

/// `argmax_{u¹ seq} min_{u² seq} Σ λ^τ R¹(x_{τ+1})` by exhaustive enumeration.
/// A sequence that leaves the safe sets under any opponent sequence is worth
/// `-∞`. Ties go to the lexicographically smallest sequence.
pub fn maximin_plan<G: Game + ?Sized>(game: &G, state: usize, horizon: usize, discount: f64, time: usize) -> Result<MaximinPlan> {
    crate::game::check_state(game, state)?;
    let n1 = game.num_actions(Player::Ego);
    let n2 = game.num_actions(Player::Env);
    let mut best: Option<MaximinPlan> = None;
    for own in vertex_sequences(n1, horizon) {
        let mut worst = f64::INFINITY;
        for opp in vertex_sequences(n2, horizon) {
            let mut x = state;
            let mut weight = 1.0;
            let mut value = 0.0;
            for tau in 0..horizon {
                x = game.transition(x, own[tau], opp[tau]);
                if !game.is_safe(time + tau + 1, x) {
                    value = f64::NEG_INFINITY;
                    break;
                }
                value += weight * game.reward(Player::Ego, x);
                weight *= discount;
            }
            worst = worst.min(value);
            if worst == f64::NEG_INFINITY {
                break;
            }
        }
        if best.as_ref().is_none_or(|b| worst > b.value) {
            best = Some(MaximinPlan { actions: own, value: worst });
        }
    }
    match best {
        Some(plan) if plan.value > f64::NEG_INFINITY => Ok(plan),
        _ => Err(Error::NoRobustFeasibleSequence),
    }
}
