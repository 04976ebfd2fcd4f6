//! Closed-loop episodes: the ego plans against a belief over human levels
//! while a simulated level-k human drives.

use std::time::Instant;

use chdm_core::game::Player;
use chdm_core::hierarchy::Hierarchy;
use chdm_core::inference::{bayes_update, bayes_update_floored, init_belief, AugmentedKernel, Belief, OpponentModel};
use chdm_core::planner::{maximin_plan, Planner, SolverOptions};
use chdm_core::simplex;
use chdm_core::traffic::{Scenario, ScenarioKind, VehicleState};
use chdm_core::Game;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::Error;

/// What to do when no decision profile meets the chance constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OnInfeasible {
    Abort,
    #[default]
    Fallback,
}

/// Ego decision rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EgoController {
    /// Chance-constrained planning against the level belief.
    #[default]
    ChanceConstrained,
    /// Worst-case open-loop plan, executing its first action.
    Maximin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub max_steps: usize,
    pub on_infeasible: OnInfeasible,
    /// Lower bound on each level's likelihood when an observation has zero
    /// probability under every level.
    pub likelihood_floor: f64,
    pub solver: SolverOptions,
    pub stop_on_completion: bool,
    pub controller: EgoController,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            max_steps: 30,
            on_infeasible: OnInfeasible::Fallback,
            likelihood_floor: 1e-9,
            solver: SolverOptions::default(),
            stop_on_completion: true,
            controller: EgoController::ChanceConstrained,
        }
    }
}

/// One logged time step. Record `t` holds the state reached at `t`, the
/// posterior after observing it, and the plan and actions executed at `t - 1`
/// that led there (absent in the initial record).
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub ego: VehicleState,
    pub human: VehicleState,
    pub ego_action: Option<usize>,
    pub human_action: Option<usize>,
    /// Posterior level marginals, ordered like the scenario's level set.
    pub posterior: Vec<f64>,
    pub expected_reward: Option<f64>,
    pub constraint_probability: Option<f64>,
    pub feasible: Option<bool>,
    pub fallback: bool,
    pub floored_update: bool,
    pub safe: bool,
    /// Time spent planning the step that led here.
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    EgoCrossedFirst,
    EgoYielded,
    CrossedTogether,
    OvertakeCompleted { step: usize },
    MergedAhead { position: f64 },
    MergedBehind { position: f64 },
    Incomplete,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::EgoCrossedFirst => "ego crossed first",
            Outcome::EgoYielded => "ego yielded",
            Outcome::CrossedTogether => "crossed together",
            Outcome::OvertakeCompleted { .. } => "overtake completed",
            Outcome::MergedAhead { .. } => "merged ahead",
            Outcome::MergedBehind { .. } => "merged behind",
            Outcome::Incomplete => "incomplete",
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub scenario: ScenarioKind,
    pub human_level: usize,
    pub seed: u64,
    pub levels: Vec<usize>,
    pub records: Vec<StepRecord>,
    pub outcome: Outcome,
    pub violation: bool,
}

impl EpisodeLog {
    /// Number of executed steps.
    pub fn len(&self) -> usize {
        self.records.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn final_posterior(&self) -> &[f64] {
        &self.records.last().expect("initial record").posterior
    }

    /// Final posterior mass on the true human level (0 if it is not modelled).
    pub fn posterior_on_true_level(&self) -> f64 {
        self.levels
            .iter()
            .position(|&k| k == self.human_level)
            .map_or(0.0, |i| self.final_posterior()[i])
    }

    /// Planning windows `x_{t+1..t+N}` (truncated at the episode end) and how
    /// many of them contain an unsafe state.
    pub fn window_violations(&self, horizon: usize) -> (usize, usize) {
        let steps = self.len();
        let mut violated = 0;
        for t in 0..steps {
            let end = (t + horizon).min(steps);
            if self.records[t + 1..=end].iter().any(|r| !r.safe) {
                violated += 1;
            }
        }
        (steps, violated)
    }
}

/// Scenario plus the lazily grown opponent model, reusable across episodes.
#[derive(Debug, Clone)]
pub struct Simulator {
    scenario: Scenario,
    model: OpponentModel,
    settings: SimSettings,
}

/// The two independent random streams of an episode.
pub fn episode_rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut human = ChaCha8Rng::seed_from_u64(seed);
    human.set_stream(1);
    let mut ego = ChaCha8Rng::seed_from_u64(seed);
    ego.set_stream(2);
    (human, ego)
}

impl Simulator {
    pub fn new(scenario: Scenario, settings: SimSettings) -> Self {
        let c = scenario.config();
        let hierarchy = Hierarchy::new(
            c.k_max,
            scenario.num_actions(Player::Ego),
            scenario.num_actions(Player::Env),
            c.temperature,
        );
        let kernel = AugmentedKernel::new(scenario.num_states(), scenario.num_actions(Player::Ego), c.levels.clone());
        Simulator {
            scenario,
            model: OpponentModel::new(hierarchy, kernel),
            settings,
        }
    }

    /// Resumes from a previously built opponent model.
    pub fn with_model(scenario: Scenario, model: OpponentModel, settings: SimSettings) -> Self {
        Simulator {
            scenario,
            model,
            settings,
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn model(&self) -> &OpponentModel {
        &self.model
    }

    pub fn settings(&self) -> &SimSettings {
        &self.settings
    }

    pub fn settings_mut(&mut self) -> &mut SimSettings {
        &mut self.settings
    }

    fn planner(&self) -> Planner {
        let c = self.scenario.config();
        Planner {
            epsilon: c.epsilon,
            discount: c.discount,
            horizon: c.horizon,
            options: self.settings.solver,
        }
    }

    /// Grows the opponent model so the planner can predict from `belief`.
    pub fn prepare(&mut self, belief: &Belief) -> Result<(), Error> {
        let depth = self.scenario.config().horizon.saturating_sub(1);
        let roots = belief.physical_support();
        let shaped = self.scenario.shaped();
        self.model.ensure_around(&shaped, &self.scenario, &roots, depth)?;
        Ok(())
    }

    /// Precomputes the model over every state within `depth` steps of the
    /// initial state.
    pub fn build_initial(&mut self, depth: usize) -> Result<(), Error> {
        let x0 = self.scenario.initial_state()?;
        let shaped = self.scenario.shaped();
        self.model.ensure_around(&shaped, &self.scenario, &[x0], depth)?;
        Ok(())
    }

    /// Level-`level` human action distribution at `state`.
    pub fn human_policy(&mut self, level: usize, state: usize) -> Result<Vec<f64>, Error> {
        let shaped = self.scenario.shaped();
        self.model
            .hierarchy
            .ensure(&shaped, &self.scenario, Player::Env, level, &[state])?;
        let table = &self.model.hierarchy.env_policies()[level];
        Ok(table.row(state).expect("row just ensured").to_vec())
    }

    /// One chance-constrained decision at `belief`.
    pub fn plan(&mut self, belief: &Belief) -> Result<chdm_core::PlanResult, Error> {
        self.prepare(belief)?;
        let scenario = &self.scenario;
        let plan = self.planner().plan(
            &self.model.kernel,
            |x| scenario.reward(Player::Ego, x),
            |t, x| scenario.is_safe(t, x),
            belief,
        )?;
        Ok(plan)
    }

    pub fn run_episode(&mut self, human_level: usize, seed: u64) -> Result<EpisodeLog, Error> {
        if human_level > self.scenario.config().k_max {
            return Err(Error::Config(format!(
                "human level {human_level} exceeds k_max = {}",
                self.scenario.config().k_max
            )));
        }
        let (mut human_rng, mut ego_rng) = episode_rngs(seed);
        let c = self.scenario.config().clone();
        let mut x = self.scenario.initial_state()?;
        let mut belief = init_belief(self.scenario.num_states(), x, &c.level_prior)?;
        let (e0, h0) = self.scenario.decode(x);
        let mut records = vec![StepRecord {
            t: 0,
            ego: e0,
            human: h0,
            ego_action: None,
            human_action: None,
            posterior: belief.level_marginals(),
            expected_reward: None,
            constraint_probability: None,
            feasible: None,
            fallback: false,
            floored_update: false,
            safe: self.scenario.is_safe(0, x),
            wall_ms: 0.0,
        }];
        let mut violation = !records[0].safe;
        let mut t = 0;
        while t < self.settings.max_steps && !violation {
            if self.settings.stop_on_completion && self.scenario.is_complete(x) {
                break;
            }
            let started = Instant::now();
            let (ego_action, plan) = match self.settings.controller {
                EgoController::ChanceConstrained => {
                    let plan = self.plan(&belief)?;
                    if !plan.feasible && self.settings.on_infeasible == OnInfeasible::Abort {
                        return Err(Error::Infeasible { time: t });
                    }
                    (simplex::sample(plan.profile.first(), &mut ego_rng), Some(plan))
                }
                EgoController::Maximin => {
                    // Keep the belief filter running alongside for logging.
                    self.prepare(&belief)?;
                    let action = match maximin_plan(&self.scenario, x, c.horizon, c.discount, t) {
                        Ok(p) => p.actions[0],
                        Err(chdm_core::Error::NoRobustFeasibleSequence) => 0,
                        Err(e) => return Err(e.into()),
                    };
                    (action, None)
                }
            };
            let wall_ms = started.elapsed().as_secs_f64() * 1e3;
            let human_row = self.human_policy(human_level, x)?;
            let human_action = simplex::sample(&human_row, &mut human_rng);
            let next = self.scenario.transition(x, ego_action, human_action);
            let (updated, floored) = match bayes_update(&self.model.kernel, &belief, ego_action, next) {
                Ok(b) => (b, false),
                Err(chdm_core::Error::InconsistentObservation { .. }) => (
                    bayes_update_floored(
                        &self.model.kernel,
                        &belief,
                        ego_action,
                        next,
                        self.settings.likelihood_floor,
                    )?,
                    true,
                ),
                Err(e) => return Err(e.into()),
            };
            belief = updated;
            x = next;
            t += 1;
            let safe = self.scenario.is_safe(t, x);
            violation |= !safe;
            let (ego, human) = self.scenario.decode(x);
            records.push(StepRecord {
                t,
                ego,
                human,
                ego_action: Some(ego_action),
                human_action: Some(human_action),
                posterior: belief.level_marginals(),
                expected_reward: plan.as_ref().map(|p| p.expected_reward),
                constraint_probability: plan.as_ref().map(|p| p.constraint_probability),
                feasible: plan.as_ref().map(|p| p.feasible),
                fallback: plan.as_ref().is_some_and(|p| p.fallback_applied),
                floored_update: floored,
                safe,
                wall_ms,
            });
        }
        let outcome = outcome(&self.scenario, &records);
        Ok(EpisodeLog {
            scenario: c.kind,
            human_level,
            seed,
            levels: c.levels.clone(),
            records,
            outcome,
            violation,
        })
    }
}

/// Scenario outcome read off the logged trajectory.
pub fn outcome(scenario: &Scenario, records: &[StepRecord]) -> Outcome {
    let c = scenario.config();
    match c.kind {
        ScenarioKind::Intersection => {
            // Compare positions when the first vehicle reaches the crossing.
            match records.iter().find(|r| r.ego.s_x >= 0.0 || r.human.s_x >= 0.0) {
                Some(r) if r.ego.s_x > r.human.s_x => Outcome::EgoCrossedFirst,
                Some(r) if r.ego.s_x < r.human.s_x => Outcome::EgoYielded,
                Some(_) => Outcome::CrossedTogether,
                None => Outcome::Incomplete,
            }
        }
        ScenarioKind::Overtaking => records
            .iter()
            .find(|r| r.t > 0 && r.ego.s_y == c.lane_centers()[0] && r.ego.s_x > r.human.s_x)
            .filter(|_| records.iter().any(|r| r.ego.s_y != c.lane_centers()[0]))
            .map_or(Outcome::Incomplete, |r| Outcome::OvertakeCompleted { step: r.t }),
        ScenarioKind::Merging => records
            .iter()
            .find(|r| r.ego.s_y == c.lane_centers()[1])
            .map_or(Outcome::Incomplete, |r| {
                if r.ego.s_x > r.human.s_x {
                    Outcome::MergedAhead { position: r.ego.s_x }
                } else {
                    Outcome::MergedBehind { position: r.ego.s_x }
                }
            }),
    }
}
