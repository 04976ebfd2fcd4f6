//! Two-vehicle driving scenarios: intersection, overtaking and forced merging.
//!
//! Each vehicle moves along its own road axis with point-mass longitudinal
//! kinematics on a position/speed grid; lane changes are instantaneous. The
//! ego vehicle is player 1 and the human-driven vehicle player 2. A joint
//! state index is `ego_index * human_count + human_index`.
//!
//! Positions are expressed in each vehicle's road frame (`s_x` along the road,
//! `s_y` the lane center). In the two-lane scenarios both road frames coincide
//! with the world frame. At the intersection the ego drives along the world x
//! axis and the human along the world y axis, both on the centerline.

use alloc::string::String;
use alloc::vec::Vec;

use crate::game::{Game, Player, PolicyTable};
use crate::hierarchy::{softmax_row, LevelZero};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    Intersection,
    Overtaking,
    Merging,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Intersection => "intersection",
            ScenarioKind::Overtaking => "overtaking",
            ScenarioKind::Merging => "merging",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "intersection" => Some(ScenarioKind::Intersection),
            "overtaking" => Some(ScenarioKind::Overtaking),
            "merging" => Some(ScenarioKind::Merging),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LaneCommand {
    Keep,
    /// Towards larger `s_y`.
    Left,
    /// Towards smaller `s_y`.
    Right,
}

/// Road-frame state of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    /// Longitudinal position [m].
    pub s_x: f64,
    /// Lateral position, always a lane center [m].
    pub s_y: f64,
    /// Longitudinal speed [m/s].
    pub v: f64,
}

/// Kinematic limits and lane layout of one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleModel {
    pub dt: f64,
    pub v_max: f64,
    /// Lane centers in increasing order.
    pub lanes: Vec<f64>,
}

const GRID_TOL: f64 = 1e-6;

impl VehicleModel {
    fn lane_index(&self, s_y: f64) -> Option<usize> {
        self.lanes.iter().position(|&c| (c - s_y).abs() < GRID_TOL)
    }
}

/// `s' = s + Δt v + Δt²/2 a`, `v' = v + Δt a`, with `v'` clamped to
/// `[0, v_max]`. When the clamp triggers the position advances by
/// `Δt (v + v') / 2` instead. Lane changes complete within the step.
pub fn vehicle_step(model: &VehicleModel, state: VehicleState, accel: f64, lane: LaneCommand) -> Result<VehicleState> {
    let lane_idx = model
        .lane_index(state.s_y)
        .ok_or_else(|| Error::InvalidArgument(alloc::format!("s_y = {} is not a lane center", state.s_y)))?;
    let target = match lane {
        LaneCommand::Keep => Some(lane_idx),
        LaneCommand::Left => Some(lane_idx + 1).filter(|&i| i < model.lanes.len()),
        LaneCommand::Right => lane_idx.checked_sub(1),
    }
    .ok_or_else(|| Error::InvalidArgument(alloc::format!("no lane to the {lane:?} of s_y = {}", state.s_y)))?;
    let dt = model.dt;
    let raw_v = state.v + dt * accel;
    let v = raw_v.clamp(0.0, model.v_max);
    let s_x = if v == raw_v {
        state.s_x + dt * state.v + 0.5 * dt * dt * accel
    } else {
        state.s_x + dt * 0.5 * (state.v + v)
    };
    Ok(VehicleState {
        s_x,
        s_y: model.lanes[target],
        v,
    })
}

/// Per-vehicle settings.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleConfig {
    pub s0: f64,
    /// Index into the scenario's lanes.
    pub lane0: usize,
    pub v0: f64,
    pub v_max: f64,
    pub s_min: f64,
    pub s_max: f64,
    /// Whether lane-change actions are available.
    pub lane_change: bool,
    /// Lanes this vehicle may occupy (indices into the scenario's lanes).
    pub lanes: Vec<usize>,
}

/// Scenario parameters. The defaults follow the driving examples: `Δt = 1 s`,
/// `l_car = 5 m`, `w_lane = 3.6 m`, `N = 3`, chance level `0.99`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub dt: f64,
    pub car_length: f64,
    pub lane_width: f64,
    pub horizon: usize,
    pub epsilon: f64,
    pub discount: f64,
    pub accelerations: Vec<f64>,
    pub position_resolution: f64,
    pub speed_resolution: f64,
    /// Number of parallel lanes (1 at the intersection, 2 elsewhere).
    pub num_lanes: usize,
    pub ego: VehicleConfig,
    pub human: VehicleConfig,
    pub k_max: usize,
    /// Opponent levels the ego reasons about.
    pub levels: Vec<usize>,
    pub level_prior: Vec<f64>,
    pub temperature: f64,
    /// Magnitude subtracted from a player's reward in unsafe states when
    /// building level-k models.
    pub collision_penalty: f64,
    /// Use a softmax instead of an argmax level-0 driver.
    pub softmax_level0: bool,
    /// Minimum center distance at the intersection, in car lengths.
    pub intersection_gap: f64,
    /// Minimum same-lane longitudinal gap, in car lengths.
    pub longitudinal_gap: f64,
    /// At the intersection, also require the separation along the
    /// constant-speed motion over the preceding step, so that vehicles cannot
    /// pass through each other between samples.
    pub swept_separation: bool,
    /// Merging section `(start, end]`.
    pub merge_start: f64,
    pub merge_end: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    fn base(kind: ScenarioKind, num_lanes: usize, ego: VehicleConfig, human: VehicleConfig) -> Self {
        ScenarioConfig {
            kind,
            dt: 1.0,
            car_length: 5.0,
            lane_width: 3.6,
            horizon: 3,
            epsilon: 0.01,
            discount: 1.0,
            accelerations: alloc::vec![-2.0, 0.0, 2.0],
            position_resolution: 1.0,
            speed_resolution: 2.0,
            num_lanes,
            ego,
            human,
            k_max: 2,
            levels: alloc::vec![1, 2],
            level_prior: alloc::vec![0.5, 0.5],
            temperature: 1.0,
            collision_penalty: 1000.0,
            softmax_level0: false,
            intersection_gap: 1.2,
            longitudinal_gap: 1.6,
            swept_separation: kind == ScenarioKind::Intersection,
            merge_start: 20.0,
            merge_end: 100.0,
            seed: 0,
        }
    }

    pub fn intersection() -> Self {
        let vehicle = VehicleConfig {
            s0: -30.0,
            lane0: 0,
            v0: 6.0,
            v_max: 12.0,
            s_min: -40.0,
            s_max: 80.0,
            lane_change: false,
            lanes: alloc::vec![0],
        };
        ScenarioConfig::base(ScenarioKind::Intersection, 1, vehicle.clone(), vehicle)
    }

    pub fn overtaking() -> Self {
        let ego = VehicleConfig {
            s0: 0.0,
            lane0: 0,
            v0: 10.0,
            v_max: 12.0,
            s_min: 0.0,
            s_max: 420.0,
            lane_change: true,
            lanes: alloc::vec![0, 1],
        };
        let human = VehicleConfig {
            s0: 20.0,
            lane0: 0,
            v0: 8.0,
            v_max: 10.0,
            lane_change: false,
            lanes: alloc::vec![0],
            ..ego.clone()
        };
        ScenarioConfig::base(ScenarioKind::Overtaking, 2, ego, human)
    }

    pub fn merging() -> Self {
        let ego = VehicleConfig {
            s0: 0.0,
            lane0: 0,
            v0: 8.0,
            v_max: 12.0,
            s_min: 0.0,
            s_max: 200.0,
            lane_change: true,
            lanes: alloc::vec![0, 1],
        };
        let human = VehicleConfig {
            s0: 0.0,
            lane0: 1,
            lane_change: false,
            lanes: alloc::vec![1],
            ..ego.clone()
        };
        ScenarioConfig::base(ScenarioKind::Merging, 2, ego, human)
    }

    pub fn default_for(kind: ScenarioKind) -> Self {
        match kind {
            ScenarioKind::Intersection => ScenarioConfig::intersection(),
            ScenarioKind::Overtaking => ScenarioConfig::overtaking(),
            ScenarioKind::Merging => ScenarioConfig::merging(),
        }
    }

    /// Lane centers `(i + 1/2) w_lane`, or the centerline at the intersection.
    pub fn lane_centers(&self) -> Vec<f64> {
        match self.kind {
            ScenarioKind::Intersection => alloc::vec![0.0; self.num_lanes],
            _ => (0..self.num_lanes).map(|i| (i as f64 + 0.5) * self.lane_width).collect(),
        }
    }

    /// Checks every invariant that does not need the grid built.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.epsilon) {
            return err("epsilon out of [0,1]".into());
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return err("discount out of (0,1]".into());
        }
        if self.horizon == 0 {
            return err("horizon must be at least 1".into());
        }
        for (name, v) in [
            ("dt", self.dt),
            ("position_resolution", self.position_resolution),
            ("speed_resolution", self.speed_resolution),
            ("car_length", self.car_length),
            ("lane_width", self.lane_width),
            ("temperature", self.temperature),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return err(alloc::format!("{name} must be positive"));
            }
        }
        if self.accelerations.is_empty() {
            return err("acceleration set is empty".into());
        }
        if !(self.collision_penalty >= 0.0) {
            return err("collision_penalty must be non-negative".into());
        }
        if self.num_lanes == 0 || self.num_lanes > 2 {
            return err("one or two lanes are supported".into());
        }
        if self.kind == ScenarioKind::Intersection && self.num_lanes != 1 {
            return err("the intersection scenario has a single lane per road".into());
        }
        if self.levels.is_empty() || self.levels.iter().any(|&k| k > self.k_max) {
            return err("levels must be non-empty and at most k_max".into());
        }
        if self.level_prior.len() != self.levels.len() {
            return err("level_prior must have one entry per level".into());
        }
        if crate::game::check_distribution(&self.level_prior).is_err() {
            return err("level_prior must be a probability vector".into());
        }
        for (who, v) in [("ego", &self.ego), ("human", &self.human)] {
            if v.lanes.is_empty() || v.lanes.iter().any(|&l| l >= self.num_lanes) {
                return err(alloc::format!("{who} lanes out of range"));
            }
            if !v.lanes.contains(&v.lane0) {
                return err(alloc::format!("{who} starts outside its lanes"));
            }
            if v.lane_change && v.lanes.len() != 2 {
                return err(alloc::format!("{who} lane changes need exactly two lanes"));
            }
            if !(v.v_max > 0.0) || !(v.s_max > v.s_min) {
                return err(alloc::format!("{who} bounds are empty"));
            }
            if !(0.0..=v.v_max).contains(&v.v0) || !(v.s_min..=v.s_max).contains(&v.s0) {
                return err(alloc::format!("{who} initial state outside its bounds"));
            }
        }
        Ok(())
    }
}

/// A lattice of `(s_x, lane, v)` states for one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleGrid {
    pub s_min: f64,
    pub s_max: f64,
    pub s_res: f64,
    pub v_res: f64,
    /// Lane centers available to this vehicle.
    pub lanes: Vec<f64>,
    n_s: usize,
    n_v: usize,
}

fn lattice_steps(span: f64, res: f64) -> Option<usize> {
    let n = span / res;
    let r = libm::round(n);
    ((n - r).abs() < GRID_TOL && r >= 0.0).then_some(r as usize)
}

impl VehicleGrid {
    fn new(s_min: f64, s_max: f64, s_res: f64, v_max: f64, v_res: f64, lanes: Vec<f64>) -> Result<Self> {
        let n_s = lattice_steps(s_max - s_min, s_res)
            .ok_or_else(|| Error::Config("position bounds are not on the position grid".into()))?
            + 1;
        let n_v = lattice_steps(v_max, v_res).ok_or_else(|| Error::Config("v_max is not on the speed grid".into()))? + 1;
        Ok(VehicleGrid {
            s_min,
            s_max,
            s_res,
            v_res,
            lanes,
            n_s,
            n_v,
        })
    }

    pub fn len(&self) -> usize {
        self.n_s * self.n_v * self.lanes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn speeds(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_v).map(|i| i as f64 * self.v_res)
    }

    pub fn encode(&self, vs: &VehicleState) -> Option<usize> {
        let s = lattice_steps(vs.s_x - self.s_min, self.s_res).filter(|&i| i < self.n_s)?;
        let v = lattice_steps(vs.v, self.v_res).filter(|&i| i < self.n_v)?;
        let lane = self.lanes.iter().position(|&c| (c - vs.s_y).abs() < GRID_TOL)?;
        Some((lane * self.n_s + s) * self.n_v + v)
    }

    pub fn decode(&self, index: usize) -> VehicleState {
        let v = index % self.n_v;
        let s = (index / self.n_v) % self.n_s;
        let lane = index / (self.n_v * self.n_s);
        VehicleState {
            s_x: self.s_min + s as f64 * self.s_res,
            s_y: self.lanes[lane],
            v: v as f64 * self.v_res,
        }
    }
}

/// One vehicle's action: an acceleration and whether to switch lanes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveAction {
    pub accel: f64,
    pub change_lane: bool,
}

#[derive(Debug, Clone)]
struct VehicleTables {
    grid: VehicleGrid,
    actions: Vec<DriveAction>,
    /// Decoded states, indexed like the grid.
    states: Vec<VehicleState>,
    /// `next[i * actions.len() + a]`.
    next: Vec<u32>,
}

impl VehicleTables {
    fn build(config: &ScenarioConfig, vehicle: &VehicleConfig, lane_centers: &[f64]) -> Result<Self> {
        let lanes: Vec<f64> = vehicle.lanes.iter().map(|&i| lane_centers[i]).collect();
        let grid = VehicleGrid::new(
            vehicle.s_min,
            vehicle.s_max,
            config.position_resolution,
            vehicle.v_max,
            config.speed_resolution,
            lanes.clone(),
        )?;
        let lane_options: &[bool] = if vehicle.lane_change { &[false, true] } else { &[false] };
        let actions: Vec<DriveAction> = config
            .accelerations
            .iter()
            .flat_map(|&accel| lane_options.iter().map(move |&change_lane| DriveAction { accel, change_lane }))
            .collect();
        let model = VehicleModel {
            dt: config.dt,
            v_max: vehicle.v_max,
            lanes,
        };
        let states: Vec<VehicleState> = (0..grid.len()).map(|i| grid.decode(i)).collect();
        let mut next = Vec::with_capacity(states.len() * actions.len());
        for vs in &states {
            for a in &actions {
                let lane = if !a.change_lane {
                    LaneCommand::Keep
                } else if model.lane_index(vs.s_y) == Some(0) {
                    LaneCommand::Left
                } else {
                    LaneCommand::Right
                };
                let mut succ = vehicle_step(&model, *vs, a.accel, lane)?;
                // Leaving the modelled road section is absorbing at its end.
                succ.s_x = succ.s_x.min(grid.s_max);
                let idx = grid.encode(&succ).ok_or_else(|| {
                    Error::Config(alloc::format!(
                        "grid not closed under the dynamics: ({}, {}, {}) with a = {} leaves the lattice",
                        vs.s_x,
                        vs.s_y,
                        vs.v,
                        a.accel
                    ))
                })?;
                next.push(idx as u32);
            }
        }
        Ok(VehicleTables {
            grid,
            actions,
            states,
            next,
        })
    }

    fn step(&self, index: usize, action: usize) -> usize {
        self.next[index * self.actions.len() + action] as usize
    }

    fn neutral_action(&self) -> Option<usize> {
        self.actions.iter().position(|a| a.accel == 0.0 && !a.change_lane)
    }
}

/// A driving scenario as a finite two-player game with plain (unshaped)
/// rewards and the scenario's safe set.
#[derive(Debug, Clone)]
pub struct Scenario {
    config: ScenarioConfig,
    ego: VehicleTables,
    human: VehicleTables,
}

/// Builds the joint game for `config`.
pub fn make_scenario(config: ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let lanes = config.lane_centers();
    let ego = VehicleTables::build(&config, &config.ego, &lanes)?;
    let human = VehicleTables::build(&config, &config.human, &lanes)?;
    if ego.grid.len().checked_mul(human.grid.len()).is_none_or(|n| n > u32::MAX as usize) {
        return Err(Error::Config("joint state space too large".into()));
    }
    let scenario = Scenario { config, ego, human };
    scenario.initial_state()?;
    Ok(scenario)
}

impl Scenario {
    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn kind(&self) -> ScenarioKind {
        self.config.kind
    }

    pub fn ego_grid(&self) -> &VehicleGrid {
        &self.ego.grid
    }

    pub fn human_grid(&self) -> &VehicleGrid {
        &self.human.grid
    }

    pub fn ego_actions(&self) -> &[DriveAction] {
        &self.ego.actions
    }

    pub fn human_actions(&self) -> &[DriveAction] {
        &self.human.actions
    }

    pub fn encode(&self, ego: &VehicleState, human: &VehicleState) -> Result<usize> {
        let e = self.ego.grid.encode(ego);
        let h = self.human.grid.encode(human);
        match (e, h) {
            (Some(e), Some(h)) => Ok(e * self.human.grid.len() + h),
            _ => Err(Error::InvalidArgument(alloc::format!("{ego:?} / {human:?} not on the scenario grid"))),
        }
    }

    pub fn decode(&self, state: usize) -> (VehicleState, VehicleState) {
        let (e, h) = self.split(state);
        (self.ego.states[e], self.human.states[h])
    }

    fn split(&self, state: usize) -> (usize, usize) {
        let n = self.human.grid.len();
        (state / n, state % n)
    }

    fn join(&self, ego: usize, human: usize) -> usize {
        ego * self.human.grid.len() + human
    }

    pub fn initial_state(&self) -> Result<usize> {
        let lanes = self.config.lane_centers();
        let ego = VehicleState {
            s_x: self.config.ego.s0,
            s_y: lanes[self.config.ego.lane0],
            v: self.config.ego.v0,
        };
        let human = VehicleState {
            s_x: self.config.human.s0,
            s_y: lanes[self.config.human.lane0],
            v: self.config.human.v0,
        };
        self.encode(&ego, &human)
            .map_err(|_| Error::Config("initial state is not on the grid".into()))
    }

    /// World-frame position `[x, y]` of a vehicle.
    pub fn world_position(&self, player: Player, vs: &VehicleState) -> [f64; 2] {
        match (self.config.kind, player) {
            (ScenarioKind::Intersection, Player::Env) => [vs.s_y, vs.s_x],
            _ => [vs.s_x, vs.s_y],
        }
    }

    /// Plain scenario reward of `player` given both vehicles.
    pub fn vehicle_reward(&self, player: Player, ego: &VehicleState, human: &VehicleState) -> f64 {
        let own = match player {
            Player::Ego => ego,
            Player::Env => human,
        };
        let [x, y] = self.world_position(player, own);
        match self.config.kind {
            // R¹ = s^{1,x}, R² = s^{2,y}
            ScenarioKind::Intersection => match player {
                Player::Ego => x,
                Player::Env => y,
            },
            ScenarioKind::Overtaking => 8.0 * x - y,
            ScenarioKind::Merging => x + 10.0 * y,
        }
    }

    /// The symmetric no-collision clause of the safe set.
    pub fn separated(&self, ego: &VehicleState, human: &VehicleState) -> bool {
        let c = &self.config;
        let p1 = self.world_position(Player::Ego, ego);
        let p2 = self.world_position(Player::Env, human);
        match c.kind {
            ScenarioKind::Intersection => {
                let gap = c.intersection_gap * c.car_length - GRID_TOL;
                // Relative position r(θ) = r - θ w, θ ∈ [0, Δt] steps back in time.
                let r = [p1[0] - p2[0], p1[1] - p2[1]];
                let mut theta = 0.0;
                if c.swept_separation {
                    let w = [ego.v, -human.v];
                    let ww = w[0] * w[0] + w[1] * w[1];
                    if ww > 0.0 {
                        theta = ((r[0] * w[0] + r[1] * w[1]) / ww).clamp(0.0, c.dt);
                    }
                }
                libm::hypot(r[0] - theta * ego.v, r[1] + theta * human.v) >= gap
            }
            ScenarioKind::Overtaking | ScenarioKind::Merging => {
                (p1[0] - p2[0]).abs() >= c.longitudinal_gap * c.car_length - GRID_TOL
                    || (p1[1] - p2[1]).abs() >= c.lane_width - GRID_TOL
            }
        }
    }

    /// The ego-only road-section clause of the merging safe set: right lane
    /// before the section, either lane inside it, left lane after it.
    pub fn in_merge_section(&self, ego: &VehicleState) -> bool {
        let c = &self.config;
        let lanes = c.lane_centers();
        let x = ego.s_x;
        let in_lane = |i: usize| (ego.s_y - lanes[i]).abs() < GRID_TOL;
        (x <= c.merge_start && in_lane(0)) || (c.merge_start < x && x <= c.merge_end) || (x > c.merge_end && in_lane(1))
    }

    /// Membership in the safe set Ω.
    pub fn omega(&self, ego: &VehicleState, human: &VehicleState) -> bool {
        match self.config.kind {
            ScenarioKind::Merging => self.separated(ego, human) && self.in_merge_section(ego),
            _ => self.separated(ego, human),
        }
    }

    /// Scenario-specific completion: both past the conflict zone
    /// (intersection), ego back in the travel lane ahead of the human
    /// (overtaking), or ego in the target lane (merging).
    pub fn is_complete(&self, state: usize) -> bool {
        let (e, h) = self.decode(state);
        let c = &self.config;
        match c.kind {
            ScenarioKind::Intersection => {
                let clear = c.intersection_gap * c.car_length;
                e.s_x >= clear && h.s_x >= clear
            }
            ScenarioKind::Overtaking => e.s_y == c.lane_centers()[0] && e.s_x > h.s_x,
            ScenarioKind::Merging => e.s_y == c.lane_centers()[1],
        }
    }

    fn penalty(&self, player: Player, ego: &VehicleState, human: &VehicleState) -> f64 {
        let unsafe_for_player = match player {
            Player::Ego => !self.omega(ego, human),
            Player::Env => !self.separated(ego, human),
        };
        if unsafe_for_player {
            self.config.collision_penalty
        } else {
            0.0
        }
    }

    fn shaped_reward_at(&self, player: Player, ego: usize, human: usize) -> f64 {
        let (e, h) = (&self.ego.states[ego], &self.human.states[human]);
        self.vehicle_reward(player, e, h) - self.penalty(player, e, h)
    }

    /// The game seen by level-k models: rewards carry the collision penalty.
    pub fn shaped(&self) -> ShapedScenario<'_> {
        ShapedScenario(self)
    }

    /// Level-0 Q-values: `player` plans alone over the horizon with the other
    /// vehicle frozen at its current position.
    pub fn level0_values(&self, player: Player, state: usize) -> Vec<f64> {
        let (e, h) = self.split(state);
        let (own, own_idx) = match player {
            Player::Ego => (&self.ego, e),
            Player::Env => (&self.human, h),
        };
        let n = own.actions.len();
        let horizon = self.config.horizon.max(1);
        let discount = self.config.discount;
        let value_of = |idx: usize| match player {
            Player::Ego => self.shaped_reward_at(player, idx, h),
            Player::Env => self.shaped_reward_at(player, e, idx),
        };
        // Best value of the remaining `depth` steps from `idx`.
        fn best(own: &VehicleTables, idx: usize, depth: usize, discount: f64, value_of: &dyn Fn(usize) -> f64) -> f64 {
            if depth == 0 {
                return 0.0;
            }
            (0..own.actions.len())
                .map(|a| {
                    let next = own.step(idx, a);
                    value_of(next) + discount * best(own, next, depth - 1, discount, value_of)
                })
                .fold(f64::NEG_INFINITY, f64::max)
        }
        (0..n)
            .map(|a| {
                let next = own.step(own_idx, a);
                value_of(next) + discount * best(own, next, horizon - 1, discount, &value_of)
            })
            .collect()
    }

    fn level0_row_for(&self, player: Player, state: usize) -> Vec<f64> {
        let q = self.level0_values(player, state);
        if self.config.softmax_level0 {
            return softmax_row(&q, self.config.temperature);
        }
        let tables = match player {
            Player::Ego => &self.ego,
            Player::Env => &self.human,
        };
        let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tied = |a: usize| q[a] >= max - 1e-9;
        let choice = tables
            .neutral_action()
            .filter(|&a| tied(a))
            .unwrap_or_else(|| (0..q.len()).find(|&a| tied(a)).unwrap_or(0));
        let mut row = alloc::vec![0.0; q.len()];
        row[choice] = 1.0;
        row
    }
}

impl Game for Scenario {
    fn num_states(&self) -> usize {
        self.ego.grid.len() * self.human.grid.len()
    }

    fn num_actions(&self, player: Player) -> usize {
        match player {
            Player::Ego => self.ego.actions.len(),
            Player::Env => self.human.actions.len(),
        }
    }

    fn transition(&self, state: usize, ego: usize, env: usize) -> usize {
        let (e, h) = self.split(state);
        self.join(self.ego.step(e, ego), self.human.step(h, env))
    }

    fn reward(&self, player: Player, state: usize) -> f64 {
        let (e, h) = self.split(state);
        self.vehicle_reward(player, &self.ego.states[e], &self.human.states[h])
    }

    fn is_safe(&self, _time: usize, state: usize) -> bool {
        let (e, h) = self.split(state);
        self.omega(&self.ego.states[e], &self.human.states[h])
    }

    fn discount(&self) -> f64 {
        self.config.discount
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }
}

impl LevelZero for Scenario {
    fn level0_row(&self, player: Player, state: usize) -> Result<Vec<f64>> {
        crate::game::check_state(self, state)?;
        Ok(self.level0_row_for(player, state))
    }
}

/// [`Scenario`] with the collision penalty folded into the rewards.
#[derive(Debug, Clone, Copy)]
pub struct ShapedScenario<'a>(pub &'a Scenario);

impl Game for ShapedScenario<'_> {
    fn num_states(&self) -> usize {
        self.0.num_states()
    }

    fn num_actions(&self, player: Player) -> usize {
        self.0.num_actions(player)
    }

    fn transition(&self, state: usize, ego: usize, env: usize) -> usize {
        self.0.transition(state, ego, env)
    }

    fn reward(&self, player: Player, state: usize) -> f64 {
        let (e, h) = self.0.split(state);
        self.0.shaped_reward_at(player, e, h)
    }

    fn is_safe(&self, time: usize, state: usize) -> bool {
        self.0.is_safe(time, state)
    }

    fn discount(&self) -> f64 {
        self.0.discount()
    }

    fn horizon(&self) -> usize {
        self.0.horizon()
    }
}

/// Full level-0 table of `player` over every joint state.
pub fn level0_policy(scenario: &Scenario, player: Player) -> PolicyTable {
    let mut table = PolicyTable::new(0, player, scenario.num_actions(player));
    for x in 0..scenario.num_states() {
        table.insert_unchecked(x, scenario.level0_row_for(player, x));
    }
    table
}
