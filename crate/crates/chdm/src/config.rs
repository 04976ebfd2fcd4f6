//! TOML configuration files.
//!
//! A file names its `scenario` and `schema_version`; every other key is
//! optional and falls back to the scenario's default. Unknown keys are
//! rejected.

use std::path::Path;

use chdm_core::planner::{GradientMethod, SolverOptions};
use chdm_core::traffic::{ScenarioConfig, ScenarioKind, VehicleConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::sim::{OnInfeasible, SimSettings};
use crate::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSection {
    pub s0: f64,
    pub lane0: usize,
    pub v0: f64,
    pub v_max: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub lane_change: bool,
    pub lanes: Vec<usize>,
}

impl From<&VehicleConfig> for VehicleSection {
    fn from(v: &VehicleConfig) -> Self {
        VehicleSection {
            s0: v.s0,
            lane0: v.lane0,
            v0: v.v0,
            v_max: v.v_max,
            s_min: v.s_min,
            s_max: v.s_max,
            lane_change: v.lane_change,
            lanes: v.lanes.clone(),
        }
    }
}

impl From<&VehicleSection> for VehicleConfig {
    fn from(v: &VehicleSection) -> Self {
        VehicleConfig {
            s0: v.s0,
            lane0: v.lane0,
            v0: v.v0,
            v_max: v.v_max,
            s_min: v.s_min,
            s_max: v.s_max,
            lane_change: v.lane_change,
            lanes: v.lanes.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientChoice {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub max_iterations: usize,
    pub penalty_base: f64,
    pub penalty_rounds: usize,
    pub gradient: GradientChoice,
    pub fd_step: f64,
    pub max_vertices: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let o = SolverOptions::default();
        SolverSection {
            max_iterations: o.max_iterations,
            penalty_base: o.penalty_base,
            penalty_rounds: o.penalty_rounds,
            gradient: match o.gradient {
                GradientMethod::Analytic => GradientChoice::Analytic,
                GradientMethod::FiniteDifference => GradientChoice::FiniteDifference,
            },
            fd_step: o.fd_step,
            max_vertices: o.max_vertices,
        }
    }
}

/// The complete, effective configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub schema_version: u32,
    pub scenario: String,
    pub dt: f64,
    pub car_length: f64,
    pub lane_width: f64,
    pub horizon: usize,
    pub epsilon: f64,
    pub discount: f64,
    pub accelerations: Vec<f64>,
    pub position_resolution: f64,
    pub speed_resolution: f64,
    pub num_lanes: usize,
    pub k_max: usize,
    pub levels: Vec<usize>,
    pub level_prior: Vec<f64>,
    pub temperature: f64,
    pub collision_penalty: f64,
    pub softmax_level0: bool,
    pub intersection_gap: f64,
    pub longitudinal_gap: f64,
    pub swept_separation: bool,
    pub merge_start: f64,
    pub merge_end: f64,
    pub seed: u64,
    pub max_steps: usize,
    pub on_infeasible: OnInfeasible,
    pub likelihood_floor: f64,
    /// Depth around the initial state covered by `chdm build`.
    pub cache_depth: usize,
    pub ego: VehicleSection,
    pub human: VehicleSection,
    pub solver: SolverSection,
}

impl FileConfig {
    pub fn defaults(kind: ScenarioKind) -> Self {
        let c = ScenarioConfig::default_for(kind);
        let sim = SimSettings::default();
        FileConfig {
            schema_version: SCHEMA_VERSION,
            scenario: kind.name().to_string(),
            dt: c.dt,
            car_length: c.car_length,
            lane_width: c.lane_width,
            horizon: c.horizon,
            epsilon: c.epsilon,
            discount: c.discount,
            accelerations: c.accelerations.clone(),
            position_resolution: c.position_resolution,
            speed_resolution: c.speed_resolution,
            num_lanes: c.num_lanes,
            k_max: c.k_max,
            levels: c.levels.clone(),
            level_prior: c.level_prior.clone(),
            temperature: c.temperature,
            collision_penalty: c.collision_penalty,
            softmax_level0: c.softmax_level0,
            intersection_gap: c.intersection_gap,
            longitudinal_gap: c.longitudinal_gap,
            swept_separation: c.swept_separation,
            merge_start: c.merge_start,
            merge_end: c.merge_end,
            seed: c.seed,
            max_steps: sim.max_steps,
            on_infeasible: sim.on_infeasible,
            likelihood_floor: sim.likelihood_floor,
            cache_depth: c.horizon,
            ego: (&c.ego).into(),
            human: (&c.human).into(),
            solver: SolverSection::default(),
        }
    }

    pub fn kind(&self) -> Result<ScenarioKind, Error> {
        ScenarioKind::parse(&self.scenario).ok_or_else(|| Error::Config(format!("unknown scenario {:?}", self.scenario)))
    }

    pub fn scenario_config(&self) -> Result<ScenarioConfig, Error> {
        Ok(ScenarioConfig {
            kind: self.kind()?,
            dt: self.dt,
            car_length: self.car_length,
            lane_width: self.lane_width,
            horizon: self.horizon,
            epsilon: self.epsilon,
            discount: self.discount,
            accelerations: self.accelerations.clone(),
            position_resolution: self.position_resolution,
            speed_resolution: self.speed_resolution,
            num_lanes: self.num_lanes,
            ego: (&self.ego).into(),
            human: (&self.human).into(),
            k_max: self.k_max,
            levels: self.levels.clone(),
            level_prior: self.level_prior.clone(),
            temperature: self.temperature,
            collision_penalty: self.collision_penalty,
            softmax_level0: self.softmax_level0,
            intersection_gap: self.intersection_gap,
            longitudinal_gap: self.longitudinal_gap,
            swept_separation: self.swept_separation,
            merge_start: self.merge_start,
            merge_end: self.merge_end,
            seed: self.seed,
        })
    }

    pub fn sim_settings(&self) -> Result<SimSettings, Error> {
        if !(self.likelihood_floor > 0.0 && self.likelihood_floor < 1.0) {
            return Err(Error::Config("likelihood_floor out of (0,1)".into()));
        }
        let s = &self.solver;
        if !(s.penalty_base > 1.0) || !(s.fd_step > 0.0) {
            return Err(Error::Config("solver penalty_base must exceed 1 and fd_step be positive".into()));
        }
        Ok(SimSettings {
            max_steps: self.max_steps,
            on_infeasible: self.on_infeasible,
            likelihood_floor: self.likelihood_floor,
            solver: SolverOptions {
                max_iterations: s.max_iterations,
                penalty_base: s.penalty_base,
                penalty_rounds: s.penalty_rounds,
                gradient: match s.gradient {
                    GradientChoice::Analytic => GradientMethod::Analytic,
                    GradientChoice::FiniteDifference => GradientMethod::FiniteDifference,
                },
                fd_step: s.fd_step,
                max_vertices: s.max_vertices,
            },
            ..SimSettings::default()
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical serialization; identifies cache contents.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_toml().as_bytes()).into()
    }

    pub fn parse(text: &str) -> Result<Self, Error> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        match user.get("schema_version") {
            None => return Err(Error::Config("missing schema_version".into())),
            Some(toml::Value::Integer(v)) if *v == SCHEMA_VERSION as i64 => {}
            Some(v) => {
                return Err(Error::Config(format!(
                    "unsupported schema_version {v}; expected {SCHEMA_VERSION}"
                )))
            }
        }
        let kind = match user.get("scenario") {
            Some(toml::Value::String(name)) => {
                ScenarioKind::parse(name).ok_or_else(|| Error::Config(format!("unknown scenario {name:?}")))?
            }
            _ => return Err(Error::Config("missing scenario name".into())),
        };
        let mut merged = toml::Table::try_from(FileConfig::defaults(kind)).expect("defaults serialize");
        merge(&mut merged, user);
        toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        FileConfig::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// Overlays `user` on `base`, recursing into tables.
fn merge(base: &mut toml::Table, user: toml::Table) {
    for (key, value) in user {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}
