//! Episode CSV, JSON summaries and SVG snapshots.

use std::fmt::Write as _;

use chdm_core::game::Player;
use chdm_core::traffic::{Scenario, ScenarioKind};
use serde::Serialize;

use crate::sim::{EpisodeLog, Outcome, StepRecord};

/// CSV header for an episode over the level set `levels`.
pub fn csv_header(levels: &[usize]) -> String {
    let mut h = String::from(
        "t,ego_x,ego_y,ego_v,human_x,human_y,human_v,ego_action,ego_accel,ego_lane_change,human_action,human_accel",
    );
    for k in levels {
        let _ = write!(h, ",p_level{k}");
    }
    h.push_str(",expected_reward,constraint_probability,feasible,fallback,floored_update,safe");
    h
}

fn opt<T>(v: Option<T>, f: impl FnOnce(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Fixed-precision CSV; identical inputs give identical bytes. Planning time
/// is left out because it is not reproducible.
pub fn episode_csv(scenario: &Scenario, log: &EpisodeLog) -> String {
    let mut out = csv_header(&log.levels);
    out.push('\n');
    for r in &log.records {
        let ego_a = r.ego_action.map(|u| scenario.ego_actions()[u]);
        let human_a = r.human_action.map(|u| scenario.human_actions()[u]);
        let _ = write!(
            out,
            "{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{},{},{},{},{}",
            r.t,
            r.ego.s_x,
            r.ego.s_y,
            r.ego.v,
            r.human.s_x,
            r.human.s_y,
            r.human.v,
            opt(r.ego_action, |u| u.to_string()),
            opt(ego_a, |a| format!("{:.3}", a.accel)),
            opt(ego_a, |a| flag(a.change_lane).to_string()),
            opt(r.human_action, |u| u.to_string()),
            opt(human_a, |a| format!("{:.3}", a.accel)),
        );
        for p in &r.posterior {
            let _ = write!(out, ",{p:.9}");
        }
        let _ = writeln!(
            out,
            ",{},{},{},{},{},{}",
            opt(r.expected_reward, |v| format!("{v:.6}")),
            opt(r.constraint_probability, |v| format!("{v:.9}")),
            opt(r.feasible, |b| flag(b).to_string()),
            flag(r.fallback),
            flag(r.floored_update),
            flag(r.safe),
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub scenario: String,
    pub human_level: usize,
    pub seed: u64,
    pub steps: usize,
    pub outcome: String,
    pub completion_step: Option<usize>,
    pub merge_position: Option<f64>,
    pub violation: bool,
    pub final_posterior: Vec<f64>,
    pub posterior_on_true_level: f64,
    pub final_ego_x: f64,
    pub fallback_steps: usize,
    pub floored_updates: usize,
    pub mean_planning_ms: f64,
    pub max_planning_ms: f64,
}

pub fn summarize(log: &EpisodeLog) -> EpisodeSummary {
    let planned: Vec<&StepRecord> = log.records.iter().skip(1).collect();
    let times: Vec<f64> = planned.iter().map(|r| r.wall_ms).collect();
    EpisodeSummary {
        scenario: log.scenario.name().to_string(),
        human_level: log.human_level,
        seed: log.seed,
        steps: log.len(),
        outcome: log.outcome.label().to_string(),
        completion_step: match log.outcome {
            Outcome::OvertakeCompleted { step } => Some(step),
            _ => None,
        },
        merge_position: match log.outcome {
            Outcome::MergedAhead { position } | Outcome::MergedBehind { position } => Some(position),
            _ => None,
        },
        violation: log.violation,
        final_posterior: log.final_posterior().to_vec(),
        posterior_on_true_level: log.posterior_on_true_level(),
        final_ego_x: log.records.last().expect("initial record").ego.s_x,
        fallback_steps: planned.iter().filter(|r| r.fallback).count(),
        floored_updates: planned.iter().filter(|r| r.floored_update).count(),
        mean_planning_ms: if times.is_empty() {
            0.0
        } else {
            times.iter().sum::<f64>() / times.len() as f64
        },
        max_planning_ms: times.iter().copied().fold(0.0, f64::max),
    }
}

const PX_PER_M: f64 = 6.0;

/// Top-down picture of one record: road surface, lane lines, the merging
/// section, both cars and the current posterior.
pub fn snapshot_svg(scenario: &Scenario, record: &StepRecord, levels: &[usize]) -> String {
    let c = scenario.config();
    let w = c.lane_width;
    let (x0, x1, y0, y1) = match c.kind {
        ScenarioKind::Intersection => (-40.0, 40.0, -40.0, 40.0),
        _ => {
            let lo = record.ego.s_x.min(record.human.s_x) - 30.0;
            let hi = record.ego.s_x.max(record.human.s_x) + 40.0;
            (lo, hi, -2.0, c.num_lanes as f64 * w + 2.0)
        }
    };
    let width = (x1 - x0) * PX_PER_M;
    let height = (y1 - y0) * PX_PER_M;
    // World y grows upwards; SVG y grows downwards.
    let px = |x: f64| (x - x0) * PX_PER_M;
    let py = |y: f64| (y1 - y) * PX_PER_M;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1}" height="{height:.1}" viewBox="0 0 {width:.1} {height:.1}">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#e8eedf"/>"##);
    match c.kind {
        ScenarioKind::Intersection => {
            let half = w;
            let _ = writeln!(
                s,
                r##"<rect x="0" y="{:.1}" width="{width:.1}" height="{:.1}" fill="#9a9a9a"/>"##,
                py(half),
                2.0 * half * PX_PER_M
            );
            let _ = writeln!(
                s,
                r##"<rect x="{:.1}" y="0" width="{:.1}" height="{height:.1}" fill="#9a9a9a"/>"##,
                px(-half),
                2.0 * half * PX_PER_M
            );
            let _ = writeln!(
                s,
                r##"<line x1="0" y1="{y:.1}" x2="{width:.1}" y2="{y:.1}" stroke="white" stroke-dasharray="8,8"/>"##,
                y = py(0.0)
            );
            let _ = writeln!(
                s,
                r##"<line x1="{x:.1}" y1="0" x2="{x:.1}" y2="{height:.1}" stroke="white" stroke-dasharray="8,8"/>"##,
                x = px(0.0)
            );
        }
        _ => {
            let top = c.num_lanes as f64 * w;
            if c.kind == ScenarioKind::Merging {
                let _ = writeln!(
                    s,
                    r##"<rect x="{:.1}" y="0" width="{:.1}" height="{height:.1}" fill="#f4e3b5"/>"##,
                    px(c.merge_start.max(x0)),
                    ((c.merge_end.min(x1) - c.merge_start.max(x0)).max(0.0)) * PX_PER_M
                );
            }
            let _ = writeln!(
                s,
                r##"<rect x="0" y="{:.1}" width="{width:.1}" height="{:.1}" fill="#9a9a9a" fill-opacity="0.9"/>"##,
                py(top),
                top * PX_PER_M
            );
            for i in 0..=c.num_lanes {
                let y = py(i as f64 * w);
                let dash = if i == 0 || i == c.num_lanes { "" } else { r#" stroke-dasharray="8,8""# };
                let _ = writeln!(
                    s,
                    r##"<line x1="0" y1="{y:.1}" x2="{width:.1}" y2="{y:.1}" stroke="white"{dash}/>"##
                );
            }
        }
    }
    for (player, vs, color) in [(Player::Ego, &record.ego, "#1f5fbf"), (Player::Env, &record.human, "#c0392b")] {
        let [cx, cy] = scenario.world_position(player, vs);
        let (lx, ly) = match (c.kind, player) {
            (ScenarioKind::Intersection, Player::Env) => (2.0, c.car_length),
            _ => (c.car_length, 2.0),
        };
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{color}" stroke="black"/>"#,
            px(cx - lx / 2.0),
            py(cy + ly / 2.0),
            lx * PX_PER_M,
            ly * PX_PER_M
        );
    }
    let belief: Vec<String> = levels
        .iter()
        .zip(&record.posterior)
        .map(|(k, p)| format!("P(level {k}) = {p:.3}"))
        .collect();
    let _ = writeln!(
        s,
        r#"<text x="8" y="16" font-family="monospace" font-size="13">t = {}  {}{}</text>"#,
        record.t,
        belief.join("  "),
        if record.safe { "" } else { "  UNSAFE" }
    );
    s.push_str("</svg>\n");
    s
}
