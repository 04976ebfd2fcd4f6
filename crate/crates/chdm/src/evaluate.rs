//! Seed batches and their aggregate statistics.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

use crate::output::{summarize, EpisodeSummary};
use crate::sim::{EpisodeLog, Simulator};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedSeed {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        Some(Stats {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelReport {
    pub human_level: usize,
    pub episodes: usize,
    pub failed: Vec<FailedSeed>,
    pub outcomes: BTreeMap<String, usize>,
    /// Planning windows `x_{t+1..t+N}` observed over all episodes.
    pub windows: usize,
    pub window_violations: usize,
    pub window_violation_rate: f64,
    pub episode_violation_rate: f64,
    pub mean_posterior_on_true_level: f64,
    /// Share of episodes ending with posterior mass ≥ 0.9 on the true level.
    pub posterior_at_least_0_9: f64,
    pub completion_step: Option<Stats>,
    pub merge_position: Option<Stats>,
    pub final_ego_x: Option<Stats>,
    pub planning_ms: Option<Stats>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub scenario: String,
    pub epsilon: f64,
    pub seeds: Vec<u64>,
    pub levels: Vec<LevelReport>,
    /// Violated planning windows over all levels and seeds.
    pub window_violation_rate: f64,
    pub episodes: Vec<EpisodeSummary>,
}

/// Runs `seeds` against a level-`level` human, spreading them over `jobs`
/// threads. Results come back in seed order and do not depend on `jobs`.
pub fn run_batch(base: &Simulator, level: usize, seeds: &[u64], jobs: usize) -> Vec<(u64, Result<EpisodeLog, Error>)> {
    let jobs = jobs.clamp(1, seeds.len().max(1));
    let mut results: Vec<(usize, u64, Result<EpisodeLog, Error>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|w| {
                let mut sim = base.clone();
                scope.spawn(move || {
                    seeds
                        .iter()
                        .enumerate()
                        .skip(w)
                        .step_by(jobs)
                        .map(|(i, &seed)| (i, seed, sim.run_episode(level, seed)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("episode worker panicked"))
            .collect()
    });
    results.sort_by_key(|(i, _, _)| *i);
    results.into_iter().map(|(_, seed, r)| (seed, r)).collect()
}

pub fn evaluate(base: &Simulator, levels: &[usize], seeds: &[u64], jobs: usize) -> EvaluationReport {
    let c = base.scenario().config();
    let mut reports = Vec::new();
    let mut episodes = Vec::new();
    let (mut all_windows, mut all_violations) = (0, 0);
    for &level in levels {
        let started = Instant::now();
        let batch = run_batch(base, level, seeds, jobs);
        let wall_seconds = started.elapsed().as_secs_f64();
        let mut failed = Vec::new();
        let mut logs = Vec::new();
        for (seed, result) in batch {
            match result {
                Ok(log) => logs.push(log),
                Err(e) => failed.push(FailedSeed {
                    seed,
                    error: e.to_string(),
                }),
            }
        }
        let summaries: Vec<EpisodeSummary> = logs.iter().map(summarize).collect();
        let mut outcomes = BTreeMap::new();
        for s in &summaries {
            *outcomes.entry(s.outcome.clone()).or_insert(0) += 1;
        }
        let (mut windows, mut violations) = (0, 0);
        for log in &logs {
            let (w, v) = log.window_violations(c.horizon);
            windows += w;
            violations += v;
        }
        all_windows += windows;
        all_violations += violations;
        let n = summaries.len();
        let rate = |count: usize, total: usize| if total == 0 { 0.0 } else { count as f64 / total as f64 };
        let collect = |f: &dyn Fn(&EpisodeSummary) -> Option<f64>| Stats::of(&summaries.iter().filter_map(f).collect::<Vec<_>>());
        let planning: Vec<f64> = logs.iter().flat_map(|l| l.records.iter().skip(1).map(|r| r.wall_ms)).collect();
        reports.push(LevelReport {
            human_level: level,
            episodes: n,
            failed,
            outcomes,
            windows,
            window_violations: violations,
            window_violation_rate: rate(violations, windows),
            episode_violation_rate: rate(summaries.iter().filter(|s| s.violation).count(), n),
            mean_posterior_on_true_level: if n == 0 {
                0.0
            } else {
                summaries.iter().map(|s| s.posterior_on_true_level).sum::<f64>() / n as f64
            },
            posterior_at_least_0_9: rate(summaries.iter().filter(|s| s.posterior_on_true_level >= 0.9).count(), n),
            completion_step: collect(&|s| s.completion_step.map(|v| v as f64)),
            merge_position: collect(&|s| s.merge_position),
            final_ego_x: collect(&|s| Some(s.final_ego_x)),
            planning_ms: Stats::of(&planning),
            wall_seconds,
        });
        episodes.extend(summaries);
    }
    EvaluationReport {
        scenario: c.kind.name().to_string(),
        epsilon: c.epsilon,
        seeds: seeds.to_vec(),
        levels: reports,
        window_violation_rate: if all_windows == 0 {
            0.0
        } else {
            all_violations as f64 / all_windows as f64
        },
        episodes,
    }
}
