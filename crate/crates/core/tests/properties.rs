//! Invariants checked over randomly generated games.

mod common;

use chdm_core::game::{step, validate_game, Game, Player, SafeSets};
use chdm_core::hierarchy::{build_hierarchy, softmax_row, Hierarchy, Level0Tables};
use chdm_core::inference::{bayes_update, init_belief, predict, Belief, SparseDist};
use chdm_core::planner::{
    analytic_gradient, constraint_probability, expected_reward, finite_difference_gradient, optimize, vertex_sequences,
    DecisionProfile, PlanningProblem, Planner,
};
use chdm_core::{simplex, GameSpec, PolicyTable, SolverOptions};
use common::{random_dist, random_game, random_instance, random_policy, rng, Instance};
use proptest::prelude::*;
use rand::Rng;

fn problem(
    inst: &Instance,
    epsilon: f64,
) -> PlanningProblem<'_, impl Fn(usize) -> f64 + '_, impl Fn(usize, usize) -> bool + '_> {
    PlanningProblem {
        kernel: &inst.kernel,
        reward: inst.reward(),
        safe: inst.safe(),
        belief: &inst.belief,
        epsilon,
        discount: inst.game.discount,
        horizon: inst.horizon(),
        time: inst.time,
    }
}

fn with_stage(profile: &DecisionProfile, tau: usize, gamma: Vec<f64>) -> DecisionProfile {
    let mut stages = profile.stages().to_vec();
    stages[tau] = gamma;
    DecisionProfile::new(stages).unwrap()
}

fn reward_of(inst: &Instance, profile: &DecisionProfile) -> f64 {
    expected_reward(&inst.kernel, inst.reward(), &inst.belief, profile, inst.game.discount).unwrap()
}

fn probability_of(inst: &Instance, profile: &DecisionProfile) -> f64 {
    constraint_probability(&inst.kernel, inst.safe(), &inst.belief, profile, inst.time).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn softmax_rows_are_distributions(q in prop::collection::vec(-60.0f64..60.0, 1..6), c in -500.0f64..500.0) {
        let row = softmax_row(&q, 1.0);
        prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
        let shifted: Vec<f64> = q.iter().map(|x| x + c).collect();
        for (a, b) in row.iter().zip(softmax_row(&shifted, 1.0)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if q.iter().filter(|&&x| x == max).count() == 1 {
            let arg_q = q.iter().position(|&x| x == max).unwrap();
            let pmax = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(row.iter().position(|&p| p == pmax).unwrap(), arg_q);
        }
    }

    #[test]
    fn kernel_rows_are_stochastic_and_keep_the_level(seed in any::<u64>()) {
        let inst = random_instance(&mut rng(seed));
        let k = inst.num_levels;
        for source in 0..inst.kernel.dim() {
            for u in 0..inst.game.num_ego_actions {
                let row = inst.kernel.row(source, u).unwrap();
                prop_assert!((row.iter().map(|e| e.1).sum::<f64>() - 1.0).abs() <= 1e-9);
                prop_assert!(row.iter().all(|&(t, _)| t % k == source % k));
            }
        }
    }

    #[test]
    fn predict_is_linear_and_preserves_mass(seed in any::<u64>(), a in 0.0f64..1.0) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r);
        let other = random_instance_like(&inst, &mut r);
        let gamma = random_dist(&mut r, inst.game.num_ego_actions, true);
        let p1 = predict(&inst.kernel, &inst.belief, &gamma).unwrap();
        let p2 = predict(&inst.kernel, &other, &gamma).unwrap();
        prop_assert!((p1.total() - 1.0).abs() <= 1e-9);
        let mix = SparseDist::new(
            inst.kernel.dim(),
            inst.belief.iter().map(|(i, p)| (i, a * p)).chain(other.iter().map(|(i, p)| (i, (1.0 - a) * p))),
        )
        .unwrap();
        let pm = predict(&inst.kernel, &mix, &gamma).unwrap();
        for i in 0..inst.kernel.dim() {
            prop_assert!((pm.get(i) - (a * p1.get(i) + (1.0 - a) * p2.get(i))).abs() <= 1e-12);
        }
    }

    #[test]
    fn posterior_sits_on_the_observation(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r);
        let k = inst.num_levels;
        let prior = Belief::new(inst.belief.clone(), k, inst.time).unwrap();
        let u = r.gen_range(0..inst.game.num_ego_actions);
        let next = predict(&inst.kernel, &inst.belief, &DecisionProfile::vertex(&[u], inst.game.num_ego_actions).stage(0).to_vec()).unwrap();
        let targets: Vec<usize> = next.iter().map(|(i, _)| i / k).collect();
        let y = targets[r.gen_range(0..targets.len())];
        let post = bayes_update(&inst.kernel, &prior, u, y).unwrap();
        prop_assert!((post.dist().total() - 1.0).abs() <= 1e-9);
        prop_assert!(post.dist().iter().all(|(i, _)| i / k == y));
        prop_assert_eq!(post.time(), inst.time + 1);
        // Level marginals follow the predicted masses at y.
        let masses: Vec<f64> = (0..k).map(|s| next.get(y * k + s)).collect();
        let total: f64 = masses.iter().sum();
        for (m, p) in masses.iter().zip(post.level_marginals()) {
            prop_assert!((m / total - p).abs() <= 1e-12);
        }
    }

    #[test]
    fn evaluators_are_multilinear(seed in any::<u64>(), alpha in 0.0f64..1.0) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r);
        let n1 = inst.game.num_ego_actions;
        let tau = r.gen_range(0..inst.horizon());
        let a = with_stage(&inst.profile, tau, random_dist(&mut r, n1, true));
        let b = with_stage(&inst.profile, tau, random_dist(&mut r, n1, true));
        let mixed: Vec<f64> = a.stage(tau).iter().zip(b.stage(tau)).map(|(x, y)| (1.0 - alpha) * x + alpha * y).collect();
        let m = with_stage(&inst.profile, tau, mixed);
        let line = |f: &dyn Fn(&DecisionProfile) -> f64| (1.0 - alpha) * f(&a) + alpha * f(&b);
        prop_assert!((reward_of(&inst, &m) - line(&|p| reward_of(&inst, p))).abs() <= 1e-10);
        prop_assert!((probability_of(&inst, &m) - line(&|p| probability_of(&inst, p))).abs() <= 1e-10);
    }

    #[test]
    fn constraint_probability_is_monotone_in_the_safe_sets(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut inst = random_instance(&mut r);
        let p = probability_of(&inst, &inst.profile);
        prop_assert!((0.0..=1.0).contains(&p));
        if let SafeSets::Schedule(masks) = &mut inst.game.safe_sets {
            for mask in masks.iter_mut() {
                for cell in mask.iter_mut() {
                    *cell |= r.gen_bool(0.3);
                }
            }
        }
        prop_assert!(probability_of(&inst, &inst.profile) >= p - 1e-12);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences(seed in any::<u64>()) {
        let inst = random_instance(&mut rng(seed));
        let pr = problem(&inst, 0.05);
        let exact = analytic_gradient(&pr, &inst.profile).unwrap();
        let fd = finite_difference_gradient(&pr, &inst.profile, 1e-5).unwrap();
        for (row_a, row_f) in exact.iter().zip(&fd) {
            for (&(ra, pa), &(rf, pf)) in row_a.iter().zip(row_f) {
                prop_assert!((ra - rf).abs() <= 1e-4, "reward {ra} vs {rf}");
                prop_assert!((pa - pf).abs() <= 1e-4, "probability {pa} vs {pf}");
            }
        }
    }

    #[test]
    fn optimizer_results_are_consistent(seed in any::<u64>(), eps_idx in 0usize..5) {
        let epsilon = [0.0, 0.01, 0.1, 0.5, 1.0][eps_idx];
        let inst = random_instance(&mut rng(seed));
        let pr = problem(&inst, epsilon);
        let plan = optimize(&pr, &SolverOptions::default()).unwrap();
        prop_assert_eq!(&plan, &optimize(&pr, &SolverOptions::default()).unwrap());
        prop_assert!((0.0..=1.0).contains(&plan.constraint_probability));
        prop_assert!((plan.expected_reward - reward_of(&inst, &plan.profile)).abs() <= 1e-9);
        prop_assert!((plan.constraint_probability - probability_of(&inst, &plan.profile)).abs() <= 1e-9);
        let n1 = inst.game.num_ego_actions;
        let vertices: Vec<(f64, f64)> = vertex_sequences(n1, inst.horizon())
            .map(|s| {
                let v = DecisionProfile::vertex(&s, n1);
                (reward_of(&inst, &v), probability_of(&inst, &v))
            })
            .collect();
        let best_feasible = vertices
            .iter()
            .filter(|v| v.1 >= 1.0 - epsilon)
            .map(|v| v.0)
            .fold(f64::NEG_INFINITY, f64::max);
        if plan.feasible {
            // Vertex sums may round a hair below an exactly attained threshold.
            prop_assert!(plan.constraint_probability >= 1.0 - epsilon - 1e-12, "{} < {}", plan.constraint_probability, 1.0 - epsilon);
            prop_assert!(plan.expected_reward >= best_feasible - 1e-9);
        } else {
            prop_assert!(best_feasible == f64::NEG_INFINITY);
            let best_p = vertices.iter().map(|v| v.1).fold(0.0, f64::max);
            prop_assert!(plan.constraint_probability >= best_p - 1e-9);
        }
    }

    #[test]
    fn hierarchy_is_deterministic_and_lazy_rows_match(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = random_game(&mut r, 8);
        let ego0 = random_policy(&mut r, 0, Player::Ego, g.num_states, g.num_ego_actions);
        let env0 = random_policy(&mut r, 0, Player::Env, g.num_states, g.num_env_actions);
        let full = build_hierarchy(&g, 3, &ego0, &env0).unwrap();
        prop_assert_eq!(&full, &build_hierarchy(&g, 3, &ego0, &env0).unwrap());
        for player in [Player::Ego, Player::Env] {
            for t in full.tables(player) {
                for (_, row) in t.iter() {
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                }
            }
        }
        let mut lazy = Hierarchy::new(3, g.num_ego_actions, g.num_env_actions, 1.0);
        let anchors = Level0Tables { ego: &ego0, env: &env0 };
        let player = if r.gen_bool(0.5) { Player::Ego } else { Player::Env };
        let level = r.gen_range(0..=3);
        let states: Vec<usize> = (0..3).map(|_| r.gen_range(0..g.num_states)).collect();
        lazy.ensure(&g, &anchors, player, level, &states).unwrap();
        for p in [Player::Ego, Player::Env] {
            for (k, table) in lazy.tables(p).iter().enumerate() {
                for (x, row) in table.iter() {
                    prop_assert_eq!(row, full.policy(p, k).unwrap().row(x).unwrap());
                }
            }
        }
        for &x in &states {
            prop_assert!(lazy.policy(player, level).unwrap().contains(x));
        }
    }

    #[test]
    fn step_is_total_on_valid_games(seed in any::<u64>()) {
        let g = random_game(&mut rng(seed), 10);
        prop_assert!(validate_game(&g).passed());
        for x in 0..g.num_states {
            for u in 0..g.num_ego_actions {
                for v in 0..g.num_env_actions {
                    let s = step(&g, x, u, v).unwrap();
                    prop_assert!(s.next < g.num_states);
                    prop_assert_eq!(s.ego_reward, g.reward(Player::Ego, s.next));
                }
            }
        }
    }
}

fn random_instance_like(inst: &Instance, r: &mut impl Rng) -> SparseDist {
    let dim = inst.kernel.dim();
    let w = random_dist(r, 3, false);
    SparseDist::new(dim, w.into_iter().map(|p| (r.gen_range(0..dim), p))).unwrap()
}

#[test]
fn sampling_matches_the_first_stage() {
    let probs = [0.25, 0.75];
    let mut r = rng(7);
    let n = 100_000;
    let ones = (0..n).filter(|_| simplex::sample(&probs, &mut r) == 1).count();
    assert!((ones as f64 / n as f64 - 0.75).abs() < 0.01);
    let draw = |seed| {
        let mut r = rng(seed);
        (0..50).map(|_| simplex::sample(&probs, &mut r)).collect::<Vec<_>>()
    };
    assert_eq!(draw(3), draw(3));
    assert_ne!(draw(3), draw(4));
}

#[test]
fn receding_horizon_step_executes_a_one_hot_plan() {
    // Action 1 reaches the only rewarding state and is always safe.
    let g = GameSpec::from_fn(3, 2, 1, |x, u, _| if x == 0 { 1 + u } else { x }, vec![0.0, 0.0, 1.0], vec![0.0; 3], 1.0, 1);
    let env = vec![PolicyTable::uniform(0, Player::Env, 3, 1)];
    let kernel = chdm_core::inference::build_kernel(&g, &env).unwrap();
    let belief = init_belief(3, 0, &[1.0]).unwrap();
    let planner = Planner {
        epsilon: 0.01,
        discount: 1.0,
        horizon: 1,
        options: SolverOptions::default(),
    };
    let mut r = rng(0);
    for _ in 0..20 {
        let (u, plan) = planner.receding_horizon_step(&kernel, |x| g.ego_reward[x], |_, _| true, &belief, &mut r).unwrap();
        assert_eq!(plan.profile.first(), &[0.0, 1.0]);
        assert_eq!(u, 1);
    }
}

#[test]
fn profiles_reject_unnormalized_stages() {
    assert!(DecisionProfile::new(vec![vec![0.5, 0.4]]).is_err());
    assert!(DecisionProfile::new(vec![vec![1.2, -0.2]]).is_err());
    assert!(DecisionProfile::new(vec![vec![0.25, 0.75], vec![1.0, 0.0]]).is_ok());
}

#[test]
fn validation_reports_bad_games() {
    let mut g = GameSpec::from_fn(2, 1, 1, |x, _, _| x, vec![0.0; 2], vec![0.0; 2], 1.0, 1);
    g.transitions[1] = 2;
    g.discount = 0.0;
    let report = validate_game(&g);
    let text: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
    assert!(text.iter().any(|t| t.contains("(1, 0, 0)")), "{text:?}");
    assert!(text.iter().any(|t| t.starts_with("discount out of (0,1]")), "{text:?}");
}
