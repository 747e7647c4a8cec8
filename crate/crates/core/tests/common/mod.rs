//! Shared fixtures for the integration suites: the team game's estimated
//! best-reply chain, raw worked chains, and an independent reference
//! implementation of decentralized tabular learning on finite games.

use std::sync::OnceLock;

use decq::dynamics::{
    build_best_reply_graph_mc, build_policy_chain, BestReplyGraph, PolicyChain,
};
use decq::game::{build_team_game, FiniteGame, TeamGameParams};
use decq::grid::Grid;
use decq::learning::UpdateRule;
use decq::quantize::Quantizer;
use decq::rng::SimRng;
use decq::Scalar;
use rand::Rng;
use rand::SeedableRng;

pub const TEAM_RHO: f64 = 0.1;
pub const TEAM_DELTA: f64 = 0.01;

pub struct TeamChainFixture {
    pub graph: BestReplyGraph<f64>,
    pub rules: Vec<UpdateRule<f64>>,
    pub chain: PolicyChain<f64>,
    /// Joint index of the anti-cooperating start (agent 0 high everywhere,
    /// agent 1 low everywhere).
    pub anticoop: u64,
    pub build_seconds: f64,
}

static TEAM_CHAIN: OnceLock<TeamChainFixture> = OnceLock::new();

/// The team game's subjective policy-update chain under the learner
/// defaults, built once per test binary.
pub fn team_chain() -> &'static TeamChainFixture {
    TEAM_CHAIN.get_or_init(|| {
        let start = std::time::Instant::now();
        let game = build_team_game(&TeamGameParams::<f64>::default()).unwrap();
        let q5 = Quantizer::uniform(0.0, 1.0, 5).unwrap();
        let graph = build_best_reply_graph_mc(
            &game,
            &[q5.clone(), q5],
            &[TEAM_RHO, TEAM_RHO],
            &[TEAM_DELTA, TEAM_DELTA],
            4000,
            1e-10,
            100_000,
            0xD_EC_0,
        )
        .unwrap();
        let rules = vec![
            UpdateRule::new(0.25, 0.0).unwrap(),
            UpdateRule::new(0.75, 0.0).unwrap(),
        ];
        let chain = build_policy_chain(&graph, &rules).unwrap();
        let anticoop = graph.space.encode(&[31, 0]);
        TeamChainFixture {
            graph,
            rules,
            chain,
            anticoop,
            build_seconds: start.elapsed().as_secs_f64(),
        }
    })
}

/// The two worked small chains plus their exact absorption vectors and
/// expected steps, as `(name, matrix, a0, absorption, steps)`.
pub type RawChainCase = (
    &'static str,
    Grid<f64>,
    Vec<f64>,
    Vec<f64>,
    Vec<f64>,
);

pub fn worked_chains() -> Vec<RawChainCase> {
    vec![
        (
            // One transient state flipping a fair coin against absorption.
            "geometric",
            Grid::from_rows(vec![vec![0.5, 0.5], vec![0.0, 1.0]]),
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![2.0],
        ),
        (
            // Two transient states, absorption split 0.625 / 0.375 from s1.
            "two-hop",
            Grid::from_rows(vec![
                vec![0.0, 0.5, 0.5, 0.0],
                vec![0.0, 0.0, 0.25, 0.75],
                vec![0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
            ]),
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.625, 0.375],
            vec![1.5, 1.0],
        ),
    ]
}

/// Learner parameters for the reference implementation below; deliberately
/// plain data so the mirror shares nothing with the crate's learner types.
#[derive(Clone, Copy)]
pub struct MirrorLearner {
    pub rho: f64,
    pub delta: f64,
    pub beta: f64,
    pub q_reset: f64,
    pub inertia: f64,
    pub explore: f64,
}

pub struct MirrorOutcome {
    /// Per phase (including the initial entry), per agent, the action list.
    pub policy_trajectory: Vec<Vec<Vec<usize>>>,
    /// End-of-phase value tables (before reset): per phase, per agent,
    /// row-major `state * n_actions + action`.
    pub q_snapshots: Vec<Vec<Vec<f64>>>,
}

/// Independent reference implementation of the decentralized learning loop
/// directly on a finite game's tables (integer states, no quantization, no
/// embedding). Mirrors the documented draw protocol: per step, one uniform
/// per agent for the perturbation test (plus one more when perturbing),
/// then one uniform for the kernel inverse-CDF; at phase end, per agent, a
/// branch draw only when the baseline is not admissible, then one draw per
/// state on the redraw branches.
pub fn run_direct_finite(
    game: &FiniteGame<f64>,
    learners: &[MirrorLearner],
    initial: &[Vec<usize>],
    phase_len: usize,
    phases: usize,
    x0: usize,
    seed: u64,
) -> MirrorOutcome {
    let n_agents = game.n_agents();
    let n_states = game.n_states();
    let counts = game.action_counts().to_vec();
    let mut rng = SimRng::seed_from_u64(seed);
    let draw = |rng: &mut SimRng| rng.gen::<f64>();
    let draw_index = |rng: &mut SimRng, n: usize| -> usize {
        let u = rng.gen::<f64>();
        ((u * n as f64) as usize).min(n - 1)
    };

    let mut policies: Vec<Vec<usize>> = initial.to_vec();
    let mut q: Vec<Vec<f64>> = (0..n_agents)
        .map(|a| vec![learners[a].q_reset; n_states * counts[a]])
        .collect();
    let mut visits: Vec<Vec<u64>> = (0..n_agents)
        .map(|a| vec![0u64; n_states * counts[a]])
        .collect();
    let mut state = x0;
    let mut policy_trajectory = vec![policies.clone()];
    let mut q_snapshots = Vec::new();

    for _ in 0..phases {
        for _ in 0..phase_len {
            let mut joint = vec![0usize; n_agents];
            for agent in 0..n_agents {
                let perturb = draw(&mut rng) < learners[agent].rho;
                joint[agent] = if perturb {
                    draw_index(&mut rng, counts[agent])
                } else {
                    policies[agent][state]
                };
            }
            let joint_idx = game.joint_index(&joint);
            let costs: Vec<f64> = (0..n_agents)
                .map(|a| game.cost(a, state, joint_idx))
                .collect();
            let w = draw(&mut rng);
            let row = game.kernel_row(state, joint_idx);
            let mut acc = 0.0;
            let mut next = n_states - 1;
            for (j, &p) in row.iter().enumerate() {
                acc += p;
                if w < acc {
                    next = j;
                    break;
                }
            }
            for agent in 0..n_agents {
                let cell = state * counts[agent] + joint[agent];
                visits[agent][cell] += 1;
                let alpha = 1.0 / (1.0 + visits[agent][cell] as f64);
                let min_next = (0..counts[agent])
                    .map(|u| q[agent][next * counts[agent] + u])
                    .fold(f64::INFINITY, f64::min);
                let target = costs[agent] + learners[agent].beta * min_next;
                q[agent][cell] = (1.0 - alpha) * q[agent][cell] + alpha * target;
            }
            state = next;
        }
        q_snapshots.push(q.clone());
        for agent in 0..n_agents {
            let learner = &learners[agent];
            let admissible: Vec<Vec<usize>> = (0..n_states)
                .map(|s| {
                    let row: Vec<f64> = (0..counts[agent])
                        .map(|u| q[agent][s * counts[agent] + u])
                        .collect();
                    let min = row.iter().copied().fold(f64::INFINITY, f64::min);
                    (0..counts[agent])
                        .filter(|&u| row[u] <= min + learner.delta)
                        .collect()
                })
                .collect();
            let current_ok = (0..n_states)
                .all(|s| admissible[s].contains(&policies[agent][s]));
            if !current_ok {
                let branch = draw(&mut rng);
                if branch < learner.inertia {
                    // keep
                } else if branch < learner.inertia + learner.explore {
                    for s in 0..n_states {
                        policies[agent][s] = draw_index(&mut rng, counts[agent]);
                    }
                } else {
                    for s in 0..n_states {
                        let set = &admissible[s];
                        policies[agent][s] = set[draw_index(&mut rng, set.len())];
                    }
                }
            }
            q[agent] = vec![learner.q_reset; n_states * counts[agent]];
            visits[agent] = vec![0; n_states * counts[agent]];
        }
        policy_trajectory.push(policies.clone());
    }
    MirrorOutcome {
        policy_trajectory,
        q_snapshots,
    }
}

/// Sup-norm distance helper for plain slices.
pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |acc, (&x, &y)| acc.max((x - y).abs()))
}

/// Sample standard error of a mean.
pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Ensures `Scalar` stays instantiable at both precisions.
pub fn assert_scalar_impl<T: Scalar>() {}
