//! Finite-state games given by explicit tables, embedded as degenerate
//! "continuous" games over `{0, 1, ..., m-1} ⊂ [0, m-1]`.
//!
//! These serve as oracle cross-checks: with the identity quantizer the whole
//! quantized pipeline must reproduce the tables exactly, and environment
//! models against fixed opponents can be computed by exact enumeration
//! instead of sampling.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env_model::{FiniteEnvModel, ModelProvenance};
use crate::error::{CoreError, Result};
use crate::grid::Grid;
use crate::quantize::Quantizer;
use crate::scalar::Scalar;

use super::{GameSpec, NoisePrimitive, PerturbedPolicy};

/// A finite stochastic game: tables over states × joint actions.
///
/// Joint actions are indexed mixed-radix with agent 0 as the least
/// significant digit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteGame<T> {
    name: String,
    n_states: usize,
    action_counts: Vec<usize>,
    /// Per agent: `states × joint_actions` cost table.
    costs: Vec<Grid<T>>,
    /// `states · joint_actions` rows of next-state distributions.
    kernel: Grid<T>,
    discounts: Vec<T>,
}

impl<T: Scalar> FiniteGame<T> {
    pub fn new(
        name: impl Into<String>,
        n_states: usize,
        action_counts: Vec<usize>,
        costs: Vec<Grid<T>>,
        kernel: Grid<T>,
        discounts: Vec<T>,
    ) -> Result<Self> {
        if n_states == 0 {
            return Err(CoreError::invalid("finite game needs at least one state"));
        }
        if action_counts.is_empty() || action_counts.iter().any(|&c| c == 0) {
            return Err(CoreError::invalid("every agent needs actions"));
        }
        let n_joint: usize = action_counts.iter().product();
        let n = action_counts.len();
        if costs.len() != n || discounts.len() != n {
            return Err(CoreError::invalid("per-agent tables have wrong arity"));
        }
        for c in &costs {
            if c.rows() != n_states || c.cols() != n_joint {
                return Err(CoreError::invalid("cost table has wrong shape"));
            }
        }
        if kernel.rows() != n_states * n_joint || kernel.cols() != n_states {
            return Err(CoreError::invalid("kernel table has wrong shape"));
        }
        let mut kernel = kernel;
        for r in 0..kernel.rows() {
            let row = kernel.row_mut(r);
            if row.iter().any(|&p| p < T::zero()) {
                return Err(CoreError::invalid(format!(
                    "negative probability in kernel row {r}"
                )));
            }
            let sum: T = row.iter().copied().sum();
            if (sum - T::one()).abs() > T::from_f64_const(1e-9) {
                return Err(CoreError::invalid(format!("kernel row {r} sums to {sum}")));
            }
            for p in row.iter_mut() {
                *p = *p / sum;
            }
        }
        if discounts.iter().any(|&b| !(b >= T::zero() && b < T::one())) {
            return Err(CoreError::invalid("discounts must lie in [0, 1)"));
        }
        Ok(FiniteGame {
            name: name.into(),
            n_states,
            action_counts,
            costs,
            kernel,
            discounts,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_agents(&self) -> usize {
        self.action_counts.len()
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn n_joint_actions(&self) -> usize {
        self.action_counts.iter().product()
    }

    pub fn discounts(&self) -> &[T] {
        &self.discounts
    }

    pub fn cost(&self, agent: usize, state: usize, joint: usize) -> T {
        self.costs[agent][(state, joint)]
    }

    pub fn kernel_row(&self, state: usize, joint: usize) -> &[T] {
        self.kernel.row(state * self.n_joint_actions() + joint)
    }

    /// Mixed-radix joint action index, agent 0 least significant.
    pub fn joint_index(&self, actions: &[usize]) -> usize {
        debug_assert_eq!(actions.len(), self.n_agents());
        let mut idx = 0;
        for (a, &count) in actions.iter().zip(&self.action_counts).rev() {
            idx = idx * count + a;
        }
        idx
    }

    /// The quantizer with one cell per state.
    pub fn identity_quantizer(&self) -> Quantizer<T> {
        Quantizer::identity(self.n_states).expect("state count is positive")
    }

    /// Embeds the tables as a sampler-defined game on `[0, n_states-1]`.
    /// States are the integer points; the kernel consumes one uniform draw
    /// and inverts the next-state distribution.
    pub fn embed(&self) -> GameSpec<T> {
        let n_states = self.n_states;
        let n_joint = self.n_joint_actions();
        let action_counts = self.action_counts.clone();
        let action_sets: Vec<Vec<T>> = action_counts
            .iter()
            .map(|&c| (0..c).map(|a| T::from_usize(a).unwrap()).collect())
            .collect();
        let kernel_table = Arc::new(self.kernel.clone());
        let counts = action_counts.clone();
        let kernel = Arc::new(move |x: T, u: &[T], w: &[T]| {
            let state = round_state(x, n_states);
            let joint = joint_from_values(u, &counts);
            let row = kernel_table.row(state * n_joint + joint);
            let mut acc = T::zero();
            let mut next = n_states - 1;
            for (j, &p) in row.iter().enumerate() {
                acc = acc + p;
                if w[0] < acc {
                    next = j;
                    break;
                }
            }
            T::from_usize(next).unwrap()
        });
        let mut c_max = T::zero();
        let costs: Vec<Arc<dyn Fn(T, &[T]) -> T + Send + Sync>> = self
            .costs
            .iter()
            .map(|table| {
                for &c in table.flat() {
                    c_max = c_max.max(c.abs());
                }
                let table = Arc::new(table.clone());
                let counts = action_counts.clone();
                Arc::new(move |x: T, u: &[T]| {
                    table[(round_state(x, n_states), joint_from_values(u, &counts))]
                }) as Arc<dyn Fn(T, &[T]) -> T + Send + Sync>
            })
            .collect();
        if c_max == T::zero() {
            c_max = T::one();
        }
        GameSpec::new(
            self.name.clone(),
            T::zero(),
            T::from_usize(n_states - 1).unwrap(),
            action_sets,
            vec![NoisePrimitive::Uniform {
                lo: T::zero(),
                hi: T::one(),
            }],
            kernel,
            costs,
            self.discounts.clone(),
            c_max,
        )
        .expect("validated tables embed cleanly")
    }

    /// Exact environment model for `agent` against perturbed opponents
    /// (ascending agent order, skipping `agent`): averages the tables over
    /// all opponent action combinations with their exact probabilities.
    pub fn exact_env(&self, agent: usize, others: &[PerturbedPolicy<T>]) -> Result<FiniteEnvModel<T>> {
        let n = self.n_agents();
        if agent >= n {
            return Err(CoreError::invalid(format!("no agent {agent}")));
        }
        if others.len() != n - 1 {
            return Err(CoreError::invalid("need one policy per opponent"));
        }
        let opponents: Vec<usize> = (0..n).filter(|&a| a != agent).collect();
        for (policy, &opp) in others.iter().zip(&opponents) {
            if policy.base.bins() != self.n_states || policy.base.n_actions != self.action_counts[opp]
            {
                return Err(CoreError::invalid(format!(
                    "opponent {opp} policy shape does not match the game"
                )));
            }
        }
        let own_count = self.action_counts[agent];
        let mut cost = Grid::fill(self.n_states, own_count, T::zero());
        let mut kernel = Grid::fill(self.n_states * own_count, self.n_states, T::zero());
        let mut joint = vec![0usize; n];
        for state in 0..self.n_states {
            for own in 0..own_count {
                joint[agent] = own;
                let row_idx = state * own_count + own;
                // Enumerate opponent action combos by mixed radix.
                let combos: usize = opponents
                    .iter()
                    .map(|&o| self.action_counts[o])
                    .product();
                for combo in 0..combos {
                    let mut rem = combo;
                    let mut prob = T::one();
                    for (policy, &opp) in others.iter().zip(&opponents) {
                        let count = self.action_counts[opp];
                        let act = rem % count;
                        rem /= count;
                        joint[opp] = act;
                        let uniform = policy.rho / T::from_usize(count).unwrap();
                        let p = if act == policy.base.action(state) {
                            T::one() - policy.rho + uniform
                        } else {
                            uniform
                        };
                        prob = prob * p;
                    }
                    let j = self.joint_index(&joint);
                    cost[(state, own)] = cost[(state, own)] + prob * self.cost(agent, state, j);
                    let source = self.kernel_row(state, j);
                    let target = kernel.row_mut(row_idx);
                    for (t, &s) in target.iter_mut().zip(source) {
                        *t = *t + prob * s;
                    }
                }
            }
        }
        let model = FiniteEnvModel {
            bins: self.n_states,
            n_actions: own_count,
            beta: self.discounts[agent],
            cost_se: Grid::fill(self.n_states, own_count, T::zero()),
            kernel_se: Grid::fill(self.n_states * own_count, self.n_states, T::zero()),
            cost,
            kernel,
            provenance: ModelProvenance::Exact,
        };
        model.validate()?;
        Ok(model)
    }
}

fn round_state<T: Scalar>(x: T, n_states: usize) -> usize {
    let r = x.round().to_usize().unwrap_or(0);
    r.min(n_states - 1)
}

fn joint_from_values<T: Scalar>(values: &[T], counts: &[usize]) -> usize {
    let mut idx = 0;
    for (v, &count) in values.iter().zip(counts).rev() {
        let a = v.round().to_usize().unwrap_or(0).min(count - 1);
        idx = idx * count + a;
    }
    idx
}

/// Deterministic self-loop kernel for repeated (single-state) games.
fn repeated_game_kernel<T: Scalar>(n_joint: usize) -> Grid<T> {
    Grid::fill(n_joint, 1, T::one())
}

/// Two-agent repeated game where action 0 strictly dominates for both: the
/// best-reply sets are constant in the opponent's policy.
pub fn dominant_2x2<T: Scalar>() -> FiniteGame<T> {
    let c = |own: usize, other: usize| {
        T::from_usize(own).unwrap() + T::from_f64_const(0.25) * T::from_usize(other).unwrap()
    };
    // joint index = u1 + 2·u2
    let cost_agent0 = Grid::from_rows(vec![vec![c(0, 0), c(1, 0), c(0, 1), c(1, 1)]]);
    let cost_agent1 = Grid::from_rows(vec![vec![c(0, 0), c(0, 1), c(1, 0), c(1, 1)]]);
    FiniteGame::new(
        "dominant",
        1,
        vec![2, 2],
        vec![cost_agent0, cost_agent1],
        repeated_game_kernel(4),
        vec![T::from_f64_const(0.8), T::from_f64_const(0.8)],
    )
    .expect("tables are consistent")
}

/// Two-agent repeated anti-coordination game: each agent pays 1 when the
/// actions match, 0 otherwise. Its pure equilibria are the two mismatched
/// profiles; pure best-reply updating from a matched profile cycles forever.
pub fn anticoord_2x2<T: Scalar>() -> FiniteGame<T> {
    let cost = |u1: usize, u2: usize| {
        if u1 == u2 {
            T::one()
        } else {
            T::zero()
        }
    };
    let table = Grid::from_rows(vec![vec![
        cost(0, 0),
        cost(1, 0),
        cost(0, 1),
        cost(1, 1),
    ]]);
    FiniteGame::new(
        "anticoord",
        1,
        vec![2, 2],
        vec![table.clone(), table],
        repeated_game_kernel(4),
        vec![T::from_f64_const(0.8), T::from_f64_const(0.8)],
    )
    .expect("tables are consistent")
}

/// Two-state team game with a genuinely stochastic kernel: matching actions
/// raise the chance of landing in the good state (state 1, cost -1).
pub fn two_state_team<T: Scalar>() -> FiniteGame<T> {
    let p_match = T::from_f64_const(0.8);
    let p_clash = T::from_f64_const(0.3);
    let mut kernel = Grid::fill(2 * 4, 2, T::zero());
    for state in 0..2 {
        for joint in 0..4 {
            let (u1, u2) = (joint % 2, joint / 2);
            let p1 = if u1 == u2 { p_match } else { p_clash };
            let row = kernel.row_mut(state * 4 + joint);
            row[0] = T::one() - p1;
            row[1] = p1;
        }
    }
    let cost_rows: Vec<Vec<T>> = (0..2)
        .map(|state| vec![-T::from_usize(state).unwrap(); 4])
        .collect();
    let cost = Grid::from_rows(cost_rows);
    FiniteGame::new(
        "two_state",
        2,
        vec![2, 2],
        vec![cost.clone(), cost],
        kernel,
        vec![T::from_f64_const(0.8), T::from_f64_const(0.8)],
    )
    .expect("tables are consistent")
}

/// Single-agent two-state chain: state 0 (cost 1) moves to state 1 (cost 0)
/// which self-loops; one action, discount one half.
pub fn chain_mdp<T: Scalar>() -> FiniteGame<T> {
    FiniteGame::new(
        "chain",
        2,
        vec![1],
        vec![Grid::from_rows(vec![vec![T::one()], vec![T::zero()]])],
        Grid::from_rows(vec![vec![T::zero(), T::one()], vec![T::zero(), T::one()]]),
        vec![T::from_f64_const(0.5)],
    )
    .expect("tables are consistent")
}

/// Looks a built-in finite game up by name.
pub fn builtin_finite<T: Scalar>(name: &str) -> Option<FiniteGame<T>> {
    match name {
        "dominant" => Some(dominant_2x2()),
        "anticoord" => Some(anticoord_2x2()),
        "two_state" => Some(two_state_team()),
        "chain" => Some(chain_mdp()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{JointAction, QuantizedPolicy};
    use crate::rng::SimRng;
    use rand::SeedableRng;

    #[test]
    fn joint_indexing_round_trips() {
        let game = two_state_team::<f64>();
        assert_eq!(game.joint_index(&[0, 0]), 0);
        assert_eq!(game.joint_index(&[1, 0]), 1);
        assert_eq!(game.joint_index(&[0, 1]), 2);
        assert_eq!(game.joint_index(&[1, 1]), 3);
    }

    #[test]
    fn embedding_matches_tables_on_integer_states() {
        let game = two_state_team::<f64>();
        let embedded = game.embed();
        assert_eq!(embedded.state_lo(), 0.0);
        assert_eq!(embedded.state_hi(), 1.0);
        for state in 0..2 {
            for joint in 0..4 {
                let u = JointAction::new(vec![joint % 2, joint / 2]);
                let c = embedded
                    .stage_cost(0, state as f64, &u)
                    .unwrap();
                assert_eq!(c, game.cost(0, state, joint));
            }
        }
    }

    #[test]
    fn embedded_kernel_matches_distribution() {
        let game = two_state_team::<f64>();
        let embedded = game.embed();
        let mut rng = SimRng::seed_from_u64(10);
        let u = JointAction::new(vec![1, 1]); // matched: p(state 1) = 0.8
        let n = 100_000;
        let mut ones = 0;
        for _ in 0..n {
            if embedded.sample_transition(0.0, &u, &mut rng).unwrap() == 1.0 {
                ones += 1;
            }
        }
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.8).abs() < 0.005, "freq {freq}");
    }

    #[test]
    fn exact_env_with_deterministic_opponent() {
        // Against an opponent pinned (up to rho) at action 1, the averaged
        // cost blends the two columns with weights (1-rho/2, rho/2).
        let game = anticoord_2x2::<f64>();
        let rho = 0.1;
        let opp = PerturbedPolicy::new(QuantizedPolicy::new(1, 2, vec![1]).unwrap(), rho).unwrap();
        let env = game.exact_env(0, &[opp]).unwrap();
        // own action 0 vs opponent ~ action 1: cost 1 only when opponent
        // plays 0, which happens with probability rho/2.
        assert!((env.cost[(0, 0)] - 0.05).abs() < 1e-12);
        assert!((env.cost[(0, 1)] - 0.95).abs() < 1e-12);
        assert_eq!(env.provenance, ModelProvenance::Exact);
    }

    #[test]
    fn chain_values() {
        let game = chain_mdp::<f64>();
        assert_eq!(game.n_agents(), 1);
        let env = game.exact_env(0, &[]).unwrap();
        let out = crate::env_model::value_iteration(&env, 1e-12, 1000).unwrap();
        assert!((out.q.values[(0, 0)] - 1.0).abs() < 1e-9);
        assert!(out.q.values[(1, 0)].abs() < 1e-9);
    }
}
