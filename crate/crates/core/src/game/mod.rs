//! Stochastic games on a compact real interval with finite action sets.
//!
//! A [`GameSpec`] owns the transition kernel as a pure function of
//! `(state, joint action values, noise draws)`, where the noise draws come
//! from a declared list of primitives filled from the random stream. That
//! makes every transition replayable from a seed.

mod finite;
mod team;

pub use finite::{
    anticoord_2x2, builtin_finite, chain_mdp, dominant_2x2, two_state_team, FiniteGame,
};
pub use team::{build_team_game, TeamGameParams};

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::rng::SimRng;
use crate::scalar::{bernoulli, index_in, uniform_in, Scalar};

/// One primitive noise draw consumed by a transition kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoisePrimitive<T> {
    /// Uniform on `[lo, hi)`.
    Uniform { lo: T, hi: T },
    /// 1 with probability `p`, else 0.
    Bernoulli { p: T },
}

impl<T: Scalar> NoisePrimitive<T> {
    fn draw(&self, rng: &mut SimRng) -> T {
        match *self {
            NoisePrimitive::Uniform { lo, hi } => uniform_in(lo, hi, rng),
            NoisePrimitive::Bernoulli { p } => {
                if bernoulli(p, rng) {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

type KernelFn<T> = dyn Fn(T, &[T], &[T]) -> T + Send + Sync;
type CostFn<T> = dyn Fn(T, &[T]) -> T + Send + Sync;

/// An N-player stochastic game on the interval `[lo, hi]`.
#[derive(Clone)]
pub struct GameSpec<T> {
    name: String,
    state_lo: T,
    state_hi: T,
    /// Per agent, the ordered list of action values.
    action_sets: Vec<Vec<T>>,
    noise: Vec<NoisePrimitive<T>>,
    kernel: Arc<KernelFn<T>>,
    costs: Vec<Arc<CostFn<T>>>,
    discounts: Vec<T>,
    /// Declared bound on |cost| over the whole state-action space.
    c_max: T,
}

impl<T: Scalar> GameSpec<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        state_lo: T,
        state_hi: T,
        action_sets: Vec<Vec<T>>,
        noise: Vec<NoisePrimitive<T>>,
        kernel: Arc<KernelFn<T>>,
        costs: Vec<Arc<CostFn<T>>>,
        discounts: Vec<T>,
        c_max: T,
    ) -> Result<Self> {
        if !(state_lo <= state_hi) {
            return Err(CoreError::invalid("state interval is empty"));
        }
        if action_sets.is_empty() {
            return Err(CoreError::invalid("game needs at least one agent"));
        }
        if action_sets.iter().any(Vec::is_empty) {
            return Err(CoreError::invalid("every action set must be non-empty"));
        }
        let n = action_sets.len();
        if costs.len() != n || discounts.len() != n {
            return Err(CoreError::invalid(
                "costs and discounts must have one entry per agent",
            ));
        }
        if discounts.iter().any(|&b| !(b >= T::zero() && b < T::one())) {
            return Err(CoreError::invalid(
                "every discount factor must lie in [0, 1)",
            ));
        }
        if !(c_max > T::zero()) {
            return Err(CoreError::invalid("declared cost bound must be positive"));
        }
        Ok(GameSpec {
            name: name.into(),
            state_lo,
            state_hi,
            action_sets,
            noise,
            kernel,
            costs,
            discounts,
            c_max,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_agents(&self) -> usize {
        self.action_sets.len()
    }

    pub fn state_lo(&self) -> T {
        self.state_lo
    }

    pub fn state_hi(&self) -> T {
        self.state_hi
    }

    pub fn action_set(&self, agent: usize) -> &[T] {
        &self.action_sets[agent]
    }

    pub fn n_actions(&self, agent: usize) -> usize {
        self.action_sets[agent].len()
    }

    pub fn discount(&self, agent: usize) -> T {
        self.discounts[agent]
    }

    pub fn c_max(&self) -> T {
        self.c_max
    }

    pub fn contains(&self, x: T) -> bool {
        x >= self.state_lo && x <= self.state_hi && !x.is_nan()
    }

    fn validate_state_action(&self, x: T, u: &JointAction) -> Result<()> {
        if !self.contains(x) {
            return Err(CoreError::invalid(format!(
                "state {x} outside [{}, {}]",
                self.state_lo, self.state_hi
            )));
        }
        if u.indices.len() != self.n_agents() {
            return Err(CoreError::invalid("joint action has wrong arity"));
        }
        for (agent, &idx) in u.indices.iter().enumerate() {
            if idx >= self.n_actions(agent) {
                return Err(CoreError::invalid(format!(
                    "action index {idx} out of range for agent {agent}"
                )));
            }
        }
        Ok(())
    }

    fn action_values(&self, u: &JointAction) -> Vec<T> {
        u.indices
            .iter()
            .enumerate()
            .map(|(agent, &idx)| self.action_sets[agent][idx])
            .collect()
    }

    /// Samples the next state. Noise primitives are always drawn, in
    /// declaration order, so the stream position after a call does not depend
    /// on the kernel's internal branches.
    pub fn sample_transition(&self, x: T, u: &JointAction, rng: &mut SimRng) -> Result<T> {
        self.validate_state_action(x, u)?;
        let values = self.action_values(u);
        let draws: Vec<T> = self.noise.iter().map(|p| p.draw(rng)).collect();
        let next = (self.kernel)(x, &values, &draws);
        debug_assert!(
            self.contains(next),
            "kernel must clip into the state space (got {next})"
        );
        Ok(next)
    }

    /// Stage cost of one agent at `(x, u)`.
    pub fn stage_cost(&self, agent: usize, x: T, u: &JointAction) -> Result<T> {
        if agent >= self.n_agents() {
            return Err(CoreError::invalid(format!("no agent {agent}")));
        }
        self.validate_state_action(x, u)?;
        let values = self.action_values(u);
        let c = (self.costs[agent])(x, &values);
        debug_assert!(c.abs() <= self.c_max + T::stochastic_tol(1));
        Ok(c)
    }
}

impl<T: Scalar> fmt::Debug for GameSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameSpec")
            .field("name", &self.name)
            .field("state", &(self.state_lo, self.state_hi))
            .field("action_sets", &self.action_sets)
            .field("noise", &self.noise)
            .field("discounts", &self.discounts)
            .field("c_max", &self.c_max)
            .finish_non_exhaustive()
    }
}

/// Per-agent action indices into each agent's action set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointAction {
    pub indices: Vec<usize>,
}

impl JointAction {
    pub fn new(indices: Vec<usize>) -> Self {
        JointAction { indices }
    }
}

/// A deterministic policy over one agent's quantizer bins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedPolicy {
    pub agent: usize,
    /// Size of this agent's action set; action entries index into it.
    pub n_actions: usize,
    /// One action index per bin.
    pub actions: Vec<usize>,
}

impl QuantizedPolicy {
    pub fn new(agent: usize, n_actions: usize, actions: Vec<usize>) -> Result<Self> {
        if n_actions == 0 {
            return Err(CoreError::invalid("empty action set"));
        }
        if actions.is_empty() {
            return Err(CoreError::invalid("policy must cover at least one bin"));
        }
        if actions.iter().any(|&a| a >= n_actions) {
            return Err(CoreError::invalid("policy action index out of range"));
        }
        Ok(QuantizedPolicy {
            agent,
            n_actions,
            actions,
        })
    }

    /// Policy playing the same action at every bin.
    pub fn constant(agent: usize, n_actions: usize, bins: usize, action: usize) -> Result<Self> {
        Self::new(agent, n_actions, vec![action; bins])
    }

    pub fn bins(&self) -> usize {
        self.actions.len()
    }

    pub fn action(&self, bin: usize) -> usize {
        self.actions[bin]
    }
}

/// A quantized policy mixed with uniform random actions at rate `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedPolicy<T> {
    pub base: QuantizedPolicy,
    pub rho: T,
}

impl<T: Scalar> PerturbedPolicy<T> {
    pub fn new(base: QuantizedPolicy, rho: T) -> Result<Self> {
        if !(rho > T::zero() && rho < T::one()) {
            return Err(CoreError::invalid(format!(
                "perturbation probability must lie in (0, 1), got {rho}"
            )));
        }
        Ok(PerturbedPolicy { base, rho })
    }

    /// Draws an action at `bin`: the base action with probability `1 - rho`,
    /// otherwise a uniform draw over the full action set (which may coincide
    /// with the base action). Consumes one unit sample, plus one more only on
    /// the perturbation branch.
    pub fn perturbed_action(&self, bin: usize, rng: &mut SimRng) -> usize {
        if bernoulli(self.rho, rng) {
            index_in::<T, _>(self.base.n_actions, rng)
        } else {
            self.base.action(bin)
        }
    }
}

/// A policy as used for action selection and evaluation: deterministic
/// baseline or its perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AgentPolicy<T> {
    Deterministic(QuantizedPolicy),
    Perturbed(PerturbedPolicy<T>),
}

impl<T: Scalar> AgentPolicy<T> {
    pub fn base(&self) -> &QuantizedPolicy {
        match self {
            AgentPolicy::Deterministic(p) => p,
            AgentPolicy::Perturbed(p) => &p.base,
        }
    }

    /// Draws an action; deterministic policies consume no randomness.
    pub fn act(&self, bin: usize, rng: &mut SimRng) -> usize {
        match self {
            AgentPolicy::Deterministic(p) => p.action(bin),
            AgentPolicy::Perturbed(p) => p.perturbed_action(bin, rng),
        }
    }
}

/// Smallest horizon `H` with `beta^H * c_max / (1 - beta) <= tol`.
pub fn required_horizon<T: Scalar>(beta: T, c_max: T, tol: T) -> usize {
    if beta == T::zero() {
        return 1;
    }
    let mut h = 1usize;
    let mut tail = beta * c_max / (T::one() - beta);
    // Exact tail of the discounted series bound; increments stay finite
    // because beta < 1.
    while tail > tol && h < 1_000_000 {
        tail = tail * beta;
        h += 1;
    }
    h
}

/// Monte Carlo estimate of each agent's discounted return under a joint
/// policy profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyValueEstimate<T> {
    /// Per-agent mean discounted return over episodes.
    pub mean: Vec<T>,
    /// Per-agent standard error of the mean.
    pub std_err: Vec<T>,
    /// Per-agent truncation bound `beta^H c_max / (1 - beta)`.
    pub truncation_bound: Vec<T>,
    pub episodes: usize,
    pub horizon: usize,
}

/// Estimates the expected discounted cost of every agent from `x0`, truncated
/// at `horizon`, by simulating `episodes` shared trajectories.
///
/// Fails if the horizon's truncation bound exceeds `trunc_tol` for any agent,
/// reporting the horizon that would suffice.
pub fn evaluate_joint_policy<T: Scalar>(
    game: &GameSpec<T>,
    policies: &[AgentPolicy<T>],
    quantizers: &[crate::quantize::Quantizer<T>],
    x0: T,
    horizon: usize,
    episodes: usize,
    trunc_tol: T,
    rng: &mut SimRng,
) -> Result<PolicyValueEstimate<T>> {
    let n = game.n_agents();
    if policies.len() != n || quantizers.len() != n {
        return Err(CoreError::invalid(
            "need one policy and one quantizer per agent",
        ));
    }
    if !game.contains(x0) {
        return Err(CoreError::invalid(format!("x0 = {x0} outside state space")));
    }
    if episodes == 0 {
        return Err(CoreError::invalid("need at least one episode"));
    }
    let mut truncation_bound = Vec::with_capacity(n);
    for agent in 0..n {
        let beta = game.discount(agent);
        let bound = beta.powi(horizon as i32) * game.c_max() / (T::one() - beta);
        if bound > trunc_tol {
            return Err(CoreError::HorizonTooSmall {
                required: required_horizon(beta, game.c_max(), trunc_tol),
                got: horizon,
            });
        }
        truncation_bound.push(bound);
    }

    // Welford accumulators per agent.
    let mut mean = vec![T::zero(); n];
    let mut m2 = vec![T::zero(); n];
    let mut action = JointAction::new(vec![0; n]);
    for ep in 0..episodes {
        let mut x = x0;
        let mut discount = vec![T::one(); n];
        let mut ret = vec![T::zero(); n];
        for _ in 0..horizon {
            for agent in 0..n {
                let bin = quantizers[agent].quantize(x)?;
                action.indices[agent] = policies[agent].act(bin, rng);
            }
            for agent in 0..n {
                ret[agent] = ret[agent] + discount[agent] * game.stage_cost(agent, x, &action)?;
                discount[agent] = discount[agent] * game.discount(agent);
            }
            x = game.sample_transition(x, &action, rng)?;
        }
        let count = T::from_usize(ep + 1).unwrap();
        for agent in 0..n {
            let delta = ret[agent] - mean[agent];
            mean[agent] = mean[agent] + delta / count;
            m2[agent] = m2[agent] + delta * (ret[agent] - mean[agent]);
        }
    }
    let std_err = m2
        .iter()
        .map(|&m| {
            if episodes > 1 {
                (m / T::from_usize(episodes - 1).unwrap() / T::from_usize(episodes).unwrap())
                    .sqrt()
            } else {
                T::zero()
            }
        })
        .collect();
    Ok(PolicyValueEstimate {
        mean,
        std_err,
        truncation_bound,
        episodes,
        horizon,
    })
}
