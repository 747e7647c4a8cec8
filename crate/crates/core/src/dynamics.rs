//! Exact analysis of the idealized policy-update process: best-reply graphs
//! over the joint policy space, the induced Markov chain, absorbing-chain
//! classification, closed-form absorption probabilities and expected hitting
//! times, simulation of the process, and equilibrium audits.
//!
//! Joint policies are enumerated, so everything here lives under a hard cap
//! on the joint policy count. Policy and joint indices are mixed-radix: a
//! policy index encodes per-bin actions with bin 0 as the least significant
//! digit, and a joint index encodes per-agent policy indices with agent 0 as
//! the least significant digit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env_model::{build_finite_env, value_iteration, CellWeighting, FiniteEnvModel};
use crate::error::{CoreError, Result};
use crate::game::{AgentPolicy, FiniteGame, GameSpec, PerturbedPolicy, QuantizedPolicy};
use crate::grid::Grid;
use crate::learning::{admissible_actions, UpdateRule};
use crate::linalg::LuFactors;
use crate::quantize::Quantizer;
use crate::rng::{child_rng, SimRng};
use crate::scalar::{index_in, Scalar};

/// Hard cap on the joint policy count for exact enumeration.
pub const ENUMERATION_CAP: u64 = 1 << 20;

/// Bijective indexing of the joint policy space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointPolicySpace {
    n_actions: Vec<usize>,
    bins: Vec<usize>,
    per_agent: Vec<u64>,
    total: u64,
}

impl JointPolicySpace {
    pub fn new(n_actions: &[usize], bins: &[usize]) -> Result<Self> {
        if n_actions.len() != bins.len() || n_actions.is_empty() {
            return Err(CoreError::invalid(
                "need matching action and bin counts per agent",
            ));
        }
        let mut per_agent = Vec::with_capacity(n_actions.len());
        let mut total: u128 = 1;
        for (&a, &m) in n_actions.iter().zip(bins) {
            if a == 0 || m == 0 {
                return Err(CoreError::invalid("agents need actions and bins"));
            }
            let count = (a as u128)
                .checked_pow(m as u32)
                .ok_or(CoreError::CapExceeded {
                    required: u128::MAX,
                    allowed: ENUMERATION_CAP,
                })?;
            total = total
                .checked_mul(count)
                .ok_or(CoreError::CapExceeded {
                    required: u128::MAX,
                    allowed: ENUMERATION_CAP,
                })?;
            if total > ENUMERATION_CAP as u128 {
                return Err(CoreError::CapExceeded {
                    required: total,
                    allowed: ENUMERATION_CAP,
                });
            }
            per_agent.push(count as u64);
        }
        Ok(JointPolicySpace {
            n_actions: n_actions.to_vec(),
            bins: bins.to_vec(),
            per_agent,
            total: total as u64,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.per_agent.len()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn agent_policy_count(&self, agent: usize) -> u64 {
        self.per_agent[agent]
    }

    pub fn bins(&self, agent: usize) -> usize {
        self.bins[agent]
    }

    pub fn n_actions(&self, agent: usize) -> usize {
        self.n_actions[agent]
    }

    /// Joint index from per-agent policy indices.
    pub fn encode(&self, per_agent: &[u64]) -> u64 {
        debug_assert_eq!(per_agent.len(), self.n_agents());
        let mut idx = 0u64;
        for (&p, &count) in per_agent.iter().zip(&self.per_agent).rev() {
            debug_assert!(p < count);
            idx = idx * count + p;
        }
        idx
    }

    pub fn decode(&self, joint: u64) -> Vec<u64> {
        debug_assert!(joint < self.total);
        let mut rem = joint;
        self.per_agent
            .iter()
            .map(|&count| {
                let p = rem % count;
                rem /= count;
                p
            })
            .collect()
    }

    /// Per-agent policy index of a deterministic policy (bin 0 least
    /// significant digit, base = the agent's action count).
    pub fn policy_index(&self, policy: &QuantizedPolicy) -> u64 {
        let base = self.n_actions[policy.agent] as u64;
        let mut idx = 0u64;
        for &a in policy.actions.iter().rev() {
            idx = idx * base + a as u64;
        }
        idx
    }

    pub fn policy_from_index(&self, agent: usize, mut idx: u64) -> QuantizedPolicy {
        let base = self.n_actions[agent] as u64;
        let actions = (0..self.bins[agent])
            .map(|_| {
                let a = (idx % base) as usize;
                idx /= base;
                a
            })
            .collect();
        QuantizedPolicy::new(agent, self.n_actions[agent], actions)
            .expect("decoded actions are in range")
    }

    /// Number of opponent profiles seen by one agent.
    pub fn opponent_profile_count(&self, agent: usize) -> u64 {
        self.total / self.per_agent[agent]
    }

    /// Opponent profile index (mixed radix over the other agents, ascending,
    /// smallest agent least significant).
    pub fn opponent_profile_of(&self, agent: usize, joint: u64) -> u64 {
        let digits = self.decode(joint);
        let mut idx = 0u64;
        for (j, (&d, &count)) in digits.iter().zip(&self.per_agent).enumerate().rev() {
            if j == agent {
                continue;
            }
            idx = idx * count + d;
        }
        idx
    }

    /// Joint index with agent `agent` playing `own` against profile `opp`.
    pub fn joint_with(&self, agent: usize, own: u64, opp: u64) -> u64 {
        let mut digits = Vec::with_capacity(self.n_agents());
        let mut rem = opp;
        for (j, &count) in self.per_agent.iter().enumerate() {
            if j == agent {
                digits.push(own);
            } else {
                digits.push(rem % count);
                rem /= count;
            }
        }
        self.encode(&digits)
    }
}

/// Per-bin action sets; the policy set they induce is the product.
pub type PerBinSets = Vec<Vec<usize>>;

/// Where a best-reply graph's sets came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BrProvenance {
    /// Exact enumeration on a finite game.
    Exact,
    /// Estimated with `build_finite_env` + value iteration.
    Estimated { samples_per_bin: usize },
}

/// A best-reply cell whose classification margin is within noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginFlag<T> {
    pub agent: usize,
    pub opponent_profile: u64,
    pub bin: usize,
    /// Distance from the admissibility threshold to the nearest value.
    pub margin: T,
    /// Noise scale the margin was compared against (3x this flags the cell).
    pub noise_scale: T,
}

/// For each agent and each opponent profile, the policies that best-reply,
/// represented by per-bin admissible action sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestReplyGraph<T> {
    pub space: JointPolicySpace,
    pub delta: Vec<T>,
    pub rho: Vec<T>,
    pub provenance: BrProvenance,
    /// `sets[agent][opponent_profile][bin]` = admissible actions, ascending.
    sets: Vec<Vec<PerBinSets>>,
    /// Cells whose per-bin classification sits within 3 noise scales of the
    /// threshold; present only for estimated graphs.
    pub flagged: Vec<MarginFlag<T>>,
}

impl<T: Scalar> BestReplyGraph<T> {
    /// Assembles a graph from explicit per-bin sets (tests, hand-built
    /// examples).
    pub fn from_sets(
        space: JointPolicySpace,
        sets: Vec<Vec<PerBinSets>>,
        delta: Vec<T>,
        rho: Vec<T>,
        provenance: BrProvenance,
    ) -> Result<Self> {
        if sets.len() != space.n_agents() {
            return Err(CoreError::invalid("need sets for every agent"));
        }
        for (agent, per_profile) in sets.iter().enumerate() {
            if per_profile.len() != space.opponent_profile_count(agent) as usize {
                return Err(CoreError::invalid(format!(
                    "agent {agent}: wrong opponent profile count"
                )));
            }
            for bins in per_profile {
                if bins.len() != space.bins(agent)
                    || bins.iter().any(|s| {
                        s.is_empty() || s.iter().any(|&a| a >= space.n_actions(agent))
                    })
                {
                    return Err(CoreError::invalid(format!(
                        "agent {agent}: malformed admissible sets"
                    )));
                }
            }
        }
        Ok(BestReplyGraph {
            space,
            delta,
            rho,
            provenance,
            sets,
            flagged: Vec::new(),
        })
    }

    pub fn admissible(&self, agent: usize, opponent_profile: u64) -> &PerBinSets {
        &self.sets[agent][opponent_profile as usize]
    }

    /// Size of the best-reply set (product of per-bin set sizes).
    pub fn br_size(&self, agent: usize, opponent_profile: u64) -> u64 {
        self.admissible(agent, opponent_profile)
            .iter()
            .map(|s| s.len() as u64)
            .product()
    }

    /// Is the policy with this index a best reply to the profile?
    pub fn contains(&self, agent: usize, opponent_profile: u64, policy_idx: u64) -> bool {
        let base = self.space.n_actions(agent) as u64;
        let mut rem = policy_idx;
        self.admissible(agent, opponent_profile).iter().all(|set| {
            let action = (rem % base) as usize;
            rem /= base;
            set.binary_search(&action).is_ok()
        })
    }

    /// The `rank`-th member of the best-reply set (mixed radix over the
    /// per-bin sets, bin 0 least significant).
    pub fn br_member(&self, agent: usize, opponent_profile: u64, rank: u64) -> u64 {
        let base = self.space.n_actions(agent) as u64;
        let mut rem = rank;
        let mut idx = 0u64;
        let mut scale = 1u64;
        for set in self.admissible(agent, opponent_profile) {
            let k = set.len() as u64;
            idx += set[(rem % k) as usize] as u64 * scale;
            rem /= k;
            scale *= base;
        }
        idx
    }

    /// Enumerated best-reply policy indices, ascending.
    pub fn br_policy_indices(&self, agent: usize, opponent_profile: u64) -> Vec<u64> {
        let size = self.br_size(agent, opponent_profile);
        let mut out: Vec<u64> = (0..size)
            .map(|r| self.br_member(agent, opponent_profile, r))
            .collect();
        out.sort_unstable();
        out
    }

    /// All agents best-replying at this joint policy?
    pub fn is_joint_absorbing(&self, joint: u64) -> bool {
        let digits = self.space.decode(joint);
        (0..self.space.n_agents()).all(|agent| {
            let profile = self.space.opponent_profile_of(agent, joint);
            self.contains(agent, profile, digits[agent])
        })
    }

    /// Serializable adjacency form: per agent, per opponent profile, the
    /// enumerated best-reply policy indices.
    pub fn adjacency(&self) -> Vec<Vec<Vec<u64>>> {
        (0..self.space.n_agents())
            .map(|agent| {
                (0..self.space.opponent_profile_count(agent))
                    .map(|p| self.br_policy_indices(agent, p))
                    .collect()
            })
            .collect()
    }
}

fn admissible_with_margins<T: Scalar>(
    env: &FiniteEnvModel<T>,
    delta: T,
    vi_tol: T,
    vi_max_iters: usize,
) -> Result<(PerBinSets, Vec<(T, T)>)> {
    let outcome = value_iteration(env, vi_tol, vi_max_iters)?;
    let sets = admissible_actions(&outcome.q, delta);
    // Margin: distance from the admissibility threshold to the nearest
    // non-minimal Q value (the minimum defines the threshold and cannot
    // change classification); noise scale: the cell's worst cost standard
    // error amplified through the discounted recursion.
    let margins = (0..env.bins)
        .map(|y| {
            let row = outcome.q.values.row(y);
            let argmin = outcome.q.greedy_action(y);
            let threshold = row[argmin] + delta;
            let margin = row
                .iter()
                .enumerate()
                .filter(|&(u, _)| u != argmin)
                .fold(T::infinity(), |acc, (_, &v)| acc.min((v - threshold).abs()));
            let worst_se = env
                .cost_se
                .row(y)
                .iter()
                .fold(T::zero(), |acc, &s| acc.max(s));
            (margin, worst_se / (T::one() - env.beta))
        })
        .collect();
    Ok((sets, margins))
}

/// Shared assembly once each (agent, profile) cell has produced its
/// environment model.
fn graph_from_envs<T: Scalar, F>(
    space: JointPolicySpace,
    delta: &[T],
    rho: &[T],
    provenance: BrProvenance,
    vi_tol: T,
    vi_max_iters: usize,
    build_env: F,
) -> Result<BestReplyGraph<T>>
where
    F: Fn(usize, u64) -> Result<FiniteEnvModel<T>> + Sync,
{
    let n = space.n_agents();
    if delta.len() != n || rho.len() != n {
        return Err(CoreError::invalid("need delta and rho for every agent"));
    }
    let cells: Vec<(usize, u64)> = (0..n)
        .flat_map(|agent| (0..space.opponent_profile_count(agent)).map(move |p| (agent, p)))
        .collect();
    let results: Vec<Result<(PerBinSets, Vec<(T, T)>)>> = cells
        .par_iter()
        .map(|&(agent, profile)| {
            let env = build_env(agent, profile)?;
            admissible_with_margins(&env, delta[agent], vi_tol, vi_max_iters)
        })
        .collect();

    let mut sets: Vec<Vec<PerBinSets>> = (0..n)
        .map(|agent| Vec::with_capacity(space.opponent_profile_count(agent) as usize))
        .collect();
    let mut flagged = Vec::new();
    let three = T::from_f64_const(3.0);
    for (&(agent, profile), outcome) in cells.iter().zip(results) {
        let (bins, margins) = outcome?;
        if matches!(provenance, BrProvenance::Estimated { .. }) {
            for (bin, &(margin, noise)) in margins.iter().enumerate() {
                if margin < three * noise {
                    flagged.push(MarginFlag {
                        agent,
                        opponent_profile: profile,
                        bin,
                        margin,
                        noise_scale: noise,
                    });
                }
            }
        }
        sets[agent].push(bins);
    }
    BestReplyGraph::from_sets(space, sets, delta.to_vec(), rho.to_vec(), provenance)
        .map(|mut graph| {
            graph.flagged = flagged;
            graph
        })
}

/// Builds the best-reply graph by Monte Carlo estimation: for every agent
/// and every opponent profile, estimate the finite environment model with
/// uniform cell weighting, solve it, and keep the per-bin admissible sets at
/// the agent's own tolerance.
pub fn build_best_reply_graph_mc<T: Scalar>(
    game: &GameSpec<T>,
    quantizers: &[Quantizer<T>],
    rho: &[T],
    delta: &[T],
    samples_per_bin: usize,
    vi_tol: T,
    vi_max_iters: usize,
    seed: u64,
) -> Result<BestReplyGraph<T>> {
    let n = game.n_agents();
    if quantizers.len() != n {
        return Err(CoreError::invalid("need a quantizer per agent"));
    }
    let n_actions: Vec<usize> = (0..n).map(|a| game.n_actions(a)).collect();
    let bins: Vec<usize> = quantizers.iter().map(Quantizer::bins).collect();
    let space = JointPolicySpace::new(&n_actions, &bins)?;
    let space_for_envs = space.clone();
    graph_from_envs(
        space,
        delta,
        rho,
        BrProvenance::Estimated { samples_per_bin },
        vi_tol,
        vi_max_iters,
        move |agent, profile| {
            let mut others = Vec::with_capacity(n - 1);
            let mut opp_qs = Vec::with_capacity(n - 1);
            let mut rem = profile;
            for j in 0..n {
                if j == agent {
                    continue;
                }
                let count = space_for_envs.agent_policy_count(j);
                let policy = space_for_envs.policy_from_index(j, rem % count);
                rem /= count;
                others.push(PerturbedPolicy::new(policy, rho[j])?);
                opp_qs.push(quantizers[j].clone());
            }
            let cell_seed = crate::rng::child_seed(
                seed,
                agent as u64 * (space_for_envs.total() + 1) + profile,
            );
            build_finite_env(
                game,
                agent,
                &others,
                &quantizers[agent],
                &opp_qs,
                &CellWeighting::Uniform,
                samples_per_bin,
                cell_seed,
            )
        },
    )
}

/// Builds the best-reply graph of a finite game by exact enumeration.
pub fn build_best_reply_graph_exact<T: Scalar>(
    finite: &FiniteGame<T>,
    rho: &[T],
    delta: &[T],
    vi_tol: T,
    vi_max_iters: usize,
) -> Result<BestReplyGraph<T>> {
    let n = finite.n_agents();
    let bins = vec![finite.n_states(); n];
    let space = JointPolicySpace::new(finite.action_counts(), &bins)?;
    let space_for_envs = space.clone();
    graph_from_envs(
        space,
        delta,
        rho,
        BrProvenance::Exact,
        vi_tol,
        vi_max_iters,
        move |agent, profile| {
            let mut others = Vec::with_capacity(n - 1);
            let mut rem = profile;
            for j in 0..n {
                if j == agent {
                    continue;
                }
                let count = space_for_envs.agent_policy_count(j);
                let policy = space_for_envs.policy_from_index(j, rem % count);
                rem /= count;
                others.push(PerturbedPolicy::new(policy, rho[j])?);
            }
            finite.exact_env(agent, &others)
        },
    )
}

/// One agent's policy-update distribution at a joint policy: a point mass on
/// the current policy when it best-replies, otherwise the switching mixture
/// (inertia on the current policy, uniform exploration over all policies,
/// and uniform mass over the best-reply set).
pub fn agent_transition_row<T: Scalar>(
    graph: &BestReplyGraph<T>,
    joint: u64,
    agent: usize,
    rule: &UpdateRule<T>,
) -> Vec<T> {
    let space = &graph.space;
    let own = space.decode(joint)[agent];
    let profile = space.opponent_profile_of(agent, joint);
    let count = space.agent_policy_count(agent) as usize;
    let mut row = vec![T::zero(); count];
    if graph.contains(agent, profile, own) {
        row[own as usize] = T::one();
        return row;
    }
    row[own as usize] = rule.inertia;
    if rule.explore > T::zero() {
        let uniform = rule.explore / T::from_usize(count).unwrap();
        for p in row.iter_mut() {
            *p = *p + uniform;
        }
    }
    let br_mass = T::one() - rule.inertia - rule.explore;
    if br_mass > T::zero() {
        let size = graph.br_size(agent, profile);
        let share = br_mass / T::from_u64(size).unwrap();
        for rank in 0..size {
            let member = graph.br_member(agent, profile, rank) as usize;
            row[member] = row[member] + share;
        }
    }
    row
}

/// Assembles the joint transition matrix: the product over agents of their
/// per-agent rows.
pub fn joint_transition_matrix<T: Scalar>(
    graph: &BestReplyGraph<T>,
    rules: &[UpdateRule<T>],
) -> Result<Grid<T>> {
    let space = &graph.space;
    let n = space.n_agents();
    if rules.len() != n {
        return Err(CoreError::invalid("need an update rule per agent"));
    }
    for rule in rules {
        rule.validate()?;
    }
    let total = space.total() as usize;
    // Digits table: decoded per-agent policy index of every joint index.
    let digits: Vec<Vec<u64>> = (0..total as u64).map(|j| space.decode(j)).collect();
    let rows: Vec<Vec<T>> = (0..total as u64)
        .into_par_iter()
        .map(|joint| {
            let agent_rows: Vec<Vec<T>> = (0..n)
                .map(|agent| agent_transition_row(graph, joint, agent, &rules[agent]))
                .collect();
            (0..total)
                .map(|target| {
                    let target_digits = &digits[target];
                    let mut p = T::one();
                    for agent in 0..n {
                        p = p * agent_rows[agent][target_digits[agent] as usize];
                        if p == T::zero() {
                            break;
                        }
                    }
                    p
                })
                .collect()
        })
        .collect();
    Ok(Grid::from_rows(rows))
}

/// The joint-policy Markov chain with its absorbing-chain classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyChain<T> {
    /// Row-stochastic transition matrix over joint policy indices.
    pub matrix: Grid<T>,
    /// Absorbing state indices, ascending.
    pub absorbing: Vec<usize>,
    /// Transient state indices, ascending.
    pub transient: Vec<usize>,
    /// Canonical order: transient states first, then absorbing states;
    /// `canonical_order[k]` is the original index at canonical position `k`.
    pub canonical_order: Vec<usize>,
    /// Transitions among transient states (t × t) under the canonical order.
    pub q_block: Grid<T>,
    /// Transitions from transient to absorbing states (t × r).
    pub r_block: Grid<T>,
    /// True when every state can reach an absorbing state.
    pub is_absorbing_chain: bool,
    /// States from which no absorbing state is reachable.
    pub non_absorbing_states: Vec<usize>,
}

/// Classifies a row-stochastic matrix into absorbing/transient states,
/// extracts the canonical blocks, and decides reachability of absorption on
/// the support graph (an edge wherever the probability is positive).
pub fn classify_and_canonicalize<T: Scalar>(matrix: Grid<T>) -> Result<PolicyChain<T>> {
    let n = matrix.rows();
    if matrix.cols() != n {
        return Err(CoreError::invalid("transition matrix must be square"));
    }
    let tol = T::stochastic_tol(n);
    for (i, row) in matrix.iter_rows().enumerate() {
        if row.iter().any(|&p| p < T::zero()) {
            return Err(CoreError::invalid(format!("negative entry in row {i}")));
        }
        let sum: T = row.iter().copied().sum();
        if (sum - T::one()).abs() > tol {
            return Err(CoreError::invalid(format!(
                "row {i} sums to {sum}, not a distribution"
            )));
        }
    }

    let absorbing: Vec<usize> = (0..n)
        .filter(|&i| (matrix[(i, i)] - T::one()).abs() <= tol)
        .collect();
    let transient: Vec<usize> = (0..n).filter(|&i| !absorbing.contains(&i)).collect();

    // Reverse reachability from the absorbing set over support edges.
    let mut reaches = vec![false; n];
    let mut stack: Vec<usize> = absorbing.clone();
    for &a in &absorbing {
        reaches[a] = true;
    }
    // Reverse adjacency: predecessors of each state.
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for (j, &p) in matrix.row(i).iter().enumerate() {
            if p > T::zero() && i != j {
                preds[j].push(i);
            }
        }
    }
    while let Some(s) = stack.pop() {
        for &p in &preds[s] {
            if !reaches[p] {
                reaches[p] = true;
                stack.push(p);
            }
        }
    }
    let non_absorbing_states: Vec<usize> = (0..n).filter(|&i| !reaches[i]).collect();
    let is_absorbing_chain = non_absorbing_states.is_empty() && !absorbing.is_empty();

    let canonical_order: Vec<usize> = transient
        .iter()
        .chain(absorbing.iter())
        .copied()
        .collect();
    let t = transient.len();
    let r = absorbing.len();
    let mut q_block = Grid::fill(t, t, T::zero());
    let mut r_block = Grid::fill(t, r, T::zero());
    for (ti, &orig_i) in transient.iter().enumerate() {
        for (tj, &orig_j) in transient.iter().enumerate() {
            q_block[(ti, tj)] = matrix[(orig_i, orig_j)];
        }
        for (aj, &orig_j) in absorbing.iter().enumerate() {
            r_block[(ti, aj)] = matrix[(orig_i, orig_j)];
        }
    }
    Ok(PolicyChain {
        matrix,
        absorbing,
        transient,
        canonical_order,
        q_block,
        r_block,
        is_absorbing_chain,
        non_absorbing_states,
    })
}

/// Builds and classifies the joint-policy chain in one step.
pub fn build_policy_chain<T: Scalar>(
    graph: &BestReplyGraph<T>,
    rules: &[UpdateRule<T>],
) -> Result<PolicyChain<T>> {
    classify_and_canonicalize(joint_transition_matrix(graph, rules)?)
}

impl<T: Scalar> PolicyChain<T> {
    pub fn n_states(&self) -> usize {
        self.matrix.rows()
    }

    fn require_absorbing(&self) -> Result<()> {
        if !self.is_absorbing_chain {
            return Err(CoreError::NotAbsorbing {
                unreachable: self.non_absorbing_states.clone(),
            });
        }
        Ok(())
    }

    /// Probability of eventually being absorbed in each state, starting from
    /// the distribution `a0` over the original indexing. Transient states
    /// carry zero mass in the result.
    pub fn absorption_probabilities(&self, a0: &[T]) -> Result<Vec<T>> {
        self.require_absorbing()?;
        let n = self.n_states();
        if a0.len() != n {
            return Err(CoreError::invalid("initial distribution has wrong length"));
        }
        let sum: T = a0.iter().copied().sum();
        if (sum - T::one()).abs() > T::stochastic_tol(n) || a0.iter().any(|&p| p < T::zero()) {
            return Err(CoreError::invalid("a0 is not a distribution"));
        }
        let t = self.transient.len();
        let mut out = vec![T::zero(); n];
        for &orig in &self.absorbing {
            out[orig] = a0[orig];
        }
        if t > 0 {
            let fundamental_rhs = self.r_block.clone();
            let lu = LuFactors::factor(&i_minus_q(&self.q_block), "absorption probabilities")?;
            let b = lu.solve_matrix(&fundamental_rhs);
            for (ti, &orig_i) in self.transient.iter().enumerate() {
                if a0[orig_i] == T::zero() {
                    continue;
                }
                for (aj, &orig_j) in self.absorbing.iter().enumerate() {
                    out[orig_j] = out[orig_j] + a0[orig_i] * b[(ti, aj)];
                }
            }
        }
        Ok(out)
    }

    /// Expected number of steps until absorption from each transient state
    /// (aligned with `self.transient`).
    pub fn expected_steps_to_absorption(&self) -> Result<Vec<T>> {
        self.require_absorbing()?;
        let t = self.transient.len();
        if t == 0 {
            return Ok(Vec::new());
        }
        let lu = LuFactors::factor(&i_minus_q(&self.q_block), "expected steps")?;
        Ok(lu.solve(&vec![T::one(); t]))
    }

    /// The limit matrix `[0, (I-Q)^{-1}R; 0, I]` mapped back to the original
    /// indexing: entry `(i, j)` is the probability of ending in `j` from `i`.
    pub fn limit_matrix(&self) -> Result<Grid<T>> {
        self.require_absorbing()?;
        let n = self.n_states();
        let mut out = Grid::fill(n, n, T::zero());
        for &a in &self.absorbing {
            out[(a, a)] = T::one();
        }
        let t = self.transient.len();
        if t > 0 {
            let lu = LuFactors::factor(&i_minus_q(&self.q_block), "limit matrix")?;
            let b = lu.solve_matrix(&self.r_block);
            for (ti, &orig_i) in self.transient.iter().enumerate() {
                for (aj, &orig_j) in self.absorbing.iter().enumerate() {
                    out[(orig_i, orig_j)] = b[(ti, aj)];
                }
            }
        }
        Ok(out)
    }

    /// Simulates the chain from a row of the matrix by inverse-CDF draws.
    /// The trajectory includes the start state and stops at an absorbing
    /// state or after `max_steps` transitions.
    pub fn simulate(&self, start: usize, max_steps: usize, rng: &mut SimRng) -> Vec<usize> {
        let mut trajectory = vec![start];
        let mut state = start;
        for _ in 0..max_steps {
            if self.absorbing.contains(&state) {
                break;
            }
            let u = T::unit_sample(rng);
            let row = self.matrix.row(state);
            let mut acc = T::zero();
            let mut next = self.n_states() - 1;
            for (j, &p) in row.iter().enumerate() {
                acc = acc + p;
                if u < acc {
                    next = j;
                    break;
                }
            }
            state = next;
            trajectory.push(state);
        }
        trajectory
    }
}

fn i_minus_q<T: Scalar>(q: &Grid<T>) -> Grid<T> {
    let t = q.rows();
    let mut m = Grid::fill(t, t, T::zero());
    for i in 0..t {
        for j in 0..t {
            let delta = if i == j { T::one() } else { T::zero() };
            m[(i, j)] = delta - q[(i, j)];
        }
    }
    m
}

/// Simulates the idealized policy-update process on the best-reply graph:
/// each step, every agent keeps a best-replying policy or redraws through
/// its switching rule. The trajectory of joint indices includes the start
/// and stops at an absorbing joint policy or after `max_steps` updates.
pub fn simulate_idealized<T: Scalar>(
    graph: &BestReplyGraph<T>,
    rules: &[UpdateRule<T>],
    start: u64,
    max_steps: usize,
    rng: &mut SimRng,
) -> Vec<u64> {
    let space = &graph.space;
    let n = space.n_agents();
    debug_assert_eq!(rules.len(), n);
    let mut joint = start;
    let mut trajectory = vec![start];
    for _ in 0..max_steps {
        let digits = space.decode(joint);
        let profiles: Vec<u64> = (0..n)
            .map(|agent| space.opponent_profile_of(agent, joint))
            .collect();
        if (0..n).all(|agent| graph.contains(agent, profiles[agent], digits[agent])) {
            break;
        }
        let mut next = Vec::with_capacity(n);
        for agent in 0..n {
            if graph.contains(agent, profiles[agent], digits[agent]) {
                next.push(digits[agent]);
                continue;
            }
            let rule = &rules[agent];
            let branch = T::unit_sample(rng);
            if branch < rule.inertia {
                next.push(digits[agent]);
            } else if branch < rule.inertia + rule.explore {
                let count = space.agent_policy_count(agent) as usize;
                next.push(index_in::<T, _>(count, rng) as u64);
            } else {
                let size = graph.br_size(agent, profiles[agent]) as usize;
                let rank = index_in::<T, _>(size, rng) as u64;
                next.push(graph.br_member(agent, profiles[agent], rank));
            }
        }
        joint = space.encode(&next);
        trajectory.push(joint);
    }
    trajectory
}

/// Monte Carlo configuration for equilibrium audits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig<T> {
    pub episodes: usize,
    /// Truncation tolerance; the horizon is derived from it.
    pub trunc_tol: T,
    /// Initial states the values are estimated from.
    pub x0_grid: Vec<T>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentAudit<T> {
    /// Estimated cost reduction available by deviating to the best policy in
    /// the agent's own quantized policy set, maximized over the grid of
    /// initial states. Zero when the current policy is the empirical best.
    pub exploitability: T,
    pub std_err: T,
    /// Policy index of the empirically best deviation.
    pub best_deviation: u64,
    /// Estimated value of the current policy at the worst-case grid state.
    pub current_value: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport<T> {
    /// Every agent's policy lies in its best-reply set under the graph.
    pub is_subjective_equilibrium: bool,
    pub per_agent: Vec<AgentAudit<T>>,
}

/// Audits a joint policy: the graph-level subjective-equilibrium check plus
/// Monte Carlo exploitability estimates, deviating one agent at a time over
/// its entire deterministic policy set.
///
/// All candidate deviations at one (agent, initial state) share a random
/// stream. Policies are deterministic, so candidates that play identically
/// from that start produce bit-identical estimates, and the minimum over
/// candidates is not dragged down by independent noise on ties.
pub fn audit_equilibrium<T: Scalar>(
    game: &GameSpec<T>,
    quantizers: &[Quantizer<T>],
    joint: &[QuantizedPolicy],
    graph: &BestReplyGraph<T>,
    cfg: &AuditConfig<T>,
) -> Result<AuditReport<T>> {
    let space = &graph.space;
    let n = space.n_agents();
    if joint.len() != n || quantizers.len() != n {
        return Err(CoreError::invalid("need a policy and quantizer per agent"));
    }
    let joint_idx = space.encode(
        &joint
            .iter()
            .map(|p| space.policy_index(p))
            .collect::<Vec<_>>(),
    );
    let is_subjective_equilibrium = graph.is_joint_absorbing(joint_idx);

    let horizon = (0..n)
        .map(|a| crate::game::required_horizon(game.discount(a), game.c_max(), cfg.trunc_tol))
        .max()
        .unwrap_or(1);

    let mut per_agent = Vec::with_capacity(n);
    for agent in 0..n {
        let own_idx = space.policy_index(&joint[agent]);
        let candidates: Vec<u64> = (0..space.agent_policy_count(agent)).collect();
        // values[candidate][x0] = (mean, se) of the deviating agent's return
        let values: Vec<Vec<(T, T)>> = candidates
            .par_iter()
            .map(|&cand| {
                let mut policies: Vec<AgentPolicy<T>> = joint
                    .iter()
                    .map(|p| AgentPolicy::Deterministic(p.clone()))
                    .collect();
                policies[agent] =
                    AgentPolicy::Deterministic(space.policy_from_index(agent, cand));
                cfg.x0_grid
                    .iter()
                    .enumerate()
                    .map(|(xi, &x0)| {
                        let ordinal = agent as u64 * cfg.x0_grid.len() as u64 + xi as u64;
                        let mut rng = child_rng(cfg.seed, ordinal);
                        let est = crate::game::evaluate_joint_policy(
                            game,
                            &policies,
                            quantizers,
                            x0,
                            horizon,
                            cfg.episodes,
                            cfg.trunc_tol,
                            &mut rng,
                        )?;
                        Ok((est.mean[agent], est.std_err[agent]))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;

        let own_pos = own_idx as usize;
        let mut exploitability = T::zero();
        let mut std_err = T::zero();
        let mut best_deviation = own_idx;
        let mut current_value = values[own_pos][0].0;
        for (xi, _) in cfg.x0_grid.iter().enumerate() {
            let (own_mean, own_se) = values[own_pos][xi];
            let mut best = own_idx;
            let mut best_mean = own_mean;
            let mut best_se = own_se;
            for (&cand, vals) in candidates.iter().zip(&values) {
                let (mean, se) = vals[xi];
                if mean < best_mean {
                    best_mean = mean;
                    best_se = se;
                    best = cand;
                }
            }
            let gap = own_mean - best_mean;
            if gap > exploitability {
                exploitability = gap;
                std_err = (own_se * own_se + best_se * best_se).sqrt();
                best_deviation = best;
                current_value = own_mean;
            }
        }
        per_agent.push(AgentAudit {
            exploitability,
            std_err,
            best_deviation,
            current_value,
        });
    }
    Ok(AuditReport {
        is_subjective_equilibrium,
        per_agent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn raw_chain(rows: Vec<Vec<f64>>) -> PolicyChain<f64> {
        classify_and_canonicalize(Grid::from_rows(rows)).unwrap()
    }

    #[test]
    fn space_round_trips() {
        let space = JointPolicySpace::new(&[2, 3], &[3, 2]).unwrap();
        assert_eq!(space.agent_policy_count(0), 8);
        assert_eq!(space.agent_policy_count(1), 9);
        assert_eq!(space.total(), 72);
        for joint in 0..space.total() {
            assert_eq!(space.encode(&space.decode(joint)), joint);
        }
        for agent in 0..2 {
            for idx in 0..space.agent_policy_count(agent) {
                let policy = space.policy_from_index(agent, idx);
                assert_eq!(space.policy_index(&policy), idx);
            }
        }
    }

    #[test]
    fn opponent_profile_round_trip() {
        let space = JointPolicySpace::new(&[2, 2, 2], &[1, 1, 1]).unwrap();
        for joint in 0..space.total() {
            let digits = space.decode(joint);
            for agent in 0..3 {
                let profile = space.opponent_profile_of(agent, joint);
                assert_eq!(space.joint_with(agent, digits[agent], profile), joint);
            }
        }
    }

    #[test]
    fn cap_is_enforced() {
        let err = JointPolicySpace::new(&[2, 2], &[20, 20]).unwrap_err();
        match err {
            CoreError::CapExceeded { required, allowed } => {
                assert_eq!(allowed, ENUMERATION_CAP);
                assert!(required > allowed as u128);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn classify_identity_all_absorbing() {
        let chain = raw_chain(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(chain.absorbing, vec![0, 1]);
        assert!(chain.transient.is_empty());
        assert!(chain.is_absorbing_chain);
        assert_eq!(chain.q_block.rows(), 0);
    }

    #[test]
    fn classify_two_state_chain() {
        let chain = raw_chain(vec![vec![0.5, 0.5], vec![0.0, 1.0]]);
        assert_eq!(chain.transient, vec![0]);
        assert_eq!(chain.absorbing, vec![1]);
        assert!(chain.is_absorbing_chain);
        assert_eq!(chain.q_block[(0, 0)], 0.5);
        assert_eq!(chain.r_block[(0, 0)], 0.5);
        assert_eq!(chain.canonical_order, vec![0, 1]);
    }

    #[test]
    fn classify_two_cycle_not_absorbing() {
        let chain = raw_chain(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(chain.absorbing.is_empty());
        assert!(!chain.is_absorbing_chain);
        assert_eq!(chain.non_absorbing_states, vec![0, 1]);
        assert!(chain.absorption_probabilities(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn absorption_geometric() {
        let chain = raw_chain(vec![vec![0.5, 0.5], vec![0.0, 1.0]]);
        let probs = chain.absorption_probabilities(&[1.0, 0.0]).unwrap();
        assert!((probs[1] - 1.0).abs() < 1e-12);
        assert_eq!(probs[0], 0.0);
        let steps = chain.expected_steps_to_absorption().unwrap();
        assert!((steps[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn absorption_two_transient_worked_example() {
        // s1 -> s2 w.p. 0.5, s1 -> a1 w.p. 0.5; s2 -> a1 w.p. 0.25,
        // s2 -> a2 w.p. 0.75. Path enumeration from s1:
        // P(a1) = 0.5 + 0.5·0.25 = 0.625, P(a2) = 0.5·0.75 = 0.375.
        let chain = raw_chain(vec![
            vec![0.0, 0.5, 0.5, 0.0],
            vec![0.0, 0.0, 0.25, 0.75],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ]);
        let probs = chain
            .absorption_probabilities(&[1.0, 0.0, 0.0, 0.0])
            .unwrap();
        assert!((probs[2] - 0.625).abs() < 1e-12);
        assert!((probs[3] - 0.375).abs() < 1e-12);
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn absorption_from_absorbing_start() {
        let chain = raw_chain(vec![vec![0.5, 0.5], vec![0.0, 1.0]]);
        let probs = chain.absorption_probabilities(&[0.0, 1.0]).unwrap();
        assert_eq!(probs, vec![0.0, 1.0]);
    }

    #[test]
    fn expected_steps_hop_example() {
        // s1 may hop to s2 before absorbing: Q = [[0, 0.5], [0, 0]] with
        // R rows [0.5] and [1.0]; hand solve gives steps (1.5, 1.0).
        let chain = raw_chain(vec![
            vec![0.0, 0.5, 0.5],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let steps = chain.expected_steps_to_absorption().unwrap();
        assert!((steps[0] - 1.5).abs() < 1e-12);
        assert!((steps[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expected_steps_absorb_in_one() {
        let chain = raw_chain(vec![
            vec![0.0, 0.5, 0.5],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let steps = chain.expected_steps_to_absorption().unwrap();
        assert_eq!(steps, vec![1.0]);
    }

    #[test]
    fn limit_matrix_matches_power() {
        let chain = raw_chain(vec![
            vec![0.0, 0.5, 0.5, 0.0],
            vec![0.0, 0.0, 0.25, 0.75],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ]);
        let limit = chain.limit_matrix().unwrap();
        let powered = crate::linalg::mat_pow(&chain.matrix, 200);
        assert!(crate::linalg::inf_norm_diff(&limit, &powered) < 1e-6);
    }

    fn anticoord_graph(explore: f64) -> (BestReplyGraph<f64>, Vec<UpdateRule<f64>>) {
        let game = crate::game::anticoord_2x2::<f64>();
        let graph = build_best_reply_graph_exact(&game, &[0.05, 0.05], &[0.01, 0.01], 1e-10, 100_000)
            .unwrap();
        let rules = vec![
            UpdateRule::new(0.0, explore).unwrap(),
            UpdateRule::new(0.0, explore).unwrap(),
        ];
        (graph, rules)
    }

    #[test]
    fn anticoord_best_replies_mismatch() {
        let (graph, _) = anticoord_graph(0.0);
        // Opponent plays action 0 -> the unique best reply is action 1,
        // and vice versa; profiles and policies coincide for 1-state games.
        for agent in 0..2 {
            assert_eq!(graph.br_policy_indices(agent, 0), vec![1]);
            assert_eq!(graph.br_policy_indices(agent, 1), vec![0]);
        }
        assert_eq!(graph.provenance, BrProvenance::Exact);
        assert!(graph.flagged.is_empty());
    }

    #[test]
    fn anticoord_pure_updating_cycles() {
        let (graph, rules) = anticoord_graph(0.0);
        let chain = build_policy_chain(&graph, &rules).unwrap();
        // (0,1) and (1,0) are absorbing; (0,0) and (1,1) cycle forever.
        assert_eq!(chain.absorbing, vec![1, 2]);
        assert!(!chain.is_absorbing_chain);
        assert_eq!(chain.non_absorbing_states, vec![0, 3]);
    }

    #[test]
    fn anticoord_exploration_restores_absorption() {
        let (graph, rules) = anticoord_graph(0.1);
        let chain = build_policy_chain(&graph, &rules).unwrap();
        assert!(chain.is_absorbing_chain);
        // By symmetry each equilibrium is reached with probability 1/2 from
        // the matched start (0,0), and the expected time to absorption is
        // 1/(1 - 0.905) where 0.905 is the chance of staying mismatched.
        let probs = chain
            .absorption_probabilities(&[1.0, 0.0, 0.0, 0.0])
            .unwrap();
        assert!((probs[1] - 0.5).abs() < 1e-12);
        assert!((probs[2] - 0.5).abs() < 1e-12);
        let steps = chain.expected_steps_to_absorption().unwrap();
        let expected = 1.0 / (1.0 - 0.905);
        for &s in &steps {
            assert!((s - expected).abs() < 1e-9, "steps {s} vs {expected}");
        }
    }

    #[test]
    fn agent_row_point_mass_when_best_replying() {
        let (graph, _) = anticoord_graph(0.0);
        // joint (0,1): both best-replying.
        let joint = graph.space.encode(&[0, 1]);
        let rule = UpdateRule::new(0.25, 0.1).unwrap();
        for agent in 0..2 {
            let row = agent_transition_row(&graph, joint, agent, &rule);
            let expect = if agent == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
            assert_eq!(row, expect);
        }
    }

    #[test]
    fn agent_row_inertia_mixture() {
        let (graph, _) = anticoord_graph(0.0);
        // joint (0,0): neither best-replies; with inertia 0.25 and a unique
        // best reply the row is 0.25 on the current policy, 0.75 on the BR.
        let joint = graph.space.encode(&[0, 0]);
        let rule = UpdateRule::new(0.25, 0.0).unwrap();
        let row = agent_transition_row(&graph, joint, 0, &rule);
        assert!((row[0] - 0.25).abs() < 1e-15);
        assert!((row[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn joint_rows_are_products() {
        let (graph, rules) = anticoord_graph(0.0);
        let matrix = joint_transition_matrix(&graph, &rules).unwrap();
        // From (0,0) both agents switch for sure: all mass on (1,1).
        let from = graph.space.encode(&[0, 0]) as usize;
        let to = graph.space.encode(&[1, 1]) as usize;
        assert_eq!(matrix[(from, to)], 1.0);
        for (i, row) in matrix.iter_rows().enumerate() {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12, "row {i} sums to {sum}");
        }
    }

    #[test]
    fn simulate_idealized_starts_absorbed() {
        let (graph, rules) = anticoord_graph(0.0);
        let mut rng = SimRng::seed_from_u64(1);
        let start = graph.space.encode(&[1, 0]);
        let traj = simulate_idealized(&graph, &rules, start, 100, &mut rng);
        assert_eq!(traj, vec![start]);
    }

    #[test]
    fn simulate_matches_absorption_distribution() {
        let (graph, rules) = anticoord_graph(0.1);
        let chain = build_policy_chain(&graph, &rules).unwrap();
        let start = graph.space.encode(&[0, 0]);
        let mut a0 = vec![0.0; 4];
        a0[start as usize] = 1.0;
        let exact = chain.absorption_probabilities(&a0).unwrap();
        let mut rng = SimRng::seed_from_u64(7);
        let episodes = 100_000;
        let mut counts = vec![0usize; 4];
        let mut total_steps = 0usize;
        for _ in 0..episodes {
            let traj = simulate_idealized(&graph, &rules, start, 10_000, &mut rng);
            counts[*traj.last().unwrap() as usize] += 1;
            total_steps += traj.len() - 1;
        }
        for s in 0..4 {
            let freq = counts[s] as f64 / episodes as f64;
            assert!(
                (freq - exact[s]).abs() < 0.01,
                "state {s}: {freq} vs {}",
                exact[s]
            );
        }
        let mean_steps = total_steps as f64 / episodes as f64;
        let steps = chain.expected_steps_to_absorption().unwrap();
        assert!((mean_steps - steps[0]).abs() / steps[0] < 0.02);
    }

    #[test]
    fn single_agent_graph_is_greedy_set() {
        let game = crate::game::chain_mdp::<f64>();
        let graph =
            build_best_reply_graph_exact(&game, &[0.05], &[0.0], 1e-10, 100_000).unwrap();
        assert_eq!(graph.space.n_agents(), 1);
        assert_eq!(graph.space.opponent_profile_count(0), 1);
        // One action per state: the only policy is the greedy one.
        assert_eq!(graph.br_policy_indices(0, 0), vec![0]);
        let chain =
            build_policy_chain(&graph, &[UpdateRule::greedy()]).unwrap();
        assert!(chain.is_absorbing_chain);
        let steps = chain.expected_steps_to_absorption().unwrap();
        assert!(steps.iter().all(|&s| s <= 1.0 + 1e-12));
    }

    #[test]
    fn dominant_game_br_constant() {
        let game = crate::game::dominant_2x2::<f64>();
        let graph = build_best_reply_graph_exact(&game, &[0.05, 0.05], &[0.01, 0.01], 1e-10, 100_000)
            .unwrap();
        for agent in 0..2 {
            for profile in 0..graph.space.opponent_profile_count(agent) {
                assert_eq!(graph.br_policy_indices(agent, profile), vec![0]);
            }
        }
        let rules = vec![UpdateRule::greedy(), UpdateRule::greedy()];
        let chain = build_policy_chain(&graph, &rules).unwrap();
        assert_eq!(chain.absorbing, vec![0]);
        let steps = chain.expected_steps_to_absorption().unwrap();
        assert!(steps.iter().all(|&s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn absorbing_iff_all_agents_best_reply() {
        let (graph, rules) = anticoord_graph(0.1);
        let chain = build_policy_chain(&graph, &rules).unwrap();
        for joint in 0..graph.space.total() {
            let by_matrix = chain.absorbing.contains(&(joint as usize));
            assert_eq!(by_matrix, graph.is_joint_absorbing(joint));
        }
    }

    #[test]
    fn margin_flags_fire_only_within_noise() {
        use crate::env_model::{FiniteEnvModel, ModelProvenance};
        // Two actions 0.012 apart with delta 0.01: the non-minimal action
        // sits 0.002 from the threshold. With a large cost standard error
        // the cell must flag; with a tiny one it must not.
        let model = |se: f64| FiniteEnvModel::<f64> {
            bins: 1,
            n_actions: 2,
            beta: 0.0,
            cost: Grid::from_rows(vec![vec![0.0, 0.012]]),
            kernel: Grid::from_rows(vec![vec![1.0], vec![1.0]]),
            cost_se: Grid::from_rows(vec![vec![se, se]]),
            kernel_se: Grid::fill(2, 1, 0.0),
            provenance: ModelProvenance::MonteCarlo { samples_per_cell: 100 },
        };
        let (_, margins) = admissible_with_margins(&model(0.01), 0.01, 1e-12, 100).unwrap();
        assert!((margins[0].0 - 0.002).abs() < 1e-12);
        assert!(margins[0].0 < 3.0 * margins[0].1);
        let (_, margins) = admissible_with_margins(&model(1e-5), 0.01, 1e-12, 100).unwrap();
        assert!(margins[0].0 >= 3.0 * margins[0].1);
    }

    #[test]
    fn row_assembly_commutes_with_agent_reordering() {
        // Swapping the two agents of the anticoordination game relabels the
        // joint index by digit swap; the matrix must follow that relabeling.
        let (graph, _) = anticoord_graph(0.0);
        let rules = vec![
            UpdateRule::new(0.25, 0.1).unwrap(),
            UpdateRule::new(0.5, 0.2).unwrap(),
        ];
        let swapped_rules = vec![rules[1], rules[0]];
        let m = joint_transition_matrix(&graph, &rules).unwrap();
        let m_swapped = joint_transition_matrix(&graph, &swapped_rules).unwrap();
        let relabel = |j: usize| -> usize {
            let d = graph.space.decode(j as u64);
            graph.space.encode(&[d[1], d[0]]) as usize
        };
        for i in 0..4 {
            for j in 0..4 {
                let a = m[(i, j)];
                let b = m_swapped[(relabel(i), relabel(j))];
                assert!((a - b).abs() < 1e-15);
            }
        }
    }
}
