//! Per-agent tabular Q-learning over quantized states and the decentralized
//! multi-phase driver.
//!
//! Within an exploration phase every agent holds its baseline policy fixed,
//! acts through its perturbation, and runs the tabular update with the
//! within-phase visit-count step size. At a phase boundary each agent checks
//! whether its baseline is still admissible under its learned table, switches
//! policies according to the update rule if not, and resets its table.
//!
//! Draw protocol (one shared stream per run, in this order):
//! per step, agents draw actions in agent order, then the kernel draws its
//! noise; at a phase boundary, agents draw their policy updates in agent
//! order. Policy updates draw nothing when the baseline is already
//! admissible; otherwise one unit sample selects the branch and the
//! explore/admissible branches draw one unit sample per bin.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::game::{GameSpec, JointAction, PerturbedPolicy, QuantizedPolicy};
use crate::grid::Grid;
use crate::quantize::Quantizer;
use crate::rng::SimRng;
use crate::scalar::{index_in, Scalar};

/// Per-agent table of state-action values with within-phase visit counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable<T> {
    pub values: Grid<T>,
    pub visits: Grid<u64>,
}

impl<T: Scalar> QTable<T> {
    pub fn new(bins: usize, n_actions: usize, initial: T) -> Self {
        QTable {
            values: Grid::fill(bins, n_actions, initial),
            visits: Grid::fill(bins, n_actions, 0),
        }
    }

    pub fn from_values(values: Grid<T>) -> Self {
        let visits = Grid::fill(values.rows(), values.cols(), 0);
        QTable { values, visits }
    }

    pub fn bins(&self) -> usize {
        self.values.rows()
    }

    pub fn n_actions(&self) -> usize {
        self.values.cols()
    }

    /// Minimum value over actions at a bin.
    pub fn min_value(&self, bin: usize) -> T {
        self.values
            .row(bin)
            .iter()
            .copied()
            .fold(T::infinity(), T::min)
    }

    /// Lowest-index minimizing action at a bin.
    pub fn greedy_action(&self, bin: usize) -> usize {
        let row = self.values.row(bin);
        let mut best = 0;
        for (u, &v) in row.iter().enumerate().skip(1) {
            if v < row[best] {
                best = u;
            }
        }
        best
    }

    /// Greedy (lowest-index argmin) policy of the table.
    pub fn greedy_policy(&self, agent: usize) -> QuantizedPolicy {
        let actions = (0..self.bins()).map(|y| self.greedy_action(y)).collect();
        QuantizedPolicy::new(agent, self.n_actions(), actions).expect("table shape is valid")
    }

    /// Sup-norm distance between the value tables.
    pub fn sup_distance(&self, other: &QTable<T>) -> T {
        self.values
            .flat()
            .iter()
            .zip(other.values.flat())
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    pub fn reset(&mut self, value: T) {
        self.values.reset(value);
        self.visits.reset(0);
    }
}

/// Policy-switching behavior at phase boundaries: keep the current policy
/// with probability `inertia`, draw a uniformly random policy with
/// probability `explore`, otherwise draw uniformly from the admissible set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateRule<T> {
    pub inertia: T,
    pub explore: T,
}

impl<T: Scalar> UpdateRule<T> {
    pub fn new(inertia: T, explore: T) -> Result<Self> {
        let rule = UpdateRule { inertia, explore };
        rule.validate()?;
        Ok(rule)
    }

    pub fn greedy() -> Self {
        UpdateRule {
            inertia: T::zero(),
            explore: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inertia >= T::zero() && self.inertia < T::one()) {
            return Err(CoreError::config("inertia must lie in [0, 1)"));
        }
        if !(self.explore >= T::zero() && self.explore < T::one()) {
            return Err(CoreError::config("explore must lie in [0, 1)"));
        }
        if self.inertia + self.explore > T::one() {
            return Err(CoreError::config(
                "inertia + explore must not exceed 1",
            ));
        }
        Ok(())
    }
}

/// Everything one learning agent needs: its quantizer, perturbation and
/// tolerance, discount, reset value, and switching rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig<T> {
    pub quantizer: Quantizer<T>,
    pub n_actions: usize,
    pub rho: T,
    pub delta: T,
    pub beta: T,
    pub q_reset: T,
    pub update_rule: UpdateRule<T>,
}

impl<T: Scalar> LearnerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > T::zero() && self.rho < T::one()) {
            return Err(CoreError::config("rho must lie in (0, 1)"));
        }
        if self.delta < T::zero() {
            return Err(CoreError::config("delta must be non-negative"));
        }
        if !(self.beta >= T::zero() && self.beta < T::one()) {
            return Err(CoreError::config("beta must lie in [0, 1)"));
        }
        if self.n_actions == 0 {
            return Err(CoreError::config("empty action set"));
        }
        self.update_rule.validate()
    }

    pub fn bins(&self) -> usize {
        self.quantizer.bins()
    }
}

/// Exploration phase lengths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSchedule {
    lengths: Vec<usize>,
}

impl PhaseSchedule {
    pub fn new(lengths: Vec<usize>) -> Result<Self> {
        if lengths.iter().any(|&t| t == 0) {
            return Err(CoreError::config("every phase length must be at least 1"));
        }
        Ok(PhaseSchedule { lengths })
    }

    pub fn constant(length: usize, phases: usize) -> Result<Self> {
        Self::new(vec![length; phases])
    }

    pub fn phases(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }
}

/// Step size after the visit count for the current occurrence has been
/// incremented: `1 / (1 + n)` where `n` counts within-phase visits including
/// the current one. The first update of a cell in a phase uses `1/2`.
pub fn step_size<T: Scalar>(visits: &Grid<u64>, bin: usize, action: usize) -> T {
    T::one() / (T::one() + T::from_u64(visits[(bin, action)]).unwrap())
}

/// One tabular update at `(bin, action)`; increments the visit count and
/// moves the value toward `cost + beta · min_v Q(next_bin, v)`. No other cell
/// changes.
pub fn q_update<T: Scalar>(
    q: &mut QTable<T>,
    bin: usize,
    action: usize,
    cost: T,
    next_bin: usize,
    beta: T,
) {
    q.visits[(bin, action)] += 1;
    let alpha = step_size::<T>(&q.visits, bin, action);
    let target = cost + beta * q.min_value(next_bin);
    let current = q.values[(bin, action)];
    q.values[(bin, action)] = (T::one() - alpha) * current + alpha * target;
}

/// Per-bin sets of actions within `delta` of the bin's minimum value, each
/// sorted ascending and never empty.
pub fn admissible_actions<T: Scalar>(q: &QTable<T>, delta: T) -> Vec<Vec<usize>> {
    (0..q.bins())
        .map(|y| {
            let threshold = q.min_value(y) + delta;
            q.values
                .row(y)
                .iter()
                .enumerate()
                .filter(|&(_, &v)| v <= threshold)
                .map(|(u, _)| u)
                .collect()
        })
        .collect()
}

/// True when the policy's action at every bin is within `delta` of that
/// bin's minimum.
pub fn is_delta_best_reply<T: Scalar>(policy: &QuantizedPolicy, q: &QTable<T>, delta: T) -> bool {
    (0..q.bins()).all(|y| q.values[(y, policy.action(y))] <= q.min_value(y) + delta)
}

fn policy_in_sets(policy: &QuantizedPolicy, admissible: &[Vec<usize>]) -> bool {
    policy
        .actions
        .iter()
        .zip(admissible)
        .all(|(a, set)| set.contains(a))
}

/// Draws the next baseline policy given the admissible sets.
///
/// If the current policy is admissible at every bin it is kept with
/// probability one and no randomness is consumed. Otherwise one unit sample
/// picks a branch: keep (inertia), draw each bin's action uniformly from the
/// full action set (explore), or draw each bin's action uniformly from its
/// admissible set. The per-bin draws make the explore branch uniform over
/// the full policy set and the last branch uniform over the product of the
/// admissible sets.
pub fn select_next_policy<T: Scalar>(
    current: &QuantizedPolicy,
    admissible: &[Vec<usize>],
    rule: &UpdateRule<T>,
    rng: &mut SimRng,
) -> QuantizedPolicy {
    debug_assert_eq!(current.bins(), admissible.len());
    debug_assert!(admissible.iter().all(|s| !s.is_empty()));
    if policy_in_sets(current, admissible) {
        return current.clone();
    }
    let branch = T::unit_sample(rng);
    if branch < rule.inertia {
        return current.clone();
    }
    let n_actions = current.n_actions;
    let actions = if branch < rule.inertia + rule.explore {
        (0..current.bins())
            .map(|_| index_in::<T, _>(n_actions, rng))
            .collect()
    } else {
        admissible
            .iter()
            .map(|set| set[index_in::<T, _>(set.len(), rng)])
            .collect()
    };
    QuantizedPolicy::new(current.agent, n_actions, actions).expect("draws are in range")
}

/// How thoroughly a phase covered an agent's table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisitSummary {
    pub steps: usize,
    pub visited_cells: usize,
    pub total_cells: usize,
    pub min_cell_visits: u64,
    pub max_cell_visits: u64,
}

fn summarize_visits(visits: &Grid<u64>, steps: usize) -> VisitSummary {
    let flat = visits.flat();
    VisitSummary {
        steps,
        visited_cells: flat.iter().filter(|&&v| v > 0).count(),
        total_cells: flat.len(),
        min_cell_visits: flat.iter().copied().min().unwrap_or(0),
        max_cell_visits: flat.iter().copied().max().unwrap_or(0),
    }
}

/// Runs one exploration phase of length `len`: all agents act simultaneously
/// through their perturbed baselines and update their own tables. Baselines
/// never change inside the phase and the state is not reset. Tables continue
/// from `tables` (freshly reset tables give the usual phase start).
#[allow(clippy::too_many_arguments)]
pub fn run_exploration_phase<T: Scalar>(
    game: &GameSpec<T>,
    baselines: &[QuantizedPolicy],
    cfgs: &[LearnerConfig<T>],
    tables: &mut [QTable<T>],
    len: usize,
    x0: T,
    rng: &mut SimRng,
) -> Result<(T, Vec<VisitSummary>)> {
    let n = game.n_agents();
    if baselines.len() != n || cfgs.len() != n || tables.len() != n {
        return Err(CoreError::invalid(
            "need one baseline, config, and table per agent",
        ));
    }
    if len == 0 {
        return Err(CoreError::invalid("phase length must be at least 1"));
    }
    if !game.contains(x0) {
        return Err(CoreError::invalid("initial state outside state space"));
    }
    let perturbed: Vec<PerturbedPolicy<T>> = baselines
        .iter()
        .zip(cfgs)
        .map(|(p, cfg)| PerturbedPolicy::new(p.clone(), cfg.rho))
        .collect::<Result<_>>()?;

    let mut x = x0;
    let mut action = JointAction::new(vec![0; n]);
    let mut bins = vec![0usize; n];
    for _ in 0..len {
        for agent in 0..n {
            bins[agent] = cfgs[agent].quantizer.quantize(x)?;
            action.indices[agent] = perturbed[agent].perturbed_action(bins[agent], rng);
        }
        let costs: Vec<T> = (0..n)
            .map(|agent| game.stage_cost(agent, x, &action))
            .collect::<Result<_>>()?;
        let x_next = game.sample_transition(x, &action, rng)?;
        for agent in 0..n {
            let next_bin = cfgs[agent].quantizer.quantize(x_next)?;
            q_update(
                &mut tables[agent],
                bins[agent],
                action.indices[agent],
                costs[agent],
                next_bin,
                cfgs[agent].beta,
            );
        }
        x = x_next;
    }
    let summaries = tables
        .iter()
        .map(|t| summarize_visits(&t.visits, len))
        .collect();
    Ok((x, summaries))
}

/// The joint baseline in force during one phase, with per-agent flags for
/// whether the policy changed at the update that produced it (all false for
/// the initial entry).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub policies: Vec<QuantizedPolicy>,
    pub switched: Vec<bool>,
}

/// Full run history: one record per phase plus the initial joint policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningHistory<T> {
    pub records: Vec<PhaseRecord>,
    /// End-of-phase tables (before the reset), if snapshots were requested.
    pub q_snapshots: Option<Vec<Vec<QTable<T>>>>,
    pub final_state: T,
}

impl<T> LearningHistory<T> {
    /// Joint baseline in force during phase `k` (entry 0 = initial).
    pub fn joint_at(&self, k: usize) -> &[QuantizedPolicy] {
        &self.records[k].policies
    }

    pub fn phases(&self) -> usize {
        self.records.len().saturating_sub(1)
    }
}

/// Runs the decentralized multi-phase process: for each phase, one
/// exploration phase, then independent per-agent policy updates, then a
/// table reset to each agent's `q_reset`.
pub fn run_decentralized_qlearning<T: Scalar>(
    game: &GameSpec<T>,
    cfgs: &[LearnerConfig<T>],
    initial: &[QuantizedPolicy],
    schedule: &PhaseSchedule,
    x0: T,
    record_q_snapshots: bool,
    rng: &mut SimRng,
) -> Result<LearningHistory<T>> {
    let n = game.n_agents();
    if cfgs.len() != n || initial.len() != n {
        return Err(CoreError::invalid(
            "need one config and one initial policy per agent",
        ));
    }
    for (agent, (cfg, policy)) in cfgs.iter().zip(initial).enumerate() {
        cfg.validate()?;
        if cfg.n_actions != game.n_actions(agent) {
            return Err(CoreError::config(format!(
                "agent {agent}: config action count {} does not match the game",
                cfg.n_actions
            )));
        }
        if policy.bins() != cfg.bins() || policy.n_actions != cfg.n_actions {
            return Err(CoreError::invalid(format!(
                "agent {agent}: initial policy shape does not match its config"
            )));
        }
    }

    let mut tables: Vec<QTable<T>> = cfgs
        .iter()
        .map(|cfg| QTable::new(cfg.bins(), cfg.n_actions, cfg.q_reset))
        .collect();
    let mut policies: Vec<QuantizedPolicy> = initial.to_vec();
    let mut records = vec![PhaseRecord {
        policies: policies.clone(),
        switched: vec![false; n],
    }];
    let mut snapshots = record_q_snapshots.then(Vec::new);
    let mut x = x0;

    for &len in schedule.lengths() {
        let (x_next, _summaries) =
            run_exploration_phase(game, &policies, cfgs, &mut tables, len, x, rng)?;
        x = x_next;
        if let Some(s) = snapshots.as_mut() {
            s.push(tables.clone());
        }
        let mut switched = vec![false; n];
        for agent in 0..n {
            let admissible = admissible_actions(&tables[agent], cfgs[agent].delta);
            let next = select_next_policy(
                &policies[agent],
                &admissible,
                &cfgs[agent].update_rule,
                rng,
            );
            switched[agent] = next != policies[agent];
            policies[agent] = next;
            tables[agent].reset(cfgs[agent].q_reset);
        }
        records.push(PhaseRecord {
            policies: policies.clone(),
            switched,
        });
    }
    Ok(LearningHistory {
        records,
        q_snapshots: snapshots,
        final_state: x,
    })
}
