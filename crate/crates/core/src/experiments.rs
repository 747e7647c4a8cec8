//! Batch experiment runner for the team game: sweeps over exploration-phase
//! lengths, runs seeded trials of the decentralized learning process, tracks
//! per-phase team optimality, and persists trial / aggregate / plot tables.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::game::{build_team_game, QuantizedPolicy, TeamGameParams};
use crate::learning::{run_decentralized_qlearning, LearnerConfig, PhaseSchedule, UpdateRule};
use crate::rng::{child_seed, SimRng};
use crate::scalar::{index_in, uniform_in, Scalar};
use rand::SeedableRng;

/// How each trial's initial joint policy is chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitialPolicyRule {
    /// Agent 0 plays the high action everywhere, agent 1 the low action:
    /// the agents disagree at every bin.
    AntiCoop,
    /// Every bin of every agent drawn uniformly.
    UniformRandom,
    /// Explicit per-agent action lists.
    Explicit(Vec<Vec<usize>>),
}

/// How each trial's initial state is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialStateRule<T> {
    UniformRandom,
    Fixed(T),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig<T> {
    pub game: TeamGameParams<T>,
    pub learners: Vec<LearnerConfig<T>>,
    /// The swept exploration-phase lengths.
    pub phase_lengths: Vec<usize>,
    pub trials: usize,
    /// Number of phases whose policies are recorded per trial.
    pub tracked_phases: usize,
    pub initial_policy: InitialPolicyRule,
    pub initial_state: InitialStateRule<T>,
    pub master_seed: u64,
}

impl<T: Scalar> ExperimentConfig<T> {
    /// The default team-game sweep: 50 trials per phase length in
    /// {100, 1000, 10000, 100000}, 10 tracked phases, anti-cooperating
    /// initial policies, uniform initial state, inertia 0.25 / 0.75, and the
    /// declared learner defaults (rho 0.1, delta 0.01, beta 0.8, zero
    /// reset).
    pub fn team_default(master_seed: u64) -> Self {
        let quantizer = crate::quantize::Quantizer::uniform(T::zero(), T::one(), 5)
            .expect("unit interval quantizer");
        let learner = |inertia: f64| LearnerConfig {
            quantizer: quantizer.clone(),
            n_actions: 2,
            rho: T::from_f64_const(0.1),
            delta: T::from_f64_const(0.01),
            beta: T::from_f64_const(0.8),
            q_reset: T::zero(),
            update_rule: UpdateRule {
                inertia: T::from_f64_const(inertia),
                explore: T::zero(),
            },
        };
        ExperimentConfig {
            game: TeamGameParams::default(),
            learners: vec![learner(0.25), learner(0.75)],
            phase_lengths: vec![100, 1_000, 10_000, 100_000],
            trials: 50,
            tracked_phases: 10,
            initial_policy: InitialPolicyRule::AntiCoop,
            initial_state: InitialStateRule::UniformRandom,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(CoreError::config("trials must be at least 1"));
        }
        if self.tracked_phases == 0 {
            return Err(CoreError::config("tracked_phases must be at least 1"));
        }
        if self.phase_lengths.is_empty() || self.phase_lengths.iter().any(|&t| t == 0) {
            return Err(CoreError::config("phase lengths must be positive"));
        }
        if self.learners.len() != 2 {
            return Err(CoreError::config("the team game has exactly two agents"));
        }
        for learner in &self.learners {
            learner.validate()?;
        }
        if self.learners[0].quantizer != self.learners[1].quantizer {
            return Err(CoreError::config(
                "team optimality tracking needs both agents on the same quantizer",
            ));
        }
        if let InitialPolicyRule::Explicit(lists) = &self.initial_policy {
            if lists.len() != 2 {
                return Err(CoreError::config("explicit initial policy needs 2 lists"));
            }
            for (agent, list) in lists.iter().enumerate() {
                let cfg = &self.learners[agent];
                if list.len() != cfg.bins() || list.iter().any(|&a| a >= cfg.n_actions) {
                    return Err(CoreError::config(format!(
                        "explicit initial policy malformed for agent {agent}"
                    )));
                }
            }
        }
        if let InitialStateRule::Fixed(x0) = self.initial_state {
            if x0 < self.game.lo || x0 > self.game.hi {
                return Err(CoreError::config("fixed initial state outside the interval"));
            }
        }
        Ok(())
    }

    /// Deterministic per-trial seed: the ordinal enumerates (phase-length
    /// index, trial index) row-major under the master seed.
    pub fn trial_seed(&self, t_index: usize, trial: usize) -> u64 {
        child_seed(
            self.master_seed,
            (t_index * self.trials + trial) as u64,
        )
    }
}

/// True when the two agents' actions agree at every bin.
pub fn is_team_optimal(a: &QuantizedPolicy, b: &QuantizedPolicy) -> Result<bool> {
    if a.bins() != b.bins() || a.n_actions != b.n_actions {
        return Err(CoreError::invalid(
            "team optimality needs both agents on matching quantizers and action sets",
        ));
    }
    Ok(a.actions == b.actions)
}

/// Joint policy identifier: agent 0's policy index plus the policy count
/// times agent 1's, each index mixed-radix over bins (bin 0 least
/// significant). Pure arithmetic, not bounded by the enumeration cap.
fn joint_policy_id(policies: &[QuantizedPolicy]) -> u128 {
    let mut id: u128 = 0;
    for policy in policies.iter().rev() {
        let base = policy.n_actions as u128;
        let mut idx: u128 = 0;
        for &a in policy.actions.iter().rev() {
            idx = idx * base + a as u128;
        }
        let count = base.pow(policy.bins() as u32);
        id = id * count + idx;
    }
    id
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseOutcome {
    pub joint_policy_id: u128,
    pub is_optimal: bool,
    /// Whether each agent switched policy at the end of this phase.
    pub switched: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialResult {
    pub t_value: usize,
    pub trial: usize,
    pub seed: u64,
    pub phases: Vec<PhaseOutcome>,
}

/// Runs one trial at phase length `t_value`, tracking the configured number
/// of phases. Phase k's record is the joint baseline in force during that
/// phase; phase 0 is the initial joint policy.
pub fn run_trial<T: Scalar>(
    cfg: &ExperimentConfig<T>,
    t_index: usize,
    trial: usize,
) -> Result<TrialResult> {
    let t_value = *cfg
        .phase_lengths
        .get(t_index)
        .ok_or_else(|| CoreError::invalid("phase length index out of range"))?;
    let seed = cfg.trial_seed(t_index, trial);
    let mut rng = SimRng::seed_from_u64(seed);
    let game = build_team_game(&cfg.game)?;

    let x0 = match cfg.initial_state {
        InitialStateRule::Fixed(x) => x,
        InitialStateRule::UniformRandom => uniform_in(cfg.game.lo, cfg.game.hi, &mut rng),
    };
    let initial: Vec<QuantizedPolicy> = match &cfg.initial_policy {
        InitialPolicyRule::AntiCoop => vec![
            QuantizedPolicy::constant(0, 2, cfg.learners[0].bins(), 1)?,
            QuantizedPolicy::constant(1, 2, cfg.learners[1].bins(), 0)?,
        ],
        InitialPolicyRule::UniformRandom => (0..2)
            .map(|agent| {
                let learner = &cfg.learners[agent];
                let actions = (0..learner.bins())
                    .map(|_| index_in::<T, _>(learner.n_actions, &mut rng))
                    .collect();
                QuantizedPolicy::new(agent, learner.n_actions, actions)
            })
            .collect::<Result<_>>()?,
        InitialPolicyRule::Explicit(lists) => lists
            .iter()
            .enumerate()
            .map(|(agent, list)| {
                QuantizedPolicy::new(agent, cfg.learners[agent].n_actions, list.clone())
            })
            .collect::<Result<_>>()?,
    };

    let schedule = PhaseSchedule::constant(t_value, cfg.tracked_phases)?;
    let history = run_decentralized_qlearning(
        &game,
        &cfg.learners,
        &initial,
        &schedule,
        x0,
        false,
        &mut rng,
    )?;

    let phases = (0..cfg.tracked_phases)
        .map(|k| {
            let record = &history.records[k];
            Ok(PhaseOutcome {
                joint_policy_id: joint_policy_id(&record.policies),
                is_optimal: is_team_optimal(&record.policies[0], &record.policies[1])?,
                switched: history.records[k + 1].switched.clone(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(TrialResult {
        t_value,
        trial,
        seed,
        phases,
    })
}

/// Per-(phase length, phase) fraction of trials that were team optimal, with
/// a 95% Wilson score interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub t_value: usize,
    pub phase: usize,
    pub fraction: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_trials: usize,
}

/// Wilson 95% score interval for a binomial proportion.
fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054_f64;
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Aggregates trial results per (phase length, phase), in the order the
/// phase lengths appear in the config.
pub fn aggregate(results: &[TrialResult], phase_lengths: &[usize]) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for &t_value in phase_lengths {
        let trials: Vec<&TrialResult> =
            results.iter().filter(|r| r.t_value == t_value).collect();
        if trials.is_empty() {
            continue;
        }
        let phases = trials[0].phases.len();
        for phase in 0..phases {
            let successes = trials
                .iter()
                .filter(|r| r.phases[phase].is_optimal)
                .count();
            let n = trials.len();
            let (ci_low, ci_high) = wilson_interval(successes, n);
            rows.push(AggregateRow {
                t_value,
                phase,
                fraction: successes as f64 / n as f64,
                ci_low,
                ci_high,
                n_trials: n,
            });
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub results: Vec<TrialResult>,
    pub aggregate: Vec<AggregateRow>,
    /// Wall-clock seconds spent per phase length.
    pub per_t_seconds: Vec<(usize, f64)>,
}

/// Runs the full sweep: `trials` trials for every configured phase length,
/// in parallel with per-trial derived seeds, then aggregates.
pub fn run_experiment<T: Scalar>(cfg: &ExperimentConfig<T>) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let mut results = Vec::with_capacity(cfg.phase_lengths.len() * cfg.trials);
    let mut per_t_seconds = Vec::new();
    for t_index in 0..cfg.phase_lengths.len() {
        let start = Instant::now();
        let mut batch: Vec<TrialResult> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| run_trial(cfg, t_index, trial))
            .collect::<Result<_>>()?;
        per_t_seconds.push((cfg.phase_lengths[t_index], start.elapsed().as_secs_f64()));
        results.append(&mut batch);
    }
    let aggregate = aggregate(&results, &cfg.phase_lengths);
    Ok(ExperimentOutcome {
        results,
        aggregate,
        per_t_seconds,
    })
}

/// Plot-ready row: one point per (phase length, phase).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    #[serde(rename = "T")]
    pub t_value: usize,
    pub phase: usize,
    pub fraction: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Projects the aggregate onto the plot table (drops the trial count).
pub fn emit_plot_data(aggregate: &[AggregateRow]) -> Vec<PlotRow> {
    aggregate
        .iter()
        .map(|row| PlotRow {
            t_value: row.t_value,
            phase: row.phase,
            fraction: row.fraction,
            ci_low: row.ci_low,
            ci_high: row.ci_high,
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct TrialCsvRow {
    #[serde(rename = "T")]
    t_value: usize,
    trial: usize,
    seed: u64,
    phase: usize,
    joint_policy_id: u128,
    is_optimal: u8,
    agent1_switched: u8,
    agent2_switched: u8,
}

#[derive(Debug, Serialize)]
struct AggregateCsvRow {
    #[serde(rename = "T")]
    t_value: usize,
    phase: usize,
    fraction: f64,
    ci_low: f64,
    ci_high: f64,
    n_trials: usize,
}

fn csv_err(path: &Path, source: csv::Error) -> CoreError {
    CoreError::Csv {
        path: path.display().to_string(),
        source,
    }
}

/// Writes one row per (trial, phase):
/// `T,trial,seed,phase,joint_policy_id,is_optimal,agent1_switched,agent2_switched`.
pub fn write_trials_csv(path: &Path, results: &[TrialResult]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for result in results {
        for (phase, outcome) in result.phases.iter().enumerate() {
            writer
                .serialize(TrialCsvRow {
                    t_value: result.t_value,
                    trial: result.trial,
                    seed: result.seed,
                    phase,
                    joint_policy_id: outcome.joint_policy_id,
                    is_optimal: outcome.is_optimal as u8,
                    agent1_switched: outcome.switched.first().copied().unwrap_or(false) as u8,
                    agent2_switched: outcome.switched.get(1).copied().unwrap_or(false) as u8,
                })
                .map_err(|e| csv_err(path, e))?;
        }
    }
    writer.flush().map_err(|e| CoreError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(())
}

/// Writes `T,phase,fraction,ci_low,ci_high,n_trials`.
pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for row in rows {
        writer
            .serialize(AggregateCsvRow {
                t_value: row.t_value,
                phase: row.phase,
                fraction: row.fraction,
                ci_low: row.ci_low,
                ci_high: row.ci_high,
                n_trials: row.n_trials,
            })
            .map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| CoreError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(())
}

/// Writes `T,phase,fraction,ci_low,ci_high`.
pub fn write_plot_csv(path: &Path, rows: &[PlotRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for row in rows {
        writer.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| CoreError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(())
}

/// Reads the plot table back; floats round-trip exactly.
pub fn read_plot_csv(path: &Path) -> Result<Vec<PlotRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    reader
        .deserialize()
        .map(|row| row.map_err(|e| csv_err(path, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::UpdateRule;
    use crate::quantize::Quantizer;

    fn small_config() -> ExperimentConfig<f64> {
        let q = Quantizer::uniform(0.0, 1.0, 5).unwrap();
        let learner = |inertia: f64| LearnerConfig {
            quantizer: q.clone(),
            n_actions: 2,
            rho: 0.05,
            delta: 0.01,
            beta: 0.8,
            q_reset: 0.0,
            update_rule: UpdateRule::new(inertia, 0.0).unwrap(),
        };
        ExperimentConfig {
            game: TeamGameParams::default(),
            learners: vec![learner(0.25), learner(0.75)],
            phase_lengths: vec![50, 200],
            trials: 4,
            tracked_phases: 10,
            initial_policy: InitialPolicyRule::AntiCoop,
            initial_state: InitialStateRule::UniformRandom,
            master_seed: 7,
        }
    }

    #[test]
    fn team_optimality_examples() {
        let ones = QuantizedPolicy::constant(0, 2, 5, 1).unwrap();
        let ones_b = QuantizedPolicy::constant(1, 2, 5, 1).unwrap();
        let zeros = QuantizedPolicy::constant(1, 2, 5, 0).unwrap();
        assert!(is_team_optimal(&ones, &ones_b).unwrap());
        assert!(is_team_optimal(&zeros, &zeros).unwrap());
        let mut off_by_one = ones_b.clone();
        off_by_one.actions[3] = 0;
        assert!(!is_team_optimal(&ones, &off_by_one).unwrap());
        let short = QuantizedPolicy::constant(1, 2, 3, 1).unwrap();
        assert!(is_team_optimal(&ones, &short).is_err());
    }

    #[test]
    fn trial_is_reproducible_and_well_formed() {
        let cfg = small_config();
        let a = run_trial(&cfg, 0, 1).unwrap();
        let b = run_trial(&cfg, 0, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.phases.len(), 10);
        assert_eq!(a.t_value, 50);
        // anti-cooperating initialization forces phase 0 to be suboptimal
        assert!(!a.phases[0].is_optimal);
    }

    #[test]
    fn degenerate_single_step_phases_still_work() {
        let mut cfg = small_config();
        cfg.phase_lengths = vec![1];
        cfg.trials = 2;
        let outcome = run_experiment(&cfg).unwrap();
        assert_eq!(outcome.results.len(), 2);
        for result in &outcome.results {
            assert_eq!(result.phases.len(), 10);
        }
    }

    #[test]
    fn trial_seeds_pairwise_distinct() {
        let cfg = small_config();
        let mut seeds = std::collections::HashSet::new();
        for t_index in 0..cfg.phase_lengths.len() {
            for trial in 0..cfg.trials {
                assert!(seeds.insert(cfg.trial_seed(t_index, trial)));
            }
        }
    }

    #[test]
    fn aggregation_counts_are_integral() {
        let cfg = small_config();
        let outcome = run_experiment(&cfg).unwrap();
        for row in &outcome.aggregate {
            let count = row.fraction * row.n_trials as f64;
            assert!((count - count.round()).abs() < 1e-9);
            assert!(row.ci_low <= row.fraction && row.fraction <= row.ci_high);
        }
        // single-trial aggregate equals that trial's flags
        let mut single = cfg.clone();
        single.trials = 1;
        single.phase_lengths = vec![50];
        let outcome = run_experiment(&single).unwrap();
        for row in &outcome.aggregate {
            let flag = outcome.results[0].phases[row.phase].is_optimal;
            assert_eq!(row.fraction, if flag { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn experiment_reruns_bit_identical() {
        let cfg = small_config();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.results, b.results);
        assert_eq!(a.aggregate, b.aggregate);
    }

    #[test]
    fn plot_rows_shape_and_round_trip() {
        let cfg = small_config();
        let outcome = run_experiment(&cfg).unwrap();
        let plot = emit_plot_data(&outcome.aggregate);
        assert_eq!(plot.len(), 2 * 10);
        assert!(plot
            .iter()
            .all(|r| (0.0..=1.0).contains(&r.fraction)));
        let dir = std::env::temp_dir().join(format!("decq-plot-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("plot.csv");
        write_plot_csv(&path, &plot).unwrap();
        let back = read_plot_csv(&path).unwrap();
        assert_eq!(plot, back);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn wilson_interval_sane() {
        let (lo, hi) = wilson_interval(0, 50);
        assert!(lo.abs() < 1e-12);
        assert!(hi > 0.0 && hi < 0.12);
        let (lo, hi) = wilson_interval(50, 50);
        assert!(lo > 0.9);
        assert!((hi - 1.0).abs() < 1e-12);
    }
}
