//! TOML configuration: one file drives all subcommands. Every field has a
//! default; the resolved configuration (defaults applied, overrides folded
//! in) is echoed into the run manifest so no silent default can skew a
//! result unseen.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use decq::experiments::{InitialPolicyRule, InitialStateRule};
use decq::game::{builtin_finite, FiniteGame};
use decq::learning::{LearnerConfig, UpdateRule};
use decq::quantize::Quantizer;
use decq::TeamGameParams64;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_master_seed")]
    pub master_seed: u64,
    /// 0 means the rayon default.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub game: GameSection,
    #[serde(default = "default_agents", rename = "agent")]
    pub agents: Vec<AgentSection>,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub solve_env: SolveEnvSection,
}

fn default_master_seed() -> u64 {
    20_240_809
}

fn default_agents() -> Vec<AgentSection> {
    vec![
        AgentSection {
            inertia: 0.25,
            ..AgentSection::default()
        },
        AgentSection {
            inertia: 0.75,
            ..AgentSection::default()
        },
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    /// team | dominant | anticoord | two_state | chain
    #[serde(default = "default_game_name")]
    pub name: String,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_noise_prob")]
    pub noise_prob: f64,
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
    #[serde(default)]
    pub lo: f64,
    #[serde(default = "default_hi")]
    pub hi: f64,
}

fn default_game_name() -> String {
    "team".into()
}
fn default_step() -> f64 {
    0.1
}
fn default_noise_prob() -> f64 {
    0.1
}
fn default_noise_scale() -> f64 {
    0.1
}
fn default_hi() -> f64 {
    1.0
}

impl Default for GameSection {
    fn default() -> Self {
        GameSection {
            name: default_game_name(),
            step: default_step(),
            noise_prob: default_noise_prob(),
            noise_scale: default_noise_scale(),
            lo: 0.0,
            hi: default_hi(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub q_reset: f64,
    #[serde(default)]
    pub inertia: f64,
    #[serde(default)]
    pub explore: f64,
}

fn default_bins() -> usize {
    5
}
fn default_rho() -> f64 {
    0.1
}
fn default_delta() -> f64 {
    0.01
}
fn default_beta() -> f64 {
    0.8
}

impl Default for AgentSection {
    fn default() -> Self {
        AgentSection {
            bins: default_bins(),
            rho: default_rho(),
            delta: default_delta(),
            beta: default_beta(),
            q_reset: 0.0,
            inertia: 0.0,
            explore: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_phase_lengths")]
    pub phase_lengths: Vec<usize>,
    #[serde(default = "default_tracked_phases")]
    pub tracked_phases: usize,
    /// "anticoop", "random", or explicit per-agent action lists.
    #[serde(default = "default_initial_policy")]
    pub initial_policy: InitialPolicySetting,
    /// "uniform" or a fixed state value.
    #[serde(default = "default_initial_state")]
    pub initial_state: InitialStateSetting,
}

fn default_trials() -> usize {
    50
}
fn default_phase_lengths() -> Vec<usize> {
    vec![100, 1_000, 10_000, 100_000]
}
fn default_tracked_phases() -> usize {
    10
}
fn default_initial_policy() -> InitialPolicySetting {
    InitialPolicySetting::Name("anticoop".into())
}
fn default_initial_state() -> InitialStateSetting {
    InitialStateSetting::Name("uniform".into())
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            trials: default_trials(),
            phase_lengths: default_phase_lengths(),
            tracked_phases: default_tracked_phases(),
            initial_policy: default_initial_policy(),
            initial_state: default_initial_state(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialPolicySetting {
    Name(String),
    Lists(Vec<Vec<usize>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialStateSetting {
    Name(String),
    Value(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    #[serde(default = "default_samples_per_bin")]
    pub samples_per_bin: usize,
    #[serde(default = "default_vi_tol")]
    pub vi_tol: f64,
    #[serde(default = "default_vi_max_iters")]
    pub vi_max_iters: usize,
    /// "mc" or "exact" (exact needs a finite game).
    #[serde(default = "default_oracle")]
    pub oracle: String,
    /// "uniform", "anticoop", or a joint policy index.
    #[serde(default = "default_a0")]
    pub a0: A0Setting,
}

fn default_samples_per_bin() -> usize {
    4000
}
fn default_vi_tol() -> f64 {
    1e-10
}
fn default_vi_max_iters() -> usize {
    100_000
}
fn default_oracle() -> String {
    "mc".into()
}
fn default_a0() -> A0Setting {
    A0Setting::Name("uniform".into())
}

impl Default for DynamicsSection {
    fn default() -> Self {
        DynamicsSection {
            samples_per_bin: default_samples_per_bin(),
            vi_tol: default_vi_tol(),
            vi_max_iters: default_vi_max_iters(),
            oracle: default_oracle(),
            a0: default_a0(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum A0Setting {
    Name(String),
    Index(u64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveEnvSection {
    /// The modeled (learning) agent.
    #[serde(default)]
    pub agent: usize,
    /// Per opponent (ascending agent order, skipping `agent`): the baseline
    /// action index per bin.
    #[serde(default = "default_opponent_actions")]
    pub opponent_actions: Vec<Vec<usize>>,
    #[serde(default = "default_opponent_rho")]
    pub opponent_rho: Vec<f64>,
    #[serde(default = "default_solve_samples")]
    pub samples_per_bin: usize,
    /// "uniform" or "occupation".
    #[serde(default = "default_weighting")]
    pub weighting: String,
    #[serde(default = "default_occupation_steps")]
    pub occupation_steps: usize,
    /// Own behavior while collecting the occupation measure.
    #[serde(default = "default_own_actions")]
    pub own_actions: Vec<usize>,
    #[serde(default = "default_occupation_rho")]
    pub occupation_rho: f64,
    #[serde(default = "default_x0")]
    pub x0: f64,
}

fn default_opponent_actions() -> Vec<Vec<usize>> {
    vec![vec![1, 1, 1, 1, 1]]
}
fn default_opponent_rho() -> Vec<f64> {
    vec![0.05]
}
fn default_solve_samples() -> usize {
    100_000
}
fn default_weighting() -> String {
    "uniform".into()
}
fn default_occupation_steps() -> usize {
    1_000_000
}
fn default_own_actions() -> Vec<usize> {
    vec![1, 1, 1, 1, 1]
}
fn default_occupation_rho() -> f64 {
    0.99
}
fn default_x0() -> f64 {
    0.5
}

impl Default for SolveEnvSection {
    fn default() -> Self {
        SolveEnvSection {
            agent: 0,
            opponent_actions: default_opponent_actions(),
            opponent_rho: default_opponent_rho(),
            samples_per_bin: default_solve_samples(),
            weighting: default_weighting(),
            occupation_steps: default_occupation_steps(),
            own_actions: default_own_actions(),
            occupation_rho: default_occupation_rho(),
            x0: default_x0(),
        }
    }
}

/// Command-line overrides folded into the parsed config before resolution.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub trials: Option<usize>,
    pub phase_lengths: Option<Vec<usize>>,
    pub phases: Option<usize>,
}

impl Config {
    pub fn load(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let config: Config = toml::from_str(&text)
            .with_context(|| format!("cannot parse config file {}", path.display()))?;
        Ok(config)
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.master_seed = seed;
        }
        if let Some(threads) = overrides.threads {
            self.threads = threads;
        }
        if let Some(trials) = overrides.trials {
            self.experiment.trials = trials;
        }
        if let Some(lengths) = &overrides.phase_lengths {
            self.experiment.phase_lengths = lengths.clone();
        }
        if let Some(phases) = overrides.phases {
            self.experiment.tracked_phases = phases;
        }
    }

    /// Canonical serialized form used for echoing and hashing.
    pub fn to_toml(&self) -> anyhow::Result<String> {
        toml::to_string_pretty(self).context("cannot serialize resolved config")
    }

    pub fn is_team_game(&self) -> bool {
        self.game.name == "team"
    }

    pub fn team_params(&self) -> anyhow::Result<TeamGameParams64> {
        if self.agents.len() != 2 {
            bail!("the team game needs exactly 2 [[agent]] sections");
        }
        Ok(TeamGameParams64 {
            lo: self.game.lo,
            hi: self.game.hi,
            step: self.game.step,
            noise_prob: self.game.noise_prob,
            noise_scale: self.game.noise_scale,
            discounts: [self.agents[0].beta, self.agents[1].beta],
        })
    }

    pub fn finite_game(&self) -> anyhow::Result<FiniteGame<f64>> {
        builtin_finite(&self.game.name).ok_or_else(|| {
            anyhow::anyhow!(
                "unknown game '{}'; built-ins: team, dominant, anticoord, two_state, chain",
                self.game.name
            )
        })
    }

    /// Learner configs for the team game, one per [[agent]] section.
    pub fn team_learners(&self) -> anyhow::Result<Vec<LearnerConfig<f64>>> {
        self.agents
            .iter()
            .map(|agent| {
                let quantizer = Quantizer::uniform(self.game.lo, self.game.hi, agent.bins)?;
                let cfg = LearnerConfig {
                    quantizer,
                    n_actions: 2,
                    rho: agent.rho,
                    delta: agent.delta,
                    beta: agent.beta,
                    q_reset: agent.q_reset,
                    update_rule: UpdateRule::new(agent.inertia, agent.explore)?,
                };
                cfg.validate()?;
                Ok(cfg)
            })
            .collect::<Result<_, decq::CoreError>>()
            .map_err(Into::into)
    }

    pub fn initial_policy_rule(&self) -> anyhow::Result<InitialPolicyRule> {
        match &self.experiment.initial_policy {
            InitialPolicySetting::Name(name) => match name.as_str() {
                "anticoop" => Ok(InitialPolicyRule::AntiCoop),
                "random" => Ok(InitialPolicyRule::UniformRandom),
                other => bail!("unknown initial_policy '{other}' (anticoop | random | lists)"),
            },
            InitialPolicySetting::Lists(lists) => Ok(InitialPolicyRule::Explicit(lists.clone())),
        }
    }

    pub fn initial_state_rule(&self) -> anyhow::Result<InitialStateRule<f64>> {
        match &self.experiment.initial_state {
            InitialStateSetting::Name(name) => match name.as_str() {
                "uniform" => Ok(InitialStateRule::UniformRandom),
                other => bail!("unknown initial_state '{other}' (uniform | a number)"),
            },
            InitialStateSetting::Value(x) => Ok(InitialStateRule::Fixed(*x)),
        }
    }
}
