//! Single-environment solver: freeze the opponents, build the learning
//! agent's finite environment model, and solve it to the limiting table and
//! greedy policy.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context};
use serde::Serialize;

use decq::env_model::{build_finite_env, value_iteration, CellWeighting, FiniteEnvModel};
use decq::game::{build_team_game, PerturbedPolicy, QuantizedPolicy};
use decq::quantize::Quantizer;

use crate::config::Config;
use crate::manifest::RunManifest;

#[derive(Debug, Serialize)]
struct SolveReport {
    game: String,
    agent: usize,
    bins: usize,
    n_actions: usize,
    beta: f64,
    iterations: usize,
    residual: f64,
    /// Row-major limiting table (bins x actions).
    q_values: Vec<f64>,
    greedy_policy: Vec<usize>,
    /// Per-bin gap between the best and second-best action value.
    greedy_margins: Vec<f64>,
}

pub fn run(config: &Config, out_dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("create output directory {}", out_dir.display()))?;
    let mut manifest = RunManifest::new(
        "solve-env",
        config.master_seed,
        config.threads,
        config.to_toml()?,
    );
    let start = Instant::now();
    let section = &config.solve_env;

    let model: FiniteEnvModel<f64> = if config.is_team_game() {
        let game = build_team_game(&config.team_params()?)?;
        let agent = section.agent;
        if agent >= game.n_agents() {
            bail!("no agent {agent} in the team game");
        }
        if section.opponent_actions.len() != game.n_agents() - 1
            || section.opponent_rho.len() != game.n_agents() - 1
        {
            bail!("need opponent_actions and opponent_rho for every opponent");
        }
        let bins = config
            .agents
            .get(agent)
            .map(|a| a.bins)
            .unwrap_or(5);
        let quantizer = Quantizer::uniform(config.game.lo, config.game.hi, bins)?;
        let mut others = Vec::new();
        let mut opp_qs = Vec::new();
        for (slot, (actions, &rho)) in section
            .opponent_actions
            .iter()
            .zip(&section.opponent_rho)
            .enumerate()
        {
            let opp_agent = if slot >= agent { slot + 1 } else { slot };
            let opp_bins = config
                .agents
                .get(opp_agent)
                .map(|a| a.bins)
                .unwrap_or(5);
            if actions.len() != opp_bins {
                bail!("opponent {opp_agent} policy must list {opp_bins} actions");
            }
            others.push(PerturbedPolicy::new(
                QuantizedPolicy::new(opp_agent, 2, actions.clone())?,
                rho,
            )?);
            opp_qs.push(Quantizer::uniform(config.game.lo, config.game.hi, opp_bins)?);
        }
        let weighting = match section.weighting.as_str() {
            "uniform" => CellWeighting::Uniform,
            "occupation" => {
                if section.own_actions.len() != bins {
                    bail!("own_actions must list {bins} actions");
                }
                CellWeighting::Occupation {
                    own: PerturbedPolicy::new(
                        QuantizedPolicy::new(agent, 2, section.own_actions.clone())?,
                        section.occupation_rho,
                    )?,
                    steps: section.occupation_steps,
                    x0: section.x0,
                }
            }
            other => bail!("unknown weighting '{other}' (uniform | occupation)"),
        };
        build_finite_env(
            &game,
            agent,
            &others,
            &quantizer,
            &opp_qs,
            &weighting,
            section.samples_per_bin,
            config.master_seed,
        )?
    } else {
        let finite = config.finite_game()?;
        let agent = section.agent;
        if agent >= finite.n_agents() {
            bail!("no agent {agent} in game '{}'", finite.name());
        }
        if section.opponent_actions.len() != finite.n_agents() - 1 {
            bail!("need opponent_actions for every opponent");
        }
        let mut others = Vec::new();
        for (slot, (actions, &rho)) in section
            .opponent_actions
            .iter()
            .zip(&section.opponent_rho)
            .enumerate()
        {
            let opp_agent = if slot >= agent { slot + 1 } else { slot };
            others.push(PerturbedPolicy::new(
                QuantizedPolicy::new(
                    opp_agent,
                    finite.action_counts()[opp_agent],
                    actions.clone(),
                )?,
                rho,
            )?);
        }
        finite.exact_env(agent, &others)?
    };

    let outcome = value_iteration(&model, config.dynamics.vi_tol, config.dynamics.vi_max_iters)?;
    let greedy = outcome.q.greedy_policy(section.agent);
    let margins: Vec<f64> = (0..model.bins)
        .map(|y| {
            let mut row: Vec<f64> = outcome.q.values.row(y).to_vec();
            row.sort_by(f64::total_cmp);
            if row.len() > 1 {
                row[1] - row[0]
            } else {
                f64::INFINITY
            }
        })
        .collect();

    let model_path = out_dir.join("env_model.json");
    std::fs::write(&model_path, serde_json::to_string(&model)?)
        .with_context(|| format!("write {}", model_path.display()))?;
    let report = SolveReport {
        game: config.game.name.clone(),
        agent: section.agent,
        bins: model.bins,
        n_actions: model.n_actions,
        beta: model.beta,
        iterations: outcome.iterations,
        residual: outcome.residual,
        q_values: outcome.q.values.flat().to_vec(),
        greedy_policy: greedy.actions.clone(),
        greedy_margins: margins,
    };
    let solution_path = out_dir.join("solution.json");
    std::fs::write(&solution_path, serde_json::to_string_pretty(&report)?)
        .with_context(|| format!("write {}", solution_path.display()))?;
    manifest.add_output(&model_path);
    manifest.add_output(&solution_path);
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    let manifest_path = manifest.write(out_dir)?;

    println!(
        "solved agent {} environment: {} bins x {} actions, {} sweeps, residual {:.3e}",
        report.agent, report.bins, report.n_actions, report.iterations, report.residual
    );
    println!("greedy policy: {:?}", report.greedy_policy);
    println!("wrote {}", manifest_path.display());
    Ok(())
}
