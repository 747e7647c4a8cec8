//! Chain analysis command: build the best-reply graph (exact for finite
//! games, Monte Carlo estimated otherwise), assemble the joint policy-update
//! chain, classify it, and report absorption probabilities and expected
//! hitting times.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context};
use serde::Serialize;

use decq::dynamics::{
    build_best_reply_graph_exact, build_best_reply_graph_mc, build_policy_chain, BestReplyGraph,
    MarginFlag, PolicyChain,
};
use decq::game::build_team_game;
use decq::learning::UpdateRule;
use decq::quantize::Quantizer;

use crate::config::{A0Setting, Config};
use crate::manifest::RunManifest;

#[derive(Debug, Serialize)]
struct ChainReport {
    game: String,
    oracle: String,
    n_joint_policies: u64,
    is_absorbing_chain: bool,
    absorbing_states: Vec<usize>,
    transient_count: usize,
    /// States from which no absorbing state is reachable.
    non_absorbing_states: Vec<usize>,
    /// Initial distribution and the induced absorption probabilities
    /// (absent when the chain is not absorbing).
    a0: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    absorption_probabilities: Option<Vec<f64>>,
    /// Expected steps to absorption per transient state, aligned with
    /// `transient_states`.
    transient_states: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    expected_steps: Option<Vec<f64>>,
    /// Best-reply cells whose classification margin sits inside noise.
    flagged_cells: Vec<MarginFlag<f64>>,
    /// Per-agent best-reply adjacency: for each opponent profile, the
    /// best-replying policy indices.
    adjacency: Vec<Vec<Vec<u64>>>,
    update_rules: Vec<UpdateRule<f64>>,
}

fn build_graph(config: &Config) -> anyhow::Result<BestReplyGraph<f64>> {
    let dyn_cfg = &config.dynamics;
    let rho: Vec<f64> = config.agents.iter().map(|a| a.rho).collect();
    let delta: Vec<f64> = config.agents.iter().map(|a| a.delta).collect();
    match (config.is_team_game(), dyn_cfg.oracle.as_str()) {
        (true, "mc") => {
            let game = build_team_game(&config.team_params()?)?;
            let quantizers: Vec<Quantizer<f64>> = config
                .agents
                .iter()
                .map(|a| Quantizer::uniform(config.game.lo, config.game.hi, a.bins))
                .collect::<Result<_, _>>()?;
            Ok(build_best_reply_graph_mc(
                &game,
                &quantizers,
                &rho,
                &delta,
                dyn_cfg.samples_per_bin,
                dyn_cfg.vi_tol,
                dyn_cfg.vi_max_iters,
                config.master_seed,
            )?)
        }
        (true, "exact") => bail!("the team game has no exact oracle; set oracle = \"mc\""),
        (false, "exact") => {
            let finite = config.finite_game()?;
            if finite.n_agents() != config.agents.len() {
                bail!(
                    "game '{}' has {} agent(s) but the config declares {}",
                    finite.name(),
                    finite.n_agents(),
                    config.agents.len()
                );
            }
            Ok(build_best_reply_graph_exact(
                &finite,
                &rho[..finite.n_agents()],
                &delta[..finite.n_agents()],
                dyn_cfg.vi_tol,
                dyn_cfg.vi_max_iters,
            )?)
        }
        (false, "mc") => {
            let finite = config.finite_game()?;
            let game = finite.embed();
            let quantizers = vec![finite.identity_quantizer(); finite.n_agents()];
            Ok(build_best_reply_graph_mc(
                &game,
                &quantizers,
                &rho[..finite.n_agents()],
                &delta[..finite.n_agents()],
                dyn_cfg.samples_per_bin,
                dyn_cfg.vi_tol,
                dyn_cfg.vi_max_iters,
                config.master_seed,
            )?)
        }
        (_, other) => bail!("unknown oracle '{other}' (mc | exact)"),
    }
}

fn initial_distribution(
    config: &Config,
    graph: &BestReplyGraph<f64>,
) -> anyhow::Result<Vec<f64>> {
    let total = graph.space.total() as usize;
    match &config.dynamics.a0 {
        A0Setting::Name(name) => match name.as_str() {
            "uniform" => Ok(vec![1.0 / total as f64; total]),
            "anticoop" => {
                if !config.is_team_game() {
                    bail!("a0 = \"anticoop\" only makes sense for the team game");
                }
                // agent 0 all high actions, agent 1 all low actions
                let bins = graph.space.bins(0);
                let ones = (1u64 << bins) - 1;
                let joint = graph.space.encode(&[ones, 0]);
                let mut a0 = vec![0.0; total];
                a0[joint as usize] = 1.0;
                Ok(a0)
            }
            other => bail!("unknown a0 '{other}' (uniform | anticoop | an index)"),
        },
        A0Setting::Index(idx) => {
            if *idx >= total as u64 {
                bail!("a0 index {idx} out of range (joint policy count {total})");
            }
            let mut a0 = vec![0.0; total];
            a0[*idx as usize] = 1.0;
            Ok(a0)
        }
    }
}

fn print_table(report: &ChainReport) {
    println!("chain over {} joint policies", report.n_joint_policies);
    println!(
        "verdict: {}",
        if report.is_absorbing_chain {
            "absorbing"
        } else {
            "NOT absorbing"
        }
    );
    println!(
        "absorbing states: {} | transient: {} | cannot reach absorption: {}",
        report.absorbing_states.len(),
        report.transient_count,
        report.non_absorbing_states.len()
    );
    if !report.non_absorbing_states.is_empty() {
        println!("  stuck states: {:?}", report.non_absorbing_states);
    }
    if let Some(probs) = &report.absorption_probabilities {
        println!("{:>12} {:>14}", "state", "P(absorb)");
        let mut entries: Vec<(usize, f64)> = report
            .absorbing_states
            .iter()
            .map(|&s| (s, probs[s]))
            .collect();
        entries.sort_by(|a, b| b.1.total_cmp(&a.1));
        for (state, p) in entries.iter().take(16) {
            println!("{state:>12} {p:>14.6}");
        }
        if entries.len() > 16 {
            println!("  ... ({} more)", entries.len() - 16);
        }
    }
    if let Some(steps) = &report.expected_steps {
        let mean = steps.iter().sum::<f64>() / steps.len().max(1) as f64;
        let max = steps.iter().copied().fold(0.0f64, f64::max);
        println!("expected steps to absorption: mean {mean:.3}, max {max:.3}");
    }
    if !report.flagged_cells.is_empty() {
        println!(
            "WARNING: {} best-reply cell(s) classified within noise margin",
            report.flagged_cells.len()
        );
    }
}

pub fn run(config: &Config, out_dir: &Path, chain_report: bool) -> anyhow::Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("create output directory {}", out_dir.display()))?;
    let mut manifest = RunManifest::new(
        "analyze-dynamics",
        config.master_seed,
        config.threads,
        config.to_toml()?,
    );
    let start = Instant::now();

    let graph = build_graph(config)?;
    let rules: Vec<UpdateRule<f64>> = config
        .agents
        .iter()
        .take(graph.space.n_agents())
        .map(|a| UpdateRule::new(a.inertia, a.explore))
        .collect::<Result<_, _>>()?;
    let chain: PolicyChain<f64> = build_policy_chain(&graph, &rules)?;
    let a0 = initial_distribution(config, &graph)?;

    let (absorption, steps) = if chain.is_absorbing_chain {
        (
            Some(chain.absorption_probabilities(&a0)?),
            Some(chain.expected_steps_to_absorption()?),
        )
    } else {
        (None, None)
    };

    let report = ChainReport {
        game: config.game.name.clone(),
        oracle: config.dynamics.oracle.clone(),
        n_joint_policies: graph.space.total(),
        is_absorbing_chain: chain.is_absorbing_chain,
        absorbing_states: chain.absorbing.clone(),
        transient_count: chain.transient.len(),
        non_absorbing_states: chain.non_absorbing_states.clone(),
        a0,
        absorption_probabilities: absorption,
        transient_states: chain.transient.clone(),
        expected_steps: steps,
        flagged_cells: graph.flagged.clone(),
        adjacency: graph.adjacency(),
        update_rules: rules,
    };

    let report_path = out_dir.join("chain_report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)
        .with_context(|| format!("write {}", report_path.display()))?;
    let chain_path = out_dir.join("chain.json");
    std::fs::write(&chain_path, serde_json::to_string(&chain)?)
        .with_context(|| format!("write {}", chain_path.display()))?;
    manifest.add_output(&report_path);
    manifest.add_output(&chain_path);
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    let manifest_path = manifest.write(out_dir)?;

    if chain_report {
        print_table(&report);
    } else {
        println!(
            "chain over {} joint policies: {} ({} absorbing, {} transient)",
            report.n_joint_policies,
            if report.is_absorbing_chain {
                "absorbing"
            } else {
                "not absorbing"
            },
            report.absorbing_states.len(),
            report.transient_count
        );
    }
    println!("wrote {}", manifest_path.display());
    Ok(())
}
