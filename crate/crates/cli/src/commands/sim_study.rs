//! The simulation-study command: sweeps exploration-phase lengths over
//! seeded trials of decentralized learning on the team game and writes the
//! trial, aggregate, and plot tables.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context};

use decq::experiments::{
    emit_plot_data, run_experiment, write_aggregate_csv, write_plot_csv, write_trials_csv,
    ExperimentConfig,
};

use crate::config::Config;
use crate::manifest::RunManifest;

pub fn run(config: &Config, out_dir: &Path) -> anyhow::Result<()> {
    if !config.is_team_game() {
        bail!("sim-study runs on the team game; set [game].name = \"team\"");
    }
    let experiment = ExperimentConfig {
        game: config.team_params()?,
        learners: config.team_learners()?,
        phase_lengths: config.experiment.phase_lengths.clone(),
        trials: config.experiment.trials,
        tracked_phases: config.experiment.tracked_phases,
        initial_policy: config.initial_policy_rule()?,
        initial_state: config.initial_state_rule()?,
        master_seed: config.master_seed,
    };
    experiment.validate()?;

    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("create output directory {}", out_dir.display()))?;
    let mut manifest = RunManifest::new(
        "sim-study",
        config.master_seed,
        config.threads,
        config.to_toml()?,
    );
    let start = Instant::now();
    let outcome = run_experiment(&experiment)?;

    let trials_path = out_dir.join("trials.csv");
    let aggregate_path = out_dir.join("aggregate.csv");
    let plot_path = out_dir.join("plot.csv");
    write_trials_csv(&trials_path, &outcome.results)?;
    write_aggregate_csv(&aggregate_path, &outcome.aggregate)?;
    write_plot_csv(&plot_path, &emit_plot_data(&outcome.aggregate))?;
    manifest.add_output(&trials_path);
    manifest.add_output(&aggregate_path);
    manifest.add_output(&plot_path);
    manifest.per_t_seconds = Some(outcome.per_t_seconds.clone());
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    let manifest_path = manifest.write(out_dir)?;

    println!(
        "ran {} trials x {} phase lengths ({} phases tracked)",
        experiment.trials,
        experiment.phase_lengths.len(),
        experiment.tracked_phases
    );
    println!("{:>10} {:>22} {:>12}", "T", "mean optimal fraction", "seconds");
    for &(t_value, seconds) in &outcome.per_t_seconds {
        let rows: Vec<_> = outcome
            .aggregate
            .iter()
            .filter(|r| r.t_value == t_value && r.phase > 0)
            .collect();
        let mean = rows.iter().map(|r| r.fraction).sum::<f64>() / rows.len().max(1) as f64;
        println!("{t_value:>10} {mean:>22.4} {seconds:>12.2}");
    }
    println!("wrote {}", manifest_path.display());
    Ok(())
}
