use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitCode};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use poql::experiment::{
    compare, compare_csv, compare_table, evaluate_checkpoint, export_model, run_experiment, ExperimentConfig,
    OUTPUT_ROOT_VAR,
};

/// Q-learning in partially observable environments with learned automata.
#[derive(Parser)]
#[command(name = "poql", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment described by a JSON config.
    Train { config: PathBuf },
    /// Evaluate a stored agent greedily.
    Eval {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the learned model of a run in DOT format.
    ExportDot {
        checkpoint: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Summarize run directories as a table.
    Compare {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Train every config matching a glob, one process per config.
    Sweep {
        pattern: String,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn output_root() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from)
}

fn train(config: &Path) -> Result<()> {
    let config = ExperimentConfig::load(config).with_context(|| format!("loading {}", config.display()))?;
    let (dir, s) = run_experiment(&config, output_root().as_deref())?;
    let steps = s.mean_steps.map_or("-".to_string(), |m| format!("{m:.2}"));
    println!(
        "{} {} seed {}: goal_rate {:.2}, mean_steps {steps}, episodes {}{}",
        s.environment,
        s.agent.as_str(),
        s.seed,
        s.goal_rate,
        s.episodes,
        if s.stopped_early { " (stopped early)" } else { "" }
    );
    println!("artifacts in {}", dir.display());
    Ok(())
}

fn sweep(pattern: &str, jobs: Option<usize>) -> Result<()> {
    let configs: Vec<PathBuf> = glob::glob(pattern)?.collect::<Result<_, _>>()?;
    if configs.is_empty() {
        bail!("no config matches {pattern:?}");
    }
    let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);
    let exe = std::env::current_exe()?;
    let mut running: Vec<(PathBuf, Child)> = Vec::new();
    let mut failed = Vec::new();
    let mut wait_one = |running: &mut Vec<(PathBuf, Child)>| -> Result<()> {
        let (path, mut child) = running.remove(0);
        if !child.wait()?.success() {
            failed.push(path);
        }
        Ok(())
    };
    for config in configs {
        if running.len() >= jobs {
            wait_one(&mut running)?;
        }
        let child = Command::new(&exe).arg("train").arg(&config).spawn()?;
        running.push((config, child));
    }
    while !running.is_empty() {
        wait_one(&mut running)?;
    }
    if !failed.is_empty() {
        let names: Vec<String> = failed.iter().map(|p| p.display().to_string()).collect();
        bail!("failed runs: {}", names.join(", "));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Train { config } => train(&config),
        Cmd::Eval { checkpoint, episodes, seed } => {
            let s = evaluate_checkpoint(&checkpoint, episodes, seed)?;
            let steps = s.mean_steps.map_or("-".to_string(), |m| format!("{m:.2}"));
            println!("goal_rate {:.2}\nmean_steps {steps}\nmean_return {:.4}", s.goal_rate, s.mean_return);
            Ok(())
        }
        Cmd::ExportDot { checkpoint, output } => {
            let dot = export_model(&checkpoint)?;
            match output {
                Some(path) => std::fs::write(&path, dot).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{dot}"),
            }
            Ok(())
        }
        Cmd::Compare { dirs, csv } => {
            let rows = compare(&dirs);
            print!("{}", compare_table(&rows));
            if let Some(path) = csv {
                std::fs::write(&path, compare_csv(&rows)).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(())
        }
        Cmd::Sweep { pattern, jobs } => sweep(&pattern, jobs),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
