use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use govrek_core::harness::{
    build_env, compare_runs, render_kernel, rollout, run_experiment, workers_from_env, write_comparison,
    CompareMetric, ExperimentConfig, GovernanceSection, RolloutPolicy,
};
use govrek_core::kernel::{DomainDescriptor, KernelSpec};
use govrek_core::learner::{evaluate, Policy};
use govrek_core::{Error, Result};

/// Governance-kernel reward shaping experiments.
#[derive(Parser)]
#[command(name = "govrek", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of an experiment and write its outputs.
    Run(RunArgs),
    /// Run the kernel search of a search experiment, then train its winner.
    Search(RunArgs),
    /// Rank finished runs by a metric.
    Compare {
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
        /// first-success, final-reward, final-episode-length or auc
        #[arg(long, default_value = "first-success")]
        metric: CompareMetric,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    #[command(subcommand)]
    Kernel(KernelCommand),
    #[command(subcommand)]
    Env(EnvCommand),
    /// Greedy evaluation of a saved policy.
    Eval {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Parent directory of the run directory; defaults to the config's
    /// output_dir.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum KernelCommand {
    /// Evaluate a kernel spec over a domain and write raw and normalized values.
    Render {
        #[arg(long)]
        spec: PathBuf,
        /// `5x5`, `3x3x3` or `joint:17`
        #[arg(long)]
        domain: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        agents: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum EnvCommand {
    /// Play one episode and log every step.
    Rollout {
        #[arg(long)]
        config: PathBuf,
        /// `random` or a saved policy file
        #[arg(long, default_value = "random")]
        policy: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn workers(requested: Option<usize>) -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let wanted = requested.unwrap_or(available).max(1);
    match workers_from_env() {
        Some(cap) => wanted.min(cap),
        None => wanted,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn run(args: &RunArgs, search: bool) -> Result<()> {
    let config = ExperimentConfig::load(&args.config)?;
    if search && !matches!(config.governance, GovernanceSection::Search(_)) {
        return Err(Error::config("governance.kind", "`search` needs governance kind `search`"));
    }
    let parent = args.out_dir.clone().unwrap_or_else(|| config.output_dir.clone());
    let dir = parent.join(&config.name);
    let report = run_experiment(&config, &dir, workers(args.workers))?;
    let m = &report.manifest;
    println!("{}: {} seeds written to {}", m.name, report.results.len(), dir.display());
    if m.partial {
        for f in &m.failures {
            eprintln!("seed {} failed: {}", f.seed, f.error);
        }
        return Err(Error::TrialFailed(format!("{} of {} seeds failed", m.failures.len(), m.seeds.len())));
    }
    Ok(())
}

fn load_policy(path: &Path) -> Result<Policy> {
    Policy::from_json(&fs::read_to_string(path)?)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => run(&args, false),
        Command::Search(args) => run(&args, true),
        Command::Compare { dirs, metric, out } => {
            let rows = compare_runs(&dirs, metric)?;
            match out {
                Some(path) => write_comparison(&rows, create(&path)?),
                None => write_comparison(&rows, io::stdout().lock()),
            }
        }
        Command::Kernel(KernelCommand::Render {
            spec,
            domain,
            out,
            agents,
            seed,
        }) => {
            let spec = KernelSpec::from_toml(&fs::read_to_string(&spec)?)?;
            let domain = DomainDescriptor::parse(&domain)?;
            let mut w = create(&out)?;
            render_kernel(&spec, &domain, agents, seed, &mut w)?;
            w.flush()?;
            Ok(())
        }
        Command::Env(EnvCommand::Rollout {
            config,
            policy,
            seed,
            out,
        }) => {
            let config = ExperimentConfig::load(&config)?;
            let env = build_env(&config, seed, None)?;
            let policy = match policy.as_str() {
                "random" => RolloutPolicy::Random,
                path => RolloutPolicy::Trained(load_policy(Path::new(path))?),
            };
            let mut w = create(&out)?;
            let steps = rollout(&env, &policy, seed, &mut w)?;
            w.flush()?;
            println!("{steps} steps written to {}", out.display());
            Ok(())
        }
        Command::Eval {
            policy,
            config,
            episodes,
            seed,
        } => {
            let config = ExperimentConfig::load(&config)?;
            let policy = load_policy(&policy)?;
            let env = build_env(&config, seed, None)?;
            let m = evaluate(&policy, &env, episodes, seed)?;
            println!("episodes,avg_reward,avg_base_reward,avg_ep_len,success_rate");
            println!(
                "{episodes},{},{},{},{}",
                m.avg_reward, m.avg_base_reward, m.avg_episode_length, m.success_rate
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::BracketExhausted => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
