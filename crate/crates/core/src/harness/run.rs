use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, GovernanceSection};
use super::stats::{aggregate_seeds, emit_plot_data};
use crate::env::{AnyEnv, MultiAgentEnv, Observation, StepOutcome};
use crate::error::{Error, Result};
use crate::governance::{Governed, KernelConfig, MorsShaped, ShapingMode};
use crate::kernel::{sample_kernel_population, AnchorContext, DomainDescriptor, SignMode};
use crate::learner::{train, CurvePoint, LearnerConfig, Policy, Trainer, TrialResult};
use crate::scheduler::{run_gov_rek, Score, SearchOutcome, TrialRunner};
use crate::SimRng;

/// Bumped whenever an output file changes shape.
pub const OUTPUT_SCHEMA_VERSION: u32 = 1;

/// An environment with whichever reward shaping the experiment asks for.
#[derive(Clone, Debug)]
pub enum ShapedEnv {
    Plain(AnyEnv),
    Governed(Governed<AnyEnv>),
    Mors(MorsShaped),
}

macro_rules! delegate {
    ($self:ident, $e:ident => $body:expr) => {
        match $self {
            ShapedEnv::Plain($e) => $body,
            ShapedEnv::Governed($e) => $body,
            ShapedEnv::Mors($e) => $body,
        }
    };
}

impl MultiAgentEnv for ShapedEnv {
    fn n_agents(&self) -> usize {
        delegate!(self, e => e.n_agents())
    }
    fn n_actions(&self) -> usize {
        delegate!(self, e => e.n_actions())
    }
    fn max_episode_len(&self) -> usize {
        delegate!(self, e => e.max_episode_len())
    }
    fn reset(&mut self, rng: &mut SimRng) -> Result<()> {
        delegate!(self, e => e.reset(rng))
    }
    fn step(&mut self, actions: &[usize]) -> Result<StepOutcome> {
        delegate!(self, e => e.step(actions))
    }
    fn is_done(&self) -> bool {
        delegate!(self, e => e.is_done())
    }
    fn joint_observation(&self) -> Observation {
        delegate!(self, e => e.joint_observation())
    }
    fn joint_observation_extents(&self) -> Vec<u32> {
        delegate!(self, e => e.joint_observation_extents())
    }
    fn agent_observation(&self, agent: usize) -> Observation {
        delegate!(self, e => e.agent_observation(agent))
    }
    fn agent_observation_extents(&self) -> Vec<u32> {
        delegate!(self, e => e.agent_observation_extents())
    }
    fn governance_domain(&self) -> DomainDescriptor {
        delegate!(self, e => e.governance_domain())
    }
    fn governance_cells(&self) -> Option<Vec<usize>> {
        delegate!(self, e => e.governance_cells())
    }
    fn anchor_context(&self) -> AnchorContext {
        delegate!(self, e => e.anchor_context())
    }
}

/// The experiment's environment for one seed, shaped as configured. A
/// search experiment needs its winning kernels passed in.
pub fn build_env(config: &ExperimentConfig, seed: u64, kernels: Option<&KernelConfig>) -> Result<ShapedEnv> {
    let env = config.env.build()?;
    let gamma = config.shaping_gamma();
    Ok(match (&config.governance, kernels) {
        (_, Some(k)) => ShapedEnv::Governed(Governed::from_kernels(env, k.clone(), governance_mode(config), gamma, seed)?),
        (GovernanceSection::None, None) => ShapedEnv::Plain(env),
        (GovernanceSection::Mors, None) => ShapedEnv::Mors(MorsShaped::new(env)?),
        (GovernanceSection::Fixed(f), None) => ShapedEnv::Governed(Governed::from_kernels(
            env,
            KernelConfig::new(f.kernels.clone()),
            f.mode,
            gamma,
            seed,
        )?),
        (GovernanceSection::Search(_), None) => {
            return Err(Error::config("governance.kind", "search governance has no fixed kernels"))
        }
    })
}

fn governance_mode(config: &ExperimentConfig) -> ShapingMode {
    match &config.governance {
        GovernanceSection::Fixed(f) => f.mode,
        GovernanceSection::Search(s) => s.mode,
        _ => ShapingMode::Additive,
    }
}

/// Trains one seed.
pub fn run_seed(
    config: &ExperimentConfig,
    seed: u64,
    kernels: Option<&KernelConfig>,
) -> Result<(Policy, TrialResult)> {
    let env = build_env(config, seed, kernels)?;
    let mut learner = config.learner.clone();
    learner.seed = seed;
    train(env, &learner, config.budget)
}

/// Trains kernel configurations for the search, one resource unit being
/// `unit` environment steps.
pub struct KernelTrials {
    pub env: AnyEnv,
    pub learner: LearnerConfig,
    pub mode: ShapingMode,
    pub gamma: f64,
    pub unit: u64,
}

impl TrialRunner<KernelConfig> for KernelTrials {
    type Session = Trainer<Governed<AnyEnv>>;
    type Report = TrialResult;

    fn start(&self, genome: &KernelConfig, _id: u64, seed: u64, max_units: u64) -> Result<Self::Session> {
        let env = Governed::from_kernels(self.env.clone(), genome.clone(), self.mode, self.gamma, seed)?;
        let mut learner = self.learner.clone();
        learner.seed = seed;
        Trainer::new(env, learner, max_units.max(1) * self.unit)
    }

    fn advance(&self, session: &mut Self::Session, units: u64) -> Result<(Score, TrialResult)> {
        session.train_for(units * self.unit)?;
        let r = session.result();
        let score = Score {
            avg_reward: r.avg_reward(),
            avg_episode_length: r.avg_episode_length(),
        };
        Ok((score, r))
    }
}

pub type KernelSearch = SearchOutcome<KernelConfig, Trainer<Governed<AnyEnv>>, TrialResult>;

/// Runs the configured kernel search.
pub fn run_search(config: &ExperimentConfig, workers: usize) -> Result<KernelSearch> {
    let (GovernanceSection::Search(gov), Some(section)) = (&config.governance, &config.search) else {
        return Err(Error::config("governance.kind", "not a search experiment"));
    };
    let options = section.options(config.seeds[0], workers);
    let env = config.env.build()?;
    let domain = env.governance_domain();
    let n_agents = env.n_agents();
    let sign_mode: SignMode = gov.sign_mode;
    let runner = KernelTrials {
        env,
        learner: config.learner.clone(),
        mode: gov.mode,
        gamma: config.shaping_gamma(),
        unit: section.timesteps_per_unit,
    };
    run_gov_rek(&options, &runner, |n, rng| {
        (0..n)
            .map(|_| {
                sample_kernel_population(n_agents + 1, &domain, n_agents, sign_mode, rng).map(KernelConfig::new)
            })
            .collect()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub code_version: String,
    pub name: String,
    pub config_hash: String,
    pub governance: String,
    pub budget: u64,
    pub seeds: Vec<u64>,
    pub partial: bool,
    pub failures: Vec<SeedFailure>,
    pub files: Vec<String>,
}

/// What a finished run produced.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub results: Vec<TrialResult>,
}

const CURVE_HEADER: [&str; 5] = ["timestep", "avg_reward", "avg_base_reward", "avg_ep_len", "success_rate"];

fn write_curve(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CURVE_HEADER)?;
    for p in curve {
        w.write_record([
            p.timestep.to_string(),
            p.avg_reward.to_string(),
            p.avg_base_reward.to_string(),
            p.avg_episode_length.to_string(),
            p.success_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_summary(path: &Path, results: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "seed",
        "steps_to_first_success",
        "total_timesteps",
        "training_episodes",
        "final_avg_reward",
        "final_avg_base_reward",
        "final_avg_ep_len",
        "final_success_rate",
    ])?;
    for r in results {
        w.write_record([
            r.seed.to_string(),
            r.steps_to_first_success.map_or_else(String::new, |s| s.to_string()),
            r.total_timesteps.to_string(),
            r.training_episodes.to_string(),
            r.final_eval.avg_reward.to_string(),
            r.final_eval.avg_base_reward.to_string(),
            r.final_eval.avg_episode_length.to_string(),
            r.final_eval.success_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(e.to_string()))
}

/// Curves for the aggregate track environment reward so runs with
/// different shaping are comparable.
fn base_curve(r: &TrialResult) -> Vec<CurvePoint> {
    r.curve
        .iter()
        .map(|p| CurvePoint {
            avg_reward: p.avg_base_reward,
            ..p.clone()
        })
        .collect()
}

/// Runs every seed, then writes per-seed curves and policies, the seed
/// summary, the aggregate, and the manifest into `out_dir`. Search
/// experiments first run the search and then train its best
/// configuration on every seed.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path, workers: usize) -> Result<RunReport> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();

    let kernels = if matches!(config.governance, GovernanceSection::Search(_)) {
        let outcome = run_search(config, workers)?;
        files.extend(write_search(&outcome, out_dir)?);
        let best = outcome
            .winners
            .first()
            .map(|(r, _)| r.genome.clone())
            .ok_or(Error::BracketExhausted)?;
        Some(best)
    } else {
        None
    };

    let mut seeds = config.seeds.clone();
    seeds.sort_unstable();
    let outcomes: Vec<(u64, Result<(Policy, TrialResult)>)> = pool(workers)?.install(|| {
        use rayon::prelude::*;
        seeds
            .par_iter()
            .map(|&seed| (seed, run_seed(config, seed, kernels.as_ref())))
            .collect()
    });

    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok((policy, result)) => {
                let curve = format!("seed_{seed}.csv");
                write_curve(&out_dir.join(&curve), &result.curve)?;
                let pol = format!("policy_seed_{seed}.json");
                write_text(&out_dir.join(&pol), &policy.to_json()?)?;
                files.push(curve);
                files.push(pol);
                results.push(result);
            }
            Err(e) => failures.push(SeedFailure {
                seed,
                error: e.to_string(),
            }),
        }
    }
    write_summary(&out_dir.join("summary.csv"), &results)?;
    files.push("summary.csv".into());
    if results.len() >= 2 {
        let curves: Vec<Vec<CurvePoint>> = results.iter().map(base_curve).collect();
        let aggregate = aggregate_seeds(&curves)?;
        emit_plot_data(&aggregate, fs::File::create(out_dir.join("aggregate.csv"))?)?;
        files.push("aggregate.csv".into());
    }
    files.sort();

    let manifest = Manifest {
        schema_version: OUTPUT_SCHEMA_VERSION,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        name: config.name.clone(),
        config_hash: config.hash()?,
        governance: config.governance.kind().to_string(),
        budget: config.budget,
        seeds,
        partial: !failures.is_empty(),
        failures,
        files,
    };
    write_text(&out_dir.join("manifest.json"), &serde_json::to_string_pretty(&manifest)?)?;
    Ok(RunReport {
        out_dir: out_dir.to_path_buf(),
        manifest,
        results,
    })
}

/// Search artifacts under `search/`; returns their paths relative to
/// the run directory.
fn write_search(outcome: &KernelSearch, out_dir: &Path) -> Result<Vec<String>> {
    let dir = out_dir.join("search");
    fs::create_dir_all(&dir)?;
    write_text(&dir.join("plan.json"), &serde_json::to_string_pretty(&outcome.plan)?)?;
    write_text(&dir.join("brackets.json"), &serde_json::to_string_pretty(&outcome.brackets)?)?;
    write_text(&dir.join("records.json"), &serde_json::to_string_pretty(&outcome.records)?)?;
    write_text(&dir.join("lineage.json"), &serde_json::to_string_pretty(&outcome.lineage)?)?;

    let mut w = csv::Writer::from_path(dir.join("trials.csv"))?;
    w.write_record([
        "id",
        "round",
        "bracket",
        "rung",
        "resource",
        "timesteps",
        "avg_reward",
        "avg_base_reward",
        "avg_ep_len",
        "success_rate",
        "steps_to_first_success",
    ])?;
    let mut reports: Vec<_> = outcome.reports.iter().collect();
    reports.sort_by_key(|t| (t.round, std::cmp::Reverse(t.bracket), t.rung, t.id));
    for t in reports {
        let e = &t.report.final_eval;
        w.write_record([
            t.id.to_string(),
            t.round.to_string(),
            t.bracket.to_string(),
            t.rung.to_string(),
            t.resource.to_string(),
            t.report.total_timesteps.to_string(),
            e.avg_reward.to_string(),
            e.avg_base_reward.to_string(),
            e.avg_episode_length.to_string(),
            e.success_rate.to_string(),
            t.report.steps_to_first_success.map_or_else(String::new, |s| s.to_string()),
        ])?;
    }
    w.flush()?;

    let mut files = vec![
        "search/brackets.json".to_string(),
        "search/lineage.json".into(),
        "search/plan.json".into(),
        "search/records.json".into(),
        "search/trials.csv".into(),
    ];
    for (rank, (rec, session)) in outcome.winners.iter().enumerate() {
        let name = format!("search/winner_{rank}.toml");
        write_text(&out_dir.join(&name), &rec.genome.to_toml()?)?;
        files.push(name);
        if let Some(trainer) = session {
            let name = format!("search/winner_{rank}_policy.json");
            write_text(&out_dir.join(&name), &trainer.policy().to_json()?)?;
            files.push(name);
        }
    }
    Ok(files)
}

