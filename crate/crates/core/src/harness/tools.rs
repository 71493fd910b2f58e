use std::io::Write;

use rand::{Rng, SeedableRng};

use super::run::ShapedEnv;
use crate::env::{AnyEnv, GridEnv, GridEnvConfig, MultiAgentEnv, PackageState};
use crate::error::Result;
use crate::kernel::{build_reward_field, normalize_field, AnchorContext, DomainDescriptor, KernelSpec};
use crate::learner::{stream_rng, Policy};
use crate::SimRng;

/// Anchor context a standalone domain implies: the canonical delivery
/// layout on grids, the last index as goal on joint-action domains.
pub fn default_context(domain: &DomainDescriptor) -> AnchorContext {
    match domain {
        DomainDescriptor::Grid(dims) => GridEnv::new(GridEnvConfig::new(dims.clone()))
            .map(|g| g.anchor_context())
            .unwrap_or_default(),
        DomainDescriptor::JointAction(n) => AnchorContext {
            agent_starts: Vec::new(),
            goal: Some(vec![n.saturating_sub(1) as f64]),
        },
    }
}

/// Writes the raw and normalized field of `spec` over `domain`, one row
/// per cell: `row,col[,layer]` on grids, `index` on joint-action domains.
pub fn render_kernel<W: Write>(
    spec: &KernelSpec,
    domain: &DomainDescriptor,
    n_agents: usize,
    seed: u64,
    out: W,
) -> Result<()> {
    let context = default_context(domain);
    let raw = build_reward_field(spec, domain, &context, &mut SimRng::seed_from_u64(seed))?;
    let norm = normalize_field(&raw, n_agents, spec.sign_mode)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = match domain {
        DomainDescriptor::Grid(dims) => ["row", "col", "layer"][..dims.len()].to_vec(),
        DomainDescriptor::JointAction(_) => vec!["index"],
    };
    header.extend(["raw", "normalized"]);
    w.write_record(&header)?;
    for cell in 0..domain.len() {
        let mut row: Vec<String> = domain.coords(cell).iter().map(|c| c.to_string()).collect();
        row.push(raw.value(cell).to_string());
        row.push(norm.value(cell).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub enum RolloutPolicy {
    /// Uniform random actions.
    Random,
    Trained(Policy),
}

impl ShapedEnv {
    /// The delivery grid underneath any shaping, if there is one.
    pub fn grid(&self) -> Option<&GridEnv> {
        let base = match self {
            ShapedEnv::Mors(m) => return Some(m.inner()),
            ShapedEnv::Plain(e) => e,
            ShapedEnv::Governed(g) => g.inner(),
        };
        match base {
            AnyEnv::Grid(g) => Some(g),
            AnyEnv::Dilemma(_) => None,
        }
    }
}

fn grid_header(grid: &GridEnv, n: usize) -> Vec<String> {
    let axes = ["row", "col", "layer"];
    let mut h = vec!["step".to_string()];
    for i in 0..n {
        for a in &axes[..grid.ndim()] {
            h.push(format!("agent{i}_{a}"));
        }
    }
    for i in 0..n {
        h.push(format!("fuel{i}"));
    }
    h.push("holder".into());
    for i in 0..n {
        h.push(format!("action{i}"));
    }
    for i in 0..n {
        h.push(format!("reward{i}"));
    }
    h
}

fn grid_row(grid: &GridEnv, step: usize, actions: &[usize], rewards: &[f64]) -> Vec<String> {
    let s = grid.state();
    let mut row = vec![step.to_string()];
    for &p in &s.positions {
        row.extend(grid.domain().coords(p).iter().map(|c| c.to_string()));
    }
    row.extend(s.fuel.iter().map(|f| f.to_string()));
    row.push(match s.package {
        PackageState::Held(i) => i.to_string(),
        PackageState::Ground(_) => "none".into(),
    });
    row.extend(actions.iter().map(|a| a.to_string()));
    row.extend(rewards.iter().map(|r| r.to_string()));
    row
}

/// Plays one episode and writes one row per state. Row 0 is the reset
/// state with empty actions and rewards; row `t` is the state after step
/// `t` with the actions taken and rewards received on it.
pub fn rollout<W: Write>(env: &ShapedEnv, policy: &RolloutPolicy, seed: u64, out: W) -> Result<usize> {
    let mut env = env.clone();
    if let RolloutPolicy::Trained(p) = policy {
        p.check_env(&env)?;
    }
    let mut rng = stream_rng(seed, 0x5011);
    env.reset(&mut rng)?;
    let n = env.n_agents();
    let mut w = csv::Writer::from_writer(out);
    let blank = |k: usize| vec![String::new(); k];
    match env.grid() {
        Some(g) => {
            w.write_record(grid_header(g, n))?;
            let mut row = grid_row(g, 0, &[], &[]);
            row.extend(blank(2 * n));
            w.write_record(&row)?;
        }
        None => {
            let mut h = vec!["step".to_string()];
            h.extend((0..n).map(|i| format!("action{i}")));
            h.extend((0..n).map(|i| format!("reward{i}")));
            w.write_record(&h)?;
        }
    }
    let mut steps = 0;
    while !env.is_done() {
        let actions: Vec<usize> = match policy {
            RolloutPolicy::Random => (0..n).map(|_| rng.gen_range(0..env.n_actions())).collect(),
            RolloutPolicy::Trained(p) => p.act(&env, &mut rng),
        };
        let out = env.step(&actions)?;
        steps += 1;
        let row = match env.grid() {
            Some(g) => grid_row(g, steps, &actions, &out.rewards),
            None => {
                let mut r = vec![steps.to_string()];
                r.extend(actions.iter().map(|a| a.to_string()));
                r.extend(out.rewards.iter().map(|x| x.to_string()));
                r
            }
        };
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(steps)
}
