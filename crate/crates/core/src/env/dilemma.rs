use serde::{Deserialize, Serialize};

use super::{MultiAgentEnv, Observation, StepOutcome};
use crate::error::{Error, Result};
use crate::kernel::{AnchorContext, DomainDescriptor};
use crate::SimRng;

/// Largest agent count for which the lexicographic joint-action domain is
/// materialized (2^24 cells).
const MAX_LEXICOGRAPHIC_AGENTS: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(usize)]
pub enum DilemmaAction {
    Defect = 0,
    Cooperate = 1,
}

impl DilemmaAction {
    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(DilemmaAction::Defect),
            1 => Some(DilemmaAction::Cooperate),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffProfile {
    #[default]
    Homogeneous,
    Heterogeneous,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sparsity {
    Baseline,
    #[default]
    Sparse,
}

/// How a joint action maps onto the 1D governance domain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlattenMode {
    /// Binary joint-action index, agent 0 most significant.
    #[default]
    Lexicographic,
    /// Number of cooperators.
    CooperatorCount,
}

fn default_agents() -> usize {
    16
}

fn default_temptation() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DilemmaConfig {
    #[serde(default = "default_agents")]
    pub n_agents: usize,
    #[serde(default = "default_agents")]
    pub episode_len: usize,
    #[serde(default)]
    pub payoff: PayoffProfile,
    #[serde(default)]
    pub sparsity: Sparsity,
    /// Fraction of its maximum reward a defector keeps in the baseline game.
    #[serde(default = "default_temptation")]
    pub temptation: f64,
    #[serde(default)]
    pub flatten: FlattenMode,
}

impl Default for DilemmaConfig {
    fn default() -> Self {
        DilemmaConfig {
            n_agents: 16,
            episode_len: 16,
            payoff: PayoffProfile::Homogeneous,
            sparsity: Sparsity::Sparse,
            temptation: 0.5,
            flatten: FlattenMode::Lexicographic,
        }
    }
}

impl DilemmaConfig {
    /// Maximum reward of agent `i`: 1 for homogeneous payoffs, alternating
    /// 1 and 2 for heterogeneous ones.
    pub fn max_reward(&self, agent: usize) -> f64 {
        match self.payoff {
            PayoffProfile::Homogeneous => 1.0,
            PayoffProfile::Heterogeneous => {
                if agent % 2 == 0 {
                    1.0
                } else {
                    2.0
                }
            }
        }
    }

    pub fn domain(&self) -> DomainDescriptor {
        match self.flatten {
            FlattenMode::Lexicographic => DomainDescriptor::JointAction(1 << self.n_agents),
            FlattenMode::CooperatorCount => DomainDescriptor::JointAction(self.n_agents + 1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::config("env.n_agents", "must be positive"));
        }
        if self.episode_len == 0 {
            return Err(Error::config("env.episode_len", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.temptation) {
            return Err(Error::config("env.temptation", "must lie in [0, 1]"));
        }
        if self.flatten == FlattenMode::Lexicographic && self.n_agents > MAX_LEXICOGRAPHIC_AGENTS {
            return Err(Error::config(
                "env.flatten",
                format!("lexicographic domain limited to {MAX_LEXICOGRAPHIC_AGENTS} agents"),
            ));
        }
        Ok(())
    }
}

/// Per-agent rewards for one round.
///
/// Baseline: a cooperator gets `r_i * k / N`, a defector `t * r_i`.
/// Sparse: everyone gets `r_i` when all `N` cooperate, else nothing.
pub fn dilemma_step(config: &DilemmaConfig, actions: &[DilemmaAction]) -> Vec<f64> {
    let n = actions.len();
    let k = actions
        .iter()
        .filter(|&&a| a == DilemmaAction::Cooperate)
        .count();
    actions
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let r = config.max_reward(i);
            match (config.sparsity, a) {
                (Sparsity::Sparse, _) if k == n => r,
                (Sparsity::Sparse, _) => 0.0,
                (Sparsity::Baseline, DilemmaAction::Cooperate) => r * k as f64 / n as f64,
                (Sparsity::Baseline, DilemmaAction::Defect) => config.temptation * r,
            }
        })
        .collect()
}

/// Index of a joint action in the governance domain.
pub fn flatten_joint_action(actions: &[DilemmaAction], config: &DilemmaConfig) -> usize {
    match config.flatten {
        FlattenMode::Lexicographic => actions
            .iter()
            .fold(0usize, |acc, &a| (acc << 1) | a as usize),
        FlattenMode::CooperatorCount => actions
            .iter()
            .filter(|&&a| a == DilemmaAction::Cooperate)
            .count(),
    }
}

/// Repeated N-player dilemma: `episode_len` simultaneous rounds.
#[derive(Clone, Debug)]
pub struct DilemmaEnv {
    config: DilemmaConfig,
    step: usize,
    last_actions: Option<Vec<DilemmaAction>>,
    last_rewards: Vec<f64>,
    last_index: Option<usize>,
    done: bool,
}

impl DilemmaEnv {
    pub fn new(config: DilemmaConfig) -> Result<Self> {
        config.validate()?;
        let n = config.n_agents;
        Ok(DilemmaEnv {
            config,
            step: 0,
            last_actions: None,
            last_rewards: vec![0.0; n],
            last_index: None,
            done: false,
        })
    }

    pub fn config(&self) -> &DilemmaConfig {
        &self.config
    }

    pub fn last_actions(&self) -> Option<&[DilemmaAction]> {
        self.last_actions.as_deref()
    }

    pub fn round(&self) -> usize {
        self.step
    }
}

impl MultiAgentEnv for DilemmaEnv {
    fn n_agents(&self) -> usize {
        self.config.n_agents
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn max_episode_len(&self) -> usize {
        self.config.episode_len
    }

    fn reset(&mut self, _rng: &mut SimRng) -> Result<()> {
        self.step = 0;
        self.last_actions = None;
        self.last_rewards = vec![0.0; self.config.n_agents];
        self.last_index = None;
        self.done = false;
        Ok(())
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        if actions.len() != self.config.n_agents {
            return Err(Error::InvalidInput(format!(
                "expected {} actions, got {}",
                self.config.n_agents,
                actions.len()
            )));
        }
        let acts = actions
            .iter()
            .map(|&a| {
                DilemmaAction::from_index(a)
                    .ok_or_else(|| Error::InvalidInput(format!("action {a} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        let rewards = dilemma_step(&self.config, &acts);
        let all_in = acts.iter().all(|&a| a == DilemmaAction::Cooperate);
        self.last_index = Some(flatten_joint_action(&acts, &self.config));
        self.last_actions = Some(acts);
        self.last_rewards = rewards.clone();
        self.step += 1;
        self.done = self.step >= self.config.episode_len;
        Ok(StepOutcome::base(rewards, self.done, false, all_in))
    }

    fn is_done(&self) -> bool {
        self.done
    }

    fn joint_observation(&self) -> Observation {
        let prev = match &self.last_actions {
            None => 0,
            Some(a) => 1 + a.iter().filter(|&&x| x == DilemmaAction::Cooperate).count() as u32,
        };
        vec![self.step.min(self.config.episode_len - 1) as u32, prev]
    }

    fn joint_observation_extents(&self) -> Vec<u32> {
        vec![self.config.episode_len as u32, self.config.n_agents as u32 + 2]
    }

    fn agent_observation(&self, agent: usize) -> Observation {
        let own = match &self.last_actions {
            None => 0,
            Some(a) => 1 + a[agent] as u32,
        };
        let paid = (self.last_rewards[agent] > 0.0) as u32;
        vec![own, paid, self.step.min(self.config.episode_len - 1) as u32]
    }

    fn agent_observation_extents(&self) -> Vec<u32> {
        vec![3, 2, self.config.episode_len as u32]
    }

    fn governance_domain(&self) -> DomainDescriptor {
        self.config.domain()
    }

    fn governance_cells(&self) -> Option<Vec<usize>> {
        self.last_index.map(|i| vec![i; self.config.n_agents])
    }

    fn anchor_context(&self) -> AnchorContext {
        AnchorContext {
            agent_starts: vec![],
            goal: Some(vec![(self.config.domain().len() - 1) as f64]),
        }
    }
}
