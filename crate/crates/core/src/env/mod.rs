//! Seedable multi-agent environments: the package-delivery grids (2D road,
//! 3D drone) and the N-player social dilemma.

mod dilemma;
mod grid;
mod paths;

pub use dilemma::{
    dilemma_step, flatten_joint_action, DilemmaAction, DilemmaConfig, DilemmaEnv, FlattenMode,
    PayoffProfile, Sparsity,
};
pub use grid::{
    GridAction, GridEnv, GridEnvConfig, GridLayout, GridState, PackageState, Randomization,
};
pub use paths::count_monotone_paths;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kernel::{AnchorContext, DomainDescriptor};
use crate::SimRng;

/// Small-integer observation; each component is below the matching extent.
pub type Observation = Vec<u32>;

/// Sub-task events reported by the delivery grid.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepEvents {
    /// Agent that picked the package up from the ground this step.
    pub pickup: Option<usize>,
    /// `(giver, receiver)` of a handover this step.
    pub handover: Option<(usize, usize)>,
    /// Carrier after the step and the decrease in package-to-goal
    /// Manhattan distance over the step.
    pub progress: Option<(usize, i64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// Per-agent reward. Base environment reward unless a wrapper shaped it.
    pub rewards: Vec<f64>,
    /// Per-agent base environment reward.
    pub base_rewards: Vec<f64>,
    /// Per-agent amount a shaping wrapper added.
    pub added: Vec<f64>,
    pub terminated: bool,
    pub truncated: bool,
    /// The task was completed on this step.
    pub success: bool,
    pub events: StepEvents,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }

    pub(crate) fn base(rewards: Vec<f64>, terminated: bool, truncated: bool, success: bool) -> Self {
        let n = rewards.len();
        StepOutcome {
            base_rewards: rewards.clone(),
            rewards,
            added: vec![0.0; n],
            terminated,
            truncated,
            success,
            events: StepEvents::default(),
        }
    }
}

/// Episodic environment driven by one discrete action per agent per step.
pub trait MultiAgentEnv: Clone + Send {
    fn n_agents(&self) -> usize;
    /// Actions available to each agent.
    fn n_actions(&self) -> usize;
    fn max_episode_len(&self) -> usize;
    fn reset(&mut self, rng: &mut SimRng) -> Result<()>;
    fn step(&mut self, actions: &[usize]) -> Result<StepOutcome>;
    fn is_done(&self) -> bool;
    /// Fully observable state for a centralized learner.
    fn joint_observation(&self) -> Observation;
    fn joint_observation_extents(&self) -> Vec<u32>;
    /// What agent `agent` sees under decentralized execution.
    fn agent_observation(&self, agent: usize) -> Observation;
    fn agent_observation_extents(&self) -> Vec<u32>;
    /// Domain governance fields for this environment are laid over.
    fn governance_domain(&self) -> DomainDescriptor;
    /// Cell of the governance domain each agent currently occupies, `None`
    /// when the environment has no state yet (dilemma before its first round).
    fn governance_cells(&self) -> Option<Vec<usize>>;
    fn anchor_context(&self) -> AnchorContext;
}

/// Product of observation extents.
pub fn observation_cardinality(extents: &[u32]) -> u128 {
    extents.iter().map(|&e| e as u128).product()
}

/// Either environment, for code that picks one from configuration.
#[derive(Clone, Debug)]
pub enum AnyEnv {
    Grid(GridEnv),
    Dilemma(DilemmaEnv),
}

macro_rules! delegate {
    ($self:ident, $e:ident => $body:expr) => {
        match $self {
            AnyEnv::Grid($e) => $body,
            AnyEnv::Dilemma($e) => $body,
        }
    };
}

impl MultiAgentEnv for AnyEnv {
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
