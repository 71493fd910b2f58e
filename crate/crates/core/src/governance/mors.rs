use crate::env::{AnyEnv, GridEnv, MultiAgentEnv, Observation, StepOutcome};
use crate::error::{Error, Result};
use crate::kernel::{AnchorContext, DomainDescriptor};
use crate::SimRng;

pub const MORS_PICKUP_BONUS: f64 = 0.1;
pub const MORS_HANDOVER_BONUS: f64 = 0.1;
/// Per cell of package progress toward the goal, paid to the carrier.
pub const MORS_PROGRESS_RATE: f64 = 0.02;

/// Hand-engineered sub-task rewards for the delivery grid.
#[derive(Clone, Debug)]
pub struct MorsShaped {
    inner: GridEnv,
}

impl MorsShaped {
    pub fn new(env: AnyEnv) -> Result<Self> {
        match env {
            AnyEnv::Grid(inner) => Ok(MorsShaped { inner }),
            AnyEnv::Dilemma(_) => Err(Error::DomainMismatch(
                "sub-task rewards are defined for the delivery grid only".into(),
            )),
        }
    }

    pub fn inner(&self) -> &GridEnv {
        &self.inner
    }
}

impl MultiAgentEnv for MorsShaped {
    fn n_agents(&self) -> usize {
        self.inner.n_agents()
    }

    fn n_actions(&self) -> usize {
        self.inner.n_actions()
    }

    fn max_episode_len(&self) -> usize {
        self.inner.max_episode_len()
    }

    fn reset(&mut self, rng: &mut SimRng) -> Result<()> {
        self.inner.reset(rng)
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepOutcome> {
        let mut out = self.inner.step(actions)?;
        let mut added = vec![0.0; out.rewards.len()];
        if let Some(i) = out.events.pickup {
            added[i] += MORS_PICKUP_BONUS;
        }
        if let Some((giver, receiver)) = out.events.handover {
            added[giver] += MORS_HANDOVER_BONUS;
            added[receiver] += MORS_HANDOVER_BONUS;
        }
        if let Some((carrier, delta)) = out.events.progress {
            added[carrier] += MORS_PROGRESS_RATE * delta as f64;
        }
        for (i, a) in added.into_iter().enumerate() {
            out.added[i] += a;
            out.rewards[i] += a;
        }
        Ok(out)
    }

    fn is_done(&self) -> bool {
        self.inner.is_done()
    }

    fn joint_observation(&self) -> Observation {
        self.inner.joint_observation()
    }

    fn joint_observation_extents(&self) -> Vec<u32> {
        self.inner.joint_observation_extents()
    }

    fn agent_observation(&self, agent: usize) -> Observation {
        self.inner.agent_observation(agent)
    }

    fn agent_observation_extents(&self) -> Vec<u32> {
        self.inner.agent_observation_extents()
    }

    fn governance_domain(&self) -> DomainDescriptor {
        self.inner.governance_domain()
    }

    fn governance_cells(&self) -> Option<Vec<usize>> {
        self.inner.governance_cells()
    }

    fn anchor_context(&self) -> AnchorContext {
        self.inner.anchor_context()
    }
}
