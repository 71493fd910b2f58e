//! Governance layer: wraps an environment and adds kernel rewards to the
//! base rewards, either as per-visit bonuses or as potential differences.

mod mors;

pub use mors::{MorsShaped, MORS_HANDOVER_BONUS, MORS_PICKUP_BONUS, MORS_PROGRESS_RATE};

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::env::{MultiAgentEnv, Observation, StepOutcome};
use crate::error::{Error, Result};
use crate::kernel::{
    build_reward_field, normalize_field, superimpose, AnchorContext, DomainDescriptor,
    KernelSpec, Owner, RewardField,
};
use crate::learner::stream_rng;
use crate::SimRng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapingMode {
    /// Effective field value of the entered cell, then decay.
    #[default]
    Additive,
    /// `γΦ(s′) − Φ(s)` with the composite field as potential.
    Potential,
}

/// `γ·phi_next − phi`.
pub fn potential_shaping(phi: f64, phi_next: f64, gamma: f64) -> f64 {
    gamma * phi_next - phi
}

/// A kernel configuration: the unit the search mutates and ranks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub components: Vec<KernelSpec>,
}

impl KernelConfig {
    pub fn new(components: Vec<KernelSpec>) -> Self {
        KernelConfig { components }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: KernelConfig =
            toml::from_str(text).map_err(|e| Error::config("components", e.to_string()))?;
        for spec in &c.components {
            spec.validate()?;
        }
        Ok(c)
    }

    /// Builds every component field, normalizes it, and superimposes the
    /// fields of each owner into one composite.
    pub fn build_fields(
        &self,
        domain: &DomainDescriptor,
        context: &AnchorContext,
        n_agents: usize,
        rng: &mut SimRng,
    ) -> Result<Vec<RewardField>> {
        let mut groups: BTreeMap<Owner, Vec<(RewardField, &KernelSpec)>> = BTreeMap::new();
        for spec in &self.components {
            let raw = build_reward_field(spec, domain, context, rng)?;
            let field = normalize_field(&raw, n_agents, spec.sign_mode)?;
            groups.entry(field.owner).or_default().push((field, spec));
        }
        groups
            .into_values()
            .map(|group| {
                let mode = group[0].1.sign_mode;
                if group.iter().any(|(_, s)| s.sign_mode != mode) {
                    return Err(Error::InvalidInput(format!(
                        "mixed sign modes for {:?}",
                        group[0].0.owner
                    )));
                }
                let fields: Vec<RewardField> = group.into_iter().map(|(f, _)| f).collect();
                superimpose(&fields, n_agents, mode)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GovernanceConfig {
    pub fields: Vec<RewardField>,
    pub mode: ShapingMode,
    pub gamma: f64,
}

impl GovernanceConfig {
    pub fn new(fields: Vec<RewardField>, mode: ShapingMode, gamma: f64, n_agents: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidInput(format!("gamma {gamma} outside (0, 1]")));
        }
        let mut seen = Vec::new();
        for f in &fields {
            if let Owner::Agent(i) = f.owner {
                if i >= n_agents {
                    return Err(Error::InvalidInput(format!(
                        "field for agent {i} with only {n_agents} agents"
                    )));
                }
            }
            if seen.contains(&f.owner) {
                return Err(Error::InvalidInput(format!("two fields for {:?}", f.owner)));
            }
            seen.push(f.owner);
            if f.domain != fields[0].domain {
                return Err(Error::DomainMismatch("fields over different domains".into()));
            }
        }
        Ok(GovernanceConfig { fields, mode, gamma })
    }

    fn index_of(&self, owner: Owner) -> Option<usize> {
        self.fields.iter().position(|f| f.owner == owner)
    }

    pub fn field(&self, owner: Owner) -> Option<&RewardField> {
        self.index_of(owner).map(|i| &self.fields[i])
    }

    /// Φ_i at `cell`: agent field plus shared field, raw values.
    pub fn potential(&self, agent: usize, cell: usize) -> Result<f64> {
        let mut phi = 0.0;
        for owner in [Owner::Agent(agent), Owner::Shared] {
            if let Some(f) = self.field(owner) {
                if cell >= f.len() {
                    return Err(Error::DomainMismatch(format!("cell {cell} outside field")));
                }
                phi += f.value(cell);
            }
        }
        Ok(phi)
    }

    fn reset_decay(&mut self) {
        self.fields.iter_mut().for_each(RewardField::reset_decay);
    }
}

/// Kernels plus the seed for field noise, kept so fields can be rebuilt
/// when a randomized layout moves the anchors.
#[derive(Clone, Debug)]
struct FieldSource {
    kernels: KernelConfig,
    noise_seed: u64,
}

/// Environment wrapper that applies governance rewards.
#[derive(Clone, Debug)]
pub struct Governed<E: MultiAgentEnv> {
    inner: E,
    gov: GovernanceConfig,
    source: Option<FieldSource>,
    context: Option<AnchorContext>,
    cells: Option<Vec<usize>>,
}

impl<E: MultiAgentEnv> Governed<E> {
    /// Wraps `inner` with prebuilt fields.
    pub fn new(inner: E, gov: GovernanceConfig) -> Result<Self> {
        let domain = inner.governance_domain();
        if let Some(f) = gov.fields.iter().find(|f| f.domain != domain) {
            return Err(Error::DomainMismatch(format!(
                "field over {:?}, environment governs {:?}",
                f.domain, domain
            )));
        }
        if let Some(Owner::Agent(i)) = gov
            .fields
            .iter()
            .map(|f| f.owner)
            .find(|o| matches!(o, Owner::Agent(i) if *i >= inner.n_agents()))
        {
            return Err(Error::InvalidInput(format!("field for missing agent {i}")));
        }
        Ok(Governed {
            inner,
            gov,
            source: None,
            context: None,
            cells: None,
        })
    }

    /// Wraps `inner` and builds fields from `kernels`, rebuilding them
    /// whenever a reset changes the anchor positions.
    pub fn from_kernels(
        inner: E,
        kernels: KernelConfig,
        mode: ShapingMode,
        gamma: f64,
        noise_seed: u64,
    ) -> Result<Self> {
        let context = inner.anchor_context();
        let fields = kernels.build_fields(
            &inner.governance_domain(),
            &context,
            inner.n_agents(),
            &mut stream_rng(noise_seed, 7),
        )?;
        let gov = GovernanceConfig::new(fields, mode, gamma, inner.n_agents())?;
        let mut g = Governed::new(inner, gov)?;
        g.source = Some(FieldSource { kernels, noise_seed });
        g.context = Some(context);
        Ok(g)
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn governance(&self) -> &GovernanceConfig {
        &self.gov
    }

    fn rebuild_if_moved(&mut self) -> Result<()> {
        let Some(source) = &self.source else {
            return Ok(());
        };
        let context = self.inner.anchor_context();
        if self.context.as_ref() != Some(&context) {
            let fields = source.kernels.build_fields(
                &self.inner.governance_domain(),
                &context,
                self.inner.n_agents(),
                &mut stream_rng(source.noise_seed, 7),
            )?;
            self.gov = GovernanceConfig::new(fields, self.gov.mode, self.gov.gamma, self.inner.n_agents())?;
            self.context = Some(context);
        }
        Ok(())
    }

    fn potentials(&self, cells: Option<&[usize]>) -> Result<Vec<f64>> {
        let n = self.inner.n_agents();
        match cells {
            None => Ok(vec![0.0; n]),
            Some(c) => (0..n).map(|i| self.gov.potential(i, c[i])).collect(),
        }
    }
}

impl<E: MultiAgentEnv> MultiAgentEnv for Governed<E> {
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
        self.inner.reset(rng)?;
        self.rebuild_if_moved()?;
        self.gov.reset_decay();
        self.cells = self.inner.governance_cells();
        Ok(())
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepOutcome> {
        let mut out = self.inner.step(actions)?;
        let next_cells = self.inner.governance_cells();
        let n = self.inner.n_agents();
        let added = match self.gov.mode {
            ShapingMode::Additive => match &next_cells {
                None => vec![0.0; n],
                Some(cells) => {
                    let mut added = vec![0.0; n];
                    for (i, slot) in added.iter_mut().enumerate() {
                        for owner in [Owner::Agent(i), Owner::Shared] {
                            if let Some(f) = self.gov.field(owner) {
                                *slot += f.effective(cells[i])?;
                            }
                        }
                    }
                    for (i, &cell) in cells.iter().enumerate() {
                        if let Some(k) = self.gov.index_of(Owner::Agent(i)) {
                            self.gov.fields[k].apply_decay(cell)?;
                        }
                    }
                    if let Some(k) = self.gov.index_of(Owner::Shared) {
                        let mut entered = cells.clone();
                        entered.sort_unstable();
                        entered.dedup();
                        for cell in entered {
                            self.gov.fields[k].apply_decay(cell)?;
                        }
                    }
                    added
                }
            },
            ShapingMode::Potential => {
                let before = self.potentials(self.cells.as_deref())?;
                let after = if out.terminated {
                    vec![0.0; n]
                } else {
                    self.potentials(next_cells.as_deref())?
                };
                before
                    .iter()
                    .zip(&after)
                    .map(|(&p, &q)| potential_shaping(p, q, self.gov.gamma))
                    .collect()
            }
        };
        for i in 0..n {
            out.added[i] += added[i];
            out.rewards[i] += added[i];
        }
        self.cells = next_cells;
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

/// Per-step base and added rewards of one episode.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub base: Vec<Vec<f64>>,
    pub added: Vec<Vec<f64>>,
}

impl EpisodeLog {
    pub fn push(&mut self, out: &StepOutcome) {
        self.base.push(out.base_rewards.clone());
        self.added.push(out.added.clone());
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    /// `step,base_0..,added_0..` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.base.first().map_or(0, Vec::len);
        let mut header = vec!["step".to_string()];
        header.extend((0..n).map(|i| format!("base_{i}")));
        header.extend((0..n).map(|i| format!("added_{i}")));
        w.write_record(&header)?;
        for (t, (b, a)) in self.base.iter().zip(&self.added).enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(b.iter().map(|v| v.to_string()));
            row.extend(a.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Governance-added reward per agent summed over the episode.
pub fn episode_added_reward(log: &EpisodeLog) -> Vec<f64> {
    let n = log.added.first().map_or(0, Vec::len);
    let mut totals = vec![0.0; n];
    for step in &log.added {
        for (t, a) in totals.iter_mut().zip(step) {
            *t += a;
        }
    }
    totals
}

/// `Σ_t γ^t · added_t` per agent.
pub fn discounted_added_reward(log: &EpisodeLog, gamma: f64) -> Vec<f64> {
    let n = log.added.first().map_or(0, Vec::len);
    let mut totals = vec![0.0; n];
    let mut discount = 1.0;
    for step in &log.added {
        for (t, a) in totals.iter_mut().zip(step) {
            *t += discount * a;
        }
        discount *= gamma;
    }
    totals
}

#[cfg(test)]
mod tests;
