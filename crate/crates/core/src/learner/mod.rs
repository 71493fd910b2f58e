//! In-repo trainers: tabular Q-learning (centralized joint or independent
//! per-agent) and a small clipped-surrogate policy-gradient learner, plus
//! exact value iteration.

mod mdp;
mod pg;
mod tabular;

pub use mdp::{
    bellman_residual, value_iteration, EnumerableMdp, Transition, ValueIterationResult,
    GREEDY_TIE_TOLERANCE, MAX_VI_STATES,
};
pub use pg::{
    finite_difference_gradient_check, surrogate_gradient, surrogate_objective, Adam,
    FeatureEncoder, Mlp, PgHead, Sample,
};
pub use tabular::{decode_joint_action, encode_joint_action, joint_action_count, QTable};

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::env::{observation_cardinality, MultiAgentEnv, Observation};
use crate::error::{Error, Result};
use crate::SimRng;

/// Tabular centralized learners refuse more table entries than this.
pub const MAX_TABLE_ENTRIES: u128 = 10_000_000;
/// Policy-gradient centralized learners refuse more joint actions than this.
const MAX_PG_JOINT_ACTIONS: u128 = 4096;
const POLICY_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    TabularQ,
    PolicyGradient,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Paradigm {
    /// Centralized training, centralized execution: one joint policy.
    Ctce,
    /// Centralized training, decentralized execution: one policy per agent.
    Ctde,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    pub paradigm: Paradigm,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Defaults to 0.1 for tabular Q and 3e-3 for policy gradient.
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default = "one")]
    pub epsilon_start: f64,
    #[serde(default = "default_epsilon_end")]
    pub epsilon_end: f64,
    /// Steps of linear epsilon decay; half the budget when unset.
    #[serde(default)]
    pub epsilon_decay_steps: Option<u64>,
    #[serde(default = "default_clip")]
    pub clip_ratio: f64,
    #[serde(default = "default_horizon")]
    pub rollout_horizon: usize,
    #[serde(default = "default_hidden")]
    pub hidden_width: usize,
    #[serde(default = "default_epochs")]
    pub update_epochs: usize,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    /// Timesteps between learning-curve samples; `max(budget / 100, 500)`
    /// when unset.
    #[serde(default)]
    pub sample_every: Option<u64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_gamma() -> f64 {
    0.99
}
fn one() -> f64 {
    1.0
}
fn default_epsilon_end() -> f64 {
    0.05
}
fn default_clip() -> f64 {
    0.2
}
fn default_horizon() -> usize {
    256
}
fn default_hidden() -> usize {
    32
}
fn default_epochs() -> usize {
    4
}
fn default_eval_episodes() -> usize {
    20
}

impl LearnerConfig {
    pub fn new(algorithm: Algorithm, paradigm: Paradigm) -> Self {
        LearnerConfig {
            algorithm,
            paradigm,
            gamma: default_gamma(),
            learning_rate: None,
            epsilon_start: 1.0,
            epsilon_end: default_epsilon_end(),
            epsilon_decay_steps: None,
            clip_ratio: default_clip(),
            rollout_horizon: default_horizon(),
            hidden_width: default_hidden(),
            update_epochs: default_epochs(),
            eval_episodes: default_eval_episodes(),
            sample_every: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::config(format!("learner.{field}"), msg));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", format!("{} outside (0, 1]", self.gamma));
        }
        for (name, e) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&e) {
                return bad(name, format!("{e} outside [0, 1]"));
            }
        }
        if !(self.clip_ratio > 0.0) {
            return bad("clip_ratio", "must be positive".into());
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad("learning_rate", "must be positive".into());
            }
        }
        if self.rollout_horizon == 0 || self.hidden_width == 0 || self.update_epochs == 0 {
            return bad("rollout_horizon", "horizon, width and epochs must be positive".into());
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes", "must be at least 1".into());
        }
        if self.sample_every == Some(0) {
            return bad("sample_every", "must be at least 1".into());
        }
        Ok(())
    }

    pub fn lr(&self) -> f64 {
        self.learning_rate.unwrap_or(match self.algorithm {
            Algorithm::TabularQ => 0.1,
            Algorithm::PolicyGradient => 3e-3,
        })
    }

    pub fn sample_interval(&self, budget: u64) -> u64 {
        self.sample_every.unwrap_or((budget / 100).max(500))
    }
}

/// RNG for stream `stream` of seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    /// System reward per episode (summed over agents), shaping included.
    pub avg_reward: f64,
    /// Same, environment reward only.
    pub avg_base_reward: f64,
    pub avg_episode_length: f64,
    pub success_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub timestep: u64,
    pub avg_reward: f64,
    pub avg_base_reward: f64,
    pub avg_episode_length: f64,
    pub success_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub total_timesteps: u64,
    /// Training timestep of the first successful episode; `None` if never.
    pub steps_to_first_success: Option<u64>,
    pub training_episodes: u64,
    pub final_eval: EvalMetrics,
    pub curve: Vec<CurvePoint>,
    /// Updates that touched another agent's table (always 0 when
    /// decentralized learners are independent).
    pub cross_agent_reads: u64,
}

impl TrialResult {
    pub fn avg_reward(&self) -> f64 {
        self.final_eval.avg_reward
    }

    pub fn avg_episode_length(&self) -> f64 {
        self.final_eval.avg_episode_length
    }

    /// Mean of a curve metric over samples at or after `fraction` of the
    /// run.
    pub fn tail_mean(&self, fraction: f64, metric: impl Fn(&CurvePoint) -> f64) -> f64 {
        let from = (self.total_timesteps as f64 * (1.0 - fraction)).floor() as u64;
        let tail: Vec<f64> = self
            .curve
            .iter()
            .filter(|p| p.timestep >= from)
            .map(&metric)
            .collect();
        if tail.is_empty() {
            return self.curve.last().map_or(0.0, metric);
        }
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyModel {
    Tabular { tables: Vec<QTable> },
    Gradient { encoder: FeatureEncoder, nets: Vec<Mlp> },
}

/// Trained policy; serializes to versioned JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub version: u32,
    pub paradigm: Paradigm,
    pub n_agents: usize,
    pub n_actions: usize,
    /// Observation extents the policy was trained on (joint for CTCE, per
    /// agent for CTDE). Empty skips the check.
    #[serde(default)]
    pub obs_extents: Vec<u32>,
    pub model: PolicyModel,
}

impl Policy {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Policy = serde_json::from_str(text)?;
        if p.version != POLICY_VERSION {
            return Err(Error::InvalidInput(format!(
                "policy version {} (expected {POLICY_VERSION})",
                p.version
            )));
        }
        Ok(p)
    }

    pub fn check_env<E: MultiAgentEnv>(&self, env: &E) -> Result<()> {
        if env.n_agents() != self.n_agents || env.n_actions() != self.n_actions {
            return Err(Error::DomainMismatch(format!(
                "policy for {} agents x {} actions, environment has {} x {}",
                self.n_agents,
                self.n_actions,
                env.n_agents(),
                env.n_actions()
            )));
        }
        let extents = match self.paradigm {
            Paradigm::Ctce => env.joint_observation_extents(),
            Paradigm::Ctde => env.agent_observation_extents(),
        };
        if !self.obs_extents.is_empty() && self.obs_extents != extents {
            return Err(Error::DomainMismatch(format!(
                "policy observations {:?}, environment {:?}",
                self.obs_extents, extents
            )));
        }
        Ok(())
    }

    /// Greedy joint action.
    pub fn act<E: MultiAgentEnv>(&self, env: &E, rng: &mut SimRng) -> Vec<usize> {
        match (&self.model, self.paradigm) {
            (PolicyModel::Tabular { tables }, Paradigm::Ctce) => {
                let joint = tables[0].greedy(&env.joint_observation(), rng);
                decode_joint_action(joint, self.n_actions, self.n_agents)
            }
            (PolicyModel::Tabular { tables }, Paradigm::Ctde) => (0..self.n_agents)
                .map(|i| tables[i].greedy(&env.agent_observation(i), rng))
                .collect(),
            (PolicyModel::Gradient { encoder, nets }, Paradigm::Ctce) => {
                let x = encoder.encode(&env.joint_observation());
                let joint = argmax(&nets[0].log_probs(&x));
                decode_joint_action(joint, self.n_actions, self.n_agents)
            }
            (PolicyModel::Gradient { encoder, nets }, Paradigm::Ctde) => (0..self.n_agents)
                .map(|i| argmax(&nets[i].log_probs(&encoder.encode(&env.agent_observation(i)))))
                .collect(),
        }
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Greedy rollouts of `policy` on fresh resets of `env`.
pub fn evaluate<E: MultiAgentEnv>(
    policy: &Policy,
    env: &E,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalMetrics> {
    if n_episodes == 0 {
        return Err(Error::InvalidInput("n_episodes must be at least 1".into()));
    }
    policy.check_env(env)?;
    let mut rng = stream_rng(seed, 0xe7a1);
    let mut env = env.clone();
    let (mut reward, mut base, mut length, mut successes) = (0.0, 0.0, 0.0, 0u64);
    for _ in 0..n_episodes {
        env.reset(&mut rng)?;
        let mut steps = 0u64;
        loop {
            let actions = policy.act(&env, &mut rng);
            let out = env.step(&actions)?;
            reward += out.rewards.iter().sum::<f64>();
            base += out.base_rewards.iter().sum::<f64>();
            steps += 1;
            if out.success {
                successes += 1;
            }
            if out.done() {
                break;
            }
        }
        length += steps as f64;
    }
    let n = n_episodes as f64;
    Ok(EvalMetrics {
        avg_reward: reward / n,
        avg_base_reward: base / n,
        avg_episode_length: length / n,
        success_rate: successes as f64 / n,
    })
}

#[derive(Clone, Debug)]
enum LearnerState {
    Tabular(Vec<QTable>),
    Gradient {
        encoder: FeatureEncoder,
        heads: Vec<PgHead>,
    },
}

/// Resumable training run over one environment.
#[derive(Clone, Debug)]
pub struct Trainer<E: MultiAgentEnv> {
    env: E,
    eval_env: E,
    config: LearnerConfig,
    horizon: u64,
    sample_every: u64,
    rng: SimRng,
    state: LearnerState,
    n_agents: usize,
    n_actions: usize,
    joint_actions: usize,
    timesteps: u64,
    episodes: u64,
    since_update: usize,
    needs_reset: bool,
    first_success: Option<u64>,
    curve: Vec<CurvePoint>,
}

impl<E: MultiAgentEnv> Trainer<E> {
    /// `horizon` is the planned total budget; it sets the exploration
    /// schedule and the learning-curve sampling interval.
    pub fn new(env: E, config: LearnerConfig, horizon: u64) -> Result<Self> {
        config.validate()?;
        if horizon == 0 {
            return Err(Error::InvalidInput("budget must be at least 1".into()));
        }
        let n_agents = env.n_agents();
        let n_actions = env.n_actions();
        let mut rng = stream_rng(config.seed, 1);
        let (state, joint_actions) = match (config.algorithm, config.paradigm) {
            (Algorithm::TabularQ, Paradigm::Ctce) => {
                let joint = joint_action_count(n_actions, n_agents, MAX_TABLE_ENTRIES)?;
                let entries = observation_cardinality(&env.joint_observation_extents())
                    .saturating_mul(joint as u128);
                if entries > MAX_TABLE_ENTRIES {
                    return Err(Error::CapacityExceeded(format!(
                        "joint table needs {entries} entries"
                    )));
                }
                (LearnerState::Tabular(vec![QTable::new(0, joint)]), joint)
            }
            (Algorithm::TabularQ, Paradigm::Ctde) => (
                LearnerState::Tabular((0..n_agents).map(|i| QTable::new(i, n_actions)).collect()),
                n_actions,
            ),
            (Algorithm::PolicyGradient, paradigm) => {
                let (extents, outputs, count) = match paradigm {
                    Paradigm::Ctce => (
                        env.joint_observation_extents(),
                        joint_action_count(n_actions, n_agents, MAX_PG_JOINT_ACTIONS)?,
                        1,
                    ),
                    Paradigm::Ctde => (env.agent_observation_extents(), n_actions, n_agents),
                };
                let encoder = FeatureEncoder::new(extents);
                let heads = (0..count)
                    .map(|_| {
                        PgHead::new(encoder.dim(), config.hidden_width, outputs, config.lr(), &mut rng)
                    })
                    .collect();
                (LearnerState::Gradient { encoder, heads }, outputs)
            }
        };
        let sample_every = config.sample_interval(horizon);
        Ok(Trainer {
            eval_env: env.clone(),
            env,
            horizon,
            sample_every,
            rng,
            state,
            n_agents,
            n_actions,
            joint_actions,
            timesteps: 0,
            episodes: 0,
            since_update: 0,
            needs_reset: true,
            first_success: None,
            curve: Vec::new(),
            config,
        })
    }

    pub fn timesteps(&self) -> u64 {
        self.timesteps
    }

    fn epsilon(&self) -> f64 {
        let decay = self
            .config
            .epsilon_decay_steps
            .unwrap_or(self.horizon / 2)
            .max(1);
        let frac = (self.timesteps as f64 / decay as f64).min(1.0);
        self.config.epsilon_start + (self.config.epsilon_end - self.config.epsilon_start) * frac
    }

    /// Trains `steps` more environment steps, then records a final curve
    /// sample.
    pub fn train_for(&mut self, steps: u64) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
            if self.timesteps % self.sample_every == 0 {
                self.sample()?;
            }
        }
        if self.curve.last().map(|p| p.timestep) != Some(self.timesteps) && self.timesteps > 0 {
            self.sample()?;
        }
        Ok(())
    }


    fn step(&mut self) -> Result<()> {
        if self.needs_reset {
            self.env.reset(&mut self.rng)?;
            self.needs_reset = false;
        }
        let obs = observe(&self.env, self.config.paradigm);
        let eps = self.epsilon();
        let out = match &mut self.state {
            LearnerState::Tabular(tables) => {
                let choices: Vec<usize> = tables
                    .iter()
                    .zip(&obs)
                    .map(|(t, o)| t.epsilon_greedy(o, eps, &mut self.rng))
                    .collect();
                let actions = match self.config.paradigm {
                    Paradigm::Ctce => decode_joint_action(choices[0], self.n_actions, self.n_agents),
                    Paradigm::Ctde => choices.clone(),
                };
                let out = self.env.step(&actions)?;
                let next = if out.terminated { None } else { Some(observe(&self.env, self.config.paradigm)) };
                let (gamma, lr) = (self.config.gamma, self.config.lr());
                match self.config.paradigm {
                    Paradigm::Ctce => {
                        let r: f64 = out.rewards.iter().sum();
                        let n = next.as_ref().map(|n| n[0].as_slice());
                        tables[0].update(0, &obs[0], choices[0], r, n, gamma, lr);
                    }
                    Paradigm::Ctde => {
                        for (i, table) in tables.iter_mut().enumerate() {
                            let n = next.as_ref().map(|n| n[i].as_slice());
                            table.update(i, &obs[i], choices[i], out.rewards[i], n, gamma, lr);
                        }
                    }
                }
                out
            }
            LearnerState::Gradient { encoder, heads } => {
                let feats: Vec<Vec<f64>> = obs.iter().map(|o| encoder.encode(o)).collect();
                let picks: Vec<(usize, f64)> = heads
                    .iter()
                    .zip(&feats)
                    .map(|(h, x)| h.sample_action(x, &mut self.rng))
                    .collect();
                let actions = match self.config.paradigm {
                    Paradigm::Ctce => decode_joint_action(picks[0].0, self.n_actions, self.n_agents),
                    Paradigm::Ctde => picks.iter().map(|p| p.0).collect(),
                };
                let out = self.env.step(&actions)?;
                let done = out.done();
                match self.config.paradigm {
                    Paradigm::Ctce => {
                        let r: f64 = out.rewards.iter().sum();
                        let (a, lp) = picks[0];
                        heads[0].record(feats.into_iter().next().unwrap_or_default(), a, lp, r, done);
                    }
                    Paradigm::Ctde => {
                        for (i, (x, (a, lp))) in feats.into_iter().zip(picks).enumerate() {
                            heads[i].record(x, a, lp, out.rewards[i], done);
                        }
                    }
                }
                self.since_update += 1;
                if self.since_update >= self.config.rollout_horizon {
                    self.since_update = 0;
                    for h in heads.iter_mut() {
                        h.update(self.config.gamma, self.config.clip_ratio, self.config.update_epochs);
                    }
                }
                out
            }
        };
        self.timesteps += 1;
        if out.success && self.first_success.is_none() {
            self.first_success = Some(self.timesteps);
        }
        if out.done() {
            self.episodes += 1;
            self.needs_reset = true;
        }
        Ok(())
    }

    fn sample(&mut self) -> Result<()> {
        let policy = self.policy();
        let m = evaluate(&policy, &self.eval_env, self.config.eval_episodes, self.config.seed ^ self.timesteps)?;
        self.curve.push(CurvePoint {
            timestep: self.timesteps,
            avg_reward: m.avg_reward,
            avg_base_reward: m.avg_base_reward,
            avg_episode_length: m.avg_episode_length,
            success_rate: m.success_rate,
        });
        Ok(())
    }

    pub fn policy(&self) -> Policy {
        let model = match &self.state {
            LearnerState::Tabular(tables) => PolicyModel::Tabular {
                tables: tables.clone(),
            },
            LearnerState::Gradient { encoder, heads } => PolicyModel::Gradient {
                encoder: encoder.clone(),
                nets: heads.iter().map(|h| h.net.clone()).collect(),
            },
        };
        Policy {
            version: POLICY_VERSION,
            paradigm: self.config.paradigm,
            n_agents: self.n_agents,
            n_actions: self.n_actions,
            obs_extents: match self.config.paradigm {
                Paradigm::Ctce => self.env.joint_observation_extents(),
                Paradigm::Ctde => self.env.agent_observation_extents(),
            },
            model,
        }
    }

    pub fn joint_actions(&self) -> usize {
        self.joint_actions
    }

    pub fn result(&self) -> TrialResult {
        let final_eval = self.curve.last().map_or(
            EvalMetrics {
                avg_reward: 0.0,
                avg_base_reward: 0.0,
                avg_episode_length: 0.0,
                success_rate: 0.0,
            },
            |p| EvalMetrics {
                avg_reward: p.avg_reward,
                avg_base_reward: p.avg_base_reward,
                avg_episode_length: p.avg_episode_length,
                success_rate: p.success_rate,
            },
        );
        let cross_agent_reads = match &self.state {
            LearnerState::Tabular(tables) => tables.iter().map(QTable::foreign_reads).sum(),
            LearnerState::Gradient { .. } => 0,
        };
        TrialResult {
            seed: self.config.seed,
            total_timesteps: self.timesteps,
            steps_to_first_success: self.first_success,
            training_episodes: self.episodes,
            final_eval,
            curve: self.curve.clone(),
            cross_agent_reads,
        }
    }
}

fn observe<E: MultiAgentEnv>(env: &E, paradigm: Paradigm) -> Vec<Observation> {
    match paradigm {
        Paradigm::Ctce => vec![env.joint_observation()],
        Paradigm::Ctde => (0..env.n_agents()).map(|i| env.agent_observation(i)).collect(),
    }
}

/// Trains a fresh learner for `budget` environment steps.
pub fn train<E: MultiAgentEnv>(
    env: E,
    config: &LearnerConfig,
    budget: u64,
) -> Result<(Policy, TrialResult)> {
    let mut trainer = Trainer::new(env, config.clone(), budget)?;
    trainer.train_for(budget)?;
    Ok((trainer.policy(), trainer.result()))
}
