use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Observation;
use crate::error::{Error, Result};

/// Q-values keyed by observation, created lazily at zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "QTableRepr", from = "QTableRepr")]
pub struct QTable {
    owner: usize,
    n_actions: usize,
    rows: HashMap<Observation, Vec<f64>>,
    foreign_reads: u64,
}

#[derive(Serialize, Deserialize)]
struct QTableRepr {
    owner: usize,
    n_actions: usize,
    rows: Vec<(Observation, Vec<f64>)>,
}

impl From<QTable> for QTableRepr {
    fn from(t: QTable) -> Self {
        let mut rows: Vec<_> = t.rows.into_iter().collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        QTableRepr {
            owner: t.owner,
            n_actions: t.n_actions,
            rows,
        }
    }
}

impl From<QTableRepr> for QTable {
    fn from(r: QTableRepr) -> Self {
        QTable {
            owner: r.owner,
            n_actions: r.n_actions,
            rows: r.rows.into_iter().collect(),
            foreign_reads: 0,
        }
    }
}

impl QTable {
    pub fn new(owner: usize, n_actions: usize) -> Self {
        QTable {
            owner,
            n_actions,
            rows: HashMap::new(),
            foreign_reads: 0,
        }
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Times a learner other than the owner touched this table during an
    /// update.
    pub fn foreign_reads(&self) -> u64 {
        self.foreign_reads
    }

    pub fn q(&self, obs: &[u32], action: usize) -> f64 {
        self.rows.get(obs).map_or(0.0, |row| row[action])
    }

    pub fn max_q(&self, obs: &[u32]) -> f64 {
        self.rows
            .get(obs)
            .map_or(0.0, |row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Best action, ties broken uniformly at random.
    pub fn greedy<R: Rng + ?Sized>(&self, obs: &[u32], rng: &mut R) -> usize {
        let Some(row) = self.rows.get(obs) else {
            return rng.gen_range(0..self.n_actions);
        };
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = (0..row.len()).filter(|&a| row[a] == best).collect();
        ties[rng.gen_range(0..ties.len())]
    }

    pub fn epsilon_greedy<R: Rng + ?Sized>(&self, obs: &[u32], epsilon: f64, rng: &mut R) -> usize {
        if rng.gen::<f64>() < epsilon {
            rng.gen_range(0..self.n_actions)
        } else {
            self.greedy(obs, rng)
        }
    }

    /// One-step Q-learning update made on behalf of learner `reader`.
    /// `next` is `None` when the transition terminated.
    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        reader: usize,
        obs: &[u32],
        action: usize,
        reward: f64,
        next: Option<&[u32]>,
        gamma: f64,
        lr: f64,
    ) {
        if reader != self.owner {
            self.foreign_reads += 1;
        }
        let bootstrap = next.map_or(0.0, |n| self.max_q(n));
        let target = reward + gamma * bootstrap;
        let n_actions = self.n_actions;
        let row = self
            .rows
            .entry(obs.to_vec())
            .or_insert_with(|| vec![0.0; n_actions]);
        row[action] += lr * (target - row[action]);
    }

    pub fn max_abs(&self) -> f64 {
        self.rows
            .values()
            .flat_map(|r| r.iter())
            .fold(0.0, |m, q| m.max(q.abs()))
    }
}

/// Number of joint actions, or `CapacityExceeded` past `limit`.
pub fn joint_action_count(n_actions: usize, n_agents: usize, limit: u128) -> Result<usize> {
    let mut total: u128 = 1;
    for _ in 0..n_agents {
        total = total.saturating_mul(n_actions as u128);
        if total > limit {
            return Err(Error::CapacityExceeded(format!(
                "{n_actions}^{n_agents} joint actions"
            )));
        }
    }
    Ok(total as usize)
}

/// Joint index with agent 0 as the most significant digit.
pub fn encode_joint_action(actions: &[usize], n_actions: usize) -> usize {
    actions.iter().fold(0, |acc, &a| acc * n_actions + a)
}

pub fn decode_joint_action(mut index: usize, n_actions: usize, n_agents: usize) -> Vec<usize> {
    let mut out = vec![0; n_agents];
    for slot in out.iter_mut().rev() {
        *slot = index % n_actions;
        index /= n_actions;
    }
    out
}
