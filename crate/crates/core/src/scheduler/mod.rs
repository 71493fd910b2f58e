//! Repeated Hyperband rounds of successive-halving brackets over kernel
//! configurations, with genetic refinement of each round's winners.

mod plan;
mod search;

pub use plan::{floor_log, plan_round, plan_rounds, BracketPlan, RoundPlan, RungPlan, SearchPlan};
pub use search::{
    run_bracket, run_gov_rek, select_with_fallback, top_configs, BracketResult, BracketSummary,
    LineageEntry,
    RungRecord, SearchOptions, SearchOutcome, TrialReport,
};

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::governance::KernelConfig;
use crate::kernel::mutate;

/// Search hooks on a configuration. The scheduler sees nothing else.
pub trait Genome: Clone + Send + Sync {
    /// Perturbed copy.
    fn mutate<R: Rng + ?Sized>(&self, rng: &mut R) -> Self;
    /// Merge with another configuration.
    fn superimpose(&self, other: &Self) -> Self;
}

impl Genome for KernelConfig {
    fn mutate<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        KernelConfig::new(self.components.iter().map(|s| mutate(s, rng, 1.0)).collect())
    }

    fn superimpose(&self, other: &Self) -> Self {
        let mut components = self.components.clone();
        components.extend(other.components.iter().cloned());
        KernelConfig::new(components)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Sampled,
    Mutated,
    Superimposed,
    /// A previous winner re-entered unchanged next to its children.
    Carried,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub avg_reward: f64,
    pub avg_episode_length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RungScore {
    pub rung: usize,
    /// Cumulative resource at which the score was taken.
    pub resource: u64,
    /// `None` when training failed.
    pub score: Option<Score>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigRecord<G> {
    pub id: u64,
    pub genome: G,
    pub parent: Option<u64>,
    /// Other configuration merged in by superimposition.
    pub partner: Option<u64>,
    pub provenance: Provenance,
    pub round: usize,
    pub bracket: u32,
    pub history: Vec<RungScore>,
}

impl<G> ConfigRecord<G> {
    pub fn latest(&self) -> Option<&RungScore> {
        self.history.last()
    }

    pub fn failed(&self) -> bool {
        self.history.iter().any(|h| h.score.is_none())
    }

    pub fn score_at(&self, resource: u64) -> Option<Score> {
        self.history
            .iter()
            .find(|h| h.resource == resource)
            .and_then(|h| h.score)
    }
}

/// How candidates are ordered.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    /// Reward descending, then episode length ascending.
    Lexicographic,
    /// `reward − λ·length/max_length` descending.
    Scalarized { lambda: f64 },
}

impl Default for Objective {
    fn default() -> Self {
        Objective::Lexicographic
    }
}

impl Objective {
    /// `Less` when `a` ranks ahead of `b`. `max_len` normalizes lengths for
    /// the scalarized form.
    pub fn compare(&self, a: &Score, b: &Score, max_len: f64) -> Ordering {
        match self {
            Objective::Lexicographic => b
                .avg_reward
                .total_cmp(&a.avg_reward)
                .then(a.avg_episode_length.total_cmp(&b.avg_episode_length)),
            Objective::Scalarized { lambda } => {
                let norm = if max_len > 0.0 { max_len } else { 1.0 };
                let value = |s: &Score| s.avg_reward - lambda * s.avg_episode_length / norm;
                value(b).total_cmp(&value(a))
            }
        }
    }

    /// Sorts `(id, score)` pairs best first; failures last; ties by id.
    pub fn rank(&self, entries: &mut [(u64, Option<Score>)]) {
        let max_len = entries
            .iter()
            .filter_map(|(_, s)| s.map(|s| s.avg_episode_length))
            .fold(0.0, f64::max);
        entries.sort_by(|(ia, a), (ib, b)| {
            match (a, b) {
                (Some(a), Some(b)) => self.compare(a, b, max_len),
                (Some(_), None) => Ordering::Less,
                (None, Some(_)) => Ordering::Greater,
                (None, None) => Ordering::Equal,
            }
            .then(ia.cmp(ib))
        });
    }

    /// True when `child` ranks strictly ahead of `parent`.
    pub fn strictly_better(&self, child: &Score, parent: &Score) -> bool {
        let max_len = child.avg_episode_length.max(parent.avg_episode_length);
        self.compare(child, parent, max_len) == Ordering::Less
    }
}

/// Trains configurations for the scheduler. A session holds one
/// configuration's training state between rungs.
pub trait TrialRunner<G>: Sync {
    type Session: Send;
    type Report: Clone + Send;

    /// `max_units` is the most this session will be trained in its bracket.
    fn start(&self, genome: &G, id: u64, seed: u64, max_units: u64) -> Result<Self::Session>;
    /// Trains `units` more resource units and scores the session.
    fn advance(&self, session: &mut Self::Session, units: u64) -> Result<(Score, Self::Report)>;
}

#[cfg(test)]
mod tests;
