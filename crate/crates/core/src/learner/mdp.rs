use rand::Rng;

use crate::error::{Error, Result};

/// Value-iteration refuses MDPs larger than this.
pub const MAX_VI_STATES: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub next: usize,
    pub prob: f64,
    pub reward: f64,
}

/// Finite MDP with every `(state, action)` outcome listed explicitly.
/// Terminal states have value 0 and their outcomes are ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct EnumerableMdp {
    n_states: usize,
    n_actions: usize,
    outcomes: Vec<Vec<Transition>>,
    terminal: Vec<bool>,
}

impl EnumerableMdp {
    /// `outcomes[s * n_actions + a]` lists the transitions of `(s, a)`.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        outcomes: Vec<Vec<Transition>>,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidInput("empty MDP".into()));
        }
        if outcomes.len() != n_states * n_actions || terminal.len() != n_states {
            return Err(Error::InvalidInput("outcome table has the wrong shape".into()));
        }
        for (sa, list) in outcomes.iter().enumerate() {
            if terminal[sa / n_actions] {
                continue;
            }
            let total: f64 = list.iter().map(|t| t.prob).sum();
            if list.is_empty() || (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "probabilities of state-action {sa} sum to {total}"
                )));
            }
            if list.iter().any(|t| t.next >= n_states || t.prob < 0.0 || !t.reward.is_finite()) {
                return Err(Error::InvalidInput(format!("bad transition at state-action {sa}")));
            }
        }
        Ok(EnumerableMdp {
            n_states,
            n_actions,
            outcomes,
            terminal,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn outcomes(&self, state: usize, action: usize) -> &[Transition] {
        &self.outcomes[state * self.n_actions + action]
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminal[state]
    }

    /// Same MDP with `γΦ(s′) − Φ(s)` added to every reward. Terminal states
    /// are given potential 0.
    pub fn shaped(&self, potential: &[f64], gamma: f64) -> Result<Self> {
        if potential.len() != self.n_states {
            return Err(Error::DomainMismatch(format!(
                "{} potentials for {} states",
                potential.len(),
                self.n_states
            )));
        }
        let phi = |s: usize| if self.terminal[s] { 0.0 } else { potential[s] };
        let outcomes = self
            .outcomes
            .iter()
            .enumerate()
            .map(|(sa, list)| {
                let s = sa / self.n_actions;
                list.iter()
                    .map(|t| Transition {
                        reward: t.reward + gamma * phi(t.next) - phi(s),
                        ..*t
                    })
                    .collect()
            })
            .collect();
        EnumerableMdp::new(self.n_states, self.n_actions, outcomes, self.terminal.clone())
    }

    /// Random dense MDP: each state-action reaches 1–3 successors with
    /// random probabilities and rewards in `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> Self {
        let mut outcomes = Vec::with_capacity(n_states * n_actions);
        for _ in 0..n_states * n_actions {
            let k = rng.gen_range(1..=3usize);
            let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = weights.iter().sum();
            let mut list: Vec<Transition> = weights
                .iter()
                .map(|w| Transition {
                    next: rng.gen_range(0..n_states),
                    prob: w / total,
                    reward: rng.gen_range(-1.0..1.0),
                })
                .collect();
            // exact normalization on the last entry
            let head: f64 = list[..k - 1].iter().map(|t| t.prob).sum();
            list[k - 1].prob = 1.0 - head;
            outcomes.push(list);
        }
        EnumerableMdp::new(n_states, n_actions, outcomes, vec![false; n_states])
            .expect("generated MDP is well formed")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueIterationResult {
    pub values: Vec<f64>,
    /// `q[s * n_actions + a]`.
    pub q: Vec<f64>,
    /// Actions within the tie tolerance of the best, per state.
    pub greedy: Vec<Vec<usize>>,
    pub iterations: usize,
    /// Last sup-norm change between sweeps.
    pub delta: f64,
}

/// Actions whose value is within this of the best count as tied.
pub const GREEDY_TIE_TOLERANCE: f64 = 1e-8;
const MAX_SWEEPS: usize = 1_000_000;

fn q_value(mdp: &EnumerableMdp, values: &[f64], gamma: f64, s: usize, a: usize) -> f64 {
    mdp.outcomes(s, a)
        .iter()
        .map(|t| t.prob * (t.reward + gamma * values[t.next]))
        .sum()
}

/// Synchronous value iteration until the sup-norm change falls below `tol`.
pub fn value_iteration(mdp: &EnumerableMdp, gamma: f64, tol: f64) -> Result<ValueIterationResult> {
    if mdp.n_states() > MAX_VI_STATES {
        return Err(Error::CapacityExceeded(format!(
            "{} states exceeds the value-iteration limit of {MAX_VI_STATES}",
            mdp.n_states()
        )));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidInput(format!("gamma {gamma} outside (0, 1]")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let n = mdp.n_states();
    let mut values = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    let delta = loop {
        let mut delta: f64 = 0.0;
        for s in 0..n {
            next[s] = if mdp.is_terminal(s) {
                0.0
            } else {
                (0..mdp.n_actions())
                    .map(|a| q_value(mdp, &values, gamma, s, a))
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            delta = delta.max((next[s] - values[s]).abs());
        }
        std::mem::swap(&mut values, &mut next);
        iterations += 1;
        if delta < tol {
            break delta;
        }
        if iterations >= MAX_SWEEPS {
            return Err(Error::InvalidInput(format!(
                "value iteration did not converge (delta {delta})"
            )));
        }
    };
    let m = mdp.n_actions();
    let mut q = vec![0.0; n * m];
    let mut greedy = Vec::with_capacity(n);
    for s in 0..n {
        for a in 0..m {
            q[s * m + a] = if mdp.is_terminal(s) {
                0.0
            } else {
                q_value(mdp, &values, gamma, s, a)
            };
        }
        let row = &q[s * m..(s + 1) * m];
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        greedy.push(
            (0..m)
                .filter(|&a| row[a] >= best - GREEDY_TIE_TOLERANCE)
                .collect(),
        );
    }
    Ok(ValueIterationResult {
        values,
        q,
        greedy,
        iterations,
        delta,
    })
}

/// Largest `|V(s) − max_a Q_V(s, a)|` over non-terminal states.
pub fn bellman_residual(mdp: &EnumerableMdp, values: &[f64], gamma: f64) -> f64 {
    (0..mdp.n_states())
        .filter(|&s| !mdp.is_terminal(s))
        .map(|s| {
            let best = (0..mdp.n_actions())
                .map(|a| q_value(mdp, values, gamma, s, a))
                .fold(f64::NEG_INFINITY, f64::max);
            (best - values[s]).abs()
        })
        .fold(0.0, f64::max)
}
