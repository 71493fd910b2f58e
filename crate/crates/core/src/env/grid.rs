use std::collections::{HashMap, VecDeque};

use rand::seq::{IteratorRandom, SliceRandom};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::{MultiAgentEnv, Observation, StepEvents, StepOutcome};
use crate::error::{Error, Result};
use crate::kernel::{AnchorContext, DomainDescriptor};
use crate::learner::{EnumerableMdp, Transition};
use crate::SimRng;

const MAX_LAYOUT_ATTEMPTS: usize = 10_000;
const UNREACHABLE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Randomization {
    #[default]
    Fixed,
    RandomInit,
    RandomPerEpisode,
}

fn default_n_agents() -> usize {
    2
}

fn default_goal_reward() -> f64 {
    2.5
}

/// Package-delivery grid configuration. Unset optional fields take the
/// canonical layout and the cooperation-forcing fuel budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridEnvConfig {
    pub dims: Vec<usize>,
    #[serde(default = "default_n_agents")]
    pub n_agents: usize,
    #[serde(default)]
    pub agent_starts: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub package_start: Option<Vec<usize>>,
    #[serde(default)]
    pub goal: Option<Vec<usize>>,
    #[serde(default)]
    pub n_blockers: usize,
    #[serde(default)]
    pub randomization: Randomization,
    /// Steps during which the second agent is held in place.
    #[serde(default)]
    pub agent2_delay: usize,
    #[serde(default)]
    pub fuel: Option<u32>,
    #[serde(default)]
    pub max_episode_len: Option<usize>,
    #[serde(default = "default_goal_reward")]
    pub goal_reward: f64,
    /// Seed for blocker placement and for the layout drawn at construction
    /// in the randomized modes.
    #[serde(default)]
    pub layout_seed: u64,
}

impl GridEnvConfig {
    pub fn new(dims: Vec<usize>) -> Self {
        GridEnvConfig {
            dims,
            n_agents: 2,
            agent_starts: None,
            package_start: None,
            goal: None,
            n_blockers: 0,
            randomization: Randomization::Fixed,
            agent2_delay: 0,
            fuel: None,
            max_episode_len: None,
            goal_reward: 2.5,
            layout_seed: 0,
        }
    }

    fn dim_sum(&self) -> usize {
        self.dims.iter().sum()
    }

    /// `fuel` if set, else `ceil(0.75 * (l + w [+ h]))`.
    pub fn fuel_budget(&self) -> u32 {
        self.fuel
            .unwrap_or_else(|| (3 * self.dim_sum()).div_ceil(4) as u32)
    }

    /// `max_episode_len` if set, else `10 * (l + w [+ h])`.
    pub fn episode_limit(&self) -> usize {
        self.max_episode_len.unwrap_or(10 * self.dim_sum())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dims.len() == 2 || self.dims.len() == 3) || self.dims.contains(&0) {
            return Err(Error::config("env.dims", "expected two or three positive extents"));
        }
        if self.n_agents != 2 {
            return Err(Error::config("env.n_agents", "package delivery uses exactly two agents"));
        }
        if !(self.goal_reward.is_finite() && self.goal_reward > 0.0) {
            return Err(Error::config("env.goal_reward", "must be positive"));
        }
        if self.episode_limit() == 0 {
            return Err(Error::config("env.max_episode_len", "must be positive"));
        }
        let domain = DomainDescriptor::Grid(self.dims.clone());
        let check = |path: &str, p: &Vec<usize>| -> Result<()> {
            if domain.cell(p).is_none() {
                return Err(Error::config(path, format!("{p:?} outside grid {:?}", self.dims)));
            }
            Ok(())
        };
        if let Some(starts) = &self.agent_starts {
            if starts.len() != 2 {
                return Err(Error::config("env.agent_starts", "need one start per agent"));
            }
            for (i, s) in starts.iter().enumerate() {
                check(&format!("env.agent_starts[{i}]"), s)?;
            }
        }
        if let Some(p) = &self.package_start {
            check("env.package_start", p)?;
        }
        if let Some(g) = &self.goal {
            check("env.goal", g)?;
        }
        Ok(())
    }
}

/// Placement of everything that does not move during an episode, plus
/// the agents' starting cells.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridLayout {
    pub starts: Vec<usize>,
    pub package: usize,
    pub goal: usize,
    pub blockers: Vec<bool>,
}

impl GridLayout {
    pub fn blocker_cells(&self) -> Vec<usize> {
        (0..self.blockers.len()).filter(|&c| self.blockers[c]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PackageState {
    Ground(usize),
    Held(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridState {
    pub positions: Vec<usize>,
    pub fuel: Vec<u32>,
    pub package: PackageState,
    pub step: usize,
    pub done: bool,
}

/// Per-agent action. Moves come in `(axis, direction)` pairs: for a 2D grid
/// indices 0..4 are `-row, +row, -col, +col`, then Stay, then Handover.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridAction {
    Move { axis: usize, positive: bool },
    Stay,
    Handover,
}

impl GridAction {
    pub fn from_index(index: usize, ndim: usize) -> Option<Self> {
        let moves = 2 * ndim;
        if index < moves {
            Some(GridAction::Move {
                axis: index / 2,
                positive: index % 2 == 1,
            })
        } else if index == moves {
            Some(GridAction::Stay)
        } else if index == moves + 1 {
            Some(GridAction::Handover)
        } else {
            None
        }
    }

    pub fn index(self, ndim: usize) -> usize {
        match self {
            GridAction::Move { axis, positive } => 2 * axis + positive as usize,
            GridAction::Stay => 2 * ndim,
            GridAction::Handover => 2 * ndim + 1,
        }
    }

    pub fn count(ndim: usize) -> usize {
        2 * ndim + 2
    }
}

/// Two fuel-limited agents must hand a package over to get it to the goal.
#[derive(Clone, Debug)]
pub struct GridEnv {
    config: GridEnvConfig,
    domain: DomainDescriptor,
    fuel: u32,
    max_len: usize,
    layout: Option<GridLayout>,
    state: Option<GridState>,
}

impl GridEnv {
    pub fn new(config: GridEnvConfig) -> Result<Self> {
        config.validate()?;
        let domain = DomainDescriptor::Grid(config.dims.clone());
        let mut env = GridEnv {
            fuel: config.fuel_budget(),
            max_len: config.episode_limit(),
            domain,
            layout: None,
            state: None,
            config,
        };
        let layout = match env.config.randomization {
            Randomization::Fixed => env.fixed_layout()?,
            _ => env.random_layout(&mut SimRng::seed_from_u64(env.config.layout_seed))?,
        };
        env.state = Some(env.initial_state(&layout));
        env.layout = Some(layout);
        Ok(env)
    }

    pub fn config(&self) -> &GridEnvConfig {
        &self.config
    }

    pub fn domain(&self) -> &DomainDescriptor {
        &self.domain
    }

    pub fn fuel_budget(&self) -> u32 {
        self.fuel
    }

    pub fn layout(&self) -> Option<&GridLayout> {
        self.layout.as_ref()
    }

    pub fn state(&self) -> &GridState {
        self.state.as_ref().expect("reset before reading state")
    }

    pub fn set_state(&mut self, state: GridState) {
        self.state = Some(state);
    }

    pub fn ndim(&self) -> usize {
        self.config.dims.len()
    }

    fn layout_ref(&self) -> &GridLayout {
        self.layout.as_ref().expect("reset before use")
    }

    fn initial_state(&self, layout: &GridLayout) -> GridState {
        GridState {
            positions: layout.starts.clone(),
            fuel: vec![self.fuel; 2],
            package: PackageState::Ground(layout.package),
            step: 0,
            done: false,
        }
    }

    pub fn manhattan(&self, a: usize, b: usize) -> usize {
        let ca = self.domain.coords(a);
        let cb = self.domain.coords(b);
        ca.iter().zip(&cb).map(|(x, y)| x.abs_diff(*y)).sum()
    }

    fn neighbor(&self, cell: usize, axis: usize, positive: bool) -> Option<usize> {
        let mut c = self.domain.coords(cell);
        if positive {
            c[axis] += 1;
        } else {
            c[axis] = c[axis].checked_sub(1)?;
        }
        self.domain.cell(&c)
    }

    fn neighbors(&self, cell: usize) -> impl Iterator<Item = usize> + '_ {
        (0..2 * self.ndim()).filter_map(move |i| self.neighbor(cell, i / 2, i % 2 == 1))
    }

    /// Breadth-first distances avoiding blockers.
    fn distances(&self, from: usize, blockers: &[bool]) -> Vec<u32> {
        let mut dist = vec![UNREACHABLE; self.domain.len()];
        if blockers[from] {
            return dist;
        }
        dist[from] = 0;
        let mut queue = VecDeque::from([from]);
        while let Some(c) = queue.pop_front() {
            for n in self.neighbors(c) {
                if !blockers[n] && dist[n] == UNREACHABLE {
                    dist[n] = dist[c] + 1;
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// A path from package to goal that only ever steps toward the goal.
    fn has_monotone_path(&self, layout: &GridLayout) -> bool {
        let from = self.domain.coords(layout.package);
        let to = self.domain.coords(layout.goal);
        let mut cells: Vec<usize> = (0..self.domain.len())
            .filter(|&c| {
                self.domain
                    .coords(c)
                    .iter()
                    .enumerate()
                    .all(|(k, &x)| x >= from[k].min(to[k]) && x <= from[k].max(to[k]))
            })
            .collect();
        cells.sort_by_key(|&c| (self.manhattan(c, layout.package), c));
        let mut reach: HashMap<usize, bool> = HashMap::new();
        for c in cells {
            let ok = !layout.blockers[c]
                && (c == layout.package || {
                    let coords = self.domain.coords(c);
                    (0..coords.len()).any(|k| {
                        if coords[k] == from[k] {
                            return false;
                        }
                        let mut prev = coords.clone();
                        if to[k] > from[k] {
                            prev[k] -= 1;
                        } else {
                            prev[k] += 1;
                        }
                        let p = self.domain.cell(&prev).expect("inside bounding box");
                        reach.get(&p).copied().unwrap_or(false)
                    })
                });
            reach.insert(c, ok);
        }
        reach.get(&layout.goal).copied().unwrap_or(false)
    }

    /// True when neither agent can deliver alone.
    fn solo_infeasible(&self, start: usize, pkg_dist: &[u32], to_goal: u32) -> bool {
        let d = pkg_dist[start];
        d == UNREACHABLE || to_goal == UNREACHABLE || d as u64 + to_goal as u64 > self.fuel as u64
    }

    /// Checks every layout invariant: distinct special cells off blockers, a
    /// monotone package-to-goal path, delivery impossible alone and possible
    /// with a single handover.
    pub fn layout_is_valid(&self, layout: &GridLayout) -> bool {
        let special = [layout.starts[0], layout.starts[1], layout.package, layout.goal];
        for (i, a) in special.iter().enumerate() {
            if layout.blockers[*a] || special[i + 1..].contains(a) {
                return false;
            }
        }
        if !self.has_monotone_path(layout) {
            return false;
        }
        let from_pkg = self.distances(layout.package, &layout.blockers);
        let pkg_to_goal = from_pkg[layout.goal];
        if !layout
            .starts
            .iter()
            .all(|&s| self.solo_infeasible(s, &from_pkg, pkg_to_goal))
        {
            return false;
        }
        let from_goal = self.distances(layout.goal, &layout.blockers);
        let from_start: Vec<Vec<u32>> = layout
            .starts
            .iter()
            .map(|&s| self.distances(s, &layout.blockers))
            .collect();
        let fuel = self.fuel as u64;
        for (picker, receiver) in [(0usize, 1usize), (1, 0)] {
            let reach_pkg = from_start[picker][layout.package];
            if reach_pkg == UNREACHABLE || reach_pkg as u64 > fuel {
                continue;
            }
            for x in 0..self.domain.len() {
                if from_pkg[x] == UNREACHABLE || (reach_pkg + from_pkg[x]) as u64 > fuel {
                    continue;
                }
                let meet = std::iter::once(x).chain(self.neighbors(x));
                for y in meet {
                    let (a, b) = (from_start[receiver][y], from_goal[y]);
                    if a != UNREACHABLE && b != UNREACHABLE && (a + b) as u64 <= fuel {
                        return true;
                    }
                }
            }
        }
        false
    }

    fn place_blockers(
        &self,
        starts: Vec<usize>,
        package: usize,
        goal: usize,
        rng: &mut SimRng,
    ) -> Result<GridLayout> {
        let n = self.domain.len();
        let special = [starts[0], starts[1], package, goal];
        let free: Vec<usize> = (0..n).filter(|c| !special.contains(c)).collect();
        if self.config.n_blockers > free.len() {
            return Err(Error::LayoutInfeasible { attempts: 0 });
        }
        for _ in 0..MAX_LAYOUT_ATTEMPTS {
            let mut blockers = vec![false; n];
            for &c in free.choose_multiple(rng, self.config.n_blockers) {
                blockers[c] = true;
            }
            let layout = GridLayout {
                starts: starts.clone(),
                package,
                goal,
                blockers,
            };
            if self.layout_is_valid(&layout) {
                return Ok(layout);
            }
            if self.config.n_blockers == 0 {
                break;
            }
        }
        Err(Error::LayoutInfeasible {
            attempts: MAX_LAYOUT_ATTEMPTS,
        })
    }

    /// Canonical layout: package at the origin corner, goal at the far
    /// corner, agent 0 at the nearest cell to the package and agent 1 at the
    /// nearest cell to the goal from which neither can deliver alone.
    fn fixed_layout(&self) -> Result<GridLayout> {
        let d = &self.domain;
        let n = d.len();
        let package = match &self.config.package_start {
            Some(p) => d.cell(p).expect("validated"),
            None => 0,
        };
        let goal = match &self.config.goal {
            Some(g) => d.cell(g).expect("validated"),
            None => n - 1,
        };
        let starts = match &self.config.agent_starts {
            Some(s) => s.iter().map(|p| d.cell(p).expect("validated")).collect(),
            None => {
                let open = vec![false; n];
                let from_pkg = self.distances(package, &open);
                let to_goal = from_pkg[goal];
                let pick = |anchor: usize, taken: &[usize]| -> Option<usize> {
                    let mut cells: Vec<usize> = (0..n)
                        .filter(|c| ![package, goal].contains(c) && !taken.contains(c))
                        .collect();
                    cells.sort_by_key(|&c| (self.manhattan(c, anchor), c));
                    cells
                        .into_iter()
                        .find(|&c| self.solo_infeasible(c, &from_pkg, to_goal))
                };
                let a0 = pick(package, &[]).ok_or(Error::LayoutInfeasible { attempts: 1 })?;
                let a1 = pick(goal, &[a0]).ok_or(Error::LayoutInfeasible { attempts: 1 })?;
                vec![a0, a1]
            }
        };
        let mut rng = SimRng::seed_from_u64(self.config.layout_seed);
        self.place_blockers(starts, package, goal, &mut rng)
    }

    fn random_layout(&self, rng: &mut SimRng) -> Result<GridLayout> {
        let n = self.domain.len();
        let needed = 4 + self.config.n_blockers;
        if needed > n {
            return Err(Error::LayoutInfeasible { attempts: 0 });
        }
        for _ in 0..MAX_LAYOUT_ATTEMPTS {
            let mut cells = (0..n).choose_multiple(rng, needed);
            cells.shuffle(rng);
            let mut blockers = vec![false; n];
            for &c in &cells[4..] {
                blockers[c] = true;
            }
            let layout = GridLayout {
                starts: vec![cells[0], cells[1]],
                package: cells[2],
                goal: cells[3],
                blockers,
            };
            if self.layout_is_valid(&layout) {
                return Ok(layout);
            }
        }
        Err(Error::LayoutInfeasible {
            attempts: MAX_LAYOUT_ATTEMPTS,
        })
    }

    fn package_cell(&self, state: &GridState) -> usize {
        match state.package {
            PackageState::Ground(c) => c,
            PackageState::Held(a) => state.positions[a],
        }
    }

    /// Pure transition. With `timed = false` the second-agent delay and the
    /// episode limit are ignored (used for exhaustive enumeration).
    pub fn advance(
        &self,
        state: &GridState,
        actions: &[usize],
        timed: bool,
    ) -> Result<(GridState, StepOutcome)> {
        if state.done {
            return Err(Error::EpisodeFinished);
        }
        if actions.len() != 2 {
            return Err(Error::InvalidInput(format!(
                "expected 2 actions, got {}",
                actions.len()
            )));
        }
        let ndim = self.ndim();
        let layout = self.layout_ref();
        let mut acts = Vec::with_capacity(2);
        for (i, &a) in actions.iter().enumerate() {
            let act = GridAction::from_index(a, ndim)
                .ok_or_else(|| Error::InvalidInput(format!("action {a} out of range")))?;
            let held = timed && i == 1 && state.step < self.config.agent2_delay;
            acts.push(if held { GridAction::Stay } else { act });
        }
        let mut next = state.clone();
        let dist_before = self.manhattan(self.package_cell(state), layout.goal) as i64;
        for (i, act) in acts.iter().enumerate() {
            if let GridAction::Move { axis, positive } = *act {
                if next.fuel[i] == 0 {
                    continue;
                }
                match self.neighbor(next.positions[i], axis, positive) {
                    Some(t) if !layout.blockers[t] => {
                        next.positions[i] = t;
                        next.fuel[i] -= 1;
                    }
                    _ => {}
                }
            }
        }
        let mut events = StepEvents::default();
        if let PackageState::Ground(c) = next.package {
            if let Some(i) = (0..2).find(|&i| next.positions[i] == c) {
                next.package = PackageState::Held(i);
                events.pickup = Some(i);
            }
        }
        if let PackageState::Held(c) = next.package {
            let other = 1 - c;
            let asked = acts[c] == GridAction::Handover || acts[other] == GridAction::Handover;
            if asked && self.manhattan(next.positions[c], next.positions[other]) <= 1 {
                next.package = PackageState::Held(other);
                events.handover = Some((c, other));
            }
        }
        if let PackageState::Held(c) = next.package {
            let dist_after = self.manhattan(next.positions[c], layout.goal) as i64;
            events.progress = Some((c, dist_before - dist_after));
        }
        let delivered = matches!(next.package, PackageState::Held(c) if next.positions[c] == layout.goal);
        next.step += 1;
        let truncated = timed && !delivered && next.step >= self.max_len;
        next.done = delivered || truncated;
        let share = if delivered {
            self.config.goal_reward / 2.0
        } else {
            0.0
        };
        let mut outcome = StepOutcome::base(vec![share; 2], delivered, truncated, delivered);
        outcome.events = events;
        Ok((next, outcome))
    }

    /// Every state reachable from the current layout's start under
    /// delay-free, unlimited-length dynamics, as an explicit joint MDP whose
    /// reward is the sum of agent rewards. Delivered states are absorbing with
    /// zero reward. Returns the MDP and the state behind each index.
    pub fn enumerate_joint_mdp(&self, max_states: usize) -> Result<(EnumerableMdp, Vec<GridState>)> {
        let layout = self.layout_ref();
        let n_act = self.n_actions();
        let joint_actions = n_act * n_act;
        let start = self.initial_state(layout);
        let key = |s: &GridState| {
            let mut k = s.clone();
            k.step = 0;
            k
        };
        let mut index: HashMap<GridState, usize> = HashMap::new();
        let mut states = vec![key(&start)];
        index.insert(key(&start), 0);
        let mut outcomes: Vec<Vec<Transition>> = Vec::new();
        let mut cursor = 0;
        while cursor < states.len() {
            let s = states[cursor].clone();
            for ja in 0..joint_actions {
                if s.done {
                    outcomes.push(vec![Transition {
                        next: cursor,
                        prob: 1.0,
                        reward: 0.0,
                    }]);
                    continue;
                }
                let (next, out) = self.advance(&s, &[ja / n_act, ja % n_act], false)?;
                let k = key(&next);
                let id = match index.get(&k) {
                    Some(&id) => id,
                    None => {
                        if states.len() >= max_states {
                            return Err(Error::CapacityExceeded(format!(
                                "more than {max_states} joint states"
                            )));
                        }
                        states.push(k.clone());
                        index.insert(k, states.len() - 1);
                        states.len() - 1
                    }
                };
                outcomes.push(vec![Transition {
                    next: id,
                    prob: 1.0,
                    reward: out.base_rewards.iter().sum(),
                }]);
            }
            cursor += 1;
        }
        let n = states.len();
        Ok((
            EnumerableMdp::new(n, joint_actions, outcomes, vec![false; n])?,
            states,
        ))
    }

    fn random_layouts(&self) -> bool {
        self.config.randomization != Randomization::Fixed
    }

    fn cells(&self) -> u32 {
        self.domain.len() as u32
    }
}

impl MultiAgentEnv for GridEnv {
    fn n_agents(&self) -> usize {
        2
    }

    fn n_actions(&self) -> usize {
        GridAction::count(self.ndim())
    }

    fn max_episode_len(&self) -> usize {
        self.max_len
    }

    fn reset(&mut self, rng: &mut SimRng) -> Result<()> {
        let layout = match self.config.randomization {
            Randomization::Fixed => self.layout.clone().expect("fixed layout built in new"),
            Randomization::RandomInit => self.layout.clone().expect("layout built in new"),
            Randomization::RandomPerEpisode => self.random_layout(rng)?,
        };
        self.state = Some(self.initial_state(&layout));
        self.layout = Some(layout);
        Ok(())
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepOutcome> {
        let (next, outcome) = self.advance(self.state(), actions, true)?;
        self.state = Some(next);
        Ok(outcome)
    }

    fn is_done(&self) -> bool {
        self.state().done
    }

    fn joint_observation(&self) -> Observation {
        let s = self.state();
        let cells = self.cells();
        let pkg = match (s.package, self.random_layouts()) {
            (PackageState::Ground(_), false) => 0,
            (PackageState::Held(a), false) => 1 + a as u32,
            (PackageState::Ground(c), true) => c as u32,
            (PackageState::Held(a), true) => cells + a as u32,
        };
        let mut obs = vec![
            s.positions[0] as u32,
            s.positions[1] as u32,
            s.fuel[0],
            s.fuel[1],
            pkg,
        ];
        if self.random_layouts() {
            obs.push(self.layout_ref().goal as u32);
        }
        obs
    }

    fn joint_observation_extents(&self) -> Vec<u32> {
        let cells = self.cells();
        let mut ext = vec![cells, cells, self.fuel + 1, self.fuel + 1];
        if self.random_layouts() {
            ext.extend([cells + 2, cells]);
        } else {
            ext.push(3);
        }
        ext
    }

    fn agent_observation(&self, agent: usize) -> Observation {
        let s = self.state();
        let other = 1 - agent;
        let rel = match s.package {
            PackageState::Ground(_) => 0,
            PackageState::Held(a) if a == agent => 1,
            PackageState::Held(_) => 2,
        };
        let adjacent = (self.manhattan(s.positions[agent], s.positions[other]) <= 1) as u32;
        let mut obs = vec![s.positions[agent] as u32, s.fuel[agent], rel, adjacent];
        if self.random_layouts() {
            let ground = match s.package {
                PackageState::Ground(c) => c as u32,
                PackageState::Held(_) => self.cells(),
            };
            obs.extend([ground, self.layout_ref().goal as u32]);
        }
        obs
    }

    fn agent_observation_extents(&self) -> Vec<u32> {
        let cells = self.cells();
        let mut ext = vec![cells, self.fuel + 1, 3, 2];
        if self.random_layouts() {
            ext.extend([cells + 1, cells]);
        }
        ext
    }

    fn governance_domain(&self) -> DomainDescriptor {
        self.domain.clone()
    }

    fn governance_cells(&self) -> Option<Vec<usize>> {
        self.state.as_ref().map(|s| s.positions.clone())
    }

    fn anchor_context(&self) -> AnchorContext {
        let layout = self.layout_ref();
        AnchorContext {
            agent_starts: layout.starts.iter().map(|&c| self.domain.point(c)).collect(),
            goal: Some(self.domain.point(layout.goal)),
        }
    }
}
