use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    plan_rounds, BracketPlan, ConfigRecord, Genome, Objective, Provenance, RungScore, Score,
    SearchPlan, TrialRunner,
};
use crate::error::{Error, Result};
use crate::learner::stream_rng;
use crate::SimRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchOptions {
    /// `T`, in resource units.
    pub total: u64,
    /// `N_r`.
    pub rounds: u32,
    #[serde(default = "default_eta")]
    pub eta: u64,
    /// `t_k`.
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "half")]
    pub mutation_prob: f64,
    #[serde(default = "half")]
    pub superimpose_prob: f64,
    #[serde(default)]
    pub objective: Objective,
    /// Continue each survivor's run across rungs instead of retraining.
    #[serde(default = "yes")]
    pub resume: bool,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_eta() -> u64 {
    3
}
fn default_top_k() -> usize {
    3
}
fn half() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}
fn one() -> usize {
    1
}

impl SearchOptions {
    pub fn new(total: u64, rounds: u32) -> Self {
        SearchOptions {
            total,
            rounds,
            eta: 3,
            top_k: 3,
            mutation_prob: 0.5,
            superimpose_prob: 0.5,
            objective: Objective::Lexicographic,
            resume: true,
            workers: 1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("mutation_prob", self.mutation_prob), ("superimpose_prob", self.superimpose_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("search.{name}"), format!("{p} outside [0, 1]")));
            }
        }
        if self.top_k == 0 {
            return Err(Error::config("search.top_k", "must be at least 1"));
        }
        if self.workers == 0 {
            return Err(Error::config("search.workers", "must be at least 1"));
        }
        Ok(())
    }

    fn trial_seed(&self, id: u64) -> u64 {
        stream_rng(self.seed, 0x7e1a_0000_0000 + id).next_u64()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RungRecord {
    pub rung: usize,
    pub n: u64,
    pub resource: u64,
    pub trained: Vec<u64>,
    pub survivors: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport<P> {
    pub id: u64,
    pub round: usize,
    pub bracket: u32,
    pub rung: usize,
    pub resource: u64,
    pub report: P,
}

pub struct BracketResult<G, S, P> {
    pub s: u32,
    pub rungs: Vec<RungRecord>,
    /// Final-rung survivors, best first.
    pub ranking: Vec<u64>,
    pub records: Vec<ConfigRecord<G>>,
    /// Training state of every configuration that did not fail.
    pub sessions: Vec<(u64, S)>,
    pub reports: Vec<TrialReport<P>>,
    /// Resource units actually trained.
    pub consumed: u64,
}

impl<G, S, P> BracketResult<G, S, P> {
    pub fn record(&self, id: u64) -> Option<&ConfigRecord<G>> {
        self.records.iter().find(|r| r.id == id)
    }
}

struct Slot<S> {
    index: usize,
    session: Option<S>,
    trained: u64,
    alive: bool,
}

/// Successive halving over `population`, which must hold exactly
/// `plan.n_gov` configurations.
pub fn run_bracket<G, T>(
    plan: &BracketPlan,
    population: Vec<ConfigRecord<G>>,
    runner: &T,
    options: &SearchOptions,
    round: usize,
) -> Result<BracketResult<G, T::Session, T::Report>>
where
    G: Genome,
    T: TrialRunner<G>,
{
    if population.len() as u64 != plan.n_gov {
        return Err(Error::InvalidInput(format!(
            "bracket s={} needs {} configurations, got {}",
            plan.s,
            plan.n_gov,
            population.len()
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut records = population;
    for r in records.iter_mut() {
        r.round = round;
        r.bracket = plan.s;
    }
    let mut slots: Vec<Slot<T::Session>> = (0..records.len())
        .map(|index| Slot {
            index,
            session: None,
            trained: 0,
            alive: true,
        })
        .collect();
    let max_units = plan.rungs.last().map_or(0, |r| r.r);
    let mut rungs = Vec::new();
    let mut reports = Vec::new();
    let mut consumed = 0;
    let mut ranking = Vec::new();
    for (j, rung) in plan.rungs.iter().enumerate() {
        let outcomes: Vec<(usize, u64, Result<(Score, T::Report)>)> = pool.install(|| {
            slots
                .par_iter_mut()
                .filter(|s| s.alive)
                .map(|slot| {
                    let rec = &records[slot.index];
                    if !options.resume || slot.session.is_none() {
                        slot.trained = 0;
                        match runner.start(&rec.genome, rec.id, options.trial_seed(rec.id), max_units) {
                            Ok(s) => slot.session = Some(s),
                            Err(e) => return (slot.index, 0, Err(e)),
                        }
                    }
                    let units = rung.r - slot.trained;
                    let session = slot.session.as_mut().expect("session started");
                    let out = runner.advance(session, units);
                    slot.trained = rung.r;
                    (slot.index, units, out)
                })
                .collect()
        });
        let mut entries = Vec::new();
        for (index, units, out) in outcomes {
            consumed += units;
            let rec = &mut records[index];
            let score = match out {
                Ok((score, report)) => {
                    reports.push(TrialReport {
                        id: rec.id,
                        round,
                        bracket: plan.s,
                        rung: j,
                        resource: rung.r,
                        report,
                    });
                    Some(score)
                }
                Err(_) => None,
            };
            rec.history.push(RungScore {
                rung: j,
                resource: rung.r,
                score,
            });
            entries.push((rec.id, score));
        }
        options.objective.rank(&mut entries);
        let trained: Vec<u64> = {
            let mut t: Vec<u64> = entries.iter().map(|e| e.0).collect();
            t.sort_unstable();
            t
        };
        let ok: Vec<u64> = entries.iter().filter(|e| e.1.is_some()).map(|e| e.0).collect();
        if ok.is_empty() {
            return Err(Error::BracketExhausted);
        }
        let keep = match plan.rungs.get(j + 1) {
            Some(next) => next.n as usize,
            None => ok.len(),
        };
        let survivors: Vec<u64> = ok.into_iter().take(keep).collect();
        for slot in slots.iter_mut().filter(|s| s.alive) {
            let id = records[slot.index].id;
            if !survivors.contains(&id) {
                slot.alive = false;
                if records[slot.index].failed() {
                    slot.session = None;
                }
            }
        }
        rungs.push(RungRecord {
            rung: j,
            n: rung.n,
            resource: rung.r,
            trained,
            survivors: survivors.clone(),
        });
        ranking = survivors;
    }
    let sessions = slots
        .into_iter()
        .filter_map(|s| s.session.map(|sess| (records[s.index].id, sess)))
        .collect();
    Ok(BracketResult {
        s: plan.s,
        rungs,
        ranking,
        records,
        sessions,
        reports,
        consumed,
    })
}

/// Best `t_k` of `results` by latest score, each then mutated with
/// probability `m` and superimposed onto another selected configuration
/// with probability `s_prob`. Unchanged configurations come back verbatim;
/// changed ones get fresh ids from `next_id` and point at their parent.
pub fn top_configs<G: Genome>(
    t_k: usize,
    results: &[ConfigRecord<G>],
    m: f64,
    s_prob: f64,
    objective: Objective,
    rng: &mut SimRng,
    next_id: &mut u64,
) -> Vec<ConfigRecord<G>> {
    let mut entries: Vec<(u64, Option<Score>)> = results
        .iter()
        .map(|r| (r.id, r.latest().and_then(|h| h.score)))
        .collect();
    objective.rank(&mut entries);
    let top: Vec<&ConfigRecord<G>> = entries
        .iter()
        .take(t_k)
        .map(|(id, _)| results.iter().find(|r| r.id == *id).expect("ranked id exists"))
        .collect();
    let mut out = Vec::with_capacity(top.len());
    for (i, parent) in top.iter().enumerate() {
        let mut genome = parent.genome.clone();
        let mutated = rng.gen::<f64>() < m;
        if mutated {
            genome = genome.mutate(rng);
        }
        let mut partner = None;
        if top.len() > 1 && rng.gen::<f64>() < s_prob {
            let mut k = rng.gen_range(0..top.len() - 1);
            if k >= i {
                k += 1;
            }
            genome = genome.superimpose(&top[k].genome);
            partner = Some(top[k].id);
        }
        if !mutated && partner.is_none() {
            out.push((*parent).clone());
            continue;
        }
        let id = *next_id;
        *next_id += 1;
        out.push(ConfigRecord {
            id,
            genome,
            parent: Some(parent.id),
            partner,
            provenance: if partner.is_some() {
                Provenance::Superimposed
            } else {
                Provenance::Mutated
            },
            round: parent.round,
            bracket: parent.bracket,
            history: Vec::new(),
        });
    }
    out
}

/// The child only if it strictly improves on the parent.
pub fn select_with_fallback<'a, G>(
    parent: (&'a ConfigRecord<G>, Score),
    child: (&'a ConfigRecord<G>, Score),
    objective: &Objective,
) -> &'a ConfigRecord<G> {
    if objective.strictly_better(&child.1, &parent.1) {
        child.0
    } else {
        parent.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineageEntry {
    pub round: usize,
    pub bracket: u32,
    pub child: u64,
    /// The previous-round configuration the child derives from.
    pub parent: u64,
    /// Copy of the parent trained alongside the child.
    pub parent_copy: u64,
    pub resource: u64,
    pub child_score: Score,
    pub parent_score: Score,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketSummary {
    pub round: usize,
    pub s: u32,
    pub rungs: Vec<RungRecord>,
    pub ranking: Vec<u64>,
    pub winners: Vec<u64>,
    pub consumed: u64,
    pub budget_bound: u64,
}

pub struct SearchOutcome<G, S, P> {
    pub plan: SearchPlan,
    pub records: Vec<ConfigRecord<G>>,
    pub brackets: Vec<BracketSummary>,
    pub lineage: Vec<LineageEntry>,
    pub reports: Vec<TrialReport<P>>,
    /// Global top configurations, best first, with their training state.
    pub winners: Vec<(ConfigRecord<G>, Option<S>)>,
}

fn latest_score<G>(r: &ConfigRecord<G>) -> Option<Score> {
    r.latest().and_then(|h| h.score)
}

fn rank_records<G>(records: &mut Vec<ConfigRecord<G>>, objective: &Objective) {
    let mut entries: Vec<(u64, Option<Score>)> =
        records.iter().map(|r| (r.id, latest_score(r))).collect();
    objective.rank(&mut entries);
    let mut taken: Vec<Option<ConfigRecord<G>>> = records.drain(..).map(Some).collect();
    for (id, _) in entries {
        let pos = taken
            .iter()
            .position(|r| r.as_ref().is_some_and(|r| r.id == id))
            .expect("ranked id exists");
        records.push(taken[pos].take().expect("taken once"));
    }
}

/// Deepest resource at which both have a score.
fn common_scores<G>(a: &ConfigRecord<G>, b: &ConfigRecord<G>) -> Option<(u64, Score, Score)> {
    a.history
        .iter()
        .rev()
        .filter_map(|h| {
            let sa = h.score?;
            let sb = b.score_at(h.resource)?;
            Some((h.resource, sa, sb))
        })
        .next()
}

/// Runs every round of the plan. The first round samples its whole
/// population; later rounds seed each bracket with the previous round's
/// refined winners, each child next to a copy of its parent, and fill the
/// rest with fresh samples. A child that fails to strictly beat its parent
/// copy at their deepest common rung is dropped in favour of the parent.
pub fn run_gov_rek<G, T, F>(
    options: &SearchOptions,
    runner: &T,
    mut sample: F,
) -> Result<SearchOutcome<G, T::Session, T::Report>>
where
    G: Genome,
    T: TrialRunner<G>,
    F: FnMut(usize, &mut SimRng) -> Result<Vec<G>>,
{
    options.validate()?;
    let plan = plan_rounds(options.total, options.rounds, options.eta)?;
    let mut rng = stream_rng(options.seed, 0x5ea);
    let mut next_id: u64 = 0;
    let mut all_records = Vec::new();
    let mut summaries = Vec::new();
    let mut lineage = Vec::new();
    let mut reports = Vec::new();
    let mut candidates: Vec<(ConfigRecord<G>, Option<T::Session>)> = Vec::new();
    let mut previous: Vec<ConfigRecord<G>> = Vec::new();

    for (k, round) in plan.round_plans.iter().enumerate() {
        let templates = if previous.is_empty() {
            Vec::new()
        } else {
            top_configs(
                options.top_k,
                &previous,
                options.mutation_prob,
                options.superimpose_prob,
                options.objective,
                &mut rng,
                &mut next_id,
            )
        };
        let mut round_winners: Vec<(ConfigRecord<G>, Option<T::Session>)> = Vec::new();
        for bracket in &round.brackets {
            let capacity = bracket.n_gov as usize;
            let mut population: Vec<ConfigRecord<G>> = Vec::new();
            for t in &templates {
                let derived = t.history.is_empty();
                let needed = if derived { 2 } else { 1 };
                if population.len() + needed > capacity {
                    break;
                }
                let origin = if derived { t.parent.expect("derived has parent") } else { t.id };
                if derived {
                    population.push(ConfigRecord {
                        id: next_id,
                        history: Vec::new(),
                        ..t.clone()
                    });
                    next_id += 1;
                }
                let source = previous
                    .iter()
                    .find(|p| p.id == origin)
                    .expect("parent from previous round");
                population.push(ConfigRecord {
                    id: next_id,
                    genome: source.genome.clone(),
                    parent: Some(origin),
                    partner: None,
                    provenance: Provenance::Carried,
                    round: k,
                    bracket: bracket.s,
                    history: Vec::new(),
                });
                next_id += 1;
            }
            let fresh = sample(capacity - population.len(), &mut rng)?;
            for genome in fresh {
                population.push(ConfigRecord {
                    id: next_id,
                    genome,
                    parent: None,
                    partner: None,
                    provenance: Provenance::Sampled,
                    round: k,
                    bracket: bracket.s,
                    history: Vec::new(),
                });
                next_id += 1;
            }
            let result = run_bracket(bracket, population, runner, options, k)?;

            let mut winners: Vec<u64> = result.ranking.clone();
            for child in result
                .records
                .iter()
                .filter(|r| matches!(r.provenance, Provenance::Mutated | Provenance::Superimposed))
            {
                let parent = child.parent.expect("derived has parent");
                let Some(copy) = result
                    .records
                    .iter()
                    .find(|r| r.provenance == Provenance::Carried && r.parent == Some(parent))
                else {
                    continue;
                };
                let Some((resource, cs, ps)) = common_scores(child, copy) else {
                    continue;
                };
                let chosen = select_with_fallback((copy, ps), (child, cs), &options.objective);
                let accepted = chosen.id == child.id;
                lineage.push(LineageEntry {
                    round: k,
                    bracket: bracket.s,
                    child: child.id,
                    parent,
                    parent_copy: copy.id,
                    resource,
                    child_score: cs,
                    parent_score: ps,
                    accepted,
                });
                if !accepted {
                    if let Some(pos) = winners.iter().position(|&w| w == child.id) {
                        if winners.contains(&copy.id) {
                            winners.remove(pos);
                        } else {
                            winners[pos] = copy.id;
                        }
                    }
                }
            }
            let BracketResult {
                rungs,
                ranking,
                records,
                mut sessions,
                reports: trial_reports,
                consumed,
                ..
            } = result;
            for &w in &winners {
                let rec = records.iter().find(|r| r.id == w).expect("winner recorded").clone();
                let session = sessions
                    .iter()
                    .position(|(id, _)| *id == w)
                    .map(|p| sessions.swap_remove(p).1);
                round_winners.push((rec, session));
            }
            summaries.push(BracketSummary {
                round: k,
                s: bracket.s,
                rungs,
                ranking,
                winners,
                consumed,
                budget_bound: bracket.budget_bound,
            });
            reports.extend(trial_reports);
            all_records.extend(records);
        }
        previous = round_winners.iter().map(|(r, _)| r.clone()).collect();
        rank_records(&mut previous, &options.objective);
        candidates.extend(round_winners);
    }

    let mut entries: Vec<(u64, Option<Score>)> =
        candidates.iter().map(|(r, _)| (r.id, latest_score(r))).collect();
    options.objective.rank(&mut entries);
    let mut winners = Vec::new();
    for (id, _) in entries.into_iter().take(options.top_k) {
        let pos = candidates.iter().position(|(r, _)| r.id == id).expect("candidate exists");
        winners.push(candidates.swap_remove(pos));
    }
    Ok(SearchOutcome {
        plan,
        records: all_records,
        brackets: summaries,
        lineage,
        reports,
        winners,
    })
}
