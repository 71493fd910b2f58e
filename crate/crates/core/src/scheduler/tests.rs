use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use super::*;
use crate::error::Error;
use crate::SimRng;
use rand::SeedableRng;

/// Opaque stand-in for a kernel configuration: a quality number.
#[derive(Clone, Debug, PartialEq)]
struct Stub(f64);

impl Genome for Stub {
    fn mutate<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        Stub(self.0 + rng.gen_range(-1.0..1.0))
    }

    fn superimpose(&self, other: &Self) -> Self {
        Stub((self.0 + other.0) / 2.0)
    }
}

/// Scores a config by its quality; negative quality fails training.
struct StubRunner {
    units: AtomicU64,
}

impl StubRunner {
    fn new() -> Self {
        StubRunner {
            units: AtomicU64::new(0),
        }
    }
}

impl TrialRunner<Stub> for StubRunner {
    type Session = (f64, u64);
    type Report = u64;

    fn start(&self, genome: &Stub, _id: u64, _seed: u64, _max_units: u64) -> Result<Self::Session> {
        Ok((genome.0, 0))
    }

    fn advance(&self, session: &mut Self::Session, units: u64) -> Result<(Score, u64)> {
        self.units.fetch_add(units, AtomicOrdering::SeqCst);
        session.1 += units;
        if session.0 < 0.0 {
            return Err(Error::TrialFailed("negative quality".into()));
        }
        Ok((
            Score {
                avg_reward: session.0,
                avg_episode_length: 10.0,
            },
            session.1,
        ))
    }
}

fn records(values: &[f64]) -> Vec<ConfigRecord<Stub>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| ConfigRecord {
            id: i as u64,
            genome: Stub(v),
            parent: None,
            partner: None,
            provenance: Provenance::Sampled,
            round: 0,
            bracket: 0,
            history: Vec::new(),
        })
        .collect()
}

fn score(r: f64, l: f64) -> Score {
    Score {
        avg_reward: r,
        avg_episode_length: l,
    }
}

#[test]
fn bracket_keeps_highest_scores() {
    let round = plan_round(27, 3).unwrap();
    let plan = &round.brackets[1]; // s = 2: (12,3), (4,9), (1,27)
    let values: Vec<f64> = (0..12).map(|i| i as f64).collect();
    let runner = StubRunner::new();
    let res = run_bracket(plan, records(&values), &runner, &SearchOptions::new(81, 1), 0).unwrap();
    assert_eq!(res.rungs[0].trained.len(), 12);
    assert_eq!(res.rungs[0].survivors, vec![11, 10, 9, 8]);
    assert_eq!(res.rungs[1].survivors, vec![11]);
    assert_eq!(res.ranking, vec![11]);
    // resumed: 12*3 + 4*6 + 1*18
    assert_eq!(res.consumed, 78);
    assert_eq!(res.consumed, plan.resumed_consumption());
    assert!(res.consumed <= plan.budget_bound);
    assert_eq!(runner.units.load(AtomicOrdering::SeqCst), 78);
    for rung in res.rungs.windows(2) {
        assert!(rung[1].survivors.iter().all(|id| rung[0].survivors.contains(id)));
    }
}

#[test]
fn fresh_mode_retrains() {
    let round = plan_round(27, 3).unwrap();
    let plan = &round.brackets[2]; // s = 1: (6,9), (2,27)
    let mut options = SearchOptions::new(81, 1);
    options.resume = false;
    let res = run_bracket(plan, records(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), &StubRunner::new(), &options, 0).unwrap();
    assert_eq!(res.rungs[1].trained.len(), 2);
    assert_eq!(res.consumed, 6 * 9 + 2 * 27);
    assert_eq!(res.consumed, plan.fresh_consumption());
}

#[test]
fn failures_rank_last_and_exhaust() {
    let round = plan_round(27, 3).unwrap();
    let plan = &round.brackets[2];
    let res = run_bracket(plan, records(&[-1.0, 2.0, -3.0, 4.0, -5.0, -6.0]), &StubRunner::new(), &SearchOptions::new(81, 1), 0).unwrap();
    assert_eq!(res.rungs[0].survivors, vec![3, 1]);
    assert!(res.record(0).unwrap().failed());
    let err = run_bracket(plan, records(&[-1.0; 6]), &StubRunner::new(), &SearchOptions::new(81, 1), 0);
    assert!(matches!(err, Err(Error::BracketExhausted)));
    let wrong = run_bracket(plan, records(&[1.0; 5]), &StubRunner::new(), &SearchOptions::new(81, 1), 0);
    assert!(matches!(wrong, Err(Error::InvalidInput(_))));
}

#[test]
fn worker_count_does_not_change_results() {
    let round = plan_round(27, 3).unwrap();
    let values: Vec<f64> = (0..27).map(|i| ((i * 7) % 27) as f64).collect();
    let run = |workers| {
        let mut o = SearchOptions::new(81, 1);
        o.workers = workers;
        let r = run_bracket(&round.brackets[0], records(&values), &StubRunner::new(), &o, 0).unwrap();
        (r.rungs, r.ranking, r.records)
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn ranking_is_a_total_order() {
    let o = Objective::Lexicographic;
    let mut e = vec![
        (3, Some(score(1.0, 5.0))),
        (1, None),
        (2, Some(score(1.0, 4.0))),
        (0, Some(score(1.0, 4.0))),
        (4, Some(score(2.0, 50.0))),
    ];
    o.rank(&mut e);
    let ids: Vec<u64> = e.iter().map(|x| x.0).collect();
    assert_eq!(ids, vec![4, 0, 2, 3, 1]);

    let s = Objective::Scalarized { lambda: 0.1 };
    let mut e = vec![(0, Some(score(1.0, 100.0))), (1, Some(score(0.95, 10.0)))];
    s.rank(&mut e);
    assert_eq!(e[0].0, 1);
}

#[test]
fn top_configs_without_genetics_is_verbatim() {
    let mut recs = records(&[3.0, 1.0, 2.0]);
    for (i, r) in recs.iter_mut().enumerate() {
        r.history.push(RungScore {
            rung: 0,
            resource: 1,
            score: Some(score(r.genome.0, i as f64)),
        });
    }
    let mut rng = SimRng::seed_from_u64(0);
    let mut next = 100;
    let out = top_configs(2, &recs, 0.0, 0.0, Objective::Lexicographic, &mut rng, &mut next);
    assert_eq!(out, vec![recs[0].clone(), recs[2].clone()]);
    let all = top_configs(10, &recs, 0.0, 0.0, Objective::Lexicographic, &mut rng, &mut next);
    assert_eq!(all.len(), 3);
    assert_eq!(next, 100);
}

#[test]
fn top_configs_always_mutating() {
    let mut recs = records(&[3.0, 1.0, 2.0]);
    for r in recs.iter_mut() {
        r.history.push(RungScore {
            rung: 0,
            resource: 1,
            score: Some(score(r.genome.0, 1.0)),
        });
    }
    let mut rng = SimRng::seed_from_u64(0);
    let mut next = 100;
    let out = top_configs(3, &recs, 1.0, 0.0, Objective::Lexicographic, &mut rng, &mut next);
    assert!(out.iter().all(|r| r.provenance == Provenance::Mutated && r.parent.is_some()));
    assert_eq!(out.iter().map(|r| r.id).collect::<Vec<_>>(), vec![100, 101, 102]);
    let sup = top_configs(3, &recs, 0.0, 1.0, Objective::Lexicographic, &mut rng, &mut next);
    for r in &sup {
        assert_eq!(r.provenance, Provenance::Superimposed);
        assert_ne!(r.partner, r.parent);
    }
}

#[test]
fn fallback_needs_strict_improvement() {
    let recs = records(&[0.0, 0.0]);
    let o = Objective::Lexicographic;
    let (p, c) = (&recs[0], &recs[1]);
    assert_eq!(select_with_fallback((p, score(1.0, 5.0)), (c, score(0.5, 5.0)), &o).id, 0);
    assert_eq!(select_with_fallback((p, score(1.0, 5.0)), (c, score(1.0, 5.0)), &o).id, 0);
    assert_eq!(select_with_fallback((p, score(1.0, 5.0)), (c, score(2.0, 5.0)), &o).id, 1);
    assert_eq!(select_with_fallback((p, score(1.0, 5.0)), (c, score(1.0, 4.0)), &o).id, 1);
}

fn uniform_sampler(n: usize, rng: &mut SimRng) -> Result<Vec<Stub>> {
    Ok((0..n).map(|_| Stub(rng.gen_range(0.0..10.0))).collect())
}

#[test]
fn single_round_is_successive_halving() {
    let mut o = SearchOptions::new(9, 1);
    o.top_k = 1;
    let out = run_gov_rek(&o, &StubRunner::new(), uniform_sampler).unwrap();
    assert_eq!(out.plan.round_budgets, vec![9]);
    assert_eq!(out.brackets.len(), 3);
    assert!(out.records.iter().all(|r| r.provenance == Provenance::Sampled));
    let best = out
        .brackets
        .iter()
        .flat_map(|b| b.winners.iter())
        .map(|id| out.records.iter().find(|r| r.id == *id).unwrap().genome.0)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(out.winners[0].0.genome.0, best);
}

#[test]
fn search_accounting_lineage_and_determinism() {
    let mut o = SearchOptions::new(81, 3);
    o.workers = 3;
    o.seed = 17;
    let runner = StubRunner::new();
    let out = run_gov_rek(&o, &runner, uniform_sampler).unwrap();
    let total: u64 = out.brackets.iter().map(|b| b.consumed).sum();
    assert_eq!(total, runner.units.load(AtomicOrdering::SeqCst));
    for b in &out.brackets {
        assert!(b.consumed <= b.budget_bound, "{b:?}");
    }
    assert!(!out.lineage.is_empty());
    for entry in out.lineage.iter().filter(|e| e.accepted) {
        assert!(o.objective.strictly_better(&entry.child_score, &entry.parent_score));
    }
    // a rejected child never appears among its bracket's winners
    for entry in out.lineage.iter().filter(|e| !e.accepted) {
        let b = out
            .brackets
            .iter()
            .find(|b| b.round == entry.round && b.s == entry.bracket)
            .unwrap();
        assert!(!b.winners.contains(&entry.child));
    }
    for r in &out.records {
        assert_eq!(r.parent.is_some(), r.provenance != Provenance::Sampled);
    }
    let again = run_gov_rek(&o, &StubRunner::new(), uniform_sampler).unwrap();
    let ids = |x: &SearchOutcome<Stub, (f64, u64), u64>| {
        x.winners
            .iter()
            .map(|(r, _)| (r.id, r.latest().unwrap().score.unwrap().avg_reward))
            .collect::<Vec<_>>()
    };
    assert_eq!(ids(&out), ids(&again));
    let mut serial = o.clone();
    serial.workers = 1;
    assert_eq!(ids(&out), ids(&run_gov_rek(&serial, &StubRunner::new(), uniform_sampler).unwrap()));
}

#[test]
fn kernel_configs_are_genomes() {
    use crate::governance::KernelConfig;
    use crate::kernel::{KernelFamily, KernelSpec, Scope};
    let a = KernelConfig::new(vec![KernelSpec::new(KernelFamily::Linear, Scope::AgentAgnostic)]);
    let b = KernelConfig::new(vec![KernelSpec::new(KernelFamily::SquaredExponential, Scope::AgentSpecific(0))]);
    let merged = a.superimpose(&b);
    assert_eq!(merged.components.len(), 2);
    let mut rng = SimRng::seed_from_u64(3);
    let m = a.mutate(&mut rng);
    assert_eq!(m.components.len(), 1);
    assert_ne!(m, a);
}
