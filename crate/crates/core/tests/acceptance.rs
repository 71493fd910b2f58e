//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::time::{Duration, Instant};

use govrek_core::env::{
    count_monotone_paths, AnyEnv, DilemmaConfig, DilemmaEnv, FlattenMode, GridEnv, GridEnvConfig, MultiAgentEnv,
    PayoffProfile, Sparsity,
};
use govrek_core::governance::{discounted_added_reward, EpisodeLog, Governed, KernelConfig, ShapingMode};
use govrek_core::harness::{
    default_context, median_first_success, run_experiment, EnvSection, ExperimentConfig, FixedGovernance,
    GovernanceSection, RunReport,
};
use govrek_core::kernel::{
    build_reward_field, normalize_field, sample_kernel_population, DomainDescriptor, KernelFamily, KernelSpec,
    Scope, SignMode,
};
use govrek_core::learner::{
    finite_difference_gradient_check, value_iteration, Algorithm, EnumerableMdp, LearnerConfig, Mlp, Paradigm,
    Sample,
};
use govrek_core::scheduler::{plan_round, plan_rounds, run_bracket, ConfigRecord, Genome, Provenance, Score,
    SearchOptions, TrialRunner};
use govrek_core::{Result, SimRng};
use rand::{Rng, SeedableRng};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn workers() -> usize {
    govrek_core::harness::workers_from_env()
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

// 1 ------------------------------------------------------------------------

fn normalization_suite() -> Outcome {
    let start = Instant::now();
    let domains = [
        DomainDescriptor::grid2(5, 5),
        DomainDescriptor::grid2(4, 7),
        DomainDescriptor::grid3(3, 3, 3),
        DomainDescriptor::grid3(4, 3, 5),
        DomainDescriptor::JointAction(17),
        DomainDescriptor::JointAction(256),
    ];
    let mut rng = SimRng::seed_from_u64(2024);
    let mut checked = 0;
    let mut families = std::collections::BTreeSet::new();
    let mut worst_pos: f64 = 0.0;
    let mut worst_zero: f64 = 0.0;
    let mut min_seen = f64::INFINITY;
    let mut errors = Vec::new();
    while checked < 200 {
        let domain = &domains[checked % domains.len()];
        let mode = if (checked / domains.len()) % 2 == 0 {
            SignMode::AllPositive
        } else {
            SignMode::ZeroMean
        };
        let n_agents = 2 + checked % 3;
        let spec = match sample_kernel_population(1, domain, n_agents, mode, &mut rng) {
            Ok(mut v) => v.remove(0),
            Err(e) => {
                errors.push(e.to_string());
                checked += 1;
                continue;
            }
        };
        families.insert(format!("{:?}", spec.family));
        let field = build_reward_field(&spec, domain, &default_context(domain), &mut rng)
            .and_then(|raw| normalize_field(&raw, n_agents, mode));
        match field {
            Ok(f) => match mode {
                SignMode::AllPositive => {
                    worst_pos = worst_pos.max((f.sum() - 1.0 / n_agents as f64).abs());
                    min_seen = min_seen.min(f.min());
                }
                SignMode::ZeroMean => worst_zero = worst_zero.max(f.sum().abs()),
            },
            Err(e) => errors.push(format!("{:?}: {e}", spec.family)),
        }
        checked += 1;
    }
    let elapsed = start.elapsed();
    let pass = errors.is_empty()
        && families.len() == 6
        && worst_pos <= 1e-9
        && min_seen >= 0.0
        && worst_zero <= 1e-9
        && elapsed < Duration::from_secs(10);
    outcome(
        pass,
        format!(
            "{checked} specs, {} families, max |sum-1/n| {worst_pos:.1e}, min {min_seen:.2e}, max |sum| zero-mean {worst_zero:.1e}, {} errors, {:.2?}",
            families.len(),
            errors.len(),
            elapsed
        ),
    )
}

// 2 ------------------------------------------------------------------------

fn fixed_3x3() -> GridEnv {
    GridEnv::new(GridEnvConfig::new(vec![3, 3])).expect("canonical 3x3")
}

fn winning_kernels(decay: f64) -> KernelConfig {
    let mut specs = Vec::new();
    for agent in 0..2 {
        let mut se = KernelSpec::new(KernelFamily::SquaredExponential, Scope::AgentSpecific(agent));
        se.length_scale = 1.5;
        se.decay = decay;
        specs.push(se);
    }
    let mut linear = KernelSpec::new(KernelFamily::Linear, Scope::AgentAgnostic);
    linear.decay = decay;
    specs.push(linear);
    KernelConfig::new(specs)
}

fn policy_invariance() -> Outcome {
    let start = Instant::now();
    let gamma = 0.95;
    let mut rng = SimRng::seed_from_u64(77);
    let mut mismatches = 0;
    for _ in 0..20 {
        let n = rng.gen_range(5..=200);
        let a = rng.gen_range(2..=5);
        let mdp = EnumerableMdp::random(n, a, &mut rng);
        let phi: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let base = value_iteration(&mdp, gamma, 1e-12).expect("vi");
        let shaped = value_iteration(&mdp.shaped(&phi, gamma).expect("shaped"), gamma, 1e-12).expect("vi");
        if base.greedy != shaped.greedy {
            mismatches += 1;
        }
    }
    // The delivery joint MDP shaped by the governance potential of the
    // winning kernel combination.
    let env = fixed_3x3();
    let (mdp, states) = env.enumerate_joint_mdp(1_000_000).expect("enumerable");
    let governed = Governed::from_kernels(env.clone(), winning_kernels(1.0), ShapingMode::Potential, gamma, 0)
        .expect("governed");
    let gov = governed.governance();
    let phi: Vec<f64> = states
        .iter()
        .map(|s| (0..2).map(|i| gov.potential(i, s.positions[i]).unwrap()).sum())
        .collect();
    let base = value_iteration(&mdp, gamma, 1e-12).expect("vi");
    let shaped = value_iteration(&mdp.shaped(&phi, gamma).expect("shaped"), gamma, 1e-12).expect("vi");
    let grid_equal = base.greedy == shaped.greedy;
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && grid_equal && elapsed < Duration::from_secs(60),
        format!(
            "random MDPs with differing greedy sets: {mismatches}/20; 3x3 joint MDP ({} states) equal: {grid_equal}; {:.2?}",
            states.len(),
            elapsed
        ),
    )
}

// 3 ------------------------------------------------------------------------

fn telescoping() -> Outcome {
    let mut rng = SimRng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    let envs: Vec<AnyEnv> = vec![
        AnyEnv::Grid(GridEnv::new(GridEnvConfig::new(vec![5, 5])).unwrap()),
        AnyEnv::Grid(fixed_3x3()),
        AnyEnv::Dilemma(
            DilemmaEnv::new(DilemmaConfig {
                n_agents: 6,
                episode_len: 8,
                flatten: FlattenMode::CooperatorCount,
                ..DilemmaConfig::default()
            })
            .unwrap(),
        ),
    ];
    for episode in 0..1000 {
        let base = envs[episode % envs.len()].clone();
        let gamma = rng.gen_range(0.5..1.0);
        let domain = base.governance_domain();
        let n = base.n_agents();
        let kernels = sample_kernel_population(n + 1, &domain, n, SignMode::ZeroMean, &mut rng).unwrap();
        let mut g = Governed::from_kernels(base, KernelConfig::new(kernels), ShapingMode::Potential, gamma, episode as u64)
            .unwrap();
        g.reset(&mut rng).unwrap();
        let phi = |g: &Governed<AnyEnv>, cells: Option<Vec<usize>>| -> Vec<f64> {
            match cells {
                Some(c) => (0..n).map(|i| g.governance().potential(i, c[i]).unwrap()).collect(),
                None => vec![0.0; n],
            }
        };
        let phi0 = phi(&g, g.governance_cells());
        let mut log = EpisodeLog::default();
        let mut terminated = false;
        while !g.is_done() {
            let actions: Vec<usize> = (0..n).map(|_| rng.gen_range(0..g.n_actions())).collect();
            let out = g.step(&actions).unwrap();
            terminated = out.terminated;
            log.push(&out);
        }
        let phi_t = if terminated { vec![0.0; n] } else { phi(&g, g.governance_cells()) };
        let t = log.len() as i32;
        let disc = discounted_added_reward(&log, gamma);
        for i in 0..n {
            worst = worst.max((disc[i] - (gamma.powi(t) * phi_t[i] - phi0[i])).abs());
        }
    }
    outcome(worst <= 1e-9, format!("1000 episodes, max deviation {worst:.2e}"))
}

// 4 ------------------------------------------------------------------------

fn brute_paths(pos: &mut Vec<usize>, dims: &[usize], cap: u128) -> u128 {
    if pos.iter().zip(dims).all(|(p, d)| p + 1 == *d) {
        return 1;
    }
    let mut total = 0;
    for axis in 0..dims.len() {
        if pos[axis] + 1 < dims[axis] {
            pos[axis] += 1;
            total += brute_paths(pos, dims, cap);
            pos[axis] -= 1;
            if total > cap {
                return total;
            }
        }
    }
    total
}

fn path_oracle() -> Outcome {
    let cap = 10_000u128;
    let mut grids = Vec::new();
    for l in 1..=16 {
        for w in 1..=16 {
            grids.push(vec![l, w]);
            for h in 1..=10 {
                grids.push(vec![l, w, h]);
            }
        }
    }
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for dims in &grids {
        let brute = brute_paths(&mut vec![0; dims.len()], dims, cap);
        if brute > cap {
            continue;
        }
        compared += 1;
        match count_monotone_paths(dims) {
            Ok(c) if c == brute => {}
            other => mismatches.push(format!("{dims:?}: {other:?} vs {brute}")),
        }
    }
    let fixed = count_monotone_paths(&[5, 5]).ok() == Some(70) && count_monotone_paths(&[3, 3, 3]).ok() == Some(90);
    outcome(
        mismatches.is_empty() && fixed,
        format!("{compared} grids agree with enumeration; (5,5)->70 and (3,3,3)->90: {fixed}; {mismatches:?}"),
    )
}

// 5 ------------------------------------------------------------------------

#[derive(Clone)]
struct Unit;

impl Genome for Unit {
    fn mutate<R: Rng + ?Sized>(&self, _rng: &mut R) -> Self {
        self.clone()
    }
    fn superimpose(&self, _other: &Self) -> Self {
        self.clone()
    }
}

struct Counting;

impl TrialRunner<Unit> for Counting {
    type Session = ();
    type Report = ();
    fn start(&self, _g: &Unit, _id: u64, _seed: u64, _max: u64) -> Result<()> {
        Ok(())
    }
    fn advance(&self, _s: &mut (), _units: u64) -> Result<(Score, ())> {
        Ok((
            Score {
                avg_reward: 0.0,
                avg_episode_length: 1.0,
            },
            (),
        ))
    }
}

fn hyperband_accounting() -> Outcome {
    let (r, eta) = (27u64, 3u64);
    let round = plan_round(r, eta).unwrap();
    let geometry: Vec<(u32, u64, u64)> = round.brackets.iter().map(|b| (b.s, b.n_gov, b.r_gov)).collect();
    let geometry_ok = geometry == vec![(3, 27, 1), (2, 12, 3), (1, 6, 9), (0, 4, 27)];
    let mut within = true;
    let mut consumed = Vec::new();
    for b in &round.brackets {
        let s_max = round.s_max as u64;
        let n = ((s_max + 1) * eta.pow(b.s)).div_ceil(b.s as u64 + 1);
        let bound = (b.s as u64 + 1) * n * r / eta.pow(b.s);
        within &= b.budget_bound == bound && b.n_gov == n && b.r_gov == r / eta.pow(b.s);
        for resume in [true, false] {
            let mut o = SearchOptions::new(81, 1);
            o.resume = resume;
            let population = (0..b.n_gov)
                .map(|id| ConfigRecord {
                    id,
                    genome: Unit,
                    parent: None,
                    partner: None,
                    provenance: Provenance::Sampled,
                    round: 0,
                    bracket: b.s,
                    history: Vec::new(),
                })
                .collect();
            let res = run_bracket(b, population, &Counting, &o, 0).unwrap();
            within &= res.consumed <= bound;
            consumed.push((b.s, resume, res.consumed, bound));
        }
    }
    let rounds = plan_rounds(81, 3, 3).unwrap().round_budgets;
    let rounds_ok = rounds == vec![81, 54, 27];
    outcome(
        geometry_ok && within && rounds_ok,
        format!("brackets {geometry:?}; (s, resumed, consumed, bound) {consumed:?}; rounds {rounds:?}"),
    )
}

// 6, 7 ---------------------------------------------------------------------

fn delivery_config(name: &str, governance: GovernanceSection, budget: u64) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        seeds: SEEDS.to_vec(),
        output_dir: name.into(),
        budget,
        env: EnvSection::Grid(GridEnvConfig::new(vec![5, 5])),
        governance,
        learner: LearnerConfig::new(Algorithm::TabularQ, Paradigm::Ctce),
        search: None,
    }
}

fn run(config: &ExperimentConfig, root: &Path) -> RunReport {
    run_experiment(config, &root.join(&config.name), workers()).expect("experiment runs")
}

fn fmt_first(v: Option<f64>) -> String {
    v.map_or_else(|| "inf".into(), |x| format!("{x:.0}"))
}

struct DeliveryRuns {
    governed: RunReport,
    ungoverned: RunReport,
    mors: RunReport,
    elapsed: Duration,
}

const DELIVERY_BUDGET: u64 = 500_000;

fn delivery_runs(root: &Path) -> DeliveryRuns {
    let start = Instant::now();
    let fixed = GovernanceSection::Fixed(FixedGovernance {
        mode: ShapingMode::Additive,
        gamma: None,
        kernels: winning_kernels(0.5).components,
        kernel_files: Vec::new(),
    });
    let governed = run(&delivery_config("governed", fixed, DELIVERY_BUDGET), root);
    let ungoverned = run(&delivery_config("ungoverned", GovernanceSection::None, DELIVERY_BUDGET), root);
    let mors = run(&delivery_config("mors", GovernanceSection::Mors, DELIVERY_BUDGET), root);
    DeliveryRuns {
        governed,
        ungoverned,
        mors,
        elapsed: start.elapsed(),
    }
}

fn median_first(r: &RunReport) -> Option<f64> {
    let firsts: Vec<Option<u64>> = r.results.iter().map(|t| t.steps_to_first_success).collect();
    median_first_success(&firsts)
}

fn jumpstart(runs: &DeliveryRuns) -> Outcome {
    let g = median_first(&runs.governed);
    let u = median_first(&runs.ungoverned);
    let faster = match (g, u) {
        (Some(g), Some(u)) => g < u,
        (Some(_), None) => true,
        _ => false,
    };
    let per_seed = |r: &RunReport| -> Vec<String> {
        r.results
            .iter()
            .map(|t| t.steps_to_first_success.map_or_else(|| "inf".into(), |x| x.to_string()))
            .collect()
    };
    outcome(
        faster && runs.elapsed < Duration::from_secs(600),
        format!(
            "median first success governed {} vs ungoverned {} (per seed {:?} vs {:?}); three runs took {:.1?}",
            fmt_first(g),
            fmt_first(u),
            per_seed(&runs.governed),
            per_seed(&runs.ungoverned),
            runs.elapsed
        ),
    )
}

fn final_episode_length(r: &RunReport) -> f64 {
    let lens: Vec<f64> = r.results.iter().map(|t| t.final_eval.avg_episode_length).collect();
    lens.iter().sum::<f64>() / lens.len() as f64
}

fn mors_comparison(runs: &DeliveryRuns) -> Outcome {
    let g = final_episode_length(&runs.governed);
    let m = final_episode_length(&runs.mors);
    let u = final_episode_length(&runs.ungoverned);
    outcome(
        g <= m,
        format!("final average episode length governed {g:.2} vs MORS {m:.2} (ungoverned {u:.2})"),
    )
}

// 8 ------------------------------------------------------------------------

fn dilemma_config(name: &str, governance: GovernanceSection, budget: u64) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        seeds: SEEDS.to_vec(),
        output_dir: name.into(),
        budget,
        env: EnvSection::Dilemma(DilemmaConfig {
            n_agents: 16,
            episode_len: 16,
            payoff: PayoffProfile::Homogeneous,
            sparsity: Sparsity::Sparse,
            flatten: FlattenMode::CooperatorCount,
            ..DilemmaConfig::default()
        }),
        governance,
        learner: LearnerConfig::new(Algorithm::TabularQ, Paradigm::Ctde),
        search: None,
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn social_dilemma(root: &Path) -> Outcome {
    let start = Instant::now();
    let budget = 100_000;
    let mut linear = KernelSpec::new(KernelFamily::Linear, Scope::AgentAgnostic);
    linear.sign_mode = SignMode::ZeroMean;
    let mut periodic = KernelSpec::new(KernelFamily::Periodic, Scope::AgentAgnostic);
    periodic.sign_mode = SignMode::ZeroMean;
    periodic.period = 8.0;
    periodic.length_scale = 2.0;
    let fixed = GovernanceSection::Fixed(FixedGovernance {
        mode: ShapingMode::Additive,
        gamma: None,
        kernels: vec![linear, periodic],
        kernel_files: Vec::new(),
    });
    let governed = run(&dilemma_config("dilemma-governed", fixed, budget), root);
    let ungoverned = run(&dilemma_config("dilemma-ungoverned", GovernanceSection::None, budget), root);
    let per_agent = |r: &RunReport| -> Vec<f64> {
        r.results
            .iter()
            .map(|t| t.tail_mean(0.1, |p| p.avg_base_reward) / 16.0)
            .collect()
    };
    let (g, u) = (per_agent(&governed), per_agent(&ungoverned));
    let (gm, um) = (median(g.clone()), median(u.clone()));
    let elapsed = start.elapsed();
    outcome(
        gm >= um && elapsed < Duration::from_secs(300),
        format!(
            "median per-agent reward over the last 10%: governed {gm:.3} vs ungoverned {um:.3} (seeds {g:.3?} vs {u:.3?}); {elapsed:.1?}"
        ),
    )
}

// 9 ------------------------------------------------------------------------

fn gradient_check() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let mut rng = SimRng::seed_from_u64(1000 + seed);
        let input = rng.gen_range(3..10);
        let actions = rng.gen_range(2..7);
        let mut net = Mlp::new(input, rng.gen_range(4..16), actions, &mut rng);
        for p in net.params.iter_mut() {
            *p += rng.gen_range(-0.5..0.5);
        }
        let batch: Vec<Sample> = (0..32)
            .map(|_| {
                let features: Vec<f64> = (0..input).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let action = rng.gen_range(0..actions);
                let lp = net.log_probs(&features)[action];
                let shift = match rng.gen_range(0..3) {
                    0 => rng.gen_range(-0.1..0.1),
                    1 => rng.gen_range(0.3..0.6),
                    _ => -rng.gen_range(0.3..0.6),
                };
                Sample {
                    features,
                    action,
                    old_log_prob: lp + shift,
                    advantage: rng.gen_range(-2.0..2.0),
                }
            })
            .collect();
        worst = worst.max(finite_difference_gradient_check(&net, &batch, 0.2, 1e-5).unwrap());
    }
    outcome(worst <= 1e-4, format!("10 batches, max relative error {worst:.2e}"))
}

// 10 -----------------------------------------------------------------------

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism(root: &Path) -> Outcome {
    let fixed = GovernanceSection::Fixed(FixedGovernance {
        mode: ShapingMode::Potential,
        gamma: None,
        kernels: winning_kernels(0.5).components,
        kernel_files: Vec::new(),
    });
    let mut grid = delivery_config("det-grid", fixed, 20_000);
    grid.env = EnvSection::Grid(GridEnvConfig::new(vec![3, 3]));
    let mut pg = delivery_config("det-pg", GovernanceSection::Mors, 4_000);
    pg.env = EnvSection::Grid(GridEnvConfig::new(vec![3, 3]));
    pg.learner = LearnerConfig::new(Algorithm::PolicyGradient, Paradigm::Ctde);
    let mut dilemma = dilemma_config("det-dilemma", GovernanceSection::None, 5_000);
    dilemma.seeds = vec![4, 2];
    let search_text = r#"
name = "det-search"
seeds = [0, 1]
budget = 1000
[env]
kind = "grid"
dims = [3, 3]
[governance]
kind = "search"
[learner]
algorithm = "tabular_q"
paradigm = "ctce"
[search]
total = 9
rounds = 2
timesteps_per_unit = 50
"#;
    let search = ExperimentConfig::from_toml(search_text).unwrap();
    let mut identical = true;
    let mut files = 0;
    for config in [grid, pg, dilemma, search] {
        let mut trees = Vec::new();
        for (pass, w) in [(0, 1), (1, 1), (2, 4)] {
            let dir = root.join(format!("{}-{pass}", config.name));
            run_experiment(&config, &dir, w).expect("runs");
            trees.push(tree(&dir));
        }
        files += trees[0].len();
        identical &= trees.windows(2).all(|w| w[0] == w[1]);
    }
    outcome(identical, format!("4 experiments, {files} files each byte-identical across reruns and 1/4 workers: {identical}"))
}

fn main() {
    let root = tempfile::tempdir().expect("temp dir");
    let mut failed = 0;
    let mut report = |n: usize, name: &str, o: Outcome| {
        println!("criterion {n:>2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    };
    report(1, "kernel normalization", normalization_suite());
    report(2, "potential shaping keeps greedy actions", policy_invariance());
    report(3, "telescoping identity", telescoping());
    report(4, "monotone path counts", path_oracle());
    report(5, "hyperband accounting", hyperband_accounting());
    let runs = delivery_runs(root.path());
    report(6, "jumpstart on 5x5 delivery", jumpstart(&runs));
    report(7, "episode length against MORS", mors_comparison(&runs));
    report(8, "sparse social dilemma", social_dilemma(root.path()));
    report(9, "gradient check", gradient_check());
    report(10, "determinism", determinism(root.path()));
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
