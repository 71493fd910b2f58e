use super::*;
use crate::env::{
    AnyEnv, DilemmaConfig, DilemmaEnv, FlattenMode, GridEnv, GridEnvConfig, GridState,
    PackageState, Randomization,
};
use crate::kernel::{Anchor, KernelFamily, Scope, SignMode};
use proptest::prelude::{prop_assert, proptest, ProptestConfig};
use rand::{Rng, SeedableRng};

const UP: usize = 0;
const DOWN: usize = 1;
const LEFT: usize = 2;
const RIGHT: usize = 3;
const STAY: usize = 4;
const HAND: usize = 5;

fn grid(dims: Vec<usize>) -> GridEnv {
    GridEnv::new(GridEnvConfig::new(dims)).unwrap()
}

fn field(domain: &DomainDescriptor, owner: Owner, values: Vec<f64>, decay: f64) -> RewardField {
    RewardField::from_values(domain.clone(), owner, values, decay).unwrap()
}

fn governed(env: GridEnv, fields: Vec<RewardField>, mode: ShapingMode, gamma: f64) -> Governed<GridEnv> {
    let gov = GovernanceConfig::new(fields, mode, gamma, 2).unwrap();
    let mut g = Governed::new(env, gov).unwrap();
    g.reset(&mut SimRng::seed_from_u64(0)).unwrap();
    g
}

#[test]
fn potential_shaping_arithmetic() {
    assert!((potential_shaping(0.5, 0.5, 0.99) + 0.005).abs() < 1e-15);
    assert_eq!(potential_shaping(0.0, 1.0, 0.9), 0.9);
    for x in [-3.0, 0.0, 0.25, 7.5] {
        assert_eq!(potential_shaping(x, x, 1.0), 0.0);
    }
}

#[test]
fn additive_pays_entered_cell() {
    let env = grid(vec![3, 3]);
    let d = env.domain().clone();
    let mut values = vec![0.05; 9];
    values[1] = 0.01;
    let mut g = governed(env, vec![field(&d, Owner::Agent(0), values, 1.0)], ShapingMode::Additive, 0.99);
    // agent 0 starts at (0,2) and enters (0,1)
    let out = g.step(&[LEFT, STAY]).unwrap();
    assert_eq!(out.base_rewards, vec![0.0, 0.0]);
    assert_eq!(out.added[0], 0.01);
    assert_eq!(out.rewards[0], 0.01);
    assert_eq!(out.added[1], 0.0);
}

#[test]
fn potential_on_constant_field() {
    let env = grid(vec![3, 3]);
    let d = env.domain().clone();
    let mut g = governed(env, vec![field(&d, Owner::Shared, vec![0.5; 9], 1.0)], ShapingMode::Potential, 0.99);
    let out = g.step(&[STAY, STAY]).unwrap();
    for a in out.added {
        assert!((a + 0.005).abs() < 1e-15);
    }
}

#[test]
fn zero_potential_is_identity() {
    let env = grid(vec![5, 5]);
    let d = env.domain().clone();
    let fields = vec![
        field(&d, Owner::Agent(0), vec![0.0; 25], 1.0),
        field(&d, Owner::Shared, vec![0.0; 25], 1.0),
    ];
    let mut g = governed(env, fields, ShapingMode::Potential, 0.9);
    let mut rng = SimRng::seed_from_u64(3);
    while !g.is_done() {
        let out = g.step(&[rng.gen_range(0..6), rng.gen_range(0..6)]).unwrap();
        assert_eq!(out.rewards, out.base_rewards);
    }
}

fn se_linear(sign: SignMode, decay: f64) -> KernelConfig {
    let mut se0 = KernelSpec::new(KernelFamily::SquaredExponential, Scope::AgentSpecific(0));
    let mut se1 = KernelSpec::new(KernelFamily::SquaredExponential, Scope::AgentSpecific(1));
    let mut lin = KernelSpec::new(KernelFamily::Linear, Scope::AgentAgnostic);
    for s in [&mut se0, &mut se1, &mut lin] {
        s.sign_mode = sign;
        s.decay = decay;
    }
    KernelConfig::new(vec![se0, se1, lin])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn governance_never_changes_transitions(seed in 0u64..1000, mode in 0usize..2) {
        let mode = [ShapingMode::Additive, ShapingMode::Potential][mode];
        let mut plain = grid(vec![5, 5]);
        let mut g = Governed::from_kernels(plain.clone(), se_linear(SignMode::ZeroMean, 0.5), mode, 0.95, 1).unwrap();
        let mut rng = SimRng::seed_from_u64(seed);
        plain.reset(&mut SimRng::seed_from_u64(9)).unwrap();
        g.reset(&mut SimRng::seed_from_u64(9)).unwrap();
        while !plain.is_done() {
            let a = [rng.gen_range(0..6), rng.gen_range(0..6)];
            let p = plain.step(&a).unwrap();
            let q = g.step(&a).unwrap();
            prop_assert!(plain.state() == g.inner().state());
            prop_assert!(p.done() == q.done() && p.base_rewards == q.base_rewards);
        }
    }

    #[test]
    fn single_collection_without_decay(seed in 0u64..1000) {
        let env = grid(vec![5, 5]);
        let d = env.domain().clone();
        let mut rng = SimRng::seed_from_u64(seed);
        let fields: Vec<RewardField> = (0..2)
            .map(|i| {
                let raw: Vec<f64> = (0..25).map(|_| rng.gen_range(0.0..1.0)).collect();
                let f = field(&d, Owner::Agent(i), raw, 0.0);
                normalize_field(&f, 2, SignMode::AllPositive).unwrap()
            })
            .collect();
        let mut g = governed(env, fields, ShapingMode::Additive, 0.99);
        let mut totals = [0.0; 2];
        while !g.is_done() {
            let out = g.step(&[rng.gen_range(0..6), rng.gen_range(0..6)]).unwrap();
            totals[0] += out.added[0];
            totals[1] += out.added[1];
        }
        prop_assert!(totals.iter().all(|&t| t <= 0.5 + 1e-9));
    }

    #[test]
    fn decayed_cell_total_is_geometric(d in 0.0f64..0.95) {
        let env = grid(vec![3, 3]);
        let dom = env.domain().clone();
        let f = normalize_field(&field(&dom, Owner::Agent(1), (1..=9).map(f64::from).collect(), d), 2, SignMode::AllPositive).unwrap();
        let start_value = f.value(5);
        let mut g = governed(env, vec![f], ShapingMode::Additive, 0.99);
        // agent 1 sits at (1,2) = cell 5 for the whole episode
        let mut total = 0.0;
        while !g.is_done() {
            total += g.step(&[STAY, STAY]).unwrap().added[1];
        }
        prop_assert!(total <= start_value / (1.0 - d) + 1e-12);
    }

    #[test]
    fn telescoping_identity(seed in 0u64..10_000, gamma in 0.5f64..1.0) {
        let env = grid(vec![5, 5]);
        let mut g = Governed::from_kernels(env, se_linear(SignMode::ZeroMean, 1.0), ShapingMode::Potential, gamma, 2).unwrap();
        let mut rng = SimRng::seed_from_u64(seed);
        g.reset(&mut rng).unwrap();
        let cells0 = g.governance_cells().unwrap();
        let phi0: Vec<f64> = (0..2).map(|i| g.governance().potential(i, cells0[i]).unwrap()).collect();
        let mut log = EpisodeLog::default();
        let mut terminated = false;
        while !g.is_done() {
            let out = g.step(&[rng.gen_range(0..6), rng.gen_range(0..6)]).unwrap();
            terminated = out.terminated;
            log.push(&out);
        }
        let t = log.len() as i32;
        let cells = g.governance_cells().unwrap();
        let disc = discounted_added_reward(&log, gamma);
        for i in 0..2 {
            let phi_t = if terminated { 0.0 } else { g.governance().potential(i, cells[i]).unwrap() };
            prop_assert!((disc[i] - (gamma.powi(t) * phi_t - phi0[i])).abs() <= 1e-9);
        }
    }
}

#[test]
fn visiting_every_cell_once_collects_the_field() {
    let d = DomainDescriptor::grid2(3, 3);
    let raw = field(&d, Owner::Agent(0), (0..9).map(|c| 1.0 + c as f64).collect(), 0.0);
    let f = normalize_field(&raw, 2, SignMode::AllPositive).unwrap();
    let mut env = grid(vec![3, 3]);
    let mut s = env.state().clone();
    s.fuel = vec![100, 100];
    env.set_state(s);
    let gov = GovernanceConfig::new(vec![f], ShapingMode::Additive, 0.99, 2).unwrap();
    let mut g = Governed::new(env, gov).unwrap();
    // from (0,2) through every cell, re-entering (1,2) once, ending on the goal
    let route = [LEFT, LEFT, DOWN, DOWN, RIGHT, UP, RIGHT, UP, DOWN, DOWN];
    let mut visited = vec![false; 9];
    let mut total = 0.0;
    for a in route {
        total += g.step(&[a, STAY]).unwrap().added[0];
        visited[g.governance_cells().unwrap()[0]] = true;
    }
    assert!(g.is_done());
    assert!(visited.iter().all(|&v| v));
    assert!((total - 0.5).abs() <= 1e-12, "collected {total}");
}

#[test]
fn shared_field_decays_globally() {
    let env = grid(vec![3, 3]);
    let d = env.domain().clone();
    let mut g = governed(env, vec![field(&d, Owner::Shared, vec![0.1; 9], 0.0)], ShapingMode::Additive, 0.99);
    // agent 1 at (1,2) steps up onto (0,2), where agent 0 stood at the start
    let a = g.step(&[LEFT, UP]).unwrap();
    assert_eq!(a.added, vec![0.1, 0.1]);
    let b = g.step(&[RIGHT, STAY]).unwrap();
    assert_eq!(b.added, vec![0.0, 0.0]);
}

#[test]
fn kernel_config_groups_by_owner() {
    let env = grid(vec![5, 5]);
    let mut extra = KernelSpec::new(KernelFamily::Periodic, Scope::AgentSpecific(0));
    extra.sign_mode = SignMode::AllPositive;
    let mut kc = se_linear(SignMode::AllPositive, 1.0);
    kc.components.push(extra);
    let fields = kc
        .build_fields(env.domain(), &env.anchor_context(), 2, &mut SimRng::seed_from_u64(0))
        .unwrap();
    assert_eq!(fields.len(), 3);
    for f in &fields {
        assert!((f.sum() - 0.5).abs() < 1e-12);
    }
    let round = KernelConfig::from_toml(&kc.to_toml().unwrap()).unwrap();
    assert_eq!(round, kc);
}

#[test]
fn mixed_sign_modes_rejected() {
    let env = grid(vec![5, 5]);
    let mut kc = se_linear(SignMode::AllPositive, 1.0);
    let mut zm = KernelSpec::new(KernelFamily::Linear, Scope::AgentAgnostic);
    zm.sign_mode = SignMode::ZeroMean;
    kc.components.push(zm);
    let r = kc.build_fields(env.domain(), &env.anchor_context(), 2, &mut SimRng::seed_from_u64(0));
    assert!(r.is_err());
}

#[test]
fn config_validation() {
    let d = DomainDescriptor::grid2(3, 3);
    assert!(GovernanceConfig::new(vec![field(&d, Owner::Agent(2), vec![0.0; 9], 1.0)], ShapingMode::Additive, 0.9, 2).is_err());
    let twice = vec![field(&d, Owner::Shared, vec![0.0; 9], 1.0), field(&d, Owner::Shared, vec![0.0; 9], 1.0)];
    assert!(GovernanceConfig::new(twice, ShapingMode::Additive, 0.9, 2).is_err());
    assert!(GovernanceConfig::new(vec![], ShapingMode::Potential, 0.0, 2).is_err());
    let wrong = GovernanceConfig::new(
        vec![field(&DomainDescriptor::grid2(5, 5), Owner::Shared, vec![0.0; 25], 1.0)],
        ShapingMode::Additive,
        0.9,
        2,
    )
    .unwrap();
    assert!(matches!(Governed::new(grid(vec![3, 3]), wrong), Err(Error::DomainMismatch(_))));
}

#[test]
fn dilemma_fields_read_the_joint_action() {
    let cfg = DilemmaConfig {
        n_agents: 4,
        episode_len: 3,
        flatten: FlattenMode::CooperatorCount,
        ..DilemmaConfig::default()
    };
    let env = DilemmaEnv::new(cfg).unwrap();
    let d = env.governance_domain();
    assert_eq!(d.len(), 5);
    let values = vec![0.0, 0.1, 0.2, 0.3, 0.4];
    let mut g = Governed::new(
        env,
        GovernanceConfig::new(vec![field(&d, Owner::Shared, values, 1.0)], ShapingMode::Additive, 0.9, 4).unwrap(),
    )
    .unwrap();
    g.reset(&mut SimRng::seed_from_u64(0)).unwrap();
    let out = g.step(&[1, 1, 0, 1]).unwrap();
    assert_eq!(out.added, vec![0.3; 4]);
}

#[test]
fn fields_follow_a_moving_layout() {
    let mut cfg = GridEnvConfig::new(vec![5, 5]);
    cfg.randomization = Randomization::RandomPerEpisode;
    let env = GridEnv::new(cfg).unwrap();
    let mut kc = se_linear(SignMode::AllPositive, 1.0);
    kc.components[2].anchor = Anchor::Goal;
    let mut g = Governed::from_kernels(env, kc, ShapingMode::Additive, 0.9, 0).unwrap();
    let mut rng = SimRng::seed_from_u64(5);
    let mut seen = Vec::new();
    for _ in 0..6 {
        g.reset(&mut rng).unwrap();
        seen.push(g.governance().fields.clone());
    }
    seen.dedup();
    assert!(seen.len() > 1);
}

#[test]
fn mors_rewards() {
    let env = grid(vec![5, 5]);
    let d = env.domain().clone();
    let mut m = MorsShaped::new(AnyEnv::Grid(env)).unwrap();
    m.reset(&mut SimRng::seed_from_u64(0)).unwrap();
    let quiet = m.step(&[STAY, STAY]).unwrap();
    assert_eq!(quiet.rewards, quiet.base_rewards);

    // agent 0 holds the package at (2,2); agent 1 waits at (3,3)
    let mut inner = m.inner().clone();
    inner.set_state(GridState {
        positions: vec![d.cell(&[2, 2]).unwrap(), d.cell(&[3, 3]).unwrap()],
        fuel: vec![5, 5],
        package: PackageState::Held(0),
        step: 3,
        done: false,
    });
    let mut m = MorsShaped::new(AnyEnv::Grid(inner)).unwrap();
    let closer = m.step(&[DOWN, STAY]).unwrap();
    assert!((closer.added[0] - 0.02).abs() < 1e-15);
    assert_eq!(closer.added[1], 0.0);
    let swap = m.step(&[STAY, HAND]).unwrap();
    assert_eq!(swap.events.handover, Some((0, 1)));
    assert!((swap.added[0] - 0.1).abs() < 1e-15);
    // the receiver also carries the package one cell closer
    assert!((swap.added[1] - 0.12).abs() < 1e-15);
}

#[test]
fn mors_rejects_dilemma() {
    let env = DilemmaEnv::new(DilemmaConfig::default()).unwrap();
    assert!(matches!(MorsShaped::new(AnyEnv::Dilemma(env)), Err(Error::DomainMismatch(_))));
}

#[test]
fn episode_logs() {
    let mut plain = grid(vec![3, 3]);
    plain.reset(&mut SimRng::seed_from_u64(0)).unwrap();
    let mut log = EpisodeLog::default();
    for _ in 0..4 {
        log.push(&plain.step(&[STAY, STAY]).unwrap());
    }
    assert_eq!(episode_added_reward(&log), vec![0.0, 0.0]);
    let mut buf = Vec::new();
    log.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("step,base_0,base_1,added_0,added_1\n0,0,0,0,0\n"));
    assert_eq!(text.lines().count(), 5);
}
