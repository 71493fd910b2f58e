use govrek_core::governance::KernelConfig;
use govrek_core::harness::default_context;
use govrek_core::scheduler::plan_rounds;
use govrek_core::{
    build_reward_field, mutate, normalize_field, sample_kernel_population, DomainDescriptor,
    SignMode, SimRng,
};
use proptest::prelude::*;
use rand::SeedableRng;

fn domain(kind: u8) -> DomainDescriptor {
    match kind % 3 {
        0 => DomainDescriptor::grid2(5, 5),
        1 => DomainDescriptor::grid3(3, 4, 3),
        _ => DomainDescriptor::parse("joint:8").unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_kernels_normalize_and_survive_mutation(kind in 0u8..3, seed in any::<u64>(), n_agents in 1usize..3) {
        let d = domain(kind);
        let ctx = default_context(&d);
        let mut rng = SimRng::seed_from_u64(seed);
        let specs = sample_kernel_population(4, &d, n_agents, SignMode::AllPositive, &mut rng).unwrap();
        for spec in &specs {
            let child = mutate(spec, &mut rng, 0.5);
            for s in [spec, &child] {
                s.validate().unwrap();
                let raw = build_reward_field(s, &d, &ctx, &mut rng).unwrap();
                let f = normalize_field(&raw, n_agents, SignMode::AllPositive).unwrap();
                prop_assert!((f.sum() - 1.0 / n_agents as f64).abs() < 1e-9);
                prop_assert!(f.min() >= 0.0);
            }
        }
    }

    #[test]
    fn composites_keep_the_per_owner_cap(seed in any::<u64>(), n in 1usize..6) {
        let d = DomainDescriptor::grid2(4, 6);
        let mut rng = SimRng::seed_from_u64(seed);
        let specs = sample_kernel_population(n, &d, 2, SignMode::AllPositive, &mut rng).unwrap();
        let fields = KernelConfig::new(specs).build_fields(&d, &default_context(&d), 2, &mut rng).unwrap();
        for f in &fields {
            prop_assert!((f.sum() - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn search_plans_respect_their_bounds(total in 9u64..2000, rounds in 1u32..4, eta in 2u64..5) {
        let Ok(plan) = plan_rounds(total, rounds, eta) else { return Ok(()) };
        prop_assert_eq!(plan.round_budgets.len(), rounds as usize);
        prop_assert!(plan.round_budgets.windows(2).all(|w| w[0] >= w[1]));
        for round in &plan.round_plans {
            for b in &round.brackets {
                prop_assert!(b.resumed_consumption() <= b.fresh_consumption());
                prop_assert!(b.rungs.windows(2).all(|w| w[0].n >= w[1].n && w[0].r <= w[1].r));
                prop_assert!(b.rungs.last().unwrap().r <= round.budget);
            }
        }
    }
}
