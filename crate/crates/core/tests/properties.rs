use load_core::choice::{ChoiceObservation, ItemCatalog};
use load_core::likelihood::ObservationSet;
use load_core::linalg::full_svd;
use load_core::lowrank::{extract_subspace, fgd_fit, FgdConfig};
use load_core::policy::{
    augment_user, uniform_assortment, AnyPolicy, ElsaUcb, Policy, PolicyConfig, PolicyKind, RankSpec,
};
use load_core::sim::{run_episode, EnvironmentSpec, Scenario};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(d1: usize, d2: usize, n: usize, k: usize, scenario: Scenario) -> EnvironmentSpec {
    EnvironmentSpec::Synthetic {
        d1,
        d2,
        n_items: n,
        capacity: k,
        rank: 1,
        singular_scale: 3.0,
        scenario,
    }
}

fn scenario() -> impl Strategy<Value = Scenario> {
    prop_oneof![
        Just(Scenario::LowRank),
        Just(Scenario::ApproxLowrank),
        Just(Scenario::FullRank),
        Just(Scenario::MainEffectOnly),
    ]
}

fn kind() -> impl Strategy<Value = PolicyKind> {
    prop_oneof![
        Just(PolicyKind::Elsa),
        Just(PolicyKind::UcbMnlStacked),
        Just(PolicyKind::UcbMnlVectorized),
        Just(PolicyKind::Uniform),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn regret_is_nonnegative_and_accumulates(
        seed in 0u64..10_000,
        d1 in 2usize..5,
        d2 in 2usize..5,
        n in 3usize..8,
        kind in kind(),
        scenario in scenario(),
    ) {
        let k = 1 + (seed as usize % 3).min(n - 1);
        let env = spec(d1, d2, n, k, scenario).build(seed).unwrap();
        let config = PolicyConfig { rank: RankSpec::Fixed(1), exploration_c: 1.0, ..PolicyConfig::default() };
        let mut p = AnyPolicy::build(kind, None, &config, env.catalog(), d1, k, 80, seed, None).unwrap();
        let trace = run_episode(&mut p, &env, 80).unwrap();
        let mut acc = 0.0;
        for (r, c) in trace.per_step_regret.iter().zip(&trace.cumulative) {
            prop_assert!(*r >= -1e-12);
            acc += r;
            prop_assert!((acc - c).abs() <= 1e-9);
        }
        let mut oracle = AnyPolicy::build(PolicyKind::Oracle, None, &config, env.catalog(), d1, k, 80, seed, Some(env.truth())).unwrap();
        let trace = run_episode(&mut oracle, &env, 80).unwrap();
        prop_assert!(trace.per_step_regret.iter().all(|r| r.abs() <= 1e-12));
    }

    #[test]
    fn elsa_bonus_is_nonnegative_and_sets_fit(seed in 0u64..10_000, k in 1usize..4) {
        let env = spec(3, 3, 6, k, Scenario::LowRank).build(seed).unwrap();
        let config = PolicyConfig { rank: RankSpec::Fixed(2), exploration_c: 2.0, ..PolicyConfig::default() };
        let mut p = ElsaUcb::new("e".into(), env.catalog(), 3, k, 120, config, seed).unwrap();
        for t in 1..=120 {
            let user = env.user(t);
            if let Some(stage) = p.stage() {
                let b = stage.subspace.rotate_user(&augment_user(&user.q));
                let (_, widths) = stage.engine.scores(&b);
                prop_assert!(widths.iter().all(|&w| w >= 0.0));
            }
            let u = env.utilities(&user).unwrap();
            let s = p.select(&user).unwrap();
            prop_assert!(s.len() <= k);
            p.observe(&user, &s, env.choose(t, &u, &s)).unwrap();
        }
    }

    #[test]
    fn fgd_output_has_bounded_rank(seed in 0u64..10_000, r in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d1, d2, n_items) = (4, 3, 6);
        let catalog = ItemCatalog::with_unit_revenues(DMatrix::from_fn(n_items, d2, |_, _| rng.random_range(-1.0..1.0))).unwrap();
        let records: Vec<ChoiceObservation> = (0..60)
            .map(|_| {
                let q = nalgebra::DVector::from_fn(d1, |_, _| rng.random_range(-1.0..1.0));
                let s = uniform_assortment(&mut rng, n_items, 2).unwrap();
                let c = load_core::Choice::from_index(&s, rng.random_range(0..=2));
                ChoiceObservation::new(q.into(), s, c).unwrap()
            })
            .collect();
        let data = ObservationSet::new(&catalog, &records).unwrap();
        let phi0 = DMatrix::from_fn(d2, d1, |_, _| rng.random_range(-1.0..1.0));
        let config = FgdConfig { max_iterations: 200, ..FgdConfig::default() };
        let fit = fgd_fit(&data, r, &phi0, &config).unwrap();
        let (_, d, _) = full_svd(&fit.phi);
        for &s in d.iter().skip(r) {
            prop_assert!(s <= 1e-8 * d[0].max(1e-300));
        }
    }

    #[test]
    fn subspace_extraction_is_bitwise_deterministic(seed in 0u64..10_000, r in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = DMatrix::from_fn(5, 4, |_, _| rng.random_range(-1.0..1.0));
        let a = extract_subspace(&phi, r).unwrap();
        let b = extract_subspace(&phi, r).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
