// Copyright 2026 polarlandscape Contributors
// SPDX-License-Identifier: Apache-2.0

use polarlandscape::dynamics::{propagate, ControlField};
use polarlandscape::experiment::{ExperimentConfig, ExperimentKind};
use polarlandscape::landscape::{fidelity, GoalGate};
use polarlandscape::matrix::{
    derive_seed, expm_skew, lie_closure_rank, random_su, random_unitary_goal, SuGenerator, Unitary, C64,
};
use polarlandscape::zoo::random_tuple;
use proptest::prelude::*;

fn amplitudes(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn expm_is_a_one_parameter_group(n in 2usize..5, seed in 0u64..1000, s in -2.0f64..2.0, t in -2.0f64..2.0) {
        let a = random_su(n, seed, 1.5).unwrap();
        let joint = expm_skew(&a, s + t).unwrap();
        let split = expm_skew(&a, s).unwrap().compose(&expm_skew(&a, t).unwrap());
        prop_assert!(joint.matrix().frobenius_distance(split.matrix()) < 1e-11);
    }

    #[test]
    fn fidelity_ignores_global_phase(n in 2usize..5, seed in 0u64..1000, phase in 0.0f64..6.3) {
        let goal = GoalGate::new(random_unitary_goal(n, seed).unwrap()).unwrap();
        let u = random_unitary_goal(n, seed + 1).unwrap();
        let shifted = Unitary::new(u.matrix().scale_complex(C64::from_polar(1.0, phase))).unwrap();
        let a = fidelity(&u, &goal).unwrap();
        let b = fidelity(&shifted, &goal).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&a));
    }

    #[test]
    fn propagation_splits_at_any_segment(seed in 0u64..1000, amps in amplitudes(12), cut in 1usize..12) {
        let (model, _) = random_tuple(3, seed, 1.0, 1.0, Some(0.4)).unwrap();
        let field = ControlField::new(amps, 4.0).unwrap();
        let (whole, _) = propagate(&model, &field, false).unwrap();
        let (head, _) = propagate(&model, &field.prefix(cut).unwrap(), false).unwrap();
        let (tail, _) = propagate(&model, &field.suffix(cut).unwrap(), false).unwrap();
        prop_assert!(whole.matrix().frobenius_distance(tail.compose(&head).matrix()) < 1e-11);
    }

    #[test]
    fn closure_rank_is_conjugation_invariant(seed in 0u64..1000) {
        let gens = [random_su(3, seed, 1.0).unwrap(), random_su(3, seed + 7, 1.0).unwrap()];
        let v = random_unitary_goal(3, seed + 13).unwrap();
        let moved: Vec<SuGenerator> = gens.iter().map(|g| v.pull_back(g)).collect();
        prop_assert_eq!(lie_closure_rank(&gens).unwrap(), lie_closure_rank(&moved).unwrap());
    }

    #[test]
    fn seeds_beyond_toml_range_are_rejected(seed in (i64::MAX as u64 + 1)..=u64::MAX) {
        let mut config = ExperimentConfig::defaults(ExperimentKind::SingularCensus);
        config.seed = seed;
        prop_assert!(config.validate().is_err());
    }

    #[test]
    fn derived_seeds_differ_by_path(root in any::<u64>(), a in 0u64..64, b in 0u64..64) {
        prop_assume!(a != b);
        prop_assert_ne!(derive_seed(root, &[a]), derive_seed(root, &[b]));
        prop_assert_ne!(derive_seed(root, &[a, b]), derive_seed(root, &[b, a]));
    }

    #[test]
    fn config_survives_toml(seed in 0..=i64::MAX as u64, models in 1usize..500, ratio in 0.001f64..10.0, horizon in 0.1f64..100.0) {
        let mut config = ExperimentConfig::defaults(ExperimentKind::TrapCensusGeneric);
        config.seed = seed;
        config.n_models = models;
        config.norm_ratio = ratio;
        config.horizon = horizon;
        let text = config.to_toml_string().unwrap();
        prop_assert!(config.validate().is_ok());
        prop_assert_eq!(ExperimentConfig::from_toml_str(config.experiment, &text).unwrap(), config);
    }
}
