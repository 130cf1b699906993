//! Property tests for the space, codec, runtime semantics, and engine
//! invariants.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use protosearch_core::analysis::best_so_far_curve;
use protosearch_core::candidate::{canonical_decode, canonical_encode, validate};
use protosearch_core::engine::{
    crossover, mutate, select_topk, NoopObserver, Search, SearchConfig,
};
use protosearch_core::eval::surrogate::SurrogateEvaluator;
use protosearch_core::eval::{EvaluationCache, FidelityDescriptor};
use protosearch_core::runtime::{
    batch_composition, draw_batch, normalize_for_eval, process_label, CharacterSetPolicy,
    LRScheduleSpec, SamplerPlan,
};
use protosearch_core::space::default_space;

proptest! {
    #[test]
    fn sampled_candidates_validate_and_round_trip(seed in any::<u64>()) {
        let space = default_space();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let candidate = space.sample_uniform(&mut rng);
        prop_assert!(validate(&candidate, &space).is_empty());
        let encoding = canonical_encode(&candidate);
        prop_assert_eq!(canonical_decode(&encoding).unwrap(), candidate);
    }

    #[test]
    fn crossover_children_always_validate(seed in any::<u64>()) {
        let space = default_space();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = space.sample_uniform(&mut rng);
        let b = space.sample_uniform(&mut rng);
        let child = crossover(&a, &b, &space, &mut rng);
        prop_assert!(validate(&child, &space).is_empty());
    }

    #[test]
    fn mutation_children_always_validate(seed in any::<u64>(), prob in 0.0f64..=1.0) {
        let space = default_space();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parent = space.sample_uniform(&mut rng);
        let child = mutate(&parent, &space, prob, &mut rng);
        prop_assert!(validate(&child, &space).is_empty());
    }

    #[test]
    fn normalize_is_idempotent_and_alphanumeric(s in "\\PC*") {
        let once = normalize_for_eval(&s);
        prop_assert_eq!(normalize_for_eval(&once), once.clone());
        prop_assert!(once.chars().all(|c| c.is_ascii_alphanumeric()));
        prop_assert!(!once.chars().any(|c| c.is_ascii_uppercase()));
    }

    #[test]
    fn processed_labels_stay_inside_the_policy_alphabet(s in "\\PC*", upper: bool, punct: bool) {
        let policy = CharacterSetPolicy { uppercase: upper, punctuation: punct };
        let out = process_label(&s, policy);
        for c in out.chars() {
            let allowed = c.is_ascii_digit()
                || c.is_ascii_lowercase()
                || (policy.uppercase && c.is_ascii_uppercase())
                || (policy.punctuation && c.is_ascii_punctuation());
            prop_assert!(allowed, "char {c:?} escaped policy {policy:?}");
        }
        prop_assert_eq!(process_label(&out, policy), out.clone());
        prop_assert_eq!(normalize_for_eval(&out), normalize_for_eval(&s));
    }

    #[test]
    fn dlup_only_removes_other_characters(s in "\\PC*") {
        let policy = CharacterSetPolicy { uppercase: true, punctuation: true };
        let out = process_label(&s, policy);
        let expected: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric() || c.is_ascii_punctuation())
            .collect();
        prop_assert_eq!(out, expected);
    }

    #[test]
    fn batch_counts_always_sum_to_batch_size(alpha in 0.0f64..=1.0, batch in 1u32..=4096) {
        let (n_real, n_synth) = batch_composition(alpha, batch).unwrap();
        prop_assert_eq!(n_real + n_synth, batch);
    }

    #[test]
    fn drawn_indices_stay_in_pool_bounds(
        seed in any::<u64>(),
        alpha in 0.0f64..=1.0,
        batch in 1u32..=512,
        real_pool in 1usize..=1000,
        synth_pool in 1usize..=1000,
    ) {
        let plan = SamplerPlan::new(alpha, batch).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let drawn = draw_batch(&plan, real_pool, synth_pool, &mut rng).unwrap();
        prop_assert_eq!(drawn.len() as u32, batch);
        for (tag, index) in drawn {
            match tag {
                protosearch_core::runtime::PoolTag::Real => prop_assert!(index < real_pool),
                protosearch_core::runtime::PoolTag::Synth => prop_assert!(index < synth_pool),
            }
        }
    }

    #[test]
    fn multistep_lr_never_increases(
        initial in 1e-5f64..10.0,
        total in 2u64..5000,
        token in prop::sample::select(vec!["constant", "ms-0.6", "ms-0.6-0.9", "ms-0.3-0.6-0.9"]),
    ) {
        let spec = LRScheduleSpec::from_token(token, initial, total).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..total {
            let lr = spec.lr_at(i).unwrap();
            prop_assert!(lr <= prev);
            prev = lr;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn search_population_is_valid_and_budgeted(seed in any::<u64>(), landscape in any::<u64>()) {
        let space = default_space();
        let binding = SurrogateEvaluator::new(landscape);
        let cache = EvaluationCache::new();
        let config = SearchConfig { seed, t: 3, ..SearchConfig::default() };
        let outcome = Search::new(&space, config, &binding, &cache, FidelityDescriptor::proxy())
            .unwrap()
            .run(&mut NoopObserver)
            .unwrap();
        let state = &outcome.state;
        prop_assert_eq!(state.population.len(), 16 + 3 * 8);
        prop_assert_eq!(state.evaluations_spent + state.cache_hits, state.population.len());
        for member in &state.population {
            prop_assert!(validate(&member.candidate, &space).is_empty());
            if let Some(f) = member.fitness {
                prop_assert!((0.0..=1.0).contains(&f));
            }
        }

        // Top-k fitness is non-increasing along the returned list.
        let top = select_topk(&state.population, 8);
        let fitnesses: Vec<f64> = top
            .iter()
            .map(|&i| state.population[i].fitness.unwrap())
            .collect();
        for pair in fitnesses.windows(2) {
            prop_assert!(pair[0] >= pair[1]);
        }

        // The incumbent curve over population order never decreases.
        let curve = best_so_far_curve(&state.population);
        for pair in curve.windows(2) {
            prop_assert!(pair[1] >= pair[0] || pair[1].is_nan());
        }
        prop_assert_eq!(*curve.last().unwrap(), outcome.best.fitness.unwrap());
    }
}
