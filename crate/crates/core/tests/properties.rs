mod common;

use common::{dense_score, random_model, random_row};
use proptest::prelude::*;
use rand::Rng;
use wellfm::dataset::ColumnScaler;
use wellfm::metrics::{hit_rate_of, mean_reciprocal_rank_of, rank_holdout};
use wellfm::rng::seeded;
use wellfm::synthetic::{planted, PlantedConfig};
use wellfm::train::{bpr_step, StepParams};
use wellfm::{
    init_model, recommend_top_k, score_all_wells, split_leave_one_out, Dataset, InteractionSet,
    TrainConfig, TripleSample, WellFeatureTable,
};

fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Random dataset with `aux` attribute columns, some entries exactly zero.
fn random_dataset(seed: u64, companies: usize, wells: usize, aux: usize) -> Dataset {
    let mut rng = seeded(seed);
    let mut pairs = Vec::new();
    for c in 0..companies {
        let count = rng.random_range(1..wells);
        for _ in 0..count {
            pairs.push((c, rng.random_range(0..wells)));
        }
    }
    let set = InteractionSet::from_pairs(ids("c", companies), ids("w", wells), pairs).unwrap();
    let values = (0..wells * aux)
        .map(|_| {
            if rng.random_bool(0.2) {
                0.0
            } else {
                rng.random_range(-3.0..3.0)
            }
        })
        .collect();
    let table = WellFeatureTable::new(ids("a", aux), wells, values).unwrap();
    Dataset::new(set, table).unwrap()
}

fn small_planted(seed: u64) -> Dataset {
    let cfg = PlantedConfig {
        companies: 12,
        wells: 40,
        interactions_per_company: 8,
        core_wells: 10,
        noise_interactions: 1,
        ..Default::default()
    };
    planted(&cfg, seed).unwrap().dataset().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn factorized_score_matches_double_loop(seed in any::<u64>(), n in 1usize..40, k in 1usize..8) {
        let mut rng = seeded(seed);
        let model = random_model(&mut rng, n, k);
        let row = random_row(&mut rng, n, 0.4);
        let fast = model.score(&row).unwrap();
        let slow = dense_score(&model, &row.to_dense());
        prop_assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
    }

    #[test]
    fn split_reassembles_the_input(seed in any::<u64>(), split_seed in any::<u64>()) {
        let data = random_dataset(seed, 7, 9, 0);
        let split = split_leave_one_out(&data.interactions, split_seed);
        let mut all: Vec<_> = split.train.pairs().to_vec();
        all.extend(&split.holdout);
        all.sort_unstable();
        let mut expected = data.interactions.pairs().to_vec();
        expected.sort_unstable();
        prop_assert_eq!(all, expected);
        for &(c, w) in &split.holdout {
            prop_assert!(!split.train.contains(c, w));
            prop_assert!(!split.train.observed(c).is_empty());
        }
        let eligible = (0..7).filter(|&c| data.interactions.observed(c).len() >= 2).count();
        prop_assert_eq!(split.holdout.len(), eligible);
    }

    #[test]
    fn standardization_inverts(values in prop::collection::vec(-1e6f64..1e6, 1..30)) {
        let n = values.len();
        let table = WellFeatureTable::new(vec!["x".into()], n, values.clone()).unwrap();
        let back = table.standardize().unstandardize();
        let scaler = ColumnScaler::fit(&values);
        for (w, &orig) in values.iter().enumerate() {
            let restored = back.row(w)[0];
            if scaler.std_dev > 0.0 {
                let scale = orig.abs().max(scaler.mean.abs()).max(1.0);
                prop_assert!((restored - orig).abs() <= 1e-12 * scale, "{restored} vs {orig}");
            } else {
                prop_assert_eq!(restored, scaler.mean);
            }
        }
    }

    #[test]
    fn standardization_inverts_within_absolute_tolerance(values in prop::collection::vec(-1e3f64..1e3, 2..30)) {
        let n = values.len();
        let table = WellFeatureTable::new(vec!["x".into()], n, values.clone()).unwrap();
        let back = table.standardize().unstandardize();
        for (w, &orig) in values.iter().enumerate() {
            prop_assert!((back.row(w)[0] - orig).abs() <= 1e-12, "{} vs {orig}", back.row(w)[0]);
        }
    }

    #[test]
    fn encoded_rows_have_expected_support(seed in any::<u64>(), aux in 0usize..4) {
        let data = random_dataset(seed, 4, 6, aux);
        for c in 0..4 {
            for w in 0..6 {
                let row = data.encode(c, w).unwrap();
                let nonzero_aux = data.features.row(w).iter().filter(|&&x| x != 0.0).count();
                prop_assert_eq!(row.nnz(), 2 + nonzero_aux);
                prop_assert_eq!(row.indices[0], c);
                prop_assert_eq!(row.indices[1], 4 + w);
                prop_assert_eq!(row.dim, data.n_features());
            }
        }
    }

    #[test]
    fn recommendations_exclude_observed(seed in any::<u64>(), k in 1usize..12) {
        let data = random_dataset(seed, 5, 10, 2);
        let model = init_model(data.n_features(), &TrainConfig { seed, factors: 4, ..Default::default() }).unwrap();
        for u in 0..5 {
            let list = recommend_top_k(&model, &data, u, k, true).unwrap();
            let unobserved = 10 - data.interactions.observed(u).len();
            prop_assert_eq!(list.len(), k.min(unobserved));
            for w in list.wells() {
                prop_assert!(!data.interactions.contains(u, w));
            }
            for pair in list.entries.windows(2) {
                prop_assert!(pair[0].1 >= pair[1].1);
            }
        }
    }

    #[test]
    fn bias_shift_preserves_ranking(seed in any::<u64>(), shift in -50.0f64..50.0) {
        let data = random_dataset(seed, 3, 12, 1);
        let mut rng = seeded(seed);
        let model = random_model(&mut rng, data.n_features(), 3);
        let mut shifted = model.clone();
        shifted.w0 += shift;
        for u in 0..3 {
            let a = recommend_top_k(&model, &data, u, 5, true).unwrap();
            let b = recommend_top_k(&shifted, &data, u, 5, true).unwrap();
            prop_assert_eq!(a.wells().collect::<Vec<_>>(), b.wells().collect::<Vec<_>>());
        }
    }

    #[test]
    fn hit_rate_bounds_reciprocal_rank(seed in any::<u64>(), k in 1usize..15) {
        let data = small_planted(seed);
        let split = split_leave_one_out(&data.interactions, seed);
        let model = init_model(data.n_features(), &TrainConfig { seed, ..Default::default() }).unwrap();
        let rankings = rank_holdout(&model, &data, &split, k).unwrap();
        let hr = hit_rate_of(&rankings).unwrap();
        let mrr = mean_reciprocal_rank_of(&rankings).unwrap();
        prop_assert!((0.0..=1.0).contains(&hr));
        prop_assert!(mrr <= hr && mrr >= hr / k as f64 - 1e-12);
    }

    #[test]
    fn bulk_scoring_matches_pairwise(seed in any::<u64>(), aux in 0usize..4) {
        let data = random_dataset(seed, 3, 8, aux);
        let mut rng = seeded(seed ^ 1);
        let model = random_model(&mut rng, data.n_features(), 4);
        for u in 0..3 {
            let bulk = score_all_wells(&model, &data, u).unwrap();
            for (w, s) in bulk.into_iter().enumerate() {
                prop_assert_eq!(s.to_bits(), model.score_pair(&data, u, w).unwrap().to_bits());
            }
        }
    }

    #[test]
    fn unregularized_step_increases_difference(seed in any::<u64>()) {
        let data = small_planted(seed);
        let mut rng = seeded(seed);
        let mut model = random_model(&mut rng, data.n_features(), 5);
        let u = rng.random_range(0..data.n_companies());
        let i = data.interactions.observed(u)[0];
        let j = (0..data.n_wells()).find(|&w| !data.interactions.contains(u, w)).unwrap();
        let t = TripleSample { u, i, j };
        let before = bpr_step(&mut model, &data, &t, StepParams::new(1e-4, 0.0)).unwrap();
        let after = model.utility_diff(&data, u, i, j).unwrap();
        prop_assert!(after > before, "{before} -> {after}");
    }
}

#[test]
fn training_raises_probe_objective() {
    let data = small_planted(3);
    let (_, trace) = wellfm::train(
        &data,
        &TrainConfig {
            epochs: 30,
            seed: 3,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(trace.final_objective() > trace.initial_objective);
}
