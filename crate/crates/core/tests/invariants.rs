//! Property tests for the structural invariants: partition disjoint cover
//! and skew laws, denoise conservation, projection geometry, and the model
//! vector-space laws.

use frs_core::data::{partition_with_manifest, LabeledDataset, PartitionSpec};
use frs_core::nn::{mlp_classifier_spec, ModelParams};
use frs_core::recovery::{denoise, GeneratedBatch};
use frs_core::seed::rng_from;
use frs_core::unlearn::projection;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

/// Random dataset with uneven class counts, each class at least as large as
/// the largest client count we generate.
fn arb_dataset() -> impl Strategy<Value = LabeledDataset> {
    (2usize..6, 1usize..5, 0u64..1000).prop_map(|(classes, dim, seed)| {
        let mut rng = rng_from(seed);
        let counts: Vec<usize> = (0..classes).map(|_| rng.gen_range(8..40)).collect();
        let total: usize = counts.iter().sum();
        let features = Array2::from_shape_fn((total, dim), |_| rng.gen::<f64>());
        let mut labels = Vec::with_capacity(total);
        for (class, &n) in counts.iter().enumerate() {
            labels.extend(std::iter::repeat_n(class, n));
        }
        LabeledDataset::new(features, labels, classes).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn partition_laws_hold_on_random_inputs(
        dataset in arb_dataset(),
        clients in 2usize..6,
        alpha in 0.05f64..0.95,
        seed in 0u64..10_000,
    ) {
        let spec = PartitionSpec {
            client_count: clients,
            skewed_class: seed as usize % dataset.class_count(),
            alpha,
            seed,
        };
        let result = partition_with_manifest(&dataset, &spec);
        let (shards, manifest) = match result {
            Ok(pair) => pair,
            // Extreme alphas may legitimately make equal totals impossible.
            Err(frs_core::Error::Partition(_)) => return Ok(()),
            Err(other) => return Err(TestCaseError::fail(format!("unexpected error: {other}"))),
        };

        // Disjoint cover: every sample in exactly one shard.
        let mut seen = vec![0usize; dataset.len()];
        for client in &manifest.clients {
            for rows in &client.per_class_indices {
                for &row in rows {
                    seen[row] += 1;
                }
            }
        }
        prop_assert!(seen.iter().all(|&s| s == 1));

        // Skew law: exact hoard for client 0, remaining within 1 pairwise.
        let n_skew = dataset.class_counts()[spec.skewed_class];
        let hoard = (alpha * n_skew as f64).floor() as usize;
        prop_assert_eq!(shards[0].class_count_of(spec.skewed_class), hoard);
        let rest: Vec<usize> = shards[1..]
            .iter()
            .map(|s| s.class_count_of(spec.skewed_class))
            .collect();
        let max = rest.iter().max().unwrap();
        let min = rest.iter().min().unwrap();
        prop_assert!(max - min <= 1, "remaining skew counts {:?}", rest);

        // Size law: totals within client_count of each other.
        let totals: Vec<usize> = shards.iter().map(|s| s.len()).collect();
        let max = totals.iter().max().unwrap();
        let min = totals.iter().min().unwrap();
        prop_assert!(max - min <= clients, "totals {:?}", totals);

        // Determinism.
        let (again, _) = partition_with_manifest(&dataset, &spec).unwrap();
        for (a, b) in shards.iter().zip(&again) {
            prop_assert_eq!(&a.data, &b.data);
        }
    }

    #[test]
    fn denoise_conservation_on_random_batches(
        n_orig in 4usize..12,
        g in 4usize..24,
        dim in 1usize..4,
        seed in 0u64..10_000,
    ) {
        let mut rng = rng_from(seed);
        let k = rng.gen_range(1..4usize);
        if n_orig + g < k + 2 {
            return Ok(());
        }
        let target = rng.gen_range(0..=g);
        let originals = Array2::from_shape_fn((n_orig, dim), |_| rng.gen::<f64>());
        let samples = Array2::from_shape_fn((g, dim), |_| rng.gen::<f64>());
        let batch = GeneratedBatch {
            latents: Array2::zeros((g, 1)),
            source_index: vec![0; g],
            neighbor_index: vec![0; g],
            rand_t: vec![0.0; g],
            samples,
        };
        let (kept, report) = denoise(&batch, originals.view(), k, target).unwrap();
        prop_assert_eq!(kept.nrows(), target);
        let removed = report.entries.iter().filter(|e| e.removed).count();
        prop_assert_eq!(removed + target, g);
        prop_assert!(report.entries.iter().all(|e| e.phi > 0.0 && e.phi <= 1.0));
        prop_assert!(report.entries.iter().all(|e| e.psi > 0.0));
    }

    #[test]
    fn projection_satisfies_the_norm_identity(
        seed in 0u64..1_000,
        radius in 0.0f64..3.0,
    ) {
        let specs = mlp_classifier_spec(4, 3, 2);
        let p = ModelParams::init(&specs, 0.0, &mut rng_from(seed)).unwrap();
        let r = ModelParams::init(&specs, 0.0, &mut rng_from(seed + 7)).unwrap();
        let out = projection(&p, &r, radius).unwrap();
        let expected = radius.min(p.l2_distance(&r).unwrap());
        prop_assert!((out.l2_distance(&r).unwrap() - expected).abs() <= 1e-12);

        // Idempotence.
        let twice = projection(&out, &r, radius).unwrap();
        prop_assert!(out.bits_eq(&twice));
    }

    #[test]
    fn model_algebra_forms_a_vector_space(
        seed in 0u64..1_000,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let specs = mlp_classifier_spec(5, 4, 3);
        let m = ModelParams::init(&specs, 0.0, &mut rng_from(seed)).unwrap();
        prop_assert!(m.scale(1.0).bits_eq(&m));
        let lhs = m.scale(a).add(&m.scale(b)).unwrap();
        let rhs = m.scale(a + b);
        for (x, y) in lhs.param_iter().zip(rhs.param_iter()) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}
