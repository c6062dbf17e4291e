use std::collections::BTreeSet;

use lime_core::data::{split, LabeledCorpus};
use lime_core::lime::{fidelity, k_lasso, kernel_weight, KernelConfig, SurrogateDataset};
use lime_core::seed::derive_seed;
use lime_core::textrepr::{cosine_distance, sample_perturbations, Document, InterpretableVector, PerturbedSample};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = InterpretableVector> {
    (1usize..40).prop_flat_map(|dim| {
        proptest::collection::btree_set(0..dim, 1..=dim.min(15)).prop_map(move |s| InterpretableVector::new(dim, s))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn samples_stay_inside_the_instance(x in instance(), n in 1usize..300, seed in any::<u64>()) {
        let samples = sample_perturbations(&x, n, seed).unwrap();
        prop_assert_eq!(samples.len(), n);
        prop_assert_eq!(&samples[0], &x);
        for s in &samples {
            prop_assert!(s.is_subset_of(&x));
            prop_assert!(s.nnz() >= 1);
            prop_assert_eq!(s.dim(), x.dim());
        }
        prop_assert_eq!(samples, sample_perturbations(&x, n, seed).unwrap());
    }

    #[test]
    fn cosine_distance_is_a_bounded_symmetric_dissimilarity(
        a in proptest::collection::vec(0u8..2, 12),
        b in proptest::collection::vec(0u8..2, 12),
    ) {
        let (a, b) = (InterpretableVector::from_bits(&a), InterpretableVector::from_bits(&b));
        match cosine_distance(&a, &b) {
            Ok(d) => {
                prop_assert!((0.0..=1.0).contains(&d));
                prop_assert_eq!(d, cosine_distance(&b, &a).unwrap());
                if a == b {
                    prop_assert!(d.abs() < 1e-15);
                }
            }
            Err(_) => prop_assert!(a.nnz() == 0 && b.nnz() == 0),
        }
    }

    #[test]
    fn kernel_decreases_with_distance(d1 in 0.0f64..1.0, d2 in 0.0f64..1.0, sigma in 0.05f64..2.0) {
        let cfg = KernelConfig::new(sigma).unwrap();
        let (w1, w2) = (kernel_weight(d1, &cfg).unwrap(), kernel_weight(d2, &cfg).unwrap());
        prop_assert!(w1 > 0.0 && w1 <= 1.0);
        if d1 < d2 {
            prop_assert!(w1 >= w2);
        }
        prop_assert_eq!(kernel_weight(0.0, &cfg).unwrap(), 1.0);
    }

    #[test]
    fn k_lasso_is_sparse_and_inside_the_instance(
        x in instance(),
        k in 1usize..12,
        seed in any::<u64>(),
        coef in proptest::collection::vec(-2.0f64..2.0, 40),
    ) {
        let cfg = KernelConfig::default();
        let rows: Vec<PerturbedSample> = sample_perturbations(&x, 200, seed)
            .unwrap()
            .into_iter()
            .map(|z| {
                let y: f64 = z.support().iter().map(|&j| coef[j]).sum::<f64>().tanh() * 0.5 + 0.5;
                let d = cosine_distance(&x, &z).unwrap();
                PerturbedSample { weight: kernel_weight(d, &cfg).unwrap(), distance: d, label: y, zprime: z }
            })
            .collect();
        let z = SurrogateDataset { xprime: x.clone(), rows };
        let fit = k_lasso(&z, k).unwrap();
        prop_assert!(fit.features.len() <= k);
        prop_assert_eq!(fit.features.len(), fit.weights.len());
        let distinct: BTreeSet<usize> = fit.features.iter().copied().collect();
        prop_assert_eq!(distinct.len(), fit.features.len());
        prop_assert!(fit.features.iter().all(|&j| x.contains(j)));
        prop_assert!(fit.weights.iter().chain([&fit.intercept]).all(|w| w.is_finite()));
        prop_assert!(fidelity(&z, &fit) <= 1.0);
    }

    #[test]
    fn split_partitions_and_stratifies(n0 in 2usize..60, n1 in 2usize..60, frac in 0.1f64..0.9, seed in any::<u64>()) {
        let docs: Vec<Document> = (0..n0 + n1)
            .map(|i| Document::new(format!("d{i}"), "w", Some((i >= n0) as u8)))
            .collect();
        let corpus = LabeledCorpus::new("c", docs);
        let (train, test) = split(&corpus, frac, seed).unwrap();
        prop_assert_eq!(train.len() + test.len(), n0 + n1);
        let ids: BTreeSet<&str> = train.docs.iter().chain(&test.docs).map(|d| d.id.as_str()).collect();
        prop_assert_eq!(ids.len(), n0 + n1);
        let [t0, t1] = train.class_counts();
        prop_assert_eq!(t0, (frac * n0 as f64).round() as usize);
        prop_assert_eq!(t1, (frac * n1 as f64).round() as usize);
    }

    #[test]
    fn seed_streams_differ(master in any::<u64>(), a in 0u64..1000, b in 0u64..1000) {
        prop_assume!(a != b);
        prop_assert_ne!(derive_seed(master, a), derive_seed(master, b));
    }
}
