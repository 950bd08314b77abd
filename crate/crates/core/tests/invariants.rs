//! Property tests for the numeric kernels.

use std::collections::BTreeMap;

use proptest::prelude::*;
use tabrel_core::colsem::profile_distance;
use tabrel_core::embed::{cosine, EmbeddingStore, VectorKind};

fn gamma_map() -> impl Strategy<Value = BTreeMap<String, f64>> {
    proptest::collection::btree_map("[a-e]", 0.0f64..10.0, 0..6)
}

proptest! {
    #[test]
    fn profile_distance_is_a_metric(a in gamma_map(), b in gamma_map(), c in gamma_map()) {
        let dab = profile_distance(&a, &b);
        let dba = profile_distance(&b, &a);
        let dac = profile_distance(&a, &c);
        let dcb = profile_distance(&c, &b);
        prop_assert!(dab >= 0.0);
        prop_assert!((dab - dba).abs() < 1e-12);
        prop_assert_eq!(profile_distance(&a, &a), 0.0);
        prop_assert!(dab <= dac + dcb + 1e-9);
    }

    #[test]
    fn cosine_is_symmetric_and_scale_invariant(
        u in proptest::collection::vec(-100.0f64..100.0, 4),
        v in proptest::collection::vec(-100.0f64..100.0, 4),
        alpha in 0.001f64..1000.0,
    ) {
        let ab = cosine(&u, &v).unwrap();
        let ba = cosine(&v, &u).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&ab));
        let scaled: Vec<f64> = u.iter().map(|x| alpha * x).collect();
        let s = cosine(&scaled, &v).unwrap();
        prop_assert!((ab - s).abs() < 1e-9);
    }

    #[test]
    fn avg_embedding_is_permutation_invariant(
        keys in proptest::collection::vec("[a-h]", 1..8),
        shift in 0usize..8,
    ) {
        let store = EmbeddingStore::hashed(8, 3);
        let direct = store.avg_embedding(&keys, VectorKind::Word);
        let mut rotated = keys.clone();
        rotated.rotate_left(shift % keys.len().max(1));
        let shifted = store.avg_embedding(&rotated, VectorKind::Word);
        match (direct.vector, shifted.vector) {
            (Some(a), Some(b)) => {
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
            (a, b) => prop_assert_eq!(a, b),
        }
    }
}
