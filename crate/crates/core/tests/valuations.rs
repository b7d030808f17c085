use bicforge::model::{generate, ItemSet, SetValuation};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn valuation(kind: u8, seed: u64, items: usize) -> SetValuation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind % 4 {
        0 => generate::additive(&mut rng, items, 5),
        1 => generate::unit_demand(&mut rng, items, 5),
        2 => generate::budget_additive(&mut rng, items, 5),
        _ => generate::xos(&mut rng, items, 3, 5),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_and_monotone(kind in 0u8..4, seed: u64, items in 1usize..=8) {
        let v = valuation(kind, seed, items);
        prop_assert_eq!(v.value(ItemSet::EMPTY), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for _ in 0..1000 {
            let big = ItemSet(rng.gen::<u32>() & ItemSet::full(items).0);
            let small = ItemSet(big.0 & rng.gen::<u32>());
            prop_assert!(v.value(small) <= v.value(big));
        }
    }

    #[test]
    fn subadditive_on_disjoint_pairs(kind in 2u8..4, seed: u64, items in 1usize..=8) {
        let v = valuation(kind, seed, items);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd15);
        for _ in 0..1000 {
            let s = ItemSet(rng.gen::<u32>() & ItemSet::full(items).0);
            let t = ItemSet(rng.gen::<u32>() & ItemSet::full(items).0 & !s.0);
            prop_assert!(v.value(s.union(t)) <= v.value(s) + v.value(t) + 1e-12);
        }
    }

    #[test]
    fn supporting_vector_is_a_tight_clause(kind in prop_oneof![Just(0u8), Just(1u8), Just(3u8)], seed: u64, items in 1usize..=8, mask: u32) {
        let v = valuation(kind, seed, items);
        let set = ItemSet(mask & ItemSet::full(items).0);
        let support = v.supporting_vector(set).unwrap();
        let total: f64 = support.iter().sum();
        prop_assert!((total - v.value(set)).abs() < 1e-12);
        for j in 0..items {
            if !set.contains(j) {
                prop_assert_eq!(support[j], 0.0);
            }
        }
        let matches_clause = v.clauses().unwrap().iter().any(|c| {
            set.iter().all(|j| c[j] == support[j] || (kind == 1 && support[j] == 0.0))
        });
        prop_assert!(matches_clause);
    }
}

#[test]
fn budget_additive_is_not_xos() {
    let v = SetValuation::BudgetAdditive {
        weights: vec![1.0, 1.0],
        budget: 1.5,
    };
    assert!(!v.is_xos());
    assert!(v.supporting_vector(ItemSet::full(2)).is_err());
}
