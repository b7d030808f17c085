mod common;

use bicforge::ca::{
    filter_solution, resolve_conflicts_fair, resolve_conflicts_uniform, resolve_conflicts_xos, round_tentative,
    solve_ca_lp, CaAlgorithm, Resolver,
};
use bicforge::model::{generate, Feasibility, ItemSet, MechanismInstance, Valuation};
use bicforge::rng::stream;
use bicforge::verify::optimal_welfare;
use common::*;
use proptest::prelude::*;
use rand::Rng;

fn xos_instance(seed: u64, max_items: usize) -> MechanismInstance {
    let mut r = rng(seed);
    let n = r.gen_range(1..=3);
    let m = r.gen_range(1..=max_items);
    let l = r.gen_range(1..=3);
    let valuations = (0..n)
        .map(|_| {
            (0..l)
                .map(|_| {
                    let clauses = r.gen_range(1..=3);
                    Valuation::Set(generate::xos(&mut r, m, clauses, 4))
                })
                .collect()
        })
        .collect();
    let priors = (0..n).map(|_| dyadic_prior(&mut r, l, 8)).collect();
    MechanismInstance::build(vec![], Some(0), Feasibility::Partition { items: m }, valuations, priors).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lp_bounds_and_sparsity(seed: u64, epsilon in prop_oneof![Just(0.05), Just(0.1), Just(0.3)]) {
        let instance = xos_instance(seed, 5);
        let lp = solve_ca_lp(&instance).unwrap();
        let opt = optimal_welfare(&instance).unwrap();
        prop_assert!(lp.objective >= opt - 1e-7);
        prop_assert!(lp.worst_violation(&instance) < 1e-9);
        let n = instance.agents();
        let m = instance.items().unwrap();
        prop_assert!(lp.nonzeros() <= n * m * instance.types());
        let filtered = filter_solution(&lp, &instance, epsilon).unwrap();
        prop_assert!(filtered.value(&instance) >= (1.0 - epsilon) * lp.objective - 1e-9);
    }

    #[test]
    fn resolution_yields_a_partition_of_claims(seed: u64) {
        let instance = xos_instance(seed, 6);
        let m = instance.items().unwrap();
        let lp = solve_ca_lp(&instance).unwrap();
        let claims = lp.claim_probabilities(&instance);
        for k in 0..50 {
            let mut g = stream(seed, &[k]);
            let reports = instance.sample_profile(&mut g).0;
            let tentative = round_tentative(&lp, &reports, &mut g);
            let outputs = [
                resolve_conflicts_fair(&tentative, &claims, m, &mut g),
                resolve_conflicts_uniform(&tentative, m, &mut g),
                resolve_conflicts_xos(&tentative, &instance, &reports).unwrap(),
            ];
            let claimed = tentative.iter().fold(ItemSet::EMPTY, |a, &s| a.union(s));
            for out in &outputs {
                let mut union = ItemSet::EMPTY;
                for (i, &s) in out.iter().enumerate() {
                    prop_assert!(s.is_subset_of(tentative[i]));
                    prop_assert!(!s.intersects(union));
                    union = union.union(s);
                }
                prop_assert_eq!(union, claimed);
            }
        }
    }

    #[test]
    fn highest_support_losses_go_to_heavier_claims(seed: u64) {
        let instance = xos_instance(seed, 6);
        let lp = solve_ca_lp(&instance).unwrap();
        for k in 0..50 {
            let mut g = stream(seed, &[k]);
            let reports = instance.sample_profile(&mut g).0;
            let tentative = round_tentative(&lp, &reports, &mut g);
            let out = resolve_conflicts_xos(&tentative, &instance, &reports).unwrap();
            let support: Vec<Vec<f64>> = tentative
                .iter()
                .enumerate()
                .map(|(i, &s)| instance.valuation(i, reports[i]).as_set().unwrap().supporting_vector(s).unwrap())
                .collect();
            for i in 0..tentative.len() {
                let won: f64 = out[i].iter().map(|j| support[i][j]).sum();
                let lost_items: Vec<usize> = tentative[i].iter().filter(|&j| !out[i].contains(j)).collect();
                let lost: f64 = lost_items.iter().map(|&j| support[i][j]).sum();
                let total: f64 = tentative[i].iter().map(|j| support[i][j]).sum();
                prop_assert!((won + lost - total).abs() < 1e-9);
                for j in lost_items {
                    let winner = (0..out.len()).find(|&w| out[w].contains(j)).unwrap();
                    prop_assert!(support[winner][j] > support[i][j] || (support[winner][j] == support[i][j] && winner < i));
                }
            }
        }
    }
}

#[test]
fn unknown_resolver_is_rejected() {
    assert!(Resolver::parse("first-price").is_err());
    assert_eq!(Resolver::parse("xos").unwrap(), Resolver::Fair);
}

#[test]
fn budget_additive_instances_reject_the_support_resolver() {
    let mut r = rng(1);
    let instance = MechanismInstance::build(
        vec![],
        Some(0),
        Feasibility::Partition { items: 3 },
        vec![vec![Valuation::Set(generate::budget_additive(&mut r, 3, 4))]; 2],
        vec![vec![1.0]; 2],
    )
    .unwrap();
    assert!(CaAlgorithm::new(&instance, 0.1, Resolver::HighestSupport).is_err());
    assert!(CaAlgorithm::new(&instance, 0.1, Resolver::Uniform).is_ok());
}
