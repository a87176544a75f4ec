use std::collections::BTreeMap;

use bicausal_core::gen::{self, random_micro_instance, random_tree, TreeShape};
use bicausal_core::lifting::{
    lift_biadapted, lift_static, microatomize, plan_for_measure, project_path, projection_bicausal_check, MapDirection,
    DEFAULT_BUDGET,
};
use bicausal_core::rational::ratio;
use bicausal_core::{Coupling, Rational};
use num_traits::Zero;
use proptest::prelude::*;

fn shape() -> impl Strategy<Value = TreeShape> {
    (1usize..=3, 1usize..=3, 0usize..=1, 3u64..=12).prop_map(|(steps, branching, extra, denominator)| TreeShape {
        steps,
        branching,
        denominator: denominator.max(branching as u64),
        points: (branching + extra).min(4),
    })
}

type MicroPair = (Vec<(usize, usize)>, Vec<(usize, usize)>);

/// Projection recomputed from the micro-paths directly.
fn project_by_hand(pairs: &BTreeMap<MicroPair, Rational>) -> BTreeMap<(Vec<usize>, Vec<usize>), Rational> {
    let mut out = BTreeMap::new();
    for ((x, y), m) in pairs {
        let key = (x.iter().map(|p| p.0).collect(), y.iter().map(|p| p.0).collect());
        *out.entry(key).or_insert_with(Rational::zero) += m;
    }
    out
}

#[test]
fn micro_atoms_have_equal_mass() {
    let inst = gen::fixture("f1").unwrap();
    let plan = plan_for_measure(&inst.mu, DEFAULT_BUDGET).unwrap();
    let micro = microatomize(&inst.mu, &plan).unwrap();
    let paths = micro.micro_paths();
    assert_eq!(micro.atom_mass() * Rational::from_integer(paths.len().into()), ratio(1, 1));
    let mut mass: BTreeMap<Vec<usize>, Rational> = BTreeMap::new();
    for mp in &paths {
        *mass.entry(project_path(mp)).or_insert_with(Rational::zero) += micro.atom_mass();
    }
    assert_eq!(&mass, inst.mu.masses());
}

#[test]
fn static_lift_of_a_non_bicausal_coupling_projects_back() {
    let inst = gen::fixture("aw").unwrap();
    // Y's first step reveals X's second step.
    let pi = Coupling::new(
        inst.mu.space().clone(),
        inst.nu.space().clone(),
        [((vec![0, 0], vec![0, 0]), ratio(1, 2)), ((vec![0, 1], vec![1, 1]), ratio(1, 2))],
    )
    .unwrap();
    assert!(!pi.is_bicausal().holds());
    assert!(lift_biadapted(&pi, DEFAULT_BUDGET).is_err());
    let lift = lift_static(&pi, DEFAULT_BUDGET).unwrap();
    assert_eq!(lift.project().unwrap(), pi);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn biadapted_lift_projects_back(seed in any::<u64>(), shape in shape()) {
        let pi = random_tree(seed, shape).unwrap().pi.unwrap();
        let lift = lift_biadapted(&pi, DEFAULT_BUDGET).unwrap();
        prop_assert!(lift.bijection.verify_adapted(MapDirection::Forward).is_none());
        prop_assert!(lift.bijection.verify_adapted(MapDirection::Inverse).is_none());
        prop_assert!(lift.lifted.has_uniform_marginals());
        prop_assert_eq!(&lift.lifted.project().unwrap(), &pi);
        prop_assert_eq!(&project_by_hand(lift.lifted.masses()), pi.masses());
        // The bijection pairs up every micro-path exactly once.
        let forward = lift.bijection.map(MapDirection::Forward);
        prop_assert_eq!(forward.len(), lift.bijection.left().len());
        prop_assert_eq!(forward.len(), lift.bijection.right().len());
        for (x, y) in forward {
            prop_assert_eq!(lift.bijection.apply_inverse(y), Some(x));
        }
    }

    #[test]
    fn static_lift_projects_back(seed in any::<u64>(), shape in shape().prop_filter("small", |s| s.steps <= 2)) {
        let inst = random_tree(seed, shape).unwrap();
        let product = Coupling::product(&inst.mu, &inst.nu).unwrap();
        for pi in [inst.pi.unwrap(), product] {
            let lift = lift_static(&pi, DEFAULT_BUDGET).unwrap();
            prop_assert!(lift.lift.lifted.has_uniform_marginals());
            prop_assert_eq!(lift.project().unwrap(), pi);
        }
    }

    #[test]
    fn swapped_coupling_lifts_too(seed in any::<u64>(), shape in shape()) {
        let pi = random_tree(seed, shape).unwrap().pi.unwrap();
        let swapped = pi.swap();
        prop_assert!(swapped.is_bicausal().holds());
        let lift = lift_biadapted(&swapped, DEFAULT_BUDGET).unwrap();
        prop_assert_eq!(lift.lifted.project().unwrap(), swapped);
    }

    #[test]
    fn bicausal_micro_couplings_project_to_bicausal(seed in any::<u64>(), shape in shape()) {
        let (_, lifted) = random_micro_instance(seed, shape).unwrap();
        let check = projection_bicausal_check(&lifted).unwrap();
        prop_assert!(check.micro.holds());
        prop_assert!(check.projected.holds());
    }
}
