use std::collections::BTreeMap;
use std::sync::Arc;

use bicausal_core::rational::{int, ratio};
use bicausal_core::solvers::{
    adapted_wasserstein, coupling_cost, solve_bicausal_dp, solve_bicausal_flat, solve_bicausal_oracle,
    solve_kantorovich, solve_transport, wasserstein, CostSpec,
};
use bicausal_core::{Exponent, PathMeasure, PathSpace, Rational};
use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use proptest::prelude::*;

/// Smallest total cost over integral flow tables with the given integer
/// margins. Transportation polytopes with integral margins have integral
/// vertices, so this is the exact optimum.
fn brute_integral(a: &[u32], b: &[u32], cost: &[Vec<Rational>]) -> Rational {
    fn go(
        i: usize,
        a: &[u32],
        cols: &mut Vec<u32>,
        cost: &[Vec<Rational>],
        acc: Rational,
        best: &mut Option<Rational>,
    ) {
        if i == a.len() {
            if cols.iter().all(|&c| c == 0) && best.as_ref().is_none_or(|b| acc < *b) {
                *best = Some(acc);
            }
            return;
        }
        fill(i, 0, a[i], a, cols, cost, acc, best);
    }
    #[allow(clippy::too_many_arguments)]
    fn fill(
        i: usize,
        j: usize,
        left: u32,
        a: &[u32],
        cols: &mut Vec<u32>,
        cost: &[Vec<Rational>],
        acc: Rational,
        best: &mut Option<Rational>,
    ) {
        if j + 1 == cols.len() {
            if left <= cols[j] {
                cols[j] -= left;
                go(i + 1, a, cols, cost, acc + &cost[i][j] * Rational::from_integer(left.into()), best);
                cols[j] += left;
            }
            return;
        }
        for f in 0..=left.min(cols[j]) {
            cols[j] -= f;
            let step = &cost[i][j] * Rational::from_integer(f.into());
            fill(i, j + 1, left - f, a, cols, cost, acc.clone() + step, best);
            cols[j] += f;
        }
    }
    let mut best = None;
    go(0, a, &mut b.to_vec(), cost, Rational::zero(), &mut best);
    best.expect("margins balance")
}

/// Exact transport value by integral enumeration of scaled margins.
fn brute_transport(a: &[Rational], b: &[Rational], cost: &[Vec<Rational>]) -> Rational {
    let den = a.iter().chain(b).fold(BigInt::from(1), |d, r| num_integer::Integer::lcm(&d, r.denom()));
    let scale = |r: &Rational| (r * Rational::from_integer(den.clone())).to_integer().to_u32().unwrap();
    let ai: Vec<u32> = a.iter().map(scale).collect();
    let bi: Vec<u32> = b.iter().map(scale).collect();
    brute_integral(&ai, &bi, cost) / Rational::from_integer(den)
}

const COORDS: [i64; 3] = [0, 1, 3];

fn space(steps: usize) -> Arc<PathSpace> {
    let s: &[&str] = &["0", "1", "3"];
    Arc::new(PathSpace::from_coordinates(&vec![s; steps]).unwrap())
}

fn measure(steps: usize, weights: &[u32]) -> PathMeasure {
    let s = space(steps);
    let total: u32 = weights.iter().sum();
    let masses = s
        .paths()
        .into_iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0)
        .map(|(p, &w)| (p, ratio(w as i64, total as i64)))
        .collect::<Vec<_>>();
    PathMeasure::new(s, masses).unwrap()
}

/// Four unit masses dropped on `len` paths; a fixed total keeps the
/// integral enumerations small.
fn weights(len: usize) -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0..len, 4).prop_map(move |units| {
        let mut w = vec![0u32; len];
        for u in units {
            w[u] += 1;
        }
        w
    })
}

fn l1(x: &[usize], y: &[usize]) -> Rational {
    x.iter().zip(y).map(|(&i, &j)| int((COORDS[i] - COORDS[j]).abs())).sum()
}

/// Two-step bicausal value by backward induction with brute-force
/// transports at every node.
fn bicausal_two_step(mu: &PathMeasure, nu: &PathMeasure) -> Rational {
    let split = |m: &PathMeasure| {
        let mut first: BTreeMap<usize, Rational> = BTreeMap::new();
        let mut next: BTreeMap<usize, BTreeMap<usize, Rational>> = BTreeMap::new();
        for (p, w) in m.masses() {
            *first.entry(p[0]).or_insert_with(Rational::zero) += w;
            *next.entry(p[0]).or_default().entry(p[1]).or_insert_with(Rational::zero) += w;
        }
        (first, next)
    };
    let (fa, na) = split(mu);
    let (fb, nb) = split(nu);
    let xs: Vec<usize> = fa.keys().cloned().collect();
    let ys: Vec<usize> = fb.keys().cloned().collect();
    let outer: Vec<Vec<Rational>> = xs
        .iter()
        .map(|&x| {
            ys.iter()
                .map(|&y| {
                    let (ka, kb) = (&na[&x], &nb[&y]);
                    let a: Vec<Rational> = ka.values().map(|w| w / &fa[&x]).collect();
                    let b: Vec<Rational> = kb.values().map(|w| w / &fb[&y]).collect();
                    let c: Vec<Vec<Rational>> =
                        ka.keys().map(|&i| kb.keys().map(|&j| int((COORDS[i] - COORDS[j]).abs())).collect()).collect();
                    int((COORDS[x] - COORDS[y]).abs()) + brute_transport(&a, &b, &c)
                })
                .collect()
        })
        .collect();
    let a: Vec<Rational> = fa.values().cloned().collect();
    let b: Vec<Rational> = fb.values().cloned().collect();
    brute_transport(&a, &b, &outer)
}

fn full_cost(mu: &PathMeasure, nu: &PathMeasure) -> (Vec<Rational>, Vec<Rational>, Vec<Vec<Rational>>) {
    let a: Vec<Rational> = mu.masses().values().cloned().collect();
    let b: Vec<Rational> = nu.masses().values().cloned().collect();
    let c = mu.masses().keys().map(|x| nu.masses().keys().map(|y| l1(x, y)).collect()).collect();
    (a, b, c)
}

fn p1() -> CostSpec {
    CostSpec::MetricPower(Exponent::integer(1))
}

#[test]
fn transport_matches_integral_enumeration_on_a_fixed_table() {
    let a = vec![ratio(1, 3), ratio(1, 2), ratio(1, 6)];
    let b = vec![ratio(1, 4), ratio(1, 4), ratio(1, 2)];
    let c = vec![vec![int(4), int(1), int(3)], vec![int(2), int(0), int(5)], vec![int(3), int(2), int(2)]];
    let sol = solve_transport(&a, &b, &c).unwrap();
    assert_eq!(sol.value, brute_transport(&a, &b, &c));
}

#[test]
fn one_step_bicausal_equals_classical() {
    let mu = measure(1, &[1, 2, 0]);
    let nu = measure(1, &[0, 1, 1]);
    let kp = solve_kantorovich(&mu, &nu, &p1()).unwrap().value;
    let dp = solve_bicausal_dp(&mu, &nu, &p1()).unwrap().value;
    assert_eq!(kp, dp);
    // mu = (1/3 at 0, 2/3 at 1), nu = (1/2 at 1, 1/2 at 3): monotone plan.
    assert_eq!(kp, ratio(1, 3) + ratio(1, 2) * int(2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transport_is_optimal(wa in weights(4), wb in weights(3), c in prop::collection::vec(0i64..6, 12)) {
        let a: Vec<Rational> = { let t: u32 = wa.iter().sum(); wa.iter().map(|&w| ratio(w as i64, t as i64)).collect() };
        let b: Vec<Rational> = { let t: u32 = wb.iter().sum(); wb.iter().map(|&w| ratio(w as i64, t as i64)).collect() };
        let cost: Vec<Vec<Rational>> = (0..4).map(|i| (0..3).map(|j| int(c[3 * i + j])).collect()).collect();
        let sol = solve_transport(&a, &b, &cost).unwrap();
        prop_assert_eq!(&sol.value, &brute_transport(&a, &b, &cost));
        let mut dual = Rational::zero();
        for (i, u) in sol.row_potentials.iter().enumerate() {
            dual += &a[i] * u;
            for (j, v) in sol.col_potentials.iter().enumerate() {
                prop_assert!(u + v <= cost[i][j]);
            }
        }
        for (j, v) in sol.col_potentials.iter().enumerate() {
            dual += &b[j] * v;
        }
        prop_assert_eq!(dual, sol.value);
    }

    #[test]
    fn larger_transports_carry_optimality_certificates(
        wa in prop::collection::vec(0u32..4, 7),
        wb in prop::collection::vec(0u32..4, 8),
        c in prop::collection::vec(0i64..4, 56),
    ) {
        prop_assume!(wa.iter().any(|&w| w > 0) && wb.iter().any(|&w| w > 0));
        // Equal totals make many ties, so degenerate pivots are common.
        let (ta, tb): (u32, u32) = (wa.iter().sum(), wb.iter().sum());
        let a: Vec<Rational> = wa.iter().map(|&w| ratio(w as i64, ta as i64)).collect();
        let b: Vec<Rational> = wb.iter().map(|&w| ratio(w as i64, tb as i64)).collect();
        let cost: Vec<Vec<Rational>> = (0..7).map(|i| (0..8).map(|j| int(c[8 * i + j])).collect()).collect();
        let sol = solve_transport(&a, &b, &cost).unwrap();
        let mut rows = vec![Rational::zero(); 7];
        let mut cols = vec![Rational::zero(); 8];
        let mut primal = Rational::zero();
        for (&(i, j), f) in &sol.flows {
            prop_assert!(*f > Rational::zero());
            rows[i] += f;
            cols[j] += f;
            primal += f * &cost[i][j];
            prop_assert_eq!(&sol.row_potentials[i] + &sol.col_potentials[j], cost[i][j].clone());
        }
        prop_assert_eq!(rows, a.clone());
        prop_assert_eq!(cols, b.clone());
        prop_assert_eq!(&primal, &sol.value);
        let mut dual = Rational::zero();
        for (i, u) in sol.row_potentials.iter().enumerate() {
            dual += &a[i] * u;
            for (j, v) in sol.col_potentials.iter().enumerate() {
                prop_assert!(u + v <= cost[i][j]);
            }
        }
        for (j, v) in sol.col_potentials.iter().enumerate() {
            dual += &b[j] * v;
        }
        prop_assert_eq!(dual, primal);
    }

    #[test]
    fn classical_value_matches_enumeration(wa in weights(9), wb in weights(9)) {
        let (mu, nu) = (measure(2, &wa), measure(2, &wb));
        let (a, b, c) = full_cost(&mu, &nu);
        let kp = solve_kantorovich(&mu, &nu, &p1()).unwrap();
        prop_assert_eq!(&kp.value, &brute_transport(&a, &b, &c));
        prop_assert_eq!(coupling_cost(&kp.optimizer, &p1()).unwrap(), kp.value);
    }

    #[test]
    fn bicausal_routes_agree_with_backward_enumeration(wa in weights(9), wb in weights(9)) {
        let (mu, nu) = (measure(2, &wa), measure(2, &wb));
        let expected = bicausal_two_step(&mu, &nu);
        let dp = solve_bicausal_dp(&mu, &nu, &p1()).unwrap();
        let oracle = solve_bicausal_oracle(&mu, &nu, &p1()).unwrap();
        prop_assert_eq!(&dp.value, &expected);
        prop_assert_eq!(&oracle.value, &expected);
        if let Ok(flat) = solve_bicausal_flat(&mu, &nu, &p1()) {
            prop_assert_eq!(&flat.value, &expected);
            prop_assert!(flat.optimizer.is_bicausal().holds());
        }
        prop_assert!(dp.optimizer.is_bicausal().holds());
        prop_assert!(oracle.optimizer.is_bicausal().holds());
        prop_assert_eq!(coupling_cost(&dp.optimizer, &p1()).unwrap(), dp.value);
        prop_assert_eq!(dp.optimizer.marginals(), (mu, nu));
    }

    #[test]
    fn classical_never_exceeds_bicausal(wa in weights(9), wb in weights(9)) {
        let (mu, nu) = (measure(2, &wa), measure(2, &wb));
        let kp = solve_kantorovich(&mu, &nu, &p1()).unwrap().value;
        let bc = solve_bicausal_dp(&mu, &nu, &p1()).unwrap().value;
        prop_assert!(kp <= bc);
    }

    #[test]
    fn adapted_distance_is_a_metric(wa in weights(9), wb in weights(9), wc in weights(9)) {
        let p = Exponent::integer(1);
        let (a, b, c) = (measure(2, &wa), measure(2, &wb), measure(2, &wc));
        let ab = adapted_wasserstein(&a, &b, &p).unwrap();
        prop_assert_eq!(&ab, &adapted_wasserstein(&b, &a, &p).unwrap());
        prop_assert_eq!(adapted_wasserstein(&a, &a, &p).unwrap(), int(0));
        let bc = adapted_wasserstein(&b, &c, &p).unwrap();
        let ac = adapted_wasserstein(&a, &c, &p).unwrap();
        prop_assert!(ac <= &ab + &bc);
        prop_assert!(wasserstein(&a, &b, &p).unwrap() <= ab);
    }

    #[test]
    fn values_ignore_labels_and_point_order(wa in weights(9), wb in weights(9)) {
        let (mu, nu) = (measure(2, &wa), measure(2, &wb));
        let before = solve_bicausal_dp(&mu, &nu, &p1()).unwrap().value;
        // Reverse every alphabet and rename its points.
        let s: &[&str] = &["3", "1", "0"];
        let rev = Arc::new(PathSpace::from_coordinates(&[s, s]).unwrap());
        let rev = Arc::new(rev.relabel(|t, l| format!("t{t}-{l}")).unwrap());
        let flip = |m: &PathMeasure| {
            PathMeasure::new(rev.clone(), m.masses().iter().map(|(p, w)| (p.iter().map(|i| 2 - i).collect(), w.clone())))
                .unwrap()
        };
        let after = solve_bicausal_dp(&flip(&mu), &flip(&nu), &p1()).unwrap().value;
        prop_assert_eq!(before, after);
    }
}
