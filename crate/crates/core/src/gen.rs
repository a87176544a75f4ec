//! Seeded instance generators and frozen fixtures.
//!
//! Every generator draws from a ChaCha8 stream seeded with a 64-bit seed, so
//! equal seeds give identical instances on every platform.

use std::collections::BTreeSet;
use std::sync::Arc;

use num_bigint::BigInt;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coupling::{northwest_corner, Coupling, StagePlan};
use crate::error::{Error, Result};
use crate::io::format_coordinate;
use crate::lifting::{microatomize, plan_for_measure, LiftedCoupling, RefinementPlan, DEFAULT_BUDGET};
use crate::measure::{PathMeasure, StepLaw};
use crate::rational::{ratio, Exponent, Rational};
use crate::solvers::{solve_bicausal_dp, CostSpec};
use crate::space::{Path, PathSpace, Point, Step};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shape of a random tree measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeShape {
    pub steps: usize,
    /// Children of every node.
    pub branching: usize,
    /// Every conditional mass is `k / denominator`.
    pub denominator: u64,
    /// Alphabet size per step, at least `branching`.
    pub points: usize,
}

impl TreeShape {
    pub fn new(steps: usize, branching: usize, denominator: u64) -> Self {
        TreeShape { steps, branching, denominator, points: branching }
    }

    fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.branching == 0 {
            return Err(Error::InvalidArgument("steps and branching must be positive".into()));
        }
        if self.points < self.branching || self.points > 9 {
            return Err(Error::InvalidArgument(format!("points per step must lie in {}..=9", self.branching)));
        }
        if self.denominator < self.branching as u64 {
            return Err(Error::InvalidArgument(format!(
                "denominator {} cannot split into {} positive masses",
                self.denominator, self.branching
            )));
        }
        Ok(())
    }
}

/// Space of 1-D points drawn from `{0, 1/8, ..., 1}`, labelled by their
/// decimal coordinates.
fn random_space(rng: &mut ChaCha8Rng, steps: usize, points: usize) -> Result<PathSpace> {
    let grid: Vec<Rational> = (0..=8).map(|k| ratio(k, 8)).collect();
    let steps = (0..steps)
        .map(|_| {
            let mut chosen: Vec<Rational> = grid.choose_multiple(rng, points).cloned().collect();
            chosen.sort();
            Step::new(chosen.into_iter().map(|c| Point::new(format_coordinate(&c), vec![c])).collect())
        })
        .collect();
    PathSpace::new(steps)
}

/// A uniformly drawn composition of `total` into `parts` positive integers.
fn composition(rng: &mut ChaCha8Rng, total: u64, parts: usize) -> Vec<u64> {
    let cuts: Vec<u64> = {
        let pool: Vec<u64> = (1..total).collect();
        let mut c: Vec<u64> = pool.choose_multiple(rng, parts - 1).copied().collect();
        c.sort_unstable();
        c
    };
    let mut out = Vec::with_capacity(parts);
    let mut last = 0;
    for c in cuts.into_iter().chain([total]) {
        out.push(c - last);
        last = c;
    }
    out
}

/// Random tree measure: every node has `branching` children drawn from the
/// step's alphabet, with conditional masses `k / denominator`.
pub fn random_tree_measure(rng: &mut ChaCha8Rng, shape: TreeShape) -> Result<PathMeasure> {
    shape.validate()?;
    let space = Arc::new(random_space(rng, shape.steps, shape.points)?);
    let mut frontier: Vec<(Path, Rational)> = vec![(Vec::new(), Rational::from_integer(1.into()))];
    for t in 0..shape.steps {
        let mut next = Vec::with_capacity(frontier.len() * shape.branching);
        for (h, m) in frontier {
            let mut children: Vec<usize> =
                (0..space.alphabet_len(t)).collect::<Vec<_>>().choose_multiple(rng, shape.branching).copied().collect();
            children.sort_unstable();
            let masses = composition(rng, shape.denominator, shape.branching);
            for (x, k) in children.into_iter().zip(masses) {
                let mut p = h.clone();
                p.push(x);
                next.push((p, &m * Rational::new(BigInt::from(k), BigInt::from(shape.denominator))));
            }
        }
        frontier = next;
    }
    PathMeasure::new(space, frontier)
}

fn shuffled_law(rng: &mut ChaCha8Rng, law: &StepLaw) -> Vec<(usize, Rational)> {
    let mut v: Vec<(usize, Rational)> = law.iter().map(|(i, m)| (*i, m.clone())).collect();
    v.shuffle(rng);
    v
}

/// Average of two northwest-corner plans under random orders: a random
/// coupling of two laws, usually off the vertices.
pub fn random_stage_plan(rng: &mut ChaCha8Rng, a: &StepLaw, b: &StepLaw) -> StagePlan {
    let half = ratio(1, 2);
    let mut plan = StagePlan::new();
    for _ in 0..2 {
        let rows = shuffled_law(rng, a);
        let cols = shuffled_law(rng, b);
        for (k, m) in northwest_corner(&rows, &cols) {
            *plan.entry(k).or_insert_with(|| ratio(0, 1)) += m * &half;
        }
    }
    plan
}

/// A bicausal coupling glued from random stagewise couplings of the
/// conditional laws.
pub fn random_bicausal(rng: &mut ChaCha8Rng, mu: &PathMeasure, nu: &PathMeasure) -> Result<Coupling> {
    Coupling::from_stages(mu, nu, |xh, yh| {
        let a = mu.conditional(xh).expect("positive history");
        let b = nu.conditional(yh).expect("positive history");
        Ok(random_stage_plan(rng, &a, &b))
    })
}

/// `(mu, nu, pi)` from one seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub mu: PathMeasure,
    pub nu: PathMeasure,
    pub pi: Option<Coupling>,
}

pub fn random_tree(seed: u64, shape: TreeShape) -> Result<Instance> {
    let mut r = rng(seed);
    let mu = random_tree_measure(&mut r, shape)?;
    let nu = random_tree_measure(&mut r, shape)?;
    let pi = random_bicausal(&mut r, &mu, &nu)?;
    Ok(Instance { mu, nu, pi: Some(pi) })
}

/// Mixed shapes with `N <= max_steps`, at most `max_points` points per step
/// and denominators at most `max_den`.
pub fn random_small(seed: u64, max_steps: usize, max_points: usize, max_den: u64) -> Result<Instance> {
    let mut r = rng(seed);
    let steps = r.gen_range(1..=max_steps);
    let draw = |r: &mut ChaCha8Rng| {
        let branching = r.gen_range(1..=max_points);
        let points = r.gen_range(branching..=max_points);
        let denominator = r.gen_range(branching as u64..=max_den);
        TreeShape { steps, branching, denominator, points }
    };
    let sa = draw(&mut r);
    let mu = random_tree_measure(&mut r, sa)?;
    let sb = draw(&mut r);
    let nu = random_tree_measure(&mut r, sb)?;
    let pi = random_bicausal(&mut r, &mu, &nu)?;
    Ok(Instance { mu, nu, pi: Some(pi) })
}

fn line(coords: &[Rational]) -> Step {
    Step::new(coords.iter().map(|c| Point::new(format_coordinate(c), vec![c.clone()])).collect())
}

/// Two-step pair where the first step of `mu` carries no information about
/// its second step while `nu` reveals its second step at the first one, so
/// bicausal couplings pay for the information `W` can exploit.
pub fn information_sensitive(seed: u64) -> Result<Instance> {
    let mut r = rng(seed);
    let grid: Vec<Rational> = (-2..=2).map(|k| ratio(k, 2)).collect();
    let pick = |r: &mut ChaCha8Rng, n: usize| {
        let mut v: Vec<Rational> = grid.choose_multiple(r, n).cloned().collect();
        v.sort();
        v
    };
    let n1 = r.gen_range(2..=3);
    let n2 = r.gen_range(2..=3);
    let x1 = pick(&mut r, 1);
    let x2 = pick(&mut r, n2);
    let y1 = pick(&mut r, n1);
    let y2 = pick(&mut r, n2);
    let den = r.gen_range((n2.max(n1) as u64)..=12);

    let xs = Arc::new(PathSpace::new(vec![line(&x1), line(&x2)])?);
    let ys = Arc::new(PathSpace::new(vec![line(&y1), line(&y2)])?);
    let weights = |r: &mut ChaCha8Rng, n: usize| -> Vec<Rational> {
        composition(r, den, n).into_iter().map(|k| Rational::new(BigInt::from(k), BigInt::from(den))).collect()
    };
    let wx = weights(&mut r, n2);
    let mu = PathMeasure::new(xs, wx.into_iter().enumerate().map(|(j, m)| (vec![0, j], m)))?;
    let wy = weights(&mut r, n1);
    let targets: Vec<usize> = (0..n1).map(|_| r.gen_range(0..n2)).collect();
    let nu = PathMeasure::new(ys, wy.into_iter().enumerate().map(|(i, m)| (vec![i, targets[i]], m)))?;
    Ok(Instance { mu, nu, pi: None })
}

/// A uniform first step followed by a Dirac second step, against a uniform
/// second step: no biadapted bijection pushes one to the other.
pub fn paper_example() -> Result<Instance> {
    let space = Arc::new(PathSpace::from_coordinates(&[&["0", "1"], &["0", "1"]])?);
    let half = ratio(1, 2);
    let mu = PathMeasure::new(space.clone(), [(vec![0, 0], half.clone()), (vec![1, 0], half.clone())])?;
    let quarter = ratio(1, 4);
    let nu = PathMeasure::new(space.clone(), space.paths().into_iter().map(|p| (p, quarter.clone())))?;
    Ok(Instance { mu, nu, pi: None })
}

pub const FIXTURES: [&str; 4] = ["f1", "aw", "dyadic", "kr"];

fn measure(space: &Arc<PathSpace>, entries: &[(&[usize], (i64, i64))]) -> Result<PathMeasure> {
    PathMeasure::new(space.clone(), entries.iter().map(|(p, (a, b))| (p.to_vec(), ratio(*a, *b))))
}

/// Frozen small instances.
pub fn fixture(name: &str) -> Result<Instance> {
    match name {
        "f1" => {
            let xs = Arc::new(PathSpace::from_coordinates(&[&["0", "1"], &["0", "2"]])?);
            let ys = Arc::new(PathSpace::from_coordinates(&[&["0", "1"], &["1", "3"]])?);
            let mu = measure(&xs, &[(&[0, 0], (1, 4)), (&[0, 1], (1, 4)), (&[1, 0], (1, 3)), (&[1, 1], (1, 6))])?;
            let nu = measure(&ys, &[(&[0, 0], (1, 2)), (&[1, 0], (1, 6)), (&[1, 1], (1, 3))])?;
            Ok(Instance { mu, nu, pi: None })
        }
        "aw" | "kr" => {
            let xs = Arc::new(PathSpace::from_coordinates(&[&["0"], &["-1", "1"]])?);
            let ys = Arc::new(PathSpace::from_coordinates(&[&["-0.5", "0.5"], &["-1", "1"]])?);
            let mu = measure(&xs, &[(&[0, 0], (1, 2)), (&[0, 1], (1, 2))])?;
            let nu = measure(&ys, &[(&[0, 0], (1, 2)), (&[1, 1], (1, 2))])?;
            let pi = if name == "kr" { Some(Coupling::quantile(&mu, &nu)?) } else { None };
            Ok(Instance { mu, nu, pi })
        }
        "dyadic" => {
            let s: &[&str] = &["0", "0.25", "0.5", "0.75"];
            let space = Arc::new(PathSpace::from_coordinates(&[s, s])?);
            let first_mu = [(1, 8), (3, 8), (1, 4), (1, 4)];
            let second_mu = [
                [(1, 2), (1, 2), (0, 1), (0, 1)],
                [(1, 8), (1, 8), (1, 4), (1, 2)],
                [(0, 1), (1, 4), (3, 4), (0, 1)],
                [(1, 4), (1, 4), (1, 4), (1, 4)],
            ];
            let first_nu = [(1, 4), (1, 4), (3, 8), (1, 8)];
            let second_nu = [
                [(1, 4), (1, 4), (1, 4), (1, 4)],
                [(0, 1), (1, 2), (1, 2), (0, 1)],
                [(3, 8), (0, 1), (1, 8), (1, 2)],
                [(0, 1), (0, 1), (1, 8), (7, 8)],
            ];
            let build = |first: &[(i64, i64); 4], second: &[[(i64, i64); 4]; 4]| {
                let mut mass = Vec::new();
                for (i, &(a, b)) in first.iter().enumerate() {
                    for (j, &(c, d)) in second[i].iter().enumerate() {
                        mass.push((vec![i, j], ratio(a, b) * ratio(c, d)));
                    }
                }
                PathMeasure::new(space.clone(), mass)
            };
            let mu = build(&first_mu, &second_mu)?;
            let nu = build(&first_nu, &second_nu)?;
            let pi = solve_bicausal_dp(&mu, &nu, &CostSpec::MetricPower(Exponent::integer(1)))?.optimizer;
            Ok(Instance { mu, nu, pi: Some(pi) })
        }
        other => Err(Error::InvalidArgument(format!("unknown fixture {other:?}; known: {}", FIXTURES.join(", ")))),
    }
}

/// A random bicausal coupling of the uniform micro-measures of `mu` and
/// `nu`, glued from random stagewise couplings of the uniform slot laws.
pub fn random_micro_coupling(
    rng: &mut ChaCha8Rng,
    mu: &PathMeasure,
    nu: &PathMeasure,
    plan: &RefinementPlan,
) -> Result<LiftedCoupling> {
    let left = Arc::new(microatomize(mu, plan)?);
    let right = Arc::new(microatomize(nu, plan)?);
    let (ul, ur) = (left.uniform_measure(), right.uniform_measure());
    let micro = random_bicausal(rng, &ul, &ur)?;
    LiftedCoupling::new(
        left.clone(),
        right.clone(),
        micro.masses().iter().map(|((x, y), m)| ((left.from_path(x), right.from_path(y)), m.clone())),
    )
}

/// Random marginals, a refinement plan making both integral, and a random
/// bicausal micro-coupling on it.
pub fn random_micro_instance(seed: u64, shape: TreeShape) -> Result<(Instance, LiftedCoupling)> {
    let mut r = rng(seed);
    let mu = random_tree_measure(&mut r, shape)?;
    let nu = random_tree_measure(&mut r, shape)?;
    let plan = plan_for_measure(&mu, DEFAULT_BUDGET)?.join(&plan_for_measure(&nu, DEFAULT_BUDGET)?);
    plan.check_budget(DEFAULT_BUDGET)?;
    let lifted = random_micro_coupling(&mut r, &mu, &nu, &plan)?;
    Ok((Instance { mu, nu, pi: None }, lifted))
}

/// Distinct seeds for a batch, derived from a base seed.
pub fn seeds(base: u64, count: usize) -> Vec<u64> {
    let mut r = rng(base);
    let mut seen = BTreeSet::new();
    let mut ordered = Vec::with_capacity(count);
    while ordered.len() < count {
        let s: u64 = r.gen();
        if seen.insert(s) {
            ordered.push(s);
        }
    }
    ordered
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_instance() {
        let shape = TreeShape::new(3, 2, 8);
        assert_eq!(random_tree(1, shape).unwrap(), random_tree(1, shape).unwrap());
        assert_ne!(random_tree(1, shape).unwrap(), random_tree(2, shape).unwrap());
    }

    #[test]
    fn tree_shape_gives_full_support() {
        let inst = random_tree(5, TreeShape::new(3, 2, 8)).unwrap();
        assert_eq!(inst.mu.support_len(), 8);
        assert_eq!(inst.nu.support_len(), 8);
        let pi = inst.pi.unwrap();
        assert!(pi.is_bicausal().holds());
        assert_eq!(pi.marginals(), (inst.mu, inst.nu));
    }

    #[test]
    fn paper_example_shapes() {
        let inst = paper_example().unwrap();
        assert_eq!(inst.mu.conditional(&[0]).unwrap().len(), 1);
        assert_eq!(inst.nu.conditional(&[0]).unwrap().len(), 2);
    }

    #[test]
    fn fixtures_build() {
        for name in FIXTURES {
            let inst = fixture(name).unwrap();
            if let Some(pi) = inst.pi {
                assert!(pi.is_bicausal().holds(), "{name}");
            }
        }
        assert!(fixture("nope").is_err());
    }

    #[test]
    fn micro_coupling_is_bicausal_on_micro_paths() {
        let (_, lifted) = random_micro_instance(3, TreeShape::new(2, 2, 4)).unwrap();
        assert!(lifted.has_uniform_marginals());
        assert!(lifted.to_coupling().unwrap().is_bicausal().holds());
    }
}
