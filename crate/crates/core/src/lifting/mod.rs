//! Micro-atom refinements of path measures and the lifting of couplings to
//! bijections between them.
//!
//! Step `t` of a history carrying conditional mass `m` for the next point `x`
//! is split into `m * D_t` slots, so every micro-path has mass
//! `1 / prod_t D_t` and every conditional micro-law is uniform.

mod bijection;
mod lift;

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive};

use crate::coupling::Coupling;
use crate::error::{Error, Result};
use crate::measure::PathMeasure;
use crate::rational::Rational;
use crate::space::{Path, PathSpace, Point, Step};

pub use bijection::{AdaptedBijection, LiftedCoupling, MapDirection};
pub use lift::{
    block_space, lift_biadapted, lift_biadapted_with, lift_static, projection_bicausal_check, Lift, ProjectionCheck,
    StaticLift,
};

/// A micro-point: base point index and slot.
pub type MicroPoint = (usize, usize);
pub type MicroPath = Vec<MicroPoint>;

pub const DEFAULT_BUDGET: u64 = 1_000_000;

/// Per-step slot denominators `D_t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefinementPlan {
    pub denominators: Vec<u64>,
}

impl RefinementPlan {
    pub fn new(denominators: Vec<u64>) -> Result<Self> {
        if denominators.contains(&0) {
            return Err(Error::InvalidArgument("slot denominators must be positive".into()));
        }
        Ok(RefinementPlan { denominators })
    }

    /// Number of micro-paths on either side, `prod_t D_t`.
    pub fn micro_paths(&self) -> BigInt {
        self.denominators.iter().map(|&d| BigInt::from(d)).product()
    }

    pub fn check_budget(&self, budget: u64) -> Result<()> {
        let required = self.micro_paths();
        if required > BigInt::from(budget) {
            return Err(Error::BudgetExceeded { required: required.to_string(), budget });
        }
        Ok(())
    }

    /// Step-wise least common multiple of two plans.
    pub fn join(&self, other: &RefinementPlan) -> RefinementPlan {
        RefinementPlan {
            denominators: self.denominators.iter().zip(&other.denominators).map(|(a, b)| a.lcm(b)).collect(),
        }
    }

    /// Whether every `D_t` of `self` is a multiple of that of `coarse`.
    pub fn refines(&self, coarse: &RefinementPlan) -> Option<usize> {
        self.denominators.iter().zip(&coarse.denominators).position(|(f, c)| f % c != 0)
    }
}

fn lcm_into(acc: &mut BigInt, values: impl IntoIterator<Item = Rational>) {
    for v in values {
        *acc = acc.lcm(v.denom());
    }
}

fn to_plan(dens: Vec<BigInt>, budget: u64) -> Result<RefinementPlan> {
    let total: BigInt = dens.iter().product();
    if total > BigInt::from(budget) {
        return Err(Error::BudgetExceeded { required: total.to_string(), budget });
    }
    RefinementPlan::new(dens.iter().map(|d| d.to_u64().expect("bounded by budget")).collect())
}

/// The minimal plan for one measure.
pub fn plan_for_measure(mu: &PathMeasure, budget: u64) -> Result<RefinementPlan> {
    let dens = (0..mu.steps())
        .map(|t| {
            let mut d = BigInt::one();
            for law in mu.step_kernel(t).laws.into_values() {
                lcm_into(&mut d, law.into_values());
            }
            d
        })
        .collect();
    to_plan(dens, budget)
}

/// The minimal plan making all conditionals of `mu`, `nu`, and `pi`
/// integral after multiplication by `D_t`.
pub fn plan_refinement(mu: &PathMeasure, nu: &PathMeasure, pi: &Coupling, budget: u64) -> Result<RefinementPlan> {
    if mu.steps() != nu.steps() || pi.steps() != mu.steps() {
        return Err(Error::DimensionMismatch("measures and coupling differ in length".into()));
    }
    let dens = (0..mu.steps())
        .map(|t| {
            let mut d = BigInt::one();
            for law in mu.step_kernel(t).laws.into_values() {
                lcm_into(&mut d, law.into_values());
            }
            for law in nu.step_kernel(t).laws.into_values() {
                lcm_into(&mut d, law.into_values());
            }
            for plan in pi.stage_plans(t).into_values() {
                lcm_into(&mut d, plan.into_values());
            }
            d
        })
        .collect();
    to_plan(dens, budget)
}

/// A measure refined into equal-mass micro-atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MicroSpace {
    measure: PathMeasure,
    plan: RefinementPlan,
    /// Per step: base history to (point, slot count) in point order.
    slots: Vec<BTreeMap<Path, Vec<(usize, usize)>>>,
    /// Per step: the micro alphabet, sorted.
    alphabet: Vec<Vec<MicroPoint>>,
    index: Vec<BTreeMap<MicroPoint, usize>>,
    space: Arc<PathSpace>,
}

pub fn microatomize(measure: &PathMeasure, plan: &RefinementPlan) -> Result<MicroSpace> {
    let n = measure.steps();
    if plan.denominators.len() != n {
        return Err(Error::DimensionMismatch(format!("plan has {} steps, measure has {n}", plan.denominators.len())));
    }
    let base = measure.space();
    let mut slots = Vec::with_capacity(n);
    let mut alphabet = Vec::with_capacity(n);
    let mut index = Vec::with_capacity(n);
    let mut steps = Vec::with_capacity(n);
    for t in 0..n {
        let d = Rational::from_integer(BigInt::from(plan.denominators[t]));
        let mut table = BTreeMap::new();
        let mut widest: BTreeMap<usize, usize> = BTreeMap::new();
        for (h, law) in measure.step_kernel(t).laws {
            let mut row = Vec::with_capacity(law.len());
            for (x, m) in law {
                let count = &m * &d;
                if !count.is_integer() {
                    return Err(Error::PlanInvalid { step: t + 1, history: base.labels(&h) });
                }
                let count = count.to_integer().to_usize().expect("slot count fits in memory");
                let w = widest.entry(x).or_insert(0);
                *w = (*w).max(count);
                row.push((x, count));
            }
            table.insert(h, row);
        }
        let letters: Vec<MicroPoint> = widest.iter().flat_map(|(&x, &w)| (0..w).map(move |s| (x, s))).collect();
        let points = letters
            .iter()
            .map(|&(x, s)| Point::new(format!("{}#{s}", base.label(t, x)), base.coord(t, x).to_vec()))
            .collect();
        steps.push(Step::new(points).with_metric(base.step(t).metric));
        index.push(letters.iter().enumerate().map(|(k, &p)| (p, k)).collect());
        alphabet.push(letters);
        slots.push(table);
    }
    let space = Arc::new(PathSpace::new(steps)?);
    Ok(MicroSpace { measure: measure.clone(), plan: plan.clone(), slots, alphabet, index, space })
}

impl MicroSpace {
    pub fn measure(&self) -> &PathMeasure {
        &self.measure
    }

    pub fn base(&self) -> &Arc<PathSpace> {
        self.measure.space()
    }

    pub fn plan(&self) -> &RefinementPlan {
        &self.plan
    }

    pub fn steps(&self) -> usize {
        self.slots.len()
    }

    /// Children of any micro-history over the given base history, as
    /// (point, slot count) in point order.
    pub fn children(&self, base_history: &[usize]) -> Option<&[(usize, usize)]> {
        self.slots.get(base_history.len())?.get(base_history).map(|v| v.as_slice())
    }

    /// Total number of micro-paths.
    pub fn len(&self) -> usize {
        self.plan.denominators.iter().map(|&d| d as usize).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Uniform mass of one micro-path.
    pub fn atom_mass(&self) -> Rational {
        Rational::new(BigInt::one(), self.plan.micro_paths())
    }

    /// All micro-paths in lexicographic order.
    pub fn micro_paths(&self) -> Vec<MicroPath> {
        let mut out: Vec<MicroPath> = vec![Vec::new()];
        for _ in 0..self.steps() {
            let mut next = Vec::with_capacity(out.len());
            for mp in out {
                let base = project_path(&mp);
                for &(x, count) in self.children(&base).expect("support history") {
                    for s in 0..count {
                        let mut q = mp.clone();
                        q.push((x, s));
                        next.push(q);
                    }
                }
            }
            out = next;
        }
        out
    }

    pub fn contains(&self, mp: &[MicroPoint]) -> bool {
        if mp.len() != self.steps() {
            return false;
        }
        (0..mp.len()).all(|t| {
            let base = project_path(&mp[..t]);
            self.children(&base).is_some_and(|row| row.iter().any(|&(x, c)| x == mp[t].0 && mp[t].1 < c))
        })
    }

    /// The micro-alphabets as an ordinary path space with labels
    /// `label#slot` and the base coordinates.
    pub fn path_space(&self) -> &Arc<PathSpace> {
        &self.space
    }

    pub fn to_path(&self, mp: &[MicroPoint]) -> Path {
        mp.iter().enumerate().map(|(t, p)| self.index[t][p]).collect()
    }

    pub fn from_path(&self, path: &[usize]) -> MicroPath {
        path.iter().enumerate().map(|(t, &k)| self.alphabet[t][k]).collect()
    }

    /// The uniform measure on micro-paths, over [`MicroSpace::path_space`].
    pub fn uniform_measure(&self) -> PathMeasure {
        let w = self.atom_mass();
        PathMeasure::new(self.space.clone(), self.micro_paths().into_iter().map(|mp| (self.to_path(&mp), w.clone())))
            .expect("micro-paths carry total mass one")
    }

    pub fn labels(&self, mp: &[MicroPoint]) -> Vec<(String, usize)> {
        mp.iter().enumerate().map(|(t, &(x, s))| (self.base().label(t, x).to_string(), s)).collect()
    }
}

pub fn project_path(mp: &[MicroPoint]) -> Path {
    mp.iter().map(|&(x, _)| x).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    #[test]
    fn slot_counts_follow_numerators() {
        let s = Arc::new(PathSpace::from_coordinates(&[&["0", "1"]]).unwrap());
        let mu = PathMeasure::new(s, [(vec![0], ratio(1, 3)), (vec![1], ratio(2, 3))]).unwrap();
        let plan = plan_for_measure(&mu, DEFAULT_BUDGET).unwrap();
        assert_eq!(plan.denominators, vec![3]);
        let micro = microatomize(&mu, &plan).unwrap();
        assert_eq!(micro.micro_paths(), vec![vec![(0, 0)], vec![(1, 0)], vec![(1, 1)]]);
        assert_eq!(micro.atom_mass(), ratio(1, 3));
        let back = micro
            .uniform_measure()
            .pushforward(mu.space().clone(), |p| Some(project_path(&micro.from_path(p))))
            .unwrap();
        assert_eq!(back, mu);
        assert!(matches!(
            microatomize(&mu, &RefinementPlan::new(vec![2]).unwrap()),
            Err(Error::PlanInvalid { step: 1, .. })
        ));
    }

    #[test]
    fn plan_takes_lcm_of_conditionals() {
        let s = Arc::new(PathSpace::from_coordinates(&[&["0", "1"], &["0", "1"]]).unwrap());
        let mu = PathMeasure::new(
            s.clone(),
            [
                (vec![0, 0], ratio(1, 6)),
                (vec![0, 1], ratio(1, 3)),
                (vec![1, 0], ratio(1, 8)),
                (vec![1, 1], ratio(3, 8)),
            ],
        )
        .unwrap();
        let pi = Coupling::diagonal(&mu).unwrap();
        let plan = plan_refinement(&mu, &mu, &pi, DEFAULT_BUDGET).unwrap();
        assert_eq!(plan.denominators, vec![2, 12]);
        assert!(matches!(plan_refinement(&mu, &mu, &pi, 10), Err(Error::BudgetExceeded { .. })));
    }
}
