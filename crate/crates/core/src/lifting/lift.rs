use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::ToPrimitive;

use crate::coupling::{CausalityReport, Coupling, PathPair, StagePlan};
use crate::error::{Error, Result};
use crate::measure::PathMeasure;
use crate::rational::Rational;
use crate::space::{Path, PathSpace, Point, Step};

use super::{
    microatomize, plan_refinement, project_path, AdaptedBijection, LiftedCoupling, MicroPath, MicroPoint, MicroSpace,
    RefinementPlan,
};

/// A bicausal coupling realized as a biadapted bijection of micro-spaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lift {
    pub plan: RefinementPlan,
    pub bijection: AdaptedBijection,
    pub lifted: LiftedCoupling,
}

/// Matches the children of a micro-history pair over base history pair
/// `(xh, yh)`: for every `(x, y)` in index order, the next
/// `pi^{xh,yh}(x, y) * D` unused slots of `x` go to the next unused slots
/// of `y`.
pub(crate) fn slot_matching(plan: &StagePlan, d: u64) -> Result<Vec<(MicroPoint, MicroPoint)>> {
    let d = Rational::from_integer(BigInt::from(d));
    let mut next_x: BTreeMap<usize, usize> = BTreeMap::new();
    let mut next_y: BTreeMap<usize, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for (&(x, y), m) in plan {
        let g = m * &d;
        if !g.is_integer() {
            return Err(Error::PlanInvalid { step: 0, history: vec![] });
        }
        let g = g.to_integer().to_usize().expect("slot count fits in memory");
        let sx = next_x.entry(x).or_insert(0);
        let sy = next_y.entry(y).or_insert(0);
        for _ in 0..g {
            out.push(((x, *sx), (y, *sy)));
            *sx += 1;
            *sy += 1;
        }
    }
    Ok(out)
}

/// Lifts a bicausal coupling with the minimal refinement plan.
pub fn lift_biadapted(pi: &Coupling, budget: u64) -> Result<Lift> {
    pi.is_bicausal().into_result()?;
    let (mu, nu) = pi.marginals();
    let plan = plan_refinement(&mu, &nu, pi, budget)?;
    lift_biadapted_with(pi, &plan, budget)
}

/// Lifts a bicausal coupling on a given plan, which must make every
/// conditional of both marginals and of `pi` integral.
pub fn lift_biadapted_with(pi: &Coupling, plan: &RefinementPlan, budget: u64) -> Result<Lift> {
    pi.is_bicausal().into_result()?;
    plan.check_budget(budget)?;
    let (mu, nu) = pi.marginals();
    let left = Arc::new(microatomize(&mu, plan)?);
    let right = Arc::new(microatomize(&nu, plan)?);
    let forward = build_forward(pi, plan, &left)?;
    let bijection = AdaptedBijection::new(left, right, forward)?;
    let lifted = bijection.lifted();
    Ok(Lift { plan: plan.clone(), bijection, lifted })
}

fn build_forward(pi: &Coupling, plan: &RefinementPlan, left: &MicroSpace) -> Result<BTreeMap<MicroPath, MicroPath>> {
    let n = pi.steps();
    let mut frontier: Vec<(MicroPath, MicroPath)> = vec![(Vec::new(), Vec::new())];
    for t in 0..n {
        let stages = pi.stage_plans(t);
        let mut matchings: BTreeMap<PathPair, Vec<(MicroPoint, MicroPoint)>> = BTreeMap::new();
        for (key, stage) in &stages {
            let m = slot_matching(stage, plan.denominators[t])
                .map_err(|_| Error::PlanInvalid { step: t + 1, history: pi.left().labels(&key.0) })?;
            matchings.insert(key.clone(), m);
        }
        let mut next = Vec::with_capacity(frontier.len() * plan.denominators[t] as usize);
        for (xh, yh) in frontier {
            let key = (project_path(&xh), project_path(&yh));
            for &(a, b) in &matchings[&key] {
                let mut x = xh.clone();
                x.push(a);
                let mut y = yh.clone();
                y.push(b);
                next.push((x, y));
            }
        }
        frontier = next;
    }
    let forward: BTreeMap<MicroPath, MicroPath> = frontier.into_iter().collect();
    debug_assert_eq!(forward.len(), left.len());
    Ok(forward)
}

/// A lift of a coupling viewed as one step: each side's support paths become
/// the points of a single-step space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticLift {
    pub left_blocks: Vec<Path>,
    pub right_blocks: Vec<Path>,
    pub base_left: Arc<PathSpace>,
    pub base_right: Arc<PathSpace>,
    pub lift: Lift,
}

impl StaticLift {
    /// Projection back to a coupling of the original path spaces.
    pub fn project(&self) -> Result<Coupling> {
        let block = self.lift.lifted.project()?;
        Coupling::new(
            self.base_left.clone(),
            self.base_right.clone(),
            block
                .masses()
                .iter()
                .map(|((x, y), m)| ((self.left_blocks[x[0]].clone(), self.right_blocks[y[0]].clone()), m.clone())),
        )
    }
}

/// The support of a measure as the alphabet of a one-step space.
pub fn block_space(mu: &PathMeasure) -> Result<(Arc<PathSpace>, Vec<Path>)> {
    let space = mu.space();
    let blocks: Vec<Path> = mu.support().cloned().collect();
    let points = blocks
        .iter()
        .map(|p| {
            let coord = p.iter().enumerate().flat_map(|(t, &i)| space.coord(t, i).to_vec()).collect();
            Point::new(space.labels(p).join("."), coord)
        })
        .collect();
    Ok((Arc::new(PathSpace::new(vec![Step::new(points)])?), blocks))
}

/// Lifts any coupling to a bijection of micro-spaces over the one-step
/// block spaces.
pub fn lift_static(pi: &Coupling, budget: u64) -> Result<StaticLift> {
    let (mu, nu) = pi.marginals();
    let (ls, left_blocks) = block_space(&mu)?;
    let (rs, right_blocks) = block_space(&nu)?;
    let li: BTreeMap<&Path, usize> = left_blocks.iter().enumerate().map(|(k, p)| (p, k)).collect();
    let ri: BTreeMap<&Path, usize> = right_blocks.iter().enumerate().map(|(k, p)| (p, k)).collect();
    let block = Coupling::new(ls, rs, pi.masses().iter().map(|((x, y), m)| ((vec![li[x]], vec![ri[y]]), m.clone())))?;
    let lift = lift_biadapted(&block, budget)?;
    Ok(StaticLift { left_blocks, right_blocks, base_left: pi.left().clone(), base_right: pi.right().clone(), lift })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionCheck {
    /// Bicausality of the micro-coupling itself.
    pub micro: CausalityReport,
    /// Bicausality of its projection to the base spaces.
    pub projected: CausalityReport,
}

impl ProjectionCheck {
    /// A bicausal micro-coupling whose projection is not bicausal.
    pub fn is_counterexample(&self) -> bool {
        self.micro.holds() && !self.projected.holds()
    }
}

pub fn projection_bicausal_check(lifted: &LiftedCoupling) -> Result<ProjectionCheck> {
    let micro = lifted.to_coupling()?.is_bicausal();
    let projected = lifted.project()?.is_bicausal();
    Ok(ProjectionCheck { micro, projected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifting::{MapDirection, DEFAULT_BUDGET};
    use crate::rational::ratio;

    fn coins(n: usize) -> PathMeasure {
        let steps: Vec<&[&str]> = vec![&["0", "1"]; n];
        let s = Arc::new(PathSpace::from_coordinates(&steps).unwrap());
        PathMeasure::uniform(s.clone(), &s.paths()).unwrap()
    }

    #[test]
    fn product_of_coins_lifts_to_a_permutation() {
        let mu = coins(1);
        let pi = Coupling::product(&mu, &mu).unwrap();
        let lift = lift_biadapted(&pi, DEFAULT_BUDGET).unwrap();
        assert_eq!(lift.plan.denominators, vec![4]);
        let map = lift.bijection.map(MapDirection::Forward);
        // Slots of 0 go to 0#0 and 1#0, slots of 1 to 0#1 and 1#1.
        assert_eq!(map[&vec![(0, 0)]], vec![(0, 0)]);
        assert_eq!(map[&vec![(0, 1)]], vec![(1, 0)]);
        assert_eq!(map[&vec![(1, 0)]], vec![(0, 1)]);
        assert_eq!(map[&vec![(1, 1)]], vec![(1, 1)]);
        assert_eq!(lift.lifted.project().unwrap(), pi);
    }

    #[test]
    fn two_step_product_round_trips_biadapted() {
        let mu = coins(2);
        let pi = Coupling::product(&mu, &mu).unwrap();
        let lift = lift_biadapted(&pi, DEFAULT_BUDGET).unwrap();
        assert!(lift.bijection.is_biadapted());
        assert!(lift.lifted.has_uniform_marginals());
        assert_eq!(lift.lifted.project().unwrap(), pi);
        let check = projection_bicausal_check(&lift.lifted).unwrap();
        assert!(check.micro.holds() && check.projected.holds());
    }

    #[test]
    fn anticipative_coupling_is_refused() {
        let mu = coins(2);
        let pi = Coupling::from_map(&mu, mu.space().clone(), |x| Some(vec![x[1], x[0]])).unwrap();
        assert!(matches!(lift_biadapted(&pi, DEFAULT_BUDGET), Err(Error::NotBicausal(_))));
        let st = lift_static(&pi, DEFAULT_BUDGET).unwrap();
        assert_eq!(st.project().unwrap(), pi);
    }

    #[test]
    fn static_lift_of_thirds() {
        let s = Arc::new(PathSpace::from_coordinates(&[&["0", "1"]]).unwrap());
        let mu = PathMeasure::new(s.clone(), [(vec![0], ratio(1, 3)), (vec![1], ratio(2, 3))]).unwrap();
        let pi = Coupling::diagonal(&mu).unwrap();
        let st = lift_static(&pi, DEFAULT_BUDGET).unwrap();
        assert_eq!(st.lift.bijection.left().len(), 3);
        assert_eq!(st.project().unwrap(), pi);
    }
}
