//! Couplings of two path measures and their causality and Monge structure.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num_traits::{One, Signed, Zero};
use rayon::prelude::*;

use crate::adapted::adaptedness_violation;
use crate::error::{Error, Result};
use crate::measure::{PathMeasure, StepLaw};
use crate::rational::{format_rational, Rational};
use crate::space::{Path, PathSpace};

pub type PathPair = (Path, Path);

/// One-step coupling of two conditional laws: (x index, y index) to mass.
pub type StagePlan = BTreeMap<(usize, usize), Rational>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coupling {
    left: Arc<PathSpace>,
    right: Arc<PathSpace>,
    mass: BTreeMap<PathPair, Rational>,
}

impl Coupling {
    pub fn new(
        left: Arc<PathSpace>,
        right: Arc<PathSpace>,
        mass: impl IntoIterator<Item = (PathPair, Rational)>,
    ) -> Result<Self> {
        if left.len() != right.len() {
            return Err(Error::DimensionMismatch(format!(
                "coupled spaces have {} and {} steps",
                left.len(),
                right.len()
            )));
        }
        let mut canon: BTreeMap<PathPair, Rational> = BTreeMap::new();
        for ((x, y), m) in mass {
            if !left.contains(&x) || !right.contains(&y) {
                return Err(Error::InvalidCoupling(format!(
                    "pair {:?} / {:?} lies outside the spaces",
                    left.labels(&x),
                    right.labels(&y)
                )));
            }
            if m.is_negative() {
                let mut path = left.labels(&x);
                path.extend(right.labels(&y));
                return Err(Error::NegativeMass { path });
            }
            *canon.entry((x, y)).or_insert_with(Rational::zero) += m;
        }
        canon.retain(|_, m| !m.is_zero());
        let total: Rational = canon.values().sum();
        if !total.is_one() {
            return Err(Error::MassSumNotOne { actual: total });
        }
        Ok(Coupling { left, right, mass: canon })
    }

    /// Like [`Coupling::new`], additionally requiring the given marginals.
    pub fn with_marginals(
        mu: &PathMeasure,
        nu: &PathMeasure,
        mass: impl IntoIterator<Item = (PathPair, Rational)>,
    ) -> Result<Self> {
        let pi = Coupling::new(mu.space().clone(), nu.space().clone(), mass)?;
        let (a, b) = pi.marginals();
        if a.masses() != mu.masses() || b.masses() != nu.masses() {
            return Err(Error::InvalidCoupling("marginals differ from the declared measures".into()));
        }
        Ok(pi)
    }

    pub fn product(mu: &PathMeasure, nu: &PathMeasure) -> Result<Self> {
        let mut mass = Vec::with_capacity(mu.support_len() * nu.support_len());
        for (x, a) in mu.masses() {
            for (y, b) in nu.masses() {
                mass.push(((x.clone(), y.clone()), a * b));
            }
        }
        Coupling::new(mu.space().clone(), nu.space().clone(), mass)
    }

    /// `(id, id)_* mu`.
    pub fn diagonal(mu: &PathMeasure) -> Result<Self> {
        Coupling::from_map(mu, mu.space().clone(), |x| Some(x.to_vec()))
    }

    /// `(id, T)_* mu` for a map defined on the support.
    pub fn from_map<F>(mu: &PathMeasure, target: Arc<PathSpace>, f: F) -> Result<Self>
    where
        F: Fn(&[usize]) -> Option<Path>,
    {
        let mut mass = Vec::with_capacity(mu.support_len());
        for (x, m) in mu.masses() {
            let y = f(x)
                .filter(|y| target.contains(y))
                .ok_or_else(|| Error::UndefinedOnSupport { path: mu.space().labels(x) })?;
            mass.push(((x.clone(), y), m.clone()));
        }
        Coupling::new(mu.space().clone(), target, mass)
    }

    /// Glues one-step couplings chosen per joint history into a coupling.
    /// `stage(x_hist, y_hist)` must couple the two conditional laws.
    pub fn from_stages<F>(mu: &PathMeasure, nu: &PathMeasure, mut stage: F) -> Result<Self>
    where
        F: FnMut(&[usize], &[usize]) -> Result<StagePlan>,
    {
        let n = mu.steps();
        if nu.steps() != n {
            return Err(Error::DimensionMismatch(format!("measures have {} and {} steps", n, nu.steps())));
        }
        let mut frontier: Vec<(PathPair, Rational)> = vec![((Vec::new(), Vec::new()), Rational::one())];
        for _ in 0..n {
            let mut next = Vec::new();
            for ((xh, yh), m) in frontier {
                for ((a, b), c) in stage(&xh, &yh)? {
                    if c.is_zero() {
                        continue;
                    }
                    let mut x = xh.clone();
                    x.push(a);
                    let mut y = yh.clone();
                    y.push(b);
                    next.push(((x, y), &m * &c));
                }
            }
            frontier = next;
        }
        Coupling::with_marginals(mu, nu, frontier)
    }

    /// Stepwise quantile coupling: at every joint history the conditional
    /// laws are coupled monotonically in coordinate order.
    pub fn quantile(mu: &PathMeasure, nu: &PathMeasure) -> Result<Self> {
        let (ls, rs) = (mu.space().clone(), nu.space().clone());
        Coupling::from_stages(mu, nu, |xh, yh| {
            let a = mu.conditional(xh).expect("positive history");
            let b = nu.conditional(yh).expect("positive history");
            let t = xh.len();
            let rows = sorted_by_coordinate(&ls, t, &a);
            let cols = sorted_by_coordinate(&rs, t, &b);
            Ok(northwest_corner(&rows, &cols))
        })
    }

    pub fn left(&self) -> &Arc<PathSpace> {
        &self.left
    }

    pub fn right(&self) -> &Arc<PathSpace> {
        &self.right
    }

    pub fn steps(&self) -> usize {
        self.left.len()
    }

    pub fn masses(&self) -> &BTreeMap<PathPair, Rational> {
        &self.mass
    }

    pub fn mass_of(&self, x: &[usize], y: &[usize]) -> Rational {
        self.mass.get(&(x.to_vec(), y.to_vec())).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn support_len(&self) -> usize {
        self.mass.len()
    }

    pub fn marginals(&self) -> (PathMeasure, PathMeasure) {
        let mut a: BTreeMap<Path, Rational> = BTreeMap::new();
        let mut b: BTreeMap<Path, Rational> = BTreeMap::new();
        for ((x, y), m) in &self.mass {
            *a.entry(x.clone()).or_insert_with(Rational::zero) += m;
            *b.entry(y.clone()).or_insert_with(Rational::zero) += m;
        }
        (
            PathMeasure::new(self.left.clone(), a).expect("marginal of a valid coupling"),
            PathMeasure::new(self.right.clone(), b).expect("marginal of a valid coupling"),
        )
    }

    pub fn swap(&self) -> Coupling {
        Coupling {
            left: self.right.clone(),
            right: self.left.clone(),
            mass: self.mass.iter().map(|((x, y), m)| ((y.clone(), x.clone()), m.clone())).collect(),
        }
    }

    /// Masses of positive joint histories of length `t`.
    pub fn joint_prefix_masses(&self, t: usize) -> BTreeMap<PathPair, Rational> {
        let mut out: BTreeMap<PathPair, Rational> = BTreeMap::new();
        for ((x, y), m) in &self.mass {
            *out.entry((x[..t].to_vec(), y[..t].to_vec())).or_insert_with(Rational::zero) += m;
        }
        out
    }

    /// Conditional one-step pair laws given every positive joint history of
    /// length `t`.
    pub fn stage_plans(&self, t: usize) -> BTreeMap<PathPair, StagePlan> {
        let mut plans: BTreeMap<PathPair, StagePlan> = BTreeMap::new();
        for ((x, y), m) in &self.mass {
            *plans
                .entry((x[..t].to_vec(), y[..t].to_vec()))
                .or_default()
                .entry((x[t], y[t]))
                .or_insert_with(Rational::zero) += m;
        }
        for plan in plans.values_mut() {
            let total: Rational = plan.values().sum();
            for v in plan.values_mut() {
                *v /= &total;
            }
        }
        plans
    }

    /// Integral of a cost over the coupling.
    pub fn integrate<F>(&self, cost: F) -> Result<Rational>
    where
        F: Fn(&[usize], &[usize]) -> Result<Rational>,
    {
        let mut total = Rational::zero();
        for ((x, y), m) in &self.mass {
            total += m * cost(x, y)?;
        }
        Ok(total)
    }

    /// The same coupling on spaces differing only in labels.
    pub fn with_spaces(&self, left: Arc<PathSpace>, right: Arc<PathSpace>) -> Result<Coupling> {
        Coupling::new(left, right, self.mass.clone())
    }

    pub fn is_causal(&self) -> CausalityReport {
        causal_report(self, Direction::Forward)
    }

    pub fn is_bicausal(&self) -> CausalityReport {
        let forward = causal_report(self, Direction::Forward);
        if !forward.holds() {
            return forward;
        }
        causal_report(&self.swap(), Direction::Backward)
    }

    pub fn classify_monge(&self) -> MongeClass {
        let forward = match graph_map(&self.mass, |(x, y)| (x, y)) {
            Some(map) => map,
            None => return MongeClass::NotMonge,
        };
        let inverse = graph_map(&self.mass, |(x, y)| (y, x));
        let adapted = adaptedness_violation(forward.iter()).is_none();
        match inverse {
            Some(inverse) => {
                let inverse_adapted = adaptedness_violation(inverse.iter()).is_none();
                match (adapted, inverse_adapted) {
                    (true, true) => MongeClass::BiadaptedMonge { map: forward, inverse },
                    (true, false) => MongeClass::AdaptedMonge { map: forward },
                    _ => MongeClass::BijectiveMonge { map: forward, inverse },
                }
            }
            None if adapted => MongeClass::AdaptedMonge { map: forward },
            None => MongeClass::Monge { map: forward },
        }
    }
}

fn graph_map<'a, F>(mass: &'a BTreeMap<PathPair, Rational>, orient: F) -> Option<BTreeMap<Path, Path>>
where
    F: Fn((&'a Path, &'a Path)) -> (&'a Path, &'a Path),
{
    let mut map: BTreeMap<Path, Path> = BTreeMap::new();
    for (x, y) in mass.keys() {
        let (a, b) = orient((x, y));
        if let Some(prev) = map.insert(a.clone(), b.clone()) {
            if &prev != b {
                return None;
            }
        }
    }
    Some(map)
}

/// Which side's conditional failed: `Forward` tests the x-side (causality of
/// the coupling itself), `Backward` the y-side (causality of the swap).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn name(&self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

/// A positive joint history after which the coupling's conditional law of
/// the next point differs from the marginal's own conditional law. Labels
/// are given with the tested side first as `history`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalityWitness {
    pub direction: Direction,
    pub prefix_len: usize,
    pub x_history: Vec<String>,
    pub y_history: Vec<String>,
    pub point: String,
    pub coupling_conditional: Rational,
    pub marginal_conditional: Rational,
}

impl fmt::Display for CausalityWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = match self.direction {
            Direction::Forward => "x",
            Direction::Backward => "y",
        };
        write!(
            f,
            "after x={:?}, y={:?} the next {side}-point {:?} has conditional mass {} under the coupling but {} under the marginal",
            self.x_history,
            self.y_history,
            self.point,
            format_rational(&self.coupling_conditional),
            format_rational(&self.marginal_conditional)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalityReport {
    pub witness: Option<CausalityWitness>,
}

impl CausalityReport {
    pub fn holds(&self) -> bool {
        self.witness.is_none()
    }

    pub fn into_result(self) -> Result<()> {
        match self.witness {
            None => Ok(()),
            Some(w) => Err(Error::NotBicausal(Box::new(w))),
        }
    }
}

struct HistoryStats {
    next: StepLaw,
    total: Rational,
}

fn causal_report(pi: &Coupling, direction: Direction) -> CausalityReport {
    let (mu, _) = pi.marginals();
    for t in 1..pi.steps() {
        let mut stats: BTreeMap<PathPair, HistoryStats> = BTreeMap::new();
        for ((x, y), m) in &pi.mass {
            let s = stats
                .entry((x[..t].to_vec(), y[..t].to_vec()))
                .or_insert_with(|| HistoryStats { next: StepLaw::new(), total: Rational::zero() });
            s.total += m;
            *s.next.entry(x[t]).or_insert_with(Rational::zero) += m;
        }
        let kernel = mu.step_kernel(t);
        let histories: Vec<(&PathPair, &HistoryStats)> = stats.iter().collect();
        let found = histories.par_iter().find_map_first(|((xh, yh), s)| {
            let law = &kernel.laws[xh];
            let keys: BTreeSet<usize> = law.keys().chain(s.next.keys()).copied().collect();
            keys.into_iter().find_map(|a| {
                let here = s.next.get(&a).map_or_else(Rational::zero, |m| m / &s.total);
                let there = law.get(&a).cloned().unwrap_or_else(Rational::zero);
                (here != there).then(|| {
                    let (xl, yl) = (pi.left.labels(xh), pi.right.labels(yh));
                    let (x_history, y_history) = match direction {
                        Direction::Forward => (xl, yl),
                        Direction::Backward => (yl, xl),
                    };
                    CausalityWitness {
                        direction,
                        prefix_len: t,
                        x_history,
                        y_history,
                        point: pi.left.label(t, a).to_string(),
                        coupling_conditional: here,
                        marginal_conditional: there,
                    }
                })
            })
        });
        if let Some(w) = found {
            return CausalityReport { witness: Some(w) };
        }
    }
    CausalityReport { witness: None }
}

/// The strongest Monge tag that applies to a coupling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MongeClass {
    NotMonge,
    Monge { map: BTreeMap<Path, Path> },
    BijectiveMonge { map: BTreeMap<Path, Path>, inverse: BTreeMap<Path, Path> },
    AdaptedMonge { map: BTreeMap<Path, Path> },
    BiadaptedMonge { map: BTreeMap<Path, Path>, inverse: BTreeMap<Path, Path> },
}

impl MongeClass {
    pub fn name(&self) -> &'static str {
        match self {
            MongeClass::NotMonge => "not-monge",
            MongeClass::Monge { .. } => "monge",
            MongeClass::BijectiveMonge { .. } => "bijective-monge",
            MongeClass::AdaptedMonge { .. } => "adapted-monge",
            MongeClass::BiadaptedMonge { .. } => "biadapted-monge",
        }
    }

    pub fn map(&self) -> Option<&BTreeMap<Path, Path>> {
        match self {
            MongeClass::NotMonge => None,
            MongeClass::Monge { map }
            | MongeClass::BijectiveMonge { map, .. }
            | MongeClass::AdaptedMonge { map }
            | MongeClass::BiadaptedMonge { map, .. } => Some(map),
        }
    }
}

/// Points of step `t` carrying mass in `law`, ordered by coordinate and then
/// by declaration order.
pub fn sorted_by_coordinate(space: &PathSpace, t: usize, law: &StepLaw) -> Vec<(usize, Rational)> {
    let mut rows: Vec<(usize, Rational)> = law.iter().map(|(i, m)| (*i, m.clone())).collect();
    rows.sort_by(|(a, _), (b, _)| match space.coord(t, *a).cmp(space.coord(t, *b)) {
        Ordering::Equal => a.cmp(b),
        other => other,
    });
    rows
}

/// Northwest-corner rule on two equal-total mass vectors, in the order given.
pub fn northwest_corner(rows: &[(usize, Rational)], cols: &[(usize, Rational)]) -> StagePlan {
    let mut plan = StagePlan::new();
    let (mut i, mut j) = (0, 0);
    let mut r = rows.first().map(|(_, m)| m.clone()).unwrap_or_else(Rational::zero);
    let mut c = cols.first().map(|(_, m)| m.clone()).unwrap_or_else(Rational::zero);
    while i < rows.len() && j < cols.len() {
        let q = if r < c { r.clone() } else { c.clone() };
        if q.is_positive() {
            *plan.entry((rows[i].0, cols[j].0)).or_insert_with(Rational::zero) += &q;
        }
        r -= &q;
        c -= &q;
        if r.is_zero() {
            i += 1;
            if i < rows.len() {
                r = rows[i].1.clone();
            }
        }
        if c.is_zero() {
            j += 1;
            if j < cols.len() {
                c = cols[j].1.clone();
            }
        }
    }
    plan
}

/// A sparse linear equality `sum coeffs * vars = rhs`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearConstraint {
    pub label: String,
    pub coeffs: Vec<(usize, Rational)>,
    pub rhs: Rational,
}

/// Equality constraints over variables `pi(x, y)`, `x` in the support of
/// the first measure and `y` in that of the second, together with the
/// implicit nonnegativity of every variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearSystem {
    pub variables: Vec<PathPair>,
    pub constraints: Vec<LinearConstraint>,
}

impl LinearSystem {
    pub fn is_satisfied_by(&self, values: &[Rational]) -> bool {
        values.iter().all(|v| !v.is_negative())
            && self.constraints.iter().all(|c| {
                let lhs: Rational = c.coeffs.iter().map(|(k, a)| a * &values[*k]).sum();
                lhs == c.rhs
            })
    }

    pub fn values_of(&self, pi: &Coupling) -> Vec<Rational> {
        self.variables.iter().map(|(x, y)| pi.mass_of(x, y)).collect()
    }
}

/// Marginal constraints plus, for every prefix length `t` in `1..N`, every
/// pair of positive histories and every next point of either side, the
/// conditional identity multiplied through by the joint history mass:
/// `pi(x_{1:t} x', y_{1:t} *) - mu^{x_{1:t}}(x') pi(x_{1:t}, y_{1:t}) = 0`.
/// Both sides are linear in `pi`.
pub fn bicausal_constraints(mu: &PathMeasure, nu: &PathMeasure) -> Result<LinearSystem> {
    if mu.steps() != nu.steps() {
        return Err(Error::DimensionMismatch(format!("measures have {} and {} steps", mu.steps(), nu.steps())));
    }
    let xs: Vec<&Path> = mu.support().collect();
    let ys: Vec<&Path> = nu.support().collect();
    let variables: Vec<PathPair> =
        xs.iter().flat_map(|x| ys.iter().map(move |y| ((*x).clone(), (*y).clone()))).collect();
    let var = |i: usize, j: usize| i * ys.len() + j;
    let (ls, rs) = (mu.space(), nu.space());
    let mut constraints = Vec::new();
    for (i, x) in xs.iter().enumerate() {
        constraints.push(LinearConstraint {
            label: format!("x-marginal {:?}", ls.labels(x)),
            coeffs: (0..ys.len()).map(|j| (var(i, j), Rational::one())).collect(),
            rhs: mu.mass_of(x),
        });
    }
    for (j, y) in ys.iter().enumerate() {
        constraints.push(LinearConstraint {
            label: format!("y-marginal {:?}", rs.labels(y)),
            coeffs: (0..xs.len()).map(|i| (var(i, j), Rational::one())).collect(),
            rhs: nu.mass_of(y),
        });
    }
    for t in 1..mu.steps() {
        let mk = mu.step_kernel(t);
        let nk = nu.step_kernel(t);
        for (xh, xlaw) in &mk.laws {
            for (yh, ylaw) in &nk.laws {
                let block: Vec<(usize, usize)> = xs
                    .iter()
                    .enumerate()
                    .filter(|(_, x)| x.starts_with(xh))
                    .flat_map(|(i, _)| {
                        ys.iter().enumerate().filter(|(_, y)| y.starts_with(yh)).map(move |(j, _)| (i, j))
                    })
                    .collect();
                for (a, w) in xlaw {
                    let coeffs = block
                        .iter()
                        .map(|&(i, j)| {
                            let own = if xs[i][t] == *a { Rational::one() } else { Rational::zero() };
                            (var(i, j), own - w)
                        })
                        .filter(|(_, c)| !c.is_zero())
                        .collect();
                    constraints.push(LinearConstraint {
                        label: format!(
                            "x-conditional t={t} {:?} {:?} next {:?}",
                            ls.labels(xh),
                            rs.labels(yh),
                            ls.label(t, *a)
                        ),
                        coeffs,
                        rhs: Rational::zero(),
                    });
                }
                for (b, w) in ylaw {
                    let coeffs = block
                        .iter()
                        .map(|&(i, j)| {
                            let own = if ys[j][t] == *b { Rational::one() } else { Rational::zero() };
                            (var(i, j), own - w)
                        })
                        .filter(|(_, c)| !c.is_zero())
                        .collect();
                    constraints.push(LinearConstraint {
                        label: format!(
                            "y-conditional t={t} {:?} {:?} next {:?}",
                            ls.labels(xh),
                            rs.labels(yh),
                            rs.label(t, *b)
                        ),
                        coeffs,
                        rhs: Rational::zero(),
                    });
                }
            }
        }
    }
    Ok(LinearSystem { variables, constraints })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    fn coins2() -> PathMeasure {
        let s = Arc::new(PathSpace::from_coordinates(&[&["0", "1"], &["0", "1"]]).unwrap());
        PathMeasure::uniform(s.clone(), &s.paths()).unwrap()
    }

    #[test]
    fn product_and_diagonal_are_bicausal() {
        let mu = coins2();
        let prod = Coupling::product(&mu, &mu).unwrap();
        assert!(prod.is_bicausal().holds());
        let (a, b) = prod.marginals();
        assert_eq!((a, b), (mu.clone(), mu.clone()));
        let diag = Coupling::diagonal(&mu).unwrap();
        assert!(diag.is_bicausal().holds());
        assert_eq!(diag.swap(), diag);
        assert!(matches!(diag.classify_monge(), MongeClass::BiadaptedMonge { .. }));
        assert_eq!(prod.classify_monge(), MongeClass::NotMonge);
    }

    #[test]
    fn anticipative_coupling_is_not_causal() {
        // y1 copies x2: the first y-step peeks at the future of x.
        let mu = coins2();
        let pi = Coupling::from_map(&mu, mu.space().clone(), |x| Some(vec![x[1], x[0]])).unwrap();
        let report = pi.is_causal();
        let w = report.witness.expect("anticipation must be detected");
        assert_eq!(w.prefix_len, 1);
        assert_eq!(w.direction, Direction::Forward);
        assert_ne!(w.coupling_conditional, w.marginal_conditional);
        assert!(matches!(pi.classify_monge(), MongeClass::BijectiveMonge { .. }));
    }

    #[test]
    fn northwest_corner_fills_staircase() {
        let rows = vec![(0, ratio(3, 4)), (1, ratio(1, 4))];
        let cols = vec![(0, ratio(1, 4)), (1, ratio(3, 4))];
        let plan = northwest_corner(&rows, &cols);
        assert_eq!(plan[&(0, 0)], ratio(1, 4));
        assert_eq!(plan[&(0, 1)], ratio(1, 2));
        assert_eq!(plan[&(1, 1)], ratio(1, 4));
        assert_eq!(plan.len(), 3);
    }

    #[test]
    fn constraint_count_for_full_two_by_two() {
        let mu = coins2();
        let sys = bicausal_constraints(&mu, &mu).unwrap();
        assert_eq!(sys.variables.len(), 16);
        assert_eq!(sys.constraints.len(), 8 + 16);
        let prod = Coupling::product(&mu, &mu).unwrap();
        assert!(sys.is_satisfied_by(&sys.values_of(&prod)));
    }
}
