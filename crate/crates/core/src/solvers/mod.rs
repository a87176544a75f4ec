//! Optimal transport values and optimizers: classical, bicausal by backward
//! induction, bicausal by vertex enumeration, and bicausal as one flat
//! linear program.

pub mod lp;
pub mod oracle;
pub mod transport;

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::Zero;
use rayon::prelude::*;

use crate::coupling::{bicausal_constraints, Coupling, PathPair, StagePlan};
use crate::error::{Error, Result};
use crate::measure::PathMeasure;
use crate::rational::{Exponent, Rational};
use crate::space::{Path, PathSpace, ProductMetric};

pub use oracle::{solve_bicausal_oracle, ORACLE_LIMIT};
pub use transport::{solve_transport, TransportSolution};

/// Cost functions on pairs of paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CostSpec {
    /// `sum_t d_t(x_t, y_t)^p`.
    MetricPower(Exponent),
    /// `sum_t c_t(x_t, y_t)`, one table per step indexed by point indices.
    Separable(Vec<Vec<Vec<Rational>>>),
    /// An arbitrary table over pairs of full paths.
    General(BTreeMap<PathPair, Rational>),
}

impl CostSpec {
    /// Per-step tables for separable costs, `None` for general ones.
    pub fn step_tables(&self, left: &PathSpace, right: &PathSpace) -> Result<Option<Vec<Vec<Vec<Rational>>>>> {
        if left.len() != right.len() {
            return Err(Error::DimensionMismatch(format!("spaces have {} and {} steps", left.len(), right.len())));
        }
        match self {
            CostSpec::MetricPower(p) => {
                let metric = ProductMetric::new(p.clone());
                let tables = (0..left.len())
                    .map(|t| {
                        (0..left.alphabet_len(t))
                            .map(|i| {
                                (0..right.alphabet_len(t))
                                    .map(|j| {
                                        metric.step_pp(left, right, t, i, j)?.into_exact(&format!(
                                            "d({}, {})^{p} at step {t}",
                                            left.label(t, i),
                                            right.label(t, j)
                                        ))
                                    })
                                    .collect::<Result<Vec<_>>>()
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Some(tables))
            }
            CostSpec::Separable(tables) => {
                if tables.len() != left.len() {
                    return Err(Error::IncompleteCost(format!(
                        "{} step tables for {} steps",
                        tables.len(),
                        left.len()
                    )));
                }
                for (t, table) in tables.iter().enumerate() {
                    if table.len() != left.alphabet_len(t) || table.iter().any(|r| r.len() != right.alphabet_len(t)) {
                        return Err(Error::IncompleteCost(format!(
                            "step {t} table must be {}x{}",
                            left.alphabet_len(t),
                            right.alphabet_len(t)
                        )));
                    }
                }
                Ok(Some(tables.clone()))
            }
            CostSpec::General(_) => Ok(None),
        }
    }

    /// Evaluates the cost of full path pairs.
    pub fn evaluator(&self, left: &PathSpace, right: &PathSpace) -> Result<PathCost<'_>> {
        Ok(match self.step_tables(left, right)? {
            Some(tables) => PathCost::Separable(tables),
            None => match self {
                CostSpec::General(table) => PathCost::General(table),
                _ => unreachable!("separable specs always expand"),
            },
        })
    }
}

pub enum PathCost<'a> {
    Separable(Vec<Vec<Vec<Rational>>>),
    General(&'a BTreeMap<PathPair, Rational>),
}

impl PathCost<'_> {
    pub fn cost(&self, x: &[usize], y: &[usize]) -> Result<Rational> {
        match self {
            PathCost::Separable(tables) => Ok(x.iter().zip(y).enumerate().map(|(t, (&i, &j))| &tables[t][i][j]).sum()),
            PathCost::General(table) => table
                .get(&(x.to_vec(), y.to_vec()))
                .cloned()
                .ok_or_else(|| Error::IncompleteCost(format!("no cost for {x:?} / {y:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Certificate {
    /// Optimal dual potentials of the transportation problem.
    Duals { rows: Vec<(Path, Rational)>, cols: Vec<(Path, Rational)> },
    /// Value-to-go at every pair of positive histories.
    Stagewise { values: BTreeMap<PathPair, Rational> },
    /// Sizes of the exhaustive search.
    Enumeration { subproblems: usize, vertices: u128 },
    /// Basic solution of the flat linear program.
    Linear { variables: usize, constraints: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveResult {
    pub value: Rational,
    pub optimizer: Coupling,
    pub certificate: Certificate,
}

fn check_steps(mu: &PathMeasure, nu: &PathMeasure) -> Result<()> {
    if mu.steps() != nu.steps() {
        return Err(Error::DimensionMismatch(format!("measures have {} and {} steps", mu.steps(), nu.steps())));
    }
    Ok(())
}

/// Classical optimal transport over all couplings.
pub fn solve_kantorovich(mu: &PathMeasure, nu: &PathMeasure, cost: &CostSpec) -> Result<SolveResult> {
    check_steps(mu, nu)?;
    let eval = cost.evaluator(mu.space(), nu.space())?;
    let xs: Vec<&Path> = mu.support().collect();
    let ys: Vec<&Path> = nu.support().collect();
    let table = xs
        .iter()
        .map(|x| ys.iter().map(|y| eval.cost(x, y)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Rational> = xs.iter().map(|x| mu.mass_of(x)).collect();
    let cols: Vec<Rational> = ys.iter().map(|y| nu.mass_of(y)).collect();
    let sol = solve_transport(&rows, &cols, &table)?;
    let optimizer = Coupling::new(
        mu.space().clone(),
        nu.space().clone(),
        sol.flows.iter().map(|((i, j), f)| ((xs[*i].clone(), ys[*j].clone()), f.clone())),
    )?;
    Ok(SolveResult {
        value: sol.value,
        optimizer,
        certificate: Certificate::Duals {
            rows: xs.iter().map(|x| (*x).clone()).zip(sol.row_potentials).collect(),
            cols: ys.iter().map(|y| (*y).clone()).zip(sol.col_potentials).collect(),
        },
    })
}

/// Bicausal optimal transport for stepwise-separable costs by backward
/// induction over pairs of positive histories.
pub fn solve_bicausal_dp(mu: &PathMeasure, nu: &PathMeasure, cost: &CostSpec) -> Result<SolveResult> {
    check_steps(mu, nu)?;
    let tables = cost.step_tables(mu.space(), nu.space())?.ok_or(Error::NonSeparableCost)?;
    let n = mu.steps();
    let mut values: BTreeMap<PathPair, Rational> = BTreeMap::new();
    let mut plans: BTreeMap<PathPair, StagePlan> = BTreeMap::new();
    for t in (0..n).rev() {
        let mk = mu.step_kernel(t);
        let nk = nu.step_kernel(t);
        let pairs: Vec<(&Path, &Path)> = mk.laws.keys().flat_map(|xh| nk.laws.keys().map(move |yh| (xh, yh))).collect();
        let next = &values;
        let solved = pairs
            .par_iter()
            .map(|&(xh, yh)| {
                let (a, b) = (&mk.laws[xh], &nk.laws[yh]);
                let rows: Vec<Rational> = a.values().cloned().collect();
                let cols: Vec<Rational> = b.values().cloned().collect();
                let table: Vec<Vec<Rational>> = a
                    .keys()
                    .map(|&i| {
                        b.keys()
                            .map(|&j| {
                                let mut c = tables[t][i][j].clone();
                                if t + 1 < n {
                                    let mut x = xh.clone();
                                    x.push(i);
                                    let mut y = yh.clone();
                                    y.push(j);
                                    c += &next[&(x, y)];
                                }
                                c
                            })
                            .collect()
                    })
                    .collect();
                let sol = solve_transport(&rows, &cols, &table)?;
                let ai: Vec<usize> = a.keys().copied().collect();
                let bi: Vec<usize> = b.keys().copied().collect();
                let plan: StagePlan = sol.flows.into_iter().map(|((i, j), f)| ((ai[i], bi[j]), f)).collect();
                Ok(((xh.clone(), yh.clone()), sol.value, plan))
            })
            .collect::<Result<Vec<_>>>()?;
        for (key, v, plan) in solved {
            values.insert(key.clone(), v);
            plans.insert(key, plan);
        }
    }
    let value = values[&(Vec::new(), Vec::new())].clone();
    let optimizer = Coupling::from_stages(mu, nu, |xh, yh| Ok(plans[&(xh.to_vec(), yh.to_vec())].clone()))?;
    Ok(SolveResult { value, optimizer, certificate: Certificate::Stagewise { values } })
}

/// `AW_p^p(mu, nu)`: bicausal transport cost of `sum_t d_t^p`.
pub fn adapted_wasserstein(mu: &PathMeasure, nu: &PathMeasure, p: &Exponent) -> Result<Rational> {
    Ok(solve_bicausal_dp(mu, nu, &CostSpec::MetricPower(p.clone()))?.value)
}

/// `W_p^p(mu, nu)` for the product metric on paths.
pub fn wasserstein(mu: &PathMeasure, nu: &PathMeasure, p: &Exponent) -> Result<Rational> {
    Ok(solve_kantorovich(mu, nu, &CostSpec::MetricPower(p.clone()))?.value)
}

/// Largest number of coupling variables accepted by [`solve_bicausal_flat`].
pub const FLAT_LIMIT: usize = 400;

/// Bicausal optimal transport as a single linear program over the flat
/// constraint system. Works for any cost table; meant for small instances.
pub fn solve_bicausal_flat(mu: &PathMeasure, nu: &PathMeasure, cost: &CostSpec) -> Result<SolveResult> {
    check_steps(mu, nu)?;
    let system = bicausal_constraints(mu, nu)?;
    let vars = system.variables.len();
    if vars > FLAT_LIMIT {
        return Err(Error::TooLarge { work: vars as u128, limit: FLAT_LIMIT as u128 });
    }
    let eval = cost.evaluator(mu.space(), nu.space())?;
    let c = system.variables.iter().map(|(x, y)| eval.cost(x, y)).collect::<Result<Vec<_>>>()?;
    let rows: Vec<(Vec<(usize, Rational)>, Rational)> =
        system.constraints.iter().map(|k| (k.coeffs.clone(), k.rhs.clone())).collect();
    let sol = lp::minimize(vars, &rows, &c)?;
    let optimizer = Coupling::new(
        mu.space().clone(),
        nu.space().clone(),
        system.variables.iter().cloned().zip(sol.x).filter(|(_, v)| !v.is_zero()),
    )?;
    Ok(SolveResult {
        value: sol.value,
        optimizer,
        certificate: Certificate::Linear { variables: vars, constraints: rows.len() },
    })
}

/// Cost of a coupling under a cost specification.
pub fn coupling_cost(pi: &Coupling, cost: &CostSpec) -> Result<Rational> {
    let eval = cost.evaluator(pi.left(), pi.right())?;
    pi.integrate(|x, y| eval.cost(x, y))
}

/// Spaces must agree step by step in metric and dimension for metric costs.
pub fn same_geometry(left: &Arc<PathSpace>, right: &Arc<PathSpace>) -> bool {
    left.len() == right.len()
        && (0..left.len()).all(|t| {
            left.step(t).metric == right.step(t).metric && left.step(t).dimension() == right.step(t).dimension()
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn aw_fixture() -> (PathMeasure, PathMeasure) {
        let xs = Arc::new(PathSpace::from_coordinates(&[&["0"], &["-1", "1"]]).unwrap());
        let ys = Arc::new(PathSpace::from_coordinates(&[&["-1/2", "1/2"], &["-1", "1"]]).unwrap());
        let mu = PathMeasure::new(xs, [(vec![0, 0], ratio(1, 2)), (vec![0, 1], ratio(1, 2))]).unwrap();
        let nu = PathMeasure::new(ys, [(vec![0, 0], ratio(1, 2)), (vec![1, 1], ratio(1, 2))]).unwrap();
        (mu, nu)
    }

    #[test]
    fn information_gap_on_fixture() {
        let (mu, nu) = aw_fixture();
        let cost = CostSpec::MetricPower(Exponent::integer(1));
        let kp = solve_kantorovich(&mu, &nu, &cost).unwrap();
        let dp = solve_bicausal_dp(&mu, &nu, &cost).unwrap();
        let oracle = solve_bicausal_oracle(&mu, &nu, &cost).unwrap();
        let flat = solve_bicausal_flat(&mu, &nu, &cost).unwrap();
        assert_eq!(kp.value, ratio(1, 2));
        assert_eq!(dp.value, ratio(3, 2));
        assert_eq!(oracle.value, dp.value);
        assert_eq!(flat.value, dp.value);
        assert!(dp.optimizer.is_bicausal().holds());
        assert_eq!(coupling_cost(&dp.optimizer, &cost).unwrap(), dp.value);
        assert_eq!(coupling_cost(&kp.optimizer, &cost).unwrap(), kp.value);
    }

    #[test]
    fn general_cost_goes_to_oracle() {
        let s = Arc::new(PathSpace::from_coordinates(&[&["0", "1"], &["0", "1"]]).unwrap());
        let mu = PathMeasure::uniform(s.clone(), &s.paths()).unwrap();
        let mut table = BTreeMap::new();
        for x in s.paths() {
            for y in s.paths() {
                let c = if x[1] != y[1] && x[0] == y[0] { int(1) } else { int(0) };
                table.insert((x.clone(), y.clone()), c);
            }
        }
        let cost = CostSpec::General(table);
        assert_eq!(solve_bicausal_dp(&mu, &mu, &cost), Err(Error::NonSeparableCost));
        let oracle = solve_bicausal_oracle(&mu, &mu, &cost).unwrap();
        let flat = solve_bicausal_flat(&mu, &mu, &cost).unwrap();
        assert_eq!(oracle.value, flat.value);
        assert_eq!(oracle.value, int(0));
    }

    #[test]
    fn dirac_pair_pays_pathwise_cost() {
        let s = Arc::new(PathSpace::from_coordinates(&[&["0", "3"], &["0", "4"]]).unwrap());
        let mu = PathMeasure::dirac(s.clone(), vec![0, 0]).unwrap();
        let nu = PathMeasure::dirac(s, vec![1, 1]).unwrap();
        let aw = adapted_wasserstein(&mu, &nu, &Exponent::integer(2)).unwrap();
        assert_eq!(aw, int(25));
    }
}
