//! Brute-force bicausal solver: every conditional transportation polytope is
//! replaced by the explicit list of its vertices.

use std::collections::{BTreeMap, BTreeSet};

use itertools::Itertools;
use num_traits::{Signed, Zero};

use crate::coupling::{Coupling, PathPair, StagePlan};
use crate::error::{Error, Result};
use crate::measure::{PathMeasure, StepLaw};
use crate::rational::Rational;
use crate::space::Path;

use super::{Certificate, CostSpec, SolveResult};

/// Bound on the summed spanning-tree counts of all conditional subproblems.
pub const ORACLE_LIMIT: u128 = 10_000;

/// Number of spanning trees of the complete bipartite graph `K_{m,n}`.
pub fn spanning_trees(m: usize, n: usize) -> u128 {
    if m == 0 || n == 0 {
        return 0;
    }
    (m as u128).saturating_pow(n as u32 - 1).saturating_mul((n as u128).saturating_pow(m as u32 - 1))
}

/// All vertices of the transportation polytope with margins `a` and `b`
/// (all entries positive), as sorted lists of positive cells.
pub fn transport_vertices(a: &[Rational], b: &[Rational]) -> Vec<Vec<((usize, usize), Rational)>> {
    let (m, n) = (a.len(), b.len());
    let cells: Vec<(usize, usize)> = (0..m).cartesian_product(0..n).collect();
    let mut out: BTreeSet<Vec<((usize, usize), Rational)>> = BTreeSet::new();
    for tree in cells.iter().copied().combinations(m + n - 1) {
        if !is_spanning_tree(m, n, &tree) {
            continue;
        }
        if let Some(flows) = tree_flows(a, b, &tree) {
            let vertex: Vec<_> = tree.iter().zip(flows).filter(|(_, f)| !f.is_zero()).map(|(c, f)| (*c, f)).collect();
            out.insert(vertex);
        }
    }
    out.into_iter().collect()
}

fn is_spanning_tree(m: usize, n: usize, edges: &[(usize, usize)]) -> bool {
    let mut parent: Vec<usize> = (0..m + n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(i, j) in edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, m + j));
        if ri == rj {
            return false;
        }
        parent[ri] = rj;
    }
    true
}

/// The unique flow supported on a spanning tree, if it is nonnegative.
fn tree_flows(a: &[Rational], b: &[Rational], tree: &[(usize, usize)]) -> Option<Vec<Rational>> {
    let m = a.len();
    let mut residual: Vec<Rational> = a.iter().chain(b).cloned().collect();
    let mut degree = vec![0usize; residual.len()];
    for &(i, j) in tree {
        degree[i] += 1;
        degree[m + j] += 1;
    }
    let mut flows = vec![None; tree.len()];
    let mut open = tree.len();
    while open > 0 {
        let (e, leaf, other) =
            tree.iter().enumerate().filter(|(e, _)| flows[*e].is_none()).find_map(|(e, &(i, j))| {
                if degree[i] == 1 {
                    Some((e, i, m + j))
                } else if degree[m + j] == 1 {
                    Some((e, m + j, i))
                } else {
                    None
                }
            })?;
        let f = residual[leaf].clone();
        if f.is_negative() {
            return None;
        }
        residual[other] -= &f;
        residual[leaf] = Rational::zero();
        degree[leaf] -= 1;
        degree[other] -= 1;
        flows[e] = Some(f);
        open -= 1;
    }
    if residual.iter().any(|r| !r.is_zero()) {
        return None;
    }
    flows.into_iter().collect()
}

struct Oracle<'a> {
    mu: &'a PathMeasure,
    nu: &'a PathMeasure,
    n: usize,
    step: Option<Vec<Vec<Vec<Rational>>>>,
    general: Option<&'a BTreeMap<PathPair, Rational>>,
    values: BTreeMap<PathPair, Rational>,
    plans: BTreeMap<PathPair, StagePlan>,
    vertices: u128,
}

impl Oracle<'_> {
    fn edge_cost(&self, x: &Path, y: &Path) -> Result<Rational> {
        let t = x.len() - 1;
        if let Some(tables) = &self.step {
            return Ok(tables[t][x[t]][y[t]].clone());
        }
        if t + 1 < self.n {
            return Ok(Rational::zero());
        }
        let table = self.general.expect("general cost present");
        table.get(&(x.clone(), y.clone())).cloned().ok_or_else(|| {
            Error::IncompleteCost(format!(
                "no cost for {:?} / {:?}",
                self.mu.space().labels(x),
                self.nu.space().labels(y)
            ))
        })
    }

    fn value(&mut self, xh: &Path, yh: &Path) -> Result<Rational> {
        if xh.len() == self.n {
            return Ok(Rational::zero());
        }
        let key = (xh.clone(), yh.clone());
        if let Some(v) = self.values.get(&key) {
            return Ok(v.clone());
        }
        let a: StepLaw = self.mu.conditional(xh).expect("positive history");
        let b: StepLaw = self.nu.conditional(yh).expect("positive history");
        let (ai, am): (Vec<usize>, Vec<Rational>) = a.into_iter().unzip();
        let (bi, bm): (Vec<usize>, Vec<Rational>) = b.into_iter().unzip();
        let mut best: Option<(Rational, StagePlan)> = None;
        for vertex in transport_vertices(&am, &bm) {
            self.vertices += 1;
            let mut total = Rational::zero();
            let mut plan = StagePlan::new();
            for ((i, j), f) in vertex {
                let mut x = xh.clone();
                x.push(ai[i]);
                let mut y = yh.clone();
                y.push(bi[j]);
                let c = self.edge_cost(&x, &y)? + self.value(&x, &y)?;
                total += &f * c;
                plan.insert((ai[i], bi[j]), f);
            }
            if best.as_ref().is_none_or(|(v, _)| total < *v) {
                best = Some((total, plan));
            }
        }
        let (v, plan) = best.expect("transportation polytope is nonempty");
        self.values.insert(key.clone(), v.clone());
        self.plans.insert(key, plan);
        Ok(v)
    }
}

/// Summed spanning-tree counts over all pairs of positive histories.
pub fn oracle_work(mu: &PathMeasure, nu: &PathMeasure) -> u128 {
    let mut work: u128 = 0;
    for t in 0..mu.steps() {
        let mk = mu.step_kernel(t);
        let nk = nu.step_kernel(t);
        for a in mk.laws.values() {
            for b in nk.laws.values() {
                work = work.saturating_add(spanning_trees(a.len(), b.len()));
            }
        }
    }
    work
}

pub fn solve_bicausal_oracle(mu: &PathMeasure, nu: &PathMeasure, cost: &CostSpec) -> Result<SolveResult> {
    if mu.steps() != nu.steps() {
        return Err(Error::DimensionMismatch(format!("measures have {} and {} steps", mu.steps(), nu.steps())));
    }
    let work = oracle_work(mu, nu);
    if work > ORACLE_LIMIT {
        return Err(Error::TooLarge { work, limit: ORACLE_LIMIT });
    }
    let step = cost.step_tables(mu.space(), nu.space())?;
    let general = match cost {
        CostSpec::General(table) => Some(table),
        _ => None,
    };
    let mut oracle =
        Oracle { mu, nu, n: mu.steps(), step, general, values: BTreeMap::new(), plans: BTreeMap::new(), vertices: 0 };
    let value = oracle.value(&Vec::new(), &Vec::new())?;
    let plans = oracle.plans;
    let optimizer = Coupling::from_stages(mu, nu, |xh, yh| Ok(plans[&(xh.to_vec(), yh.to_vec())].clone()))?;
    Ok(SolveResult {
        value,
        optimizer,
        certificate: Certificate::Enumeration { subproblems: plans.len(), vertices: oracle.vertices },
    })
}
