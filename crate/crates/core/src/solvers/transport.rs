//! Exact transportation simplex.
//!
//! Masses and costs are scaled to integers by their common denominators and
//! the primal simplex runs on the spanning-tree basis of the bipartite
//! graph, started from a least-cost basis. Entering cell: most negative
//! reduced cost, smallest index `i * n + j` among ties. After a run of
//! degenerate pivots the entering rule drops to Bland's (smallest index with
//! negative reduced cost) until the objective strictly decreases, so no
//! cycling occurs. Leaving cell: smallest flow on the backward part of the
//! cycle, smallest index among ties. The pivot sequence is fully determined
//! by the input.

use std::collections::{BTreeMap, VecDeque};

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::measure::common_denominator;
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportSolution {
    pub value: Rational,
    /// Positive flows by (row, column).
    pub flows: BTreeMap<(usize, usize), Rational>,
    /// Dual potentials: `u_i + v_j <= c_ij` everywhere, with equality on
    /// the final basis and `value = sum a_i u_i + sum b_j v_j`.
    pub row_potentials: Vec<Rational>,
    pub col_potentials: Vec<Rational>,
    pub pivots: usize,
}

/// Integer arithmetic used by the simplex; overflow reported as `None`.
trait Scalar: Clone + Ord + Zero {
    fn from_big(v: &BigInt) -> Option<Self>;
    fn to_big(&self) -> BigInt;
    fn plus(&self, o: &Self) -> Option<Self>;
    fn minus(&self, o: &Self) -> Option<Self>;
}

impl Scalar for i128 {
    fn from_big(v: &BigInt) -> Option<Self> {
        // Headroom so that sums of a few terms cannot overflow unnoticed.
        v.to_i128().filter(|x| x.unsigned_abs() < (1u128 << 100))
    }
    fn to_big(&self) -> BigInt {
        BigInt::from(*self)
    }
    fn plus(&self, o: &Self) -> Option<Self> {
        self.checked_add(*o)
    }
    fn minus(&self, o: &Self) -> Option<Self> {
        self.checked_sub(*o)
    }
}

impl Scalar for BigInt {
    fn from_big(v: &BigInt) -> Option<Self> {
        Some(v.clone())
    }
    fn to_big(&self) -> BigInt {
        self.clone()
    }
    fn plus(&self, o: &Self) -> Option<Self> {
        Some(self + o)
    }
    fn minus(&self, o: &Self) -> Option<Self> {
        Some(self - o)
    }
}

struct IntSolution {
    basis: Vec<(usize, usize)>,
    flows: Vec<BigInt>,
    u: Vec<BigInt>,
    v: Vec<BigInt>,
    pivots: usize,
}

/// Minimizes `sum c_ij f_ij` over nonnegative `f` with row sums `rows` and
/// column sums `cols`.
pub fn solve_transport(rows: &[Rational], cols: &[Rational], cost: &[Vec<Rational>]) -> Result<TransportSolution> {
    if cost.len() != rows.len() || cost.iter().any(|r| r.len() != cols.len()) {
        return Err(Error::DimensionMismatch(format!("cost table must be {}x{}", rows.len(), cols.len())));
    }
    if rows.iter().chain(cols).any(|m| m.is_negative()) {
        return Err(Error::InvalidArgument("transport masses must be nonnegative".into()));
    }
    let row_total: Rational = rows.iter().sum();
    let col_total: Rational = cols.iter().sum();
    if row_total != col_total {
        return Err(Error::UnbalancedMasses { rows: Box::new(row_total), cols: Box::new(col_total) });
    }

    let live_rows: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].is_positive()).collect();
    let live_cols: Vec<usize> = (0..cols.len()).filter(|&j| cols[j].is_positive()).collect();

    let mass_den = common_denominator(rows.iter().chain(cols));
    let cost_den = common_denominator(cost.iter().flatten());
    let scale_mass = |m: &Rational| (m * Rational::from_integer(mass_den.clone())).to_integer();
    let scale_cost = |c: &Rational| (c * Rational::from_integer(cost_den.clone())).to_integer();

    let a: Vec<BigInt> = live_rows.iter().map(|&i| scale_mass(&rows[i])).collect();
    let b: Vec<BigInt> = live_cols.iter().map(|&j| scale_mass(&cols[j])).collect();
    let c: Vec<Vec<BigInt>> =
        live_rows.iter().map(|&i| live_cols.iter().map(|&j| scale_cost(&cost[i][j])).collect()).collect();

    let int = if a.is_empty() {
        IntSolution { basis: vec![], flows: vec![], u: vec![], v: vec![], pivots: 0 }
    } else {
        match simplex::<i128>(&a, &b, &c) {
            Some(sol) => sol,
            None => simplex::<BigInt>(&a, &b, &c).expect("big integers do not overflow"),
        }
    };

    let to_rat = |x: &BigInt, den: &BigInt| Rational::new(x.clone(), den.clone());
    let mut flows = BTreeMap::new();
    let mut value = Rational::zero();
    for ((i, j), f) in int.basis.iter().zip(&int.flows) {
        if f.is_zero() {
            continue;
        }
        let f = to_rat(f, &mass_den);
        value += &f * &cost[live_rows[*i]][live_cols[*j]];
        flows.insert((live_rows[*i], live_cols[*j]), f);
    }

    let mut col_potentials = vec![None; cols.len()];
    for (k, &j) in live_cols.iter().enumerate() {
        col_potentials[j] = Some(to_rat(&int.v[k], &cost_den));
    }
    let mut row_potentials = vec![None; rows.len()];
    for (k, &i) in live_rows.iter().enumerate() {
        row_potentials[i] = Some(to_rat(&int.u[k], &cost_den));
    }
    // Rows and columns without mass get the tightest feasible potential.
    let row_potentials: Vec<Rational> = row_potentials
        .into_iter()
        .enumerate()
        .map(|(i, u)| {
            u.unwrap_or_else(|| {
                live_cols
                    .iter()
                    .map(|&j| &cost[i][j] - col_potentials[j].as_ref().unwrap())
                    .min()
                    .unwrap_or_else(Rational::zero)
            })
        })
        .collect();
    let col_potentials: Vec<Rational> = col_potentials
        .into_iter()
        .enumerate()
        .map(|(j, v)| {
            v.unwrap_or_else(|| {
                (0..rows.len()).map(|i| &cost[i][j] - &row_potentials[i]).min().unwrap_or_else(Rational::zero)
            })
        })
        .collect();

    Ok(TransportSolution { value, flows, row_potentials, col_potentials, pivots: int.pivots })
}

fn simplex<S: Scalar>(a: &[BigInt], b: &[BigInt], c: &[Vec<BigInt>]) -> Option<IntSolution> {
    let (m, n) = (a.len(), b.len());
    let a: Vec<S> = a.iter().map(S::from_big).collect::<Option<_>>()?;
    let b: Vec<S> = b.iter().map(S::from_big).collect::<Option<_>>()?;
    let c: Vec<Vec<S>> =
        c.iter().map(|r| r.iter().map(S::from_big).collect::<Option<Vec<_>>>()).collect::<Option<_>>()?;

    // Least-cost start: cells in (cost, index) order, crossing out one line
    // per allocation, gives exactly m + n - 1 basic cells forming a tree.
    let mut order: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    order.sort_by(|x, y| c[x.0][x.1].cmp(&c[y.0][y.1]).then(x.cmp(y)));
    let mut basis: Vec<(usize, usize)> = Vec::with_capacity(m + n - 1);
    let mut flow: Vec<S> = Vec::with_capacity(m + n - 1);
    let (mut ra, mut cb) = (a.clone(), b.clone());
    let (mut row_open, mut col_open) = (vec![true; m], vec![true; n]);
    let (mut rows_left, mut cols_left) = (m, n);
    for (i, j) in order {
        if !row_open[i] || !col_open[j] {
            continue;
        }
        let x = if ra[i] < cb[j] { ra[i].clone() } else { cb[j].clone() };
        ra[i] = ra[i].minus(&x)?;
        cb[j] = cb[j].minus(&x)?;
        basis.push((i, j));
        flow.push(x);
        if rows_left == 1 && cols_left == 1 {
            break;
        }
        if (ra[i].is_zero() && rows_left > 1) || cols_left == 1 {
            row_open[i] = false;
            rows_left -= 1;
        } else {
            col_open[j] = false;
            cols_left -= 1;
        }
    }

    let degenerate_limit = m + n;
    let mut degenerate_run = 0;
    let mut pivots = 0;
    loop {
        let adj = adjacency(m, n, &basis);
        let (u, v) = potentials(m, n, &basis, &c, &adj)?;
        let bland = degenerate_run >= degenerate_limit;
        let mut entering: Option<((usize, usize), S)> = None;
        'scan: for i in 0..m {
            for j in 0..n {
                let reduced = c[i][j].minus(&u[i])?.minus(&v[j])?;
                if reduced < S::zero() && entering.as_ref().is_none_or(|(_, best)| reduced < *best) {
                    entering = Some(((i, j), reduced));
                    if bland {
                        break 'scan;
                    }
                }
            }
        }
        let entering = entering.map(|(cell, _)| cell);
        let Some((ei, ej)) = entering else {
            return Some(IntSolution {
                basis,
                flows: flow.iter().map(S::to_big).collect(),
                u: u.iter().map(S::to_big).collect(),
                v: v.iter().map(S::to_big).collect(),
                pivots,
            });
        };
        // Tree path from column ej back to row ei closes the cycle; edges on
        // it alternate minus, plus, minus, ... starting next to the entering
        // cell.
        let path = tree_path(m, n, &adj, m + ej, ei);
        let mut leave: Option<usize> = None;
        for (k, &e) in path.iter().enumerate() {
            if k % 2 == 0 {
                let better = match leave {
                    None => true,
                    Some(l) => flow[e] < flow[l] || (flow[e] == flow[l] && index(basis[e], n) < index(basis[l], n)),
                };
                if better {
                    leave = Some(e);
                }
            }
        }
        let leave = leave.expect("cycle has a backward edge");
        let theta = flow[leave].clone();
        if theta.is_zero() {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
        for (k, &e) in path.iter().enumerate() {
            flow[e] = if k % 2 == 0 { flow[e].minus(&theta)? } else { flow[e].plus(&theta)? };
        }
        basis[leave] = (ei, ej);
        flow[leave] = theta;
        pivots += 1;
    }
}

fn index((i, j): (usize, usize), n: usize) -> usize {
    i * n + j
}

/// Node ids: rows `0..m`, columns `m..m+n`. Entries are (neighbor, edge).
fn adjacency(m: usize, n: usize, basis: &[(usize, usize)]) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); m + n];
    for (e, &(i, j)) in basis.iter().enumerate() {
        adj[i].push((m + j, e));
        adj[m + j].push((i, e));
    }
    adj
}

fn potentials<S: Scalar>(
    m: usize,
    n: usize,
    basis: &[(usize, usize)],
    c: &[Vec<S>],
    adj: &[Vec<(usize, usize)>],
) -> Option<(Vec<S>, Vec<S>)> {
    let mut pot: Vec<Option<S>> = vec![None; m + n];
    pot[0] = Some(S::zero());
    let mut queue = VecDeque::from([0usize]);
    while let Some(node) = queue.pop_front() {
        let here = pot[node].clone().unwrap();
        for &(next, e) in &adj[node] {
            if pot[next].is_none() {
                let (i, j) = basis[e];
                pot[next] = Some(c[i][j].minus(&here)?);
                queue.push_back(next);
            }
        }
    }
    let pot: Vec<S> = pot.into_iter().map(|p| p.expect("basis spans all nodes")).collect();
    let v = pot[m..].to_vec();
    let mut u = pot;
    u.truncate(m);
    Some((u, v))
}

/// Edges on the tree path from `from` to `to`, in order.
fn tree_path(m: usize, n: usize, adj: &[Vec<(usize, usize)>], from: usize, to: usize) -> Vec<usize> {
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; m + n];
    let mut seen = vec![false; m + n];
    seen[from] = true;
    let mut queue = VecDeque::from([from]);
    while let Some(node) = queue.pop_front() {
        if node == to {
            break;
        }
        for &(next, e) in &adj[node] {
            if !seen[next] {
                seen[next] = true;
                parent[next] = Some((node, e));
                queue.push_back(next);
            }
        }
    }
    let mut path = Vec::new();
    let mut node = to;
    while node != from {
        let (prev, e) = parent[node].expect("tree is connected");
        path.push(e);
        node = prev;
    }
    path.reverse();
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn table(rows: &[&[i64]]) -> Vec<Vec<Rational>> {
        rows.iter().map(|r| r.iter().map(|&c| int(c)).collect()).collect()
    }

    fn assert_certified(sol: &TransportSolution, rows: &[Rational], cols: &[Rational], cost: &[Vec<Rational>]) {
        let mut dual = Rational::zero();
        for (i, u) in sol.row_potentials.iter().enumerate() {
            dual += &rows[i] * u;
            for (j, v) in sol.col_potentials.iter().enumerate() {
                assert!(u + v <= cost[i][j], "dual infeasible at ({i},{j})");
            }
        }
        for (j, v) in sol.col_potentials.iter().enumerate() {
            dual += &cols[j] * v;
        }
        assert_eq!(dual, sol.value);
    }

    #[test]
    fn permutation_match_costs_nothing() {
        let h = vec![ratio(1, 2), ratio(1, 2)];
        let cost = table(&[&[0, 1], &[1, 0]]);
        let sol = solve_transport(&h, &h, &cost).unwrap();
        assert_eq!(sol.value, int(0));
        assert_certified(&sol, &h, &h, &cost);
    }

    #[test]
    fn skewed_two_by_two() {
        let rows = vec![ratio(3, 4), ratio(1, 4)];
        let cols = vec![ratio(1, 4), ratio(3, 4)];
        let cost = table(&[&[0, 1], &[1, 0]]);
        let sol = solve_transport(&rows, &cols, &cost).unwrap();
        assert_eq!(sol.value, ratio(1, 2));
        assert_certified(&sol, &rows, &cols, &cost);
    }

    #[test]
    fn zero_rows_and_imbalance() {
        let rows = vec![int(0), int(1)];
        let cols = vec![ratio(1, 3), ratio(2, 3), int(0)];
        let cost = table(&[&[5, 1, 0], &[2, 3, 7]]);
        let sol = solve_transport(&rows, &cols, &cost).unwrap();
        assert_eq!(sol.value, ratio(8, 3));
        assert_certified(&sol, &rows, &cols, &cost);
        assert!(matches!(
            solve_transport(&[int(1)], &[ratio(1, 2)], &table(&[&[0]])),
            Err(Error::UnbalancedMasses { .. })
        ));
    }

    #[test]
    fn huge_entries_fall_back_to_big_integers() {
        let big = Rational::new(BigInt::from(1u8) << 120, BigInt::from(3));
        let rows = vec![ratio(1, 2), ratio(1, 2)];
        let cost = vec![vec![big.clone(), int(0)], vec![int(0), big]];
        let sol = solve_transport(&rows, &rows, &cost).unwrap();
        assert_eq!(sol.value, int(0));
    }
}
