//! Dense two-phase simplex over exact rationals with Bland's rule.

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LpSolution {
    pub value: Rational,
    pub x: Vec<Rational>,
}

/// Minimizes `c . x` subject to `A x = b`, `x >= 0`. `rows` holds sparse
/// rows of `A` as (column, coefficient) pairs.
pub fn minimize(vars: usize, rows: &[(Vec<(usize, Rational)>, Rational)], c: &[Rational]) -> Result<LpSolution> {
    let m = rows.len();
    // Columns: vars originals, then m artificials, then the right-hand side.
    let width = vars + m + 1;
    let rhs = width - 1;
    let mut tab: Vec<Vec<Rational>> = Vec::with_capacity(m + 1);
    for (k, (coeffs, b)) in rows.iter().enumerate() {
        let mut row = vec![Rational::zero(); width];
        for (j, a) in coeffs {
            row[*j] += a;
        }
        row[rhs] = b.clone();
        if b.is_negative() {
            for v in row.iter_mut() {
                *v = -v.clone();
            }
        }
        row[vars + k] = Rational::one();
        tab.push(row);
    }
    let mut basis: Vec<usize> = (vars..vars + m).collect();

    // Phase one: minimize the sum of artificials.
    let mut obj = vec![Rational::zero(); width];
    for row in &tab {
        for j in 0..vars {
            obj[j] -= &row[j];
        }
        obj[rhs] -= &row[rhs];
    }
    tab.push(obj);
    run(&mut tab, &mut basis, vars + m);
    if !tab[m][rhs].is_zero() {
        return Err(Error::InvalidArgument("linear program is infeasible".into()));
    }

    // Drive artificials out of the basis; rows where that fails are redundant.
    let mut k = 0;
    while k < basis.len() {
        if basis[k] >= vars {
            match (0..vars).find(|&j| !tab[k][j].is_zero()) {
                Some(j) => pivot(&mut tab, &mut basis, k, j),
                None => {
                    tab.remove(k);
                    basis.remove(k);
                    continue;
                }
            }
        }
        k += 1;
    }
    let m = basis.len();

    // Phase two on the original objective, artificials barred from entry.
    let mut obj = vec![Rational::zero(); width];
    obj[..vars].clone_from_slice(c);
    for (k, &bj) in basis.iter().enumerate() {
        let factor = obj[bj].clone();
        if !factor.is_zero() {
            for j in 0..width {
                let delta = &factor * &tab[k][j];
                obj[j] -= delta;
            }
        }
    }
    tab[m] = obj;
    run(&mut tab, &mut basis, vars);

    let mut x = vec![Rational::zero(); vars];
    for (k, &bj) in basis.iter().enumerate() {
        x[bj] = tab[k][rhs].clone();
    }
    let value = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    Ok(LpSolution { value, x })
}

fn run(tab: &mut [Vec<Rational>], basis: &mut [usize], allowed: usize) {
    let m = basis.len();
    let rhs = tab[0].len() - 1;
    loop {
        let Some(enter) = (0..allowed).find(|&j| tab[m][j].is_negative()) else {
            return;
        };
        let mut leave: Option<(usize, Rational)> = None;
        for k in 0..m {
            if tab[k][enter].is_positive() {
                let ratio = &tab[k][rhs] / &tab[k][enter];
                let better = match &leave {
                    None => true,
                    Some((l, r)) => ratio < *r || (ratio == *r && basis[k] < basis[*l]),
                };
                if better {
                    leave = Some((k, ratio));
                }
            }
        }
        let (row, _) = leave.expect("objective bounded below on a bounded feasible set");
        pivot(tab, basis, row, enter);
    }
}

fn pivot(tab: &mut [Vec<Rational>], basis: &mut [usize], row: usize, col: usize) {
    let p = tab[row][col].clone();
    for v in tab[row].iter_mut() {
        *v /= &p;
    }
    let pivot_row = tab[row].clone();
    for (k, r) in tab.iter_mut().enumerate() {
        if k == row || r[col].is_zero() {
            continue;
        }
        let factor = r[col].clone();
        for (v, pv) in r.iter_mut().zip(&pivot_row) {
            if !pv.is_zero() {
                *v -= &factor * pv;
            }
        }
    }
    basis[row] = col;
}
