use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::measure::PathMeasure;
use crate::rational::Rational;
use crate::space::Path;

/// A history pair whose conditional laws carry different atom masses, so no
/// mass-preserving bijection between their next steps exists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeasibilityWitness {
    pub x_history: Vec<String>,
    pub y_history: Vec<String>,
    /// Sorted conditional atom masses after each history.
    pub x_masses: Vec<Rational>,
    pub y_masses: Vec<Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Feasibility {
    /// A biadapted bijection of supports pushing `mu` to `nu`.
    Feasible {
        map: BTreeMap<Path, Path>,
    },
    Infeasible(FeasibilityWitness),
}

/// Shape of the subtree below a history: sorted list of
/// (conditional mass, child shape).
type Shapes = Vec<BTreeMap<Path, usize>>;

fn shapes(mu: &PathMeasure, intern: &mut [BTreeMap<Vec<(Rational, usize)>, usize>]) -> Shapes {
    let n = mu.steps();
    let mut out: Shapes = vec![BTreeMap::new(); n + 1];
    out[n] = mu.support().map(|p| (p.clone(), 0)).collect();
    for t in (0..n).rev() {
        for (h, law) in mu.step_kernel(t).laws {
            let mut sig: Vec<(Rational, usize)> = law
                .into_iter()
                .map(|(x, m)| {
                    let mut hx = h.clone();
                    hx.push(x);
                    (m, out[t + 1][&hx])
                })
                .collect();
            sig.sort();
            let next = intern[t].len();
            let id = *intern[t].entry(sig).or_insert(next);
            out[t].insert(h, id);
        }
    }
    out
}

struct Child {
    point: usize,
    mass: Rational,
    shape: usize,
}

fn children(mu: &PathMeasure, shapes: &Shapes, h: &Path) -> Vec<Child> {
    let t = h.len();
    mu.conditional(h)
        .expect("positive history")
        .into_iter()
        .map(|(x, mass)| {
            let mut hx = h.clone();
            hx.push(x);
            Child { point: x, mass, shape: shapes[t + 1][&hx] }
        })
        .collect()
}

/// Pairs children with equal (mass, shape), each side in point order.
fn match_children(a: &[Child], b: &[Child]) -> (Vec<(usize, usize)>, Vec<usize>, Vec<usize>) {
    let mut used = vec![false; b.len()];
    let mut pairs = Vec::new();
    let mut left_over = Vec::new();
    for (i, c) in a.iter().enumerate() {
        match (0..b.len()).find(|&j| !used[j] && b[j].mass == c.mass && b[j].shape == c.shape) {
            Some(j) => {
                used[j] = true;
                pairs.push((i, j));
            }
            None => left_over.push(i),
        }
    }
    let right_over = (0..b.len()).filter(|&j| !used[j]).collect();
    (pairs, left_over, right_over)
}

/// Decides whether some biadapted bijection `T` between the supports has
/// `T_* mu = nu`; this holds iff the two mass-labelled history trees are
/// isomorphic. On failure the witness is a reachable history pair with
/// different conditional mass multisets.
pub fn biadapted_feasibility(mu: &PathMeasure, nu: &PathMeasure) -> Result<Feasibility> {
    let n = mu.steps();
    if nu.steps() != n {
        return Err(Error::DimensionMismatch(format!("measures have {} and {} steps", n, nu.steps())));
    }
    let mut intern = vec![BTreeMap::new(); n + 1];
    let sx = shapes(mu, &mut intern);
    let sy = shapes(nu, &mut intern);

    if sx[0][&Vec::new()] == sy[0][&Vec::new()] {
        let mut map = BTreeMap::new();
        let mut frontier: Vec<(Path, Path)> = vec![(Vec::new(), Vec::new())];
        while let Some((xh, yh)) = frontier.pop() {
            if xh.len() == n {
                map.insert(xh, yh);
                continue;
            }
            let a = children(mu, &sx, &xh);
            let b = children(nu, &sy, &yh);
            let (pairs, _, _) = match_children(&a, &b);
            for (i, j) in pairs.into_iter().rev() {
                let mut x = xh.clone();
                x.push(a[i].point);
                let mut y = yh.clone();
                y.push(b[j].point);
                frontier.push((x, y));
            }
        }
        return Ok(Feasibility::Feasible { map });
    }

    let (mut xh, mut yh): (Path, Path) = (Vec::new(), Vec::new());
    loop {
        let a = children(mu, &sx, &xh);
        let b = children(nu, &sy, &yh);
        let mut am: Vec<Rational> = a.iter().map(|c| c.mass.clone()).collect();
        let mut bm: Vec<Rational> = b.iter().map(|c| c.mass.clone()).collect();
        am.sort();
        bm.sort();
        if am != bm {
            return Ok(Feasibility::Infeasible(FeasibilityWitness {
                x_history: mu.space().labels(&xh),
                y_history: nu.space().labels(&yh),
                x_masses: am,
                y_masses: bm,
            }));
        }
        let (_, left_over, right_over) = match_children(&a, &b);
        let (i, j) = left_over
            .iter()
            .find_map(|&i| right_over.iter().find(|&&j| b[j].mass == a[i].mass).map(|&j| (i, j)))
            .expect("equal mass multisets leave a same-mass mismatch");
        xh.push(a[i].point);
        yh.push(b[j].point);
    }
}
