//! Exact probability measures on path spaces, their disintegrations, and the
//! elementary operations on them.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::rational::Rational;
use crate::space::{Path, PathSpace};

/// A one-step conditional law: point index at the next step to mass.
pub type StepLaw = BTreeMap<usize, Rational>;

/// Per-step product of point subsets.
pub type Cell = Vec<BTreeSet<usize>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathMeasure {
    space: Arc<PathSpace>,
    mass: BTreeMap<Path, Rational>,
}

/// Conditional laws of the remaining path given histories of length
/// `prefix_len`, defined only on histories of positive mass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Kernel {
    pub prefix_len: usize,
    pub conditionals: BTreeMap<Path, BTreeMap<Path, Rational>>,
}

/// One-step conditional laws given histories of length `prefix_len`.
/// `prefix_len == 0` holds the first-step marginal under the empty history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepKernel {
    pub prefix_len: usize,
    pub laws: BTreeMap<Path, StepLaw>,
}

/// Unnormalized restriction of a measure to a cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Restriction {
    pub mass: BTreeMap<Path, Rational>,
    pub total: Rational,
}

impl PathMeasure {
    /// Validates and canonicalizes: zero masses dropped, negatives and
    /// foreign paths rejected, total must be exactly one.
    pub fn new(space: Arc<PathSpace>, mass: impl IntoIterator<Item = (Path, Rational)>) -> Result<Self> {
        let mut canon: BTreeMap<Path, Rational> = BTreeMap::new();
        for (path, m) in mass {
            if !space.contains(&path) {
                let step = path
                    .iter()
                    .enumerate()
                    .find(|(t, &i)| *t >= space.len() || i >= space.alphabet_len(*t))
                    .map_or(path.len().min(space.len()), |(t, _)| t);
                return Err(Error::UnknownLabel { path: space.labels(&path), step });
            }
            if m.is_negative() {
                return Err(Error::NegativeMass { path: space.labels(&path) });
            }
            *canon.entry(path).or_insert_with(Rational::zero) += m;
        }
        canon.retain(|_, m| !m.is_zero());
        let total: Rational = canon.values().sum();
        if !total.is_one() {
            return Err(Error::MassSumNotOne { actual: total });
        }
        Ok(PathMeasure { space, mass: canon })
    }

    pub fn from_labels<S: AsRef<str>>(space: Arc<PathSpace>, entries: &[(Vec<S>, Rational)]) -> Result<Self> {
        let mass =
            entries.iter().map(|(labels, m)| Ok((space.path_of(labels)?, m.clone()))).collect::<Result<Vec<_>>>()?;
        PathMeasure::new(space, mass)
    }

    pub fn dirac(space: Arc<PathSpace>, path: Path) -> Result<Self> {
        PathMeasure::new(space, [(path, Rational::one())])
    }

    /// Uniform measure over the given (distinct) paths.
    pub fn uniform(space: Arc<PathSpace>, paths: &[Path]) -> Result<Self> {
        let w = Rational::new(1.into(), (paths.len() as u64).into());
        PathMeasure::new(space, paths.iter().map(|p| (p.clone(), w.clone())))
    }

    /// The law of the concatenated path `(a, b)` with `a` and `b` independent.
    pub fn product(a: &PathMeasure, b: &PathMeasure) -> Result<Self> {
        let space = Arc::new(a.space.concat(&b.space)?);
        let mut mass = Vec::with_capacity(a.mass.len() * b.mass.len());
        for (p, m) in &a.mass {
            for (q, n) in &b.mass {
                let mut path = p.clone();
                path.extend_from_slice(q);
                mass.push((path, m * n));
            }
        }
        PathMeasure::new(space, mass)
    }

    pub fn space(&self) -> &Arc<PathSpace> {
        &self.space
    }

    pub fn steps(&self) -> usize {
        self.space.len()
    }

    pub fn masses(&self) -> &BTreeMap<Path, Rational> {
        &self.mass
    }

    pub fn mass_of(&self, path: &[usize]) -> Rational {
        self.mass.get(path).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn support(&self) -> impl Iterator<Item = &Path> {
        self.mass.keys()
    }

    pub fn support_len(&self) -> usize {
        self.mass.len()
    }

    /// Masses of all positive length-`t` prefixes (`t == 0` gives the empty
    /// history with mass one).
    pub fn prefix_masses(&self, t: usize) -> BTreeMap<Path, Rational> {
        let mut out: BTreeMap<Path, Rational> = BTreeMap::new();
        for (p, m) in &self.mass {
            *out.entry(p[..t].to_vec()).or_insert_with(Rational::zero) += m;
        }
        out
    }

    /// Marginal law of the first `t` steps, on the truncated space.
    pub fn prefix_marginal(&self, t: usize) -> Result<PathMeasure> {
        let space = Arc::new(self.space.truncate(t)?);
        Ok(PathMeasure { space, mass: self.prefix_masses(t) })
    }

    /// Splits into the law of the first `t` steps and the conditional law of
    /// the rest given them.
    pub fn disintegrate(&self, t: usize) -> Result<(PathMeasure, Kernel)> {
        if t == 0 || t >= self.steps() {
            return Err(Error::StepOutOfRange { step: t, steps: self.steps() });
        }
        let prefix = self.prefix_marginal(t)?;
        let mut conditionals: BTreeMap<Path, BTreeMap<Path, Rational>> = BTreeMap::new();
        for (p, m) in &self.mass {
            let (head, tail) = p.split_at(t);
            let total = &prefix.mass[head];
            conditionals.entry(head.to_vec()).or_default().insert(tail.to_vec(), m / total);
        }
        Ok((prefix, Kernel { prefix_len: t, conditionals }))
    }

    /// Conditional law of step `t` (0-based) given each positive history of
    /// length `t`.
    pub fn step_kernel(&self, t: usize) -> StepKernel {
        let prefix = self.prefix_masses(t);
        let mut laws: BTreeMap<Path, StepLaw> = BTreeMap::new();
        for (p, m) in &self.mass {
            *laws.entry(p[..t].to_vec()).or_default().entry(p[t]).or_insert_with(Rational::zero) += m;
        }
        for (h, law) in laws.iter_mut() {
            let total = &prefix[h];
            for v in law.values_mut() {
                *v /= total;
            }
        }
        StepKernel { prefix_len: t, laws }
    }

    /// All one-step kernels, first-step marginal included.
    pub fn step_kernels(&self) -> Vec<StepKernel> {
        (0..self.steps()).map(|t| self.step_kernel(t)).collect()
    }

    /// Conditional next-step law after a positive-mass history.
    pub fn conditional(&self, history: &[usize]) -> Option<StepLaw> {
        let t = history.len();
        if t >= self.steps() {
            return None;
        }
        let mut law = StepLaw::new();
        let mut total = Rational::zero();
        for (p, m) in self.mass.range(history.to_vec()..) {
            if !p.starts_with(history) {
                break;
            }
            total += m;
            *law.entry(p[t]).or_insert_with(Rational::zero) += m;
        }
        if total.is_zero() {
            return None;
        }
        for v in law.values_mut() {
            *v /= &total;
        }
        Some(law)
    }

    /// Rebuilds a measure from a prefix marginal and a kernel.
    pub fn recompose(space: Arc<PathSpace>, prefix: &PathMeasure, kernel: &Kernel) -> Result<Self> {
        let mut mass = Vec::new();
        for (head, m) in &prefix.mass {
            let cond = kernel
                .conditionals
                .get(head)
                .ok_or_else(|| Error::UndefinedOnSupport { path: prefix.space.labels(head) })?;
            for (tail, c) in cond {
                let mut path = head.clone();
                path.extend_from_slice(tail);
                mass.push((path, m * c));
            }
        }
        PathMeasure::new(space, mass)
    }

    /// Rebuilds a measure from its chain of one-step kernels.
    pub fn from_step_kernels(space: Arc<PathSpace>, kernels: &[StepKernel]) -> Result<Self> {
        let mut frontier: Vec<(Path, Rational)> = vec![(Vec::new(), Rational::one())];
        for kernel in kernels {
            let mut next = Vec::new();
            for (h, m) in frontier {
                let law = kernel.laws.get(&h).ok_or_else(|| Error::UndefinedOnSupport { path: space.labels(&h) })?;
                for (x, c) in law {
                    let mut p = h.clone();
                    p.push(*x);
                    next.push((p, &m * c));
                }
            }
            frontier = next;
        }
        PathMeasure::new(space, frontier)
    }

    /// Image measure under a map defined on the support.
    pub fn pushforward<F>(&self, target: Arc<PathSpace>, f: F) -> Result<PathMeasure>
    where
        F: Fn(&[usize]) -> Option<Path>,
    {
        let mut mass = Vec::with_capacity(self.mass.len());
        for (p, m) in &self.mass {
            let image = f(p)
                .filter(|q| target.contains(q))
                .ok_or_else(|| Error::UndefinedOnSupport { path: self.space.labels(p) })?;
            mass.push((image, m.clone()));
        }
        PathMeasure::new(target, mass)
    }

    pub fn restrict(&self, cell: &[BTreeSet<usize>]) -> Restriction {
        let mass: BTreeMap<Path, Rational> =
            self.mass.iter().filter(|(p, _)| in_cell(p, cell)).map(|(p, m)| (p.clone(), m.clone())).collect();
        let total = mass.values().sum();
        Restriction { mass, total }
    }

    /// The same measure on a space differing only in labels.
    pub fn with_space(&self, space: Arc<PathSpace>) -> Result<PathMeasure> {
        PathMeasure::new(space, self.mass.clone())
    }
}

pub fn in_cell(path: &[usize], cell: &[BTreeSet<usize>]) -> bool {
    path.len() == cell.len() && path.iter().zip(cell).all(|(i, c)| c.contains(i))
}

/// Lowest common multiple of the denominators of a collection of masses.
pub fn common_denominator<'a>(values: impl IntoIterator<Item = &'a Rational>) -> num_bigint::BigInt {
    use num_integer::Integer;
    values.into_iter().fold(num_bigint::BigInt::one(), |acc, v| acc.lcm(v.denom()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    fn space22() -> Arc<PathSpace> {
        Arc::new(PathSpace::from_coordinates(&[&["0", "1"], &["0", "1"]]).unwrap())
    }

    #[test]
    fn validate_canonicalizes_and_rejects() {
        let s = space22();
        let m = PathMeasure::new(
            s.clone(),
            [(vec![1, 1], ratio(2, 4)), (vec![0, 0], ratio(1, 2)), (vec![0, 1], ratio(0, 1))],
        )
        .unwrap();
        assert_eq!(m.support().cloned().collect::<Vec<_>>(), vec![vec![0, 0], vec![1, 1]]);
        assert_eq!(
            PathMeasure::new(s.clone(), [(vec![0, 0], ratio(3, 4))]),
            Err(Error::MassSumNotOne { actual: ratio(3, 4) })
        );
        assert!(matches!(
            PathMeasure::new(s.clone(), [(vec![0, 0], ratio(5, 4)), (vec![1, 0], ratio(-1, 4))]),
            Err(Error::NegativeMass { .. })
        ));
        assert!(matches!(PathMeasure::new(s, [(vec![0, 2], ratio(1, 1))]), Err(Error::UnknownLabel { step: 1, .. })));
    }

    #[test]
    fn product_disintegrates_to_constant_kernel() {
        let one = Arc::new(PathSpace::from_coordinates(&[&["0", "1"]]).unwrap());
        let a = PathMeasure::new(one.clone(), [(vec![0], ratio(1, 3)), (vec![1], ratio(2, 3))]).unwrap();
        let b = PathMeasure::new(one, [(vec![0], ratio(1, 4)), (vec![1], ratio(3, 4))]).unwrap();
        let ab = PathMeasure::product(&a, &b).unwrap();
        let (prefix, kernel) = ab.disintegrate(1).unwrap();
        assert_eq!(prefix.masses(), a.masses());
        for cond in kernel.conditionals.values() {
            let expected: BTreeMap<Path, Rational> = b.masses().iter().map(|(p, m)| (p.clone(), m.clone())).collect();
            assert_eq!(cond, &expected);
        }
        let back = PathMeasure::recompose(ab.space().clone(), &prefix, &kernel).unwrap();
        assert_eq!(back, ab);
        assert!(ab.disintegrate(0).is_err());
        assert!(ab.disintegrate(2).is_err());
    }

    #[test]
    fn step_kernels_recompose() {
        let s = space22();
        let m = PathMeasure::new(
            s.clone(),
            [(vec![0, 0], ratio(1, 6)), (vec![0, 1], ratio(1, 3)), (vec![1, 1], ratio(1, 2))],
        )
        .unwrap();
        let ks = m.step_kernels();
        assert_eq!(ks[1].laws[&vec![0]][&1], ratio(2, 3));
        assert_eq!(m.conditional(&[0]).unwrap()[&0], ratio(1, 3));
        assert!(m.conditional(&[]).is_some());
        assert_eq!(PathMeasure::from_step_kernels(s, &ks).unwrap(), m);
    }

    #[test]
    fn pushforward_merges_and_rejects() {
        let s = space22();
        let m = PathMeasure::uniform(s.clone(), &s.paths()).unwrap();
        let merged = m.pushforward(s.clone(), |p| Some(vec![p[0], 0])).unwrap();
        assert_eq!(merged.mass_of(&[1, 0]), ratio(1, 2));
        assert!(matches!(
            m.pushforward(s.clone(), |p| (p[0] == 0).then(|| p.to_vec())),
            Err(Error::UndefinedOnSupport { .. })
        ));
        let cell: Cell = vec![[0, 1].into(), [0].into()];
        let r = m.restrict(&cell);
        assert_eq!(r.total, ratio(1, 2));
        let empty = PathMeasure::dirac(s, vec![1, 1]).unwrap().restrict(&cell);
        assert!(empty.mass.is_empty() && empty.total.is_zero());
    }
}
