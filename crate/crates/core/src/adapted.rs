//! Adaptedness scans for maps between path-like sequences.

use std::collections::BTreeMap;

/// Two inputs agreeing on their first `step` coordinates whose images differ
/// at coordinate `step` (1-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdaptednessWitness<T> {
    pub step: usize,
    pub first: (Vec<T>, Vec<T>),
    pub second: (Vec<T>, Vec<T>),
}

/// Finds the first violation of "the t-th output depends only on the first
/// t inputs", scanning steps in increasing order and pairs in the order
/// given.
pub fn adaptedness_violation<'a, T, I>(pairs: I) -> Option<AdaptednessWitness<T>>
where
    T: Ord + Clone + 'a,
    I: IntoIterator<Item = (&'a Vec<T>, &'a Vec<T>)>,
{
    let pairs: Vec<(&Vec<T>, &Vec<T>)> = pairs.into_iter().collect();
    let steps = pairs.iter().map(|(x, _)| x.len()).max().unwrap_or(0);
    for t in 1..=steps {
        let mut seen: BTreeMap<&[T], (&Vec<T>, &Vec<T>)> = BTreeMap::new();
        for &(x, y) in &pairs {
            match seen.get(&x[..t]) {
                Some(&(x0, y0)) if y0[t - 1] != y[t - 1] => {
                    return Some(AdaptednessWitness {
                        step: t,
                        first: (x0.clone(), y0.clone()),
                        second: (x.clone(), y.clone()),
                    });
                }
                Some(_) => {}
                None => {
                    seen.insert(&x[..t], (x, y));
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_anticipation() {
        let map = [(vec![0, 0], vec![0, 0]), (vec![0, 1], vec![1, 1])];
        let w = adaptedness_violation(map.iter().map(|(a, b)| (a, b))).unwrap();
        assert_eq!(w.step, 1);
        let ok = [(vec![0, 0], vec![0, 1]), (vec![0, 1], vec![0, 0])];
        assert!(adaptedness_violation(ok.iter().map(|(a, b)| (a, b))).is_none());
    }
}
