use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_integer::Roots;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::rational::{Distance, Exponent, PowValue, Rational};
use crate::space::{PathSpace, StepMetric};

/// Per-step partitions of a path space's alphabets into cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    cells: Vec<Vec<BTreeSet<usize>>>,
    cell_of: Vec<Vec<usize>>,
    diameters: Vec<Vec<Distance>>,
}

impl Partition {
    /// Validates that the cells of every step are disjoint, nonempty, and
    /// cover the alphabet.
    pub fn from_cells(space: &PathSpace, cells: Vec<Vec<BTreeSet<usize>>>) -> Result<Self> {
        if cells.len() != space.len() {
            return Err(Error::DimensionMismatch(format!(
                "partition has {} steps, space has {}",
                cells.len(),
                space.len()
            )));
        }
        let mut cell_of = Vec::with_capacity(cells.len());
        let mut diameters = Vec::with_capacity(cells.len());
        for (t, step) in cells.iter().enumerate() {
            let mut owner = vec![usize::MAX; space.alphabet_len(t)];
            for (k, cell) in step.iter().enumerate() {
                if cell.is_empty() {
                    return Err(Error::InvalidArgument(format!("empty cell at step {}", t + 1)));
                }
                for &i in cell {
                    if i >= owner.len() || owner[i] != usize::MAX {
                        return Err(Error::InvalidArgument(format!(
                            "cells at step {} overlap or name unknown points",
                            t + 1
                        )));
                    }
                    owner[i] = k;
                }
            }
            if owner.contains(&usize::MAX) {
                return Err(Error::InvalidArgument(format!("cells at step {} do not cover", t + 1)));
            }
            diameters.push(step.iter().map(|c| space.diameter(t, &c.iter().copied().collect::<Vec<_>>())).collect());
            cell_of.push(owner);
        }
        Ok(Partition { cells, cell_of, diameters })
    }

    pub fn singletons(space: &PathSpace) -> Self {
        let cells =
            (0..space.len()).map(|t| (0..space.alphabet_len(t)).map(|i| BTreeSet::from([i])).collect()).collect();
        Partition::from_cells(space, cells).expect("singletons partition")
    }

    pub fn one_cell(space: &PathSpace) -> Self {
        let cells = (0..space.len()).map(|t| vec![(0..space.alphabet_len(t)).collect()]).collect();
        Partition::from_cells(space, cells).expect("one-cell partition")
    }

    pub fn steps(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self, t: usize) -> &[BTreeSet<usize>] {
        &self.cells[t]
    }

    pub fn cell_of(&self, t: usize, i: usize) -> usize {
        self.cell_of[t][i]
    }

    /// Cell indices of every step of a path.
    pub fn cell_path(&self, path: &[usize]) -> Vec<usize> {
        path.iter().enumerate().map(|(t, &i)| self.cell_of[t][i]).collect()
    }

    pub fn diameter(&self, t: usize, cell: usize) -> &Distance {
        &self.diameters[t][cell]
    }

    /// Largest cell diameter at step `t`.
    pub fn step_mesh(&self, t: usize) -> Distance {
        self.diameters[t].iter().max().cloned().unwrap_or_else(Distance::zero)
    }

    /// Largest cell diameter over all steps.
    pub fn mesh(&self) -> Distance {
        (0..self.steps()).map(|t| self.step_mesh(t)).max().unwrap_or_else(Distance::zero)
    }

    /// `sum_t (step mesh)^p`: the p-th power of the diameter bound for the
    /// product cells of this partition under the product metric.
    pub fn product_mesh_pp(&self, p: &Exponent) -> PowValue {
        (0..self.steps()).map(|t| self.step_mesh(t).pow(p)).fold(PowValue::Exact(Rational::zero()), |a, b| a.add(&b))
    }
}

/// Side length of grid boxes whose diameter under `metric` stays within
/// `target` in dimension `dim`.
fn box_side(target: &Rational, metric: StepMetric, dim: usize) -> Rational {
    let k = match metric {
        StepMetric::Chebyshev => 1u64,
        StepMetric::Manhattan => dim.max(1) as u64,
        StepMetric::Euclidean => {
            let r = (dim.max(1) as u64).sqrt();
            if r * r == dim.max(1) as u64 {
                r
            } else {
                r + 1
            }
        }
    };
    target / Rational::from_integer(BigInt::from(k))
}

/// Box index of a coordinate: boxes `(lo + (k-1) s, lo + k s]`, the first
/// one closed, so boundary points fall into the lower box.
fn box_index(c: &Rational, lo: &Rational, side: &Rational) -> BigInt {
    let q = (c - lo) / side;
    let k = q.ceil().to_integer() - BigInt::one();
    if k.is_negative() {
        BigInt::zero()
    } else {
        k
    }
}

/// Axis-aligned grid boxes anchored at the smallest coordinate of each axis,
/// with side chosen so that every cell has diameter at most `target`.
pub fn grid_partition(space: &PathSpace, target: &Rational) -> Result<Partition> {
    if !target.is_positive() {
        return Err(Error::InvalidArgument("target mesh must be positive".into()));
    }
    let mut cells = Vec::with_capacity(space.len());
    for t in 0..space.len() {
        let step = space.step(t);
        let dim = step.dimension();
        let side = box_side(target, step.metric, dim);
        let lows: Vec<Rational> = (0..dim)
            .map(|a| step.points.iter().map(|p| p.coord[a].clone()).min().expect("nonempty alphabet"))
            .collect();
        let mut boxes: BTreeMap<Vec<BigInt>, BTreeSet<usize>> = BTreeMap::new();
        for (i, p) in step.points.iter().enumerate() {
            let key = (0..dim).map(|a| box_index(&p.coord[a], &lows[a], &side)).collect();
            boxes.entry(key).or_default().insert(i);
        }
        cells.push(boxes.into_values().collect());
    }
    Partition::from_cells(space, cells)
}
