use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::{One, Signed, Zero};

use crate::adapted::{adaptedness_violation, AdaptednessWitness};
use crate::coupling::Coupling;
use crate::error::{Error, Result};
use crate::rational::Rational;

use super::{project_path, MicroPath, MicroPoint, MicroSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapDirection {
    Forward,
    Inverse,
}

/// A bijection between the micro-paths of two micro-spaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdaptedBijection {
    left: Arc<MicroSpace>,
    right: Arc<MicroSpace>,
    forward: BTreeMap<MicroPath, MicroPath>,
    inverse: BTreeMap<MicroPath, MicroPath>,
}

impl AdaptedBijection {
    /// Checks that `forward` is a bijection from all micro-paths of `left`
    /// onto all micro-paths of `right`. Adaptedness is not required here;
    /// see [`AdaptedBijection::verify_adapted`].
    pub fn new(left: Arc<MicroSpace>, right: Arc<MicroSpace>, forward: BTreeMap<MicroPath, MicroPath>) -> Result<Self> {
        if left.len() != right.len() {
            return Err(Error::InvalidArgument(format!("micro-spaces have {} and {} paths", left.len(), right.len())));
        }
        if forward.len() != left.len() {
            return Err(Error::InvalidArgument(format!("map covers {} of {} micro-paths", forward.len(), left.len())));
        }
        let mut inverse = BTreeMap::new();
        for (x, y) in &forward {
            if !left.contains(x) {
                return Err(Error::InvalidArgument(format!("{:?} is not a source micro-path", left.labels(x))));
            }
            if !right.contains(y) {
                return Err(Error::InvalidArgument(format!("{:?} is not a target micro-path", right.labels(y))));
            }
            if inverse.insert(y.clone(), x.clone()).is_some() {
                return Err(Error::InvalidArgument(format!("{:?} is hit twice", right.labels(y))));
            }
        }
        Ok(AdaptedBijection { left, right, forward, inverse })
    }

    pub fn left(&self) -> &Arc<MicroSpace> {
        &self.left
    }

    pub fn right(&self) -> &Arc<MicroSpace> {
        &self.right
    }

    pub fn map(&self, direction: MapDirection) -> &BTreeMap<MicroPath, MicroPath> {
        match direction {
            MapDirection::Forward => &self.forward,
            MapDirection::Inverse => &self.inverse,
        }
    }

    pub fn apply(&self, x: &[MicroPoint]) -> Option<&MicroPath> {
        self.forward.get(x)
    }

    pub fn apply_inverse(&self, y: &[MicroPoint]) -> Option<&MicroPath> {
        self.inverse.get(y)
    }

    /// First pair of micro-paths sharing a prefix of length `t` whose images
    /// differ at step `t`, if any.
    pub fn verify_adapted(&self, direction: MapDirection) -> Option<AdaptednessWitness<MicroPoint>> {
        adaptedness_violation(self.map(direction).iter())
    }

    pub fn is_biadapted(&self) -> bool {
        self.verify_adapted(MapDirection::Forward).is_none() && self.verify_adapted(MapDirection::Inverse).is_none()
    }

    /// Per-step component tables: micro-prefix of length `t + 1` to the
    /// step-`t` output. `None` when the map is not adapted.
    pub fn components(&self, direction: MapDirection) -> Option<Vec<BTreeMap<MicroPath, MicroPoint>>> {
        if self.verify_adapted(direction).is_some() {
            return None;
        }
        let map = self.map(direction);
        let steps = self.left.steps();
        Some((0..steps).map(|t| map.iter().map(|(x, y)| (x[..=t].to_vec(), y[t])).collect()).collect())
    }

    /// Rebuilds a map from per-step components.
    pub fn from_components(
        left: Arc<MicroSpace>,
        right: Arc<MicroSpace>,
        components: &[BTreeMap<MicroPath, MicroPoint>],
    ) -> Result<Self> {
        let mut forward = BTreeMap::new();
        for x in left.micro_paths() {
            let y =
                (0..x.len())
                    .map(|t| {
                        components.get(t).and_then(|c| c.get(&x[..=t])).copied().ok_or_else(|| {
                            Error::InvalidArgument(format!("no component for {:?}", left.labels(&x[..=t])))
                        })
                    })
                    .collect::<Result<MicroPath>>()?;
            forward.insert(x, y);
        }
        AdaptedBijection::new(left, right, forward)
    }

    /// `(id, T)_*` of the uniform micro-measure.
    pub fn lifted(&self) -> LiftedCoupling {
        let w = self.left.atom_mass();
        LiftedCoupling {
            left: self.left.clone(),
            right: self.right.clone(),
            mass: self.forward.iter().map(|(x, y)| ((x.clone(), y.clone()), w.clone())).collect(),
        }
    }

    /// Composition `other ∘ self`.
    pub fn then(&self, other: &AdaptedBijection) -> Result<AdaptedBijection> {
        if self.right != other.left {
            return Err(Error::SpaceMismatch("composed maps do not share a micro-space".into()));
        }
        let forward = self.forward.iter().map(|(x, y)| (x.clone(), other.forward[y].clone())).collect();
        AdaptedBijection::new(self.left.clone(), other.right.clone(), forward)
    }

    pub fn invert(&self) -> AdaptedBijection {
        AdaptedBijection {
            left: self.right.clone(),
            right: self.left.clone(),
            forward: self.inverse.clone(),
            inverse: self.forward.clone(),
        }
    }
}

/// A coupling between the micro-measures of two micro-spaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiftedCoupling {
    left: Arc<MicroSpace>,
    right: Arc<MicroSpace>,
    mass: BTreeMap<(MicroPath, MicroPath), Rational>,
}

impl LiftedCoupling {
    pub fn new(
        left: Arc<MicroSpace>,
        right: Arc<MicroSpace>,
        mass: impl IntoIterator<Item = ((MicroPath, MicroPath), Rational)>,
    ) -> Result<Self> {
        let mut canon: BTreeMap<(MicroPath, MicroPath), Rational> = BTreeMap::new();
        for ((x, y), m) in mass {
            if !left.contains(&x) || !right.contains(&y) {
                return Err(Error::InvalidCoupling(format!(
                    "{:?} / {:?} are not micro-paths",
                    left.labels(&x),
                    right.labels(&y)
                )));
            }
            if m.is_negative() {
                return Err(Error::InvalidCoupling("negative micro mass".into()));
            }
            *canon.entry((x, y)).or_insert_with(Rational::zero) += m;
        }
        canon.retain(|_, m| !m.is_zero());
        let total: Rational = canon.values().sum();
        if !total.is_one() {
            return Err(Error::MassSumNotOne { actual: total });
        }
        Ok(LiftedCoupling { left, right, mass: canon })
    }

    pub fn left(&self) -> &Arc<MicroSpace> {
        &self.left
    }

    pub fn right(&self) -> &Arc<MicroSpace> {
        &self.right
    }

    pub fn masses(&self) -> &BTreeMap<(MicroPath, MicroPath), Rational> {
        &self.mass
    }

    /// Whether both marginals are the uniform micro-measures.
    pub fn has_uniform_marginals(&self) -> bool {
        let mut a: BTreeMap<&MicroPath, Rational> = BTreeMap::new();
        let mut b: BTreeMap<&MicroPath, Rational> = BTreeMap::new();
        for ((x, y), m) in &self.mass {
            *a.entry(x).or_insert_with(Rational::zero) += m;
            *b.entry(y).or_insert_with(Rational::zero) += m;
        }
        let w = self.left.atom_mass();
        a.len() == self.left.len() && b.len() == self.right.len() && a.values().chain(b.values()).all(|m| *m == w)
    }

    /// Forgets the slots.
    pub fn project(&self) -> Result<Coupling> {
        Coupling::new(
            self.left.base().clone(),
            self.right.base().clone(),
            self.mass.iter().map(|((x, y), m)| ((project_path(x), project_path(y)), m.clone())),
        )
    }

    /// The same mass table as an ordinary coupling on the micro path spaces.
    pub fn to_coupling(&self) -> Result<Coupling> {
        Coupling::new(
            self.left.path_space().clone(),
            self.right.path_space().clone(),
            self.mass.iter().map(|((x, y), m)| ((self.left.to_path(x), self.right.to_path(y)), m.clone())),
        )
    }
}
