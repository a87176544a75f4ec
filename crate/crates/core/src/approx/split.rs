use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lifting::{microatomize, project_path, AdaptedBijection, MicroPath, MicroSpace, RefinementPlan};
use crate::space::Path;

use super::partition::Partition;

/// A cell-preserving biadapted permutation of the micro-paths of a fine
/// micro-space.
///
/// The fine space is read as the coarse one times a per-step randomizer:
/// with `D_t = k_t C_t`, fine slot `s` of a point stands for coarse slot
/// `s / k_t` and randomizer value `s % k_t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMap {
    pub partition: Partition,
    pub coarse: RefinementPlan,
    pub map: AdaptedBijection,
}

impl SplitMap {
    pub fn is_cell_preserving(&self) -> bool {
        self.map
            .map(crate::lifting::MapDirection::Forward)
            .iter()
            .all(|(x, y)| self.partition.cell_path(&project_path(x)) == self.partition.cell_path(&project_path(y)))
    }

    pub fn verify(&self) -> bool {
        self.is_cell_preserving() && self.map.is_biadapted()
    }
}

type GroupKey = (usize, usize);

/// Interned shapes of the subtrees below every base history: two histories
/// of the same length share a class iff their micro-subtrees are isomorphic
/// through a cell-preserving map.
pub(crate) fn subtree_classes(micro: &MicroSpace, partition: &Partition) -> Vec<BTreeMap<Path, usize>> {
    let n = micro.steps();
    let mut classes: Vec<BTreeMap<Path, usize>> = vec![BTreeMap::new(); n + 1];
    classes[n] = micro.measure().support().map(|p| (p.clone(), 0)).collect();
    for t in (0..n).rev() {
        let mut intern: BTreeMap<Vec<(GroupKey, usize)>, usize> = BTreeMap::new();
        let histories: Vec<Path> = micro.measure().prefix_masses(t).into_keys().collect();
        for h in histories {
            let mut signature: BTreeMap<GroupKey, usize> = BTreeMap::new();
            for &(x, count) in micro.children(&h).expect("support history") {
                let mut child = h.clone();
                child.push(x);
                let key = (partition.cell_of(t, x), classes[t + 1][&child]);
                *signature.entry(key).or_insert(0) += count;
            }
            let next = intern.len();
            let id = *intern.entry(signature.into_iter().collect()).or_insert(next);
            classes[t].insert(h, id);
        }
    }
    classes
}

/// Builds a cell-preserving tree isomorphism of the micro-space onto itself.
/// At every matched node pair the children are grouped by (cell, subtree
/// class); source children are taken in lexicographic order and target
/// children in the order given by `target_key`, and matched rank by rank.
pub(crate) fn tree_permutation<K, F>(
    micro: &MicroSpace,
    partition: &Partition,
    target_key: F,
) -> Result<BTreeMap<MicroPath, MicroPath>>
where
    K: Ord,
    F: Fn(&MicroPath) -> K,
{
    let classes = subtree_classes(micro, partition);
    let grouped = |prefix: &MicroPath| -> BTreeMap<GroupKey, Vec<MicroPath>> {
        let t = prefix.len();
        let h = project_path(prefix);
        let mut groups: BTreeMap<GroupKey, Vec<MicroPath>> = BTreeMap::new();
        for &(x, count) in micro.children(&h).expect("support history") {
            let mut hx = h.clone();
            hx.push(x);
            let key = (partition.cell_of(t, x), classes[t + 1][&hx]);
            for s in 0..count {
                let mut c = prefix.clone();
                c.push((x, s));
                groups.entry(key).or_default().push(c);
            }
        }
        groups
    };
    let mut frontier: Vec<(MicroPath, MicroPath)> = vec![(Vec::new(), Vec::new())];
    for _ in 0..micro.steps() {
        let mut next = Vec::with_capacity(frontier.len());
        for (s, s2) in frontier {
            let sources = grouped(&s);
            let mut targets = grouped(&s2);
            for (key, src) in sources {
                let mut dst = targets.remove(&key).unwrap_or_default();
                if dst.len() != src.len() {
                    return Err(Error::InvalidArgument("subtree classes disagree".into()));
                }
                dst.sort_by_cached_key(|c| target_key(c));
                next.extend(src.into_iter().zip(dst));
            }
        }
        frontier = next;
    }
    Ok(frontier.into_iter().collect())
}

/// The lexicographic split of a coarse micro-space into a finer one: within
/// every cell and history, coarse slots with their randomizer values are
/// matched in lexicographic order with fine slots.
pub fn split_bijection(micro: &MicroSpace, partition: &Partition, finer: &RefinementPlan) -> Result<SplitMap> {
    if partition.steps() != micro.steps() || finer.denominators.len() != micro.steps() {
        return Err(Error::DimensionMismatch("partition, plan, and micro-space differ in length".into()));
    }
    if let Some(t) = finer.refines(micro.plan()) {
        return Err(Error::PlanNotRefining { step: t + 1 });
    }
    let fine = Arc::new(microatomize(micro.measure(), finer)?);
    let forward = tree_permutation(&fine, partition, |c| c.clone())?;
    let map = AdaptedBijection::new(fine.clone(), fine, forward)?;
    Ok(SplitMap { partition: partition.clone(), coarse: micro.plan().clone(), map })
}
