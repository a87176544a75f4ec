use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use rayon::prelude::*;

use crate::adapted::{adaptedness_violation, AdaptednessWitness};
use crate::coupling::{Coupling, MongeClass, PathPair};
use crate::error::{Error, Result};
use crate::lifting::{
    lift_biadapted_with, microatomize, plan_for_measure, plan_refinement, project_path, AdaptedBijection, Lift,
    LiftedCoupling, MapDirection, MicroPath, RefinementPlan,
};
use crate::rational::{format_rational, Exponent, PowValue, Rational};
use crate::solvers::{coupling_cost, same_geometry, solve_transport, CostSpec};
use crate::space::{Path, PathSpace, ProductMetric};

use super::partition::{grid_partition, Partition};
use super::split::{split_bijection, tree_permutation, SplitMap};

/// The composed map `T_n = Psi^{-1} . T . Phi` and the couplings it induces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MongeApproximation {
    pub lift: Lift,
    pub phi: SplitMap,
    pub psi: SplitMap,
    pub map: AdaptedBijection,
    pub lifted: LiftedCoupling,
    pub projected: Coupling,
}

/// `T` from the biadapted lift of `pi` on `plan`, `Phi` a cell-preserving
/// permutation of the X-micro-paths, `Psi` the lexicographic split of the
/// Y-side. Within each cell (and subtree shape), `Phi` sends the k-th
/// micro-child in lexicographic order to the child whose `T`-image is k-th
/// smallest, so the approximation transports every cell monotonically
/// and forgets which point of the cell a micro-path started from.
pub fn monge_approximation(
    pi: &Coupling,
    px: &Partition,
    py: &Partition,
    plan: &RefinementPlan,
    budget: u64,
) -> Result<MongeApproximation> {
    let lift = lift_biadapted_with(pi, plan, budget)?;
    let (mu, nu) = pi.marginals();
    let left = lift.bijection.left().clone();
    let components = lift.bijection.components(MapDirection::Forward).expect("biadapted lift is adapted");
    let phi_map = tree_permutation(&left, px, |c: &MicroPath| {
        let image = components[c.len() - 1][c];
        (image, c.clone())
    })?;
    let phi = SplitMap {
        partition: px.clone(),
        coarse: plan_for_measure(&mu, budget)?,
        map: AdaptedBijection::new(left.clone(), left, phi_map)?,
    };
    let coarse_nu = microatomize(&nu, &plan_for_measure(&nu, budget)?)?;
    let psi = split_bijection(&coarse_nu, py, plan)?;
    let map = phi.map.then(&lift.bijection)?.then(&psi.map.invert())?;
    let lifted = map.lifted();
    let projected = lifted.project()?;
    Ok(MongeApproximation { lift, phi, psi, map, lifted, projected })
}

/// The variant with `Psi^{-1}` replaced by forgetting the slots: an adapted,
/// generally non-injective map from X-micro-paths to Y-paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurjectiveApproximation {
    pub map: BTreeMap<MicroPath, Path>,
    pub violation: Option<AdaptednessWitness<usize>>,
    pub projected: Coupling,
}

pub fn surjective_approximation(
    pi: &Coupling,
    px: &Partition,
    plan: &RefinementPlan,
    budget: u64,
) -> Result<SurjectiveApproximation> {
    let lift = lift_biadapted_with(pi, plan, budget)?;
    let left = lift.bijection.left().clone();
    let components = lift.bijection.components(MapDirection::Forward).expect("biadapted lift is adapted");
    let phi = tree_permutation(&left, px, |c: &MicroPath| (components[c.len() - 1][c], c.clone()))?;
    let map: BTreeMap<MicroPath, Path> =
        phi.iter().map(|(x, x2)| (x.clone(), project_path(lift.bijection.apply(x2).expect("total map")))).collect();
    // Adaptedness is read on the micro-path rank at each step.
    let ranked: Vec<(Vec<usize>, Vec<usize>)> = map.iter().map(|(x, y)| (left.to_path(x), y.clone())).collect();
    let violation = adaptedness_violation(ranked.iter().map(|(a, b)| (a, b)));
    let w = left.atom_mass();
    let projected = Coupling::new(
        pi.left().clone(),
        pi.right().clone(),
        map.iter().map(|(x, y)| ((project_path(x), y.clone()), w.clone())),
    )?;
    Ok(SurjectiveApproximation { map, violation, projected })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellRow {
    pub x_cells: Vec<usize>,
    pub y_cells: Vec<usize>,
    pub approx: Rational,
    pub target: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellAgreement {
    pub holds: bool,
    pub table: Vec<CellRow>,
}

fn cell_masses(pi: &Coupling, px: &Partition, py: &Partition) -> BTreeMap<(Vec<usize>, Vec<usize>), Rational> {
    let mut out: BTreeMap<(Vec<usize>, Vec<usize>), Rational> = BTreeMap::new();
    for ((x, y), m) in pi.masses() {
        *out.entry((px.cell_path(x), py.cell_path(y))).or_insert_with(Rational::zero) += m;
    }
    out
}

/// Exact comparison of two couplings on every product of cells.
pub fn cell_agreement(approx: &Coupling, target: &Coupling, px: &Partition, py: &Partition) -> CellAgreement {
    let a = cell_masses(approx, px, py);
    let b = cell_masses(target, px, py);
    let mut keys: Vec<&(Vec<usize>, Vec<usize>)> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    let table: Vec<CellRow> = keys
        .into_iter()
        .map(|k| CellRow {
            x_cells: k.0.clone(),
            y_cells: k.1.clone(),
            approx: a.get(k).cloned().unwrap_or_else(Rational::zero),
            target: b.get(k).cloned().unwrap_or_else(Rational::zero),
        })
        .collect();
    let holds = table.iter().all(|r| r.approx == r.target);
    CellAgreement { holds, table }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeshBound {
    /// Exact `W_p^p` between the two couplings as measures on X x Y.
    pub wp_p: Rational,
    /// Cost of the explicit cellwise coupling `sum_M pi_n|_M (x) pi|_M / pi(M)`.
    pub lemma_cost: Rational,
    /// `mesh^p` of the product partition.
    pub bound: Rational,
    pub holds: bool,
}

/// `d^p` tables per step between the alphabets of two spaces.
fn step_tables(metric: &ProductMetric, left: &PathSpace, right: &PathSpace) -> Result<Vec<Vec<Vec<PowValue>>>> {
    (0..left.len())
        .map(|t| {
            (0..left.alphabet_len(t))
                .map(|i| (0..right.alphabet_len(t)).map(|j| metric.step_pp(left, right, t, i, j)).collect())
                .collect()
        })
        .collect()
}

fn table_distance(tables: &[Vec<Vec<PowValue>>], x: &[usize], y: &[usize]) -> PowValue {
    let mut total = PowValue::Exact(Rational::zero());
    for (t, table) in tables.iter().enumerate() {
        total = total.add(&table[x[t]][y[t]]);
    }
    total
}

pub fn mesh_bound_check(
    approx: &Coupling,
    target: &Coupling,
    p: &Exponent,
    px: &Partition,
    py: &Partition,
) -> Result<MeshBound> {
    if !cell_agreement(approx, target, px, py).holds {
        return Err(Error::CellAgreementRequired);
    }
    let metric = ProductMetric::new(p.clone());
    let (left, right) = (approx.left(), approx.right());
    if left.len() != target.left().len() || right.len() != target.right().len() {
        return Err(Error::DimensionMismatch("couplings have different horizons".into()));
    }
    let tx = step_tables(&metric, left, target.left())?;
    let ty = step_tables(&metric, right, target.right())?;
    let rows: Vec<&PathPair> = approx.masses().keys().collect();
    let cols: Vec<&PathPair> = target.masses().keys().collect();
    let cost = rows
        .par_iter()
        .map(|u| {
            cols.iter()
                .map(|v| {
                    table_distance(&tx, &u.0, &v.0)
                        .add(&table_distance(&ty, &u.1, &v.1))
                        .into_exact("product-space distance")
                })
                .collect()
        })
        .collect::<Result<Vec<Vec<Rational>>>>()?;
    let a: Vec<Rational> = approx.masses().values().cloned().collect();
    let b: Vec<Rational> = target.masses().values().cloned().collect();
    let wp_p = solve_transport(&a, &b, &cost)?.value;

    let cells_a = cell_masses(approx, px, py);
    let key = |u: &PathPair| (px.cell_path(&u.0), py.cell_path(&u.1));
    let col_keys: Vec<_> = cols.iter().map(|v| key(v)).collect();
    let mut lemma_cost = Rational::zero();
    for (i, u) in rows.iter().enumerate() {
        let k = key(u);
        let total = &cells_a[&k];
        for (j, kv) in col_keys.iter().enumerate() {
            if *kv == k {
                lemma_cost += &a[i] * &b[j] / total * &cost[i][j];
            }
        }
    }
    let bound = px.product_mesh_pp(p).add(&py.product_mesh_pp(p)).into_exact("mesh power")?;
    let holds = wp_p <= lemma_cost && lemma_cost <= bound;
    Ok(MeshBound { wp_p, lemma_cost, bound, holds })
}

/// A requested partition resolution.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum MeshSpec {
    Target(Rational),
    Singleton,
}

impl MeshSpec {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "singleton" | "0" => Ok(MeshSpec::Singleton),
            other => {
                let v = crate::rational::parse_rational(other)?;
                if !v.is_positive() {
                    return Err(Error::InvalidArgument(format!("mesh {other:?} must be positive")));
                }
                Ok(MeshSpec::Target(v))
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            MeshSpec::Target(v) => format_rational(v),
            MeshSpec::Singleton => "singleton".to_string(),
        }
    }

    pub fn partition(&self, space: &crate::space::PathSpace) -> Result<Partition> {
        match self {
            MeshSpec::Target(v) => grid_partition(space, v),
            MeshSpec::Singleton => Ok(Partition::singletons(space)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvergenceRow {
    pub mesh: MeshSpec,
    pub wp_p: Rational,
    pub lemma_cost: Rational,
    pub bound: Rational,
    /// `|cost(pi_n) - cost(pi)|` for the `d^p` transport cost, when the two
    /// sides share their geometry.
    pub cost_gap: Option<Rational>,
    pub cells_ok: bool,
    pub biadapted: bool,
    pub within_bound: bool,
    pub coupling: Coupling,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvergenceReport {
    pub p: Exponent,
    pub plan: RefinementPlan,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.cells_ok && r.biadapted && r.within_bound)
    }
}

/// One row of the denseness pipeline at a given mesh.
pub fn convergence_row(
    pi: &Coupling,
    mesh: &MeshSpec,
    p: &Exponent,
    plan: &RefinementPlan,
    budget: u64,
) -> Result<ConvergenceRow> {
    let px = mesh.partition(pi.left())?;
    let py = mesh.partition(pi.right())?;
    let approx = monge_approximation(pi, &px, &py, plan, budget)?;
    let agreement = cell_agreement(&approx.projected, pi, &px, &py);
    let biadapted = approx.map.is_biadapted()
        && matches!(approx.lifted.to_coupling()?.classify_monge(), MongeClass::BiadaptedMonge { .. });
    let bound = mesh_bound_check(&approx.projected, pi, p, &px, &py)?;
    let cost_gap = if same_geometry(pi.left(), pi.right()) {
        let cost = CostSpec::MetricPower(p.clone());
        match (coupling_cost(&approx.projected, &cost), coupling_cost(pi, &cost)) {
            (Ok(a), Ok(b)) => Some((a - b).abs()),
            (Err(Error::InexactMetric(_)), _) | (_, Err(Error::InexactMetric(_))) => None,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    } else {
        None
    };
    Ok(ConvergenceRow {
        mesh: mesh.clone(),
        wp_p: bound.wp_p,
        lemma_cost: bound.lemma_cost,
        bound: bound.bound,
        cost_gap,
        cells_ok: agreement.holds,
        biadapted,
        within_bound: bound.holds,
        coupling: approx.projected,
    })
}

/// Runs the pipeline at every mesh, coarsest first.
pub fn convergence_report(pi: &Coupling, meshes: &[MeshSpec], p: &Exponent, budget: u64) -> Result<ConvergenceReport> {
    pi.is_bicausal().into_result()?;
    let (mu, nu) = pi.marginals();
    let plan = plan_refinement(&mu, &nu, pi, budget)?;
    let rows = ordered_meshes(meshes)
        .par_iter()
        .map(|m| convergence_row(pi, m, p, &plan, budget))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport { p: p.clone(), plan, rows })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurjectiveRow {
    pub mesh: MeshSpec,
    pub wp_p: Rational,
    pub lemma_cost: Rational,
    pub bound: Rational,
    pub cells_ok: bool,
    pub violation: Option<AdaptednessWitness<usize>>,
    pub within_bound: bool,
    pub coupling: Coupling,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurjectiveReport {
    pub p: Exponent,
    pub plan: RefinementPlan,
    pub rows: Vec<SurjectiveRow>,
}

impl SurjectiveReport {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.cells_ok && r.violation.is_none() && r.within_bound)
    }
}

/// The denseness pipeline with `Psi^{-1}` replaced by forgetting slots.
pub fn surjective_report(pi: &Coupling, meshes: &[MeshSpec], p: &Exponent, budget: u64) -> Result<SurjectiveReport> {
    pi.is_bicausal().into_result()?;
    let (mu, nu) = pi.marginals();
    let plan = plan_refinement(&mu, &nu, pi, budget)?;
    let meshes = ordered_meshes(meshes);
    let rows = meshes
        .par_iter()
        .map(|m| {
            let (px, py) = partitions_for(pi, m)?;
            let approx = surjective_approximation(pi, &px, &plan, budget)?;
            let agreement = cell_agreement(&approx.projected, pi, &px, &py);
            let bound = mesh_bound_check(&approx.projected, pi, p, &px, &py)?;
            Ok(SurjectiveRow {
                mesh: m.clone(),
                wp_p: bound.wp_p,
                lemma_cost: bound.lemma_cost,
                bound: bound.bound,
                cells_ok: agreement.holds,
                violation: approx.violation,
                within_bound: bound.holds,
                coupling: approx.projected,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SurjectiveReport { p: p.clone(), plan, rows })
}

/// Coarsest target first, singleton last, duplicates dropped.
pub fn ordered_meshes(meshes: &[MeshSpec]) -> Vec<MeshSpec> {
    let mut meshes = meshes.to_vec();
    meshes.sort_by(|a, b| b.cmp(a));
    meshes.dedup();
    // Singleton sorts above every target; move it to the end.
    meshes.sort_by_key(|m| matches!(m, MeshSpec::Singleton));
    meshes
}

/// X- and Y-partitions of a coupling's spaces at one mesh.
pub fn partitions_for(pi: &Coupling, mesh: &MeshSpec) -> Result<(Partition, Partition)> {
    Ok((mesh.partition(pi.left())?, mesh.partition(pi.right())?))
}
