use std::path::Path;

use bicausal_core::approx::{biadapted_feasibility, cell_agreement, mesh_bound_check, partitions_for, Feasibility};
use bicausal_core::io::{
    document, document_kind, parse_approx, parse_coupling, parse_feasibility, parse_lift, parse_measure, parse_solve,
};
use bicausal_core::lifting::MapDirection;
use bicausal_core::solvers::{
    coupling_cost, solve_bicausal_dp, solve_bicausal_flat, solve_bicausal_oracle, solve_kantorovich,
};
use bicausal_core::{Coupling, Error, MongeClass};
use serde_json::{json, Value};

use crate::output::{emit, read_document, Failure};
use crate::OutArgs;

struct Checks(Vec<(String, bool)>);

impl Checks {
    fn new() -> Self {
        Checks(Vec::new())
    }

    fn add(&mut self, name: impl Into<String>, ok: bool) {
        self.0.push((name.into(), ok));
    }

    fn ok(&self) -> bool {
        self.0.iter().all(|(_, ok)| *ok)
    }

    fn value(&self, kind: &str) -> Value {
        json!({
            "artifact": kind,
            "ok": self.ok(),
            "checks": self.0.iter().map(|(n, ok)| json!({ "name": n, "ok": ok })).collect::<Vec<_>>(),
        })
    }
}

/// Runs every check that applies to the document's kind.
pub fn check_document(doc: &Value) -> Result<Value, Failure> {
    let kind = document_kind(doc)?.unwrap_or("measure").to_string();
    let mut checks = Checks::new();
    match kind.as_str() {
        "measure" => {
            parse_measure(doc)?;
            checks.add("parses and sums to one", true);
        }
        "coupling" => {
            parse_coupling(doc)?;
            checks.add("parses and sums to one", true);
        }
        "solve-result" => {
            let record = parse_solve(doc)?;
            let pi = &record.result.optimizer;
            let (mu, nu) = pi.marginals();
            checks.add("value equals the optimizer's cost", coupling_cost(pi, &record.cost)? == record.result.value);
            let again = match (record.problem.as_str(), record.solver.as_str()) {
                ("kp", _) => solve_kantorovich(&mu, &nu, &record.cost)?,
                ("bc", "oracle") => solve_bicausal_oracle(&mu, &nu, &record.cost)?,
                ("bc", "flat") => solve_bicausal_flat(&mu, &nu, &record.cost)?,
                ("bc", _) => solve_bicausal_dp(&mu, &nu, &record.cost)?,
                (other, _) => return Err(Error::Schema(format!("unknown problem {other:?}")).into()),
            };
            checks.add("re-solving gives the same value", again.value == record.result.value);
            if record.problem == "bc" {
                checks.add("optimizer is bicausal", pi.is_bicausal().holds());
            }
        }
        "lift" | "static-lift" => {
            let lift = parse_lift(doc)?;
            checks.add("map is a bijection of micro-paths", true);
            checks.add("projection equals the coupling", lift.projection()? == lift.coupling);
            checks.add("lifted coupling has uniform marginals", lift.bijection.lifted().has_uniform_marginals());
            if !lift.is_static {
                checks.add("forward map is adapted", lift.bijection.verify_adapted(MapDirection::Forward).is_none());
                checks.add("inverse map is adapted", lift.bijection.verify_adapted(MapDirection::Inverse).is_none());
                checks.add(
                    "stored forward components match",
                    lift.forward_components == lift.bijection.components(MapDirection::Forward),
                );
                checks.add(
                    "stored inverse components match",
                    lift.inverse_components == lift.bijection.components(MapDirection::Inverse),
                );
                checks.add("coupling is bicausal", lift.coupling.is_bicausal().holds());
            }
        }
        "approx-report" => {
            let report = parse_approx(doc)?;
            let target = &report.target;
            checks.add("target is bicausal", target.is_bicausal().holds());
            let mut all = true;
            for row in &report.rows {
                let label = row.mesh.label();
                let (px, py) = partitions_for(target, &row.mesh)?;
                let cells = cell_agreement(&row.coupling, target, &px, &py).holds;
                checks.add(format!("mesh {label}: cell agreement"), cells == row.cells_ok && cells);
                if cells {
                    let bound = mesh_bound_check(&row.coupling, target, &report.p, &px, &py)?;
                    checks.add(
                        format!("mesh {label}: stored W_p^p, lemma cost and bound recompute"),
                        bound.wp_p == row.wp_p && bound.lemma_cost == row.lemma_cost && bound.bound == row.bound,
                    );
                    checks.add(format!("mesh {label}: within bound"), bound.holds && row.within_bound);
                }
                checks.add(format!("mesh {label}: approximation is bicausal"), row.coupling.is_bicausal().holds());
                let (a, b) = row.coupling.marginals();
                let (ta, tb) = target.marginals();
                checks.add(format!("mesh {label}: marginals preserved"), a == ta && b == tb);
                all &= row.cells_ok && row.biadapted && row.within_bound;
            }
            checks.add("all_ok is consistent with the rows", all == report.all_ok);
        }
        "feasibility" => {
            let (mu, nu, stored) = parse_feasibility(doc)?;
            match &stored {
                Feasibility::Feasible { map } => {
                    let pi = Coupling::from_map(&mu, nu.space().clone(), |x| map.get(x).cloned())?;
                    checks.add("map pushes mu to nu", pi.marginals().1 == nu);
                    checks.add("map is biadapted", matches!(pi.classify_monge(), MongeClass::BiadaptedMonge { .. }));
                }
                Feasibility::Infeasible(w) => {
                    checks.add("witness mass multisets differ", w.x_masses != w.y_masses);
                    checks.add("decision recomputes", biadapted_feasibility(&mu, &nu)? == stored);
                }
            }
        }
        other => {
            return Err(Error::Schema(format!("cannot verify a {other:?} document")).into());
        }
    }
    let report = checks.value(&kind);
    if checks.ok() {
        Ok(report)
    } else {
        Err(Failure::Verification(report))
    }
}

pub fn verify(file: &Path, out: &OutArgs) -> Result<(), Failure> {
    let doc = read_document(file)?;
    let report = check_document(&doc)?;
    emit(&document("verification", report), out)
}
