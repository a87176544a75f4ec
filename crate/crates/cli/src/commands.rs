use std::path::Path;

use bicausal_core::approx::{
    biadapted_feasibility, convergence_report, surjective_report, ConvergenceReport, MeshSpec, SurjectiveReport,
};
use bicausal_core::gen::{self, Instance, TreeShape};
use bicausal_core::io::{
    self, causality_value, coupling_document, decimal_string, document, document_kind, feasibility_document,
    lift_document, measure_document, monge_value, parse_cost, parse_coupling, parse_feasibility, parse_lift,
    parse_measure, parse_solve, solve_document, static_lift_document, surjective_document, to_canonical_string,
    SolveRecord,
};
use bicausal_core::lifting::{lift_biadapted, lift_static};
use bicausal_core::solvers::{
    solve_bicausal_dp, solve_bicausal_flat, solve_bicausal_oracle, solve_kantorovich, CostSpec,
};
use bicausal_core::{format_rational, parse_rational, Coupling, Error, Exponent, PathMeasure};
use serde_json::{json, Value};

use crate::output::{emit, read_document, round_trip, write_atomic, Failure};
use crate::{GenKind, OutArgs, Problem, Solver};

fn read_measure(path: &Path) -> Result<PathMeasure, Failure> {
    Ok(parse_measure(&read_document(path)?)?)
}

fn read_coupling(path: &Path) -> Result<Coupling, Failure> {
    Ok(parse_coupling(&read_document(path)?)?)
}

pub fn validate(file: &Path, out: &OutArgs) -> Result<(), Failure> {
    let doc = read_document(file)?;
    let kind = document_kind(&doc)?.map(str::to_string);
    let summary = match kind.as_deref() {
        Some("measure") => {
            let mu = parse_measure(&doc)?;
            json!({ "type": "measure", "steps": mu.steps(), "support": mu.support_len() })
        }
        Some("coupling") | Some("solve-result") => {
            let pi = parse_coupling(&doc)?;
            json!({ "type": "coupling", "steps": pi.steps(), "support": pi.support_len() })
        }
        None => {
            // Untagged documents are read as measures, then as couplings.
            if doc.get("pair").is_some() || doc.get("left").is_some() {
                let pi = parse_coupling(&doc)?;
                json!({ "type": "coupling", "steps": pi.steps(), "support": pi.support_len() })
            } else {
                let mu = parse_measure(&doc)?;
                json!({ "type": "measure", "steps": mu.steps(), "support": mu.support_len() })
            }
        }
        Some(other) => {
            crate::verify::check_document(&doc)?;
            json!({ "type": other })
        }
    };
    let mut body = summary;
    body["valid"] = Value::Bool(true);
    emit(&document("validation", body), out)
}

pub fn parse_cost_arg(arg: &str, mu: &PathMeasure, nu: &PathMeasure) -> Result<CostSpec, Failure> {
    if let Some(p) = arg.strip_prefix("metric:") {
        return Ok(CostSpec::MetricPower(Exponent::new(parse_rational(p)?)?));
    }
    if let Some(file) = arg.strip_prefix("table:") {
        let doc = read_document(Path::new(file))?;
        return Ok(parse_cost(&doc, mu.space(), nu.space())?);
    }
    Err(Failure::Domain(Error::InvalidArgument(format!("cost {arg:?} must be metric:P or table:FILE"))))
}

pub fn solve(problem: Problem, cost: &str, mu: &Path, nu: &Path, solver: Solver, out: &OutArgs) -> Result<(), Failure> {
    let mu = read_measure(mu)?;
    let nu = read_measure(nu)?;
    let cost = parse_cost_arg(cost, &mu, &nu)?;
    let (name, result) = match problem {
        Problem::Kp => ("transport", solve_kantorovich(&mu, &nu, &cost)?),
        Problem::Bc => match solver {
            Solver::Dp => ("dp", solve_bicausal_dp(&mu, &nu, &cost)?),
            Solver::Oracle => ("oracle", solve_bicausal_oracle(&mu, &nu, &cost)?),
            Solver::Flat => ("flat", solve_bicausal_flat(&mu, &nu, &cost)?),
            Solver::Auto => match solve_bicausal_dp(&mu, &nu, &cost) {
                Err(Error::NonSeparableCost) => ("oracle", solve_bicausal_oracle(&mu, &nu, &cost)?),
                other => ("dp", other?),
            },
        },
    };
    let record = SolveRecord {
        problem: match problem {
            Problem::Kp => "kp",
            Problem::Bc => "bc",
        }
        .to_string(),
        solver: name.to_string(),
        cost,
        result,
    };
    let doc = solve_document(&record);
    round_trip(&doc, &record, parse_solve)?;
    emit(&doc, out)
}

pub fn check(pi: &Path, causal: bool, bicausal: bool, monge: bool, out: &OutArgs) -> Result<(), Failure> {
    let pi = read_coupling(pi)?;
    let mut body = json!({});
    if causal {
        body["causal"] = causality_value(&pi.is_causal());
    }
    if bicausal {
        let report = pi.is_bicausal();
        body["verdict"] = Value::from(if report.holds() { "bicausal" } else { "not-bicausal" });
        body["bicausal"] = causality_value(&report);
    }
    if monge {
        body["monge"] = monge_value(&pi, &pi.classify_monge());
    }
    emit(&document("check", body), out)
}

pub fn lift(pi: &Path, static_lift: bool, budget: u64, out: &OutArgs) -> Result<(), Failure> {
    let pi = read_coupling(pi)?;
    let doc = if static_lift {
        let lift = lift_static(&pi, budget)?;
        static_lift_document(&pi, &lift)
    } else {
        let lift = lift_biadapted(&pi, budget)?;
        let doc = lift_document(&pi, &lift);
        let back = parse_lift(&bicausal_core::io::parse_document(&to_canonical_string(&doc))?)?;
        if back.bijection != lift.bijection {
            return Err(Failure::Domain(Error::Schema("lift does not read back identically".into())));
        }
        doc
    };
    emit(&doc, out)
}

pub fn project(lift: &Path, out: &OutArgs) -> Result<(), Failure> {
    let parsed = parse_lift(&read_document(lift)?)?;
    let pi = parsed.projection()?;
    let doc = coupling_document(&pi);
    round_trip(&doc, &pi, parse_coupling)?;
    emit(&doc, out)
}

fn csv_failure(e: csv::Error) -> Failure {
    Failure::Io(format!("cannot write CSV: {e}"))
}

fn convergence_csv(report: &ConvergenceReport) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "mesh",
        "wp_p",
        "lemma_cost",
        "bound",
        "cost_gap",
        "cells_ok",
        "biadapted",
        "within_bound",
        "wp_p_decimal",
        "bound_decimal",
    ])
    .map_err(csv_failure)?;
    for r in &report.rows {
        w.write_record([
            r.mesh.label(),
            format_rational(&r.wp_p),
            format_rational(&r.lemma_cost),
            format_rational(&r.bound),
            r.cost_gap.as_ref().map(format_rational).unwrap_or_default(),
            r.cells_ok.to_string(),
            r.biadapted.to_string(),
            r.within_bound.to_string(),
            decimal_string(&r.wp_p, 12),
            decimal_string(&r.bound, 12),
        ])
        .map_err(csv_failure)?;
    }
    finish_csv(w)
}

fn surjective_csv(report: &SurjectiveReport) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "mesh",
        "wp_p",
        "lemma_cost",
        "bound",
        "cells_ok",
        "adapted",
        "within_bound",
        "wp_p_decimal",
        "bound_decimal",
    ])
    .map_err(csv_failure)?;
    for r in &report.rows {
        w.write_record([
            r.mesh.label(),
            format_rational(&r.wp_p),
            format_rational(&r.lemma_cost),
            format_rational(&r.bound),
            r.cells_ok.to_string(),
            r.violation.is_none().to_string(),
            r.within_bound.to_string(),
            decimal_string(&r.wp_p, 12),
            decimal_string(&r.bound, 12),
        ])
        .map_err(csv_failure)?;
    }
    finish_csv(w)
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String, Failure> {
    let bytes = w.into_inner().map_err(|e| Failure::Io(format!("cannot write CSV: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Failure::Io(e.to_string()))
}

pub fn approx(
    pi: &Path,
    meshes: &[String],
    p: &str,
    budget: u64,
    surjective_only: bool,
    csv_out: Option<&Path>,
    out: &OutArgs,
) -> Result<(), Failure> {
    let pi = read_coupling(pi)?;
    let meshes = meshes.iter().map(|m| MeshSpec::parse(m)).collect::<Result<Vec<_>, _>>()?;
    let p = Exponent::new(parse_rational(p)?)?;
    let (doc, table) = if surjective_only {
        let report = surjective_report(&pi, &meshes, &p, budget)?;
        (surjective_document(&pi, &report), surjective_csv(&report)?)
    } else {
        let report = convergence_report(&pi, &meshes, &p, budget)?;
        let doc = io::approx_document(&pi, &report);
        io::parse_approx(&io::parse_document(&to_canonical_string(&doc))?)?;
        (doc, convergence_csv(&report)?)
    };
    if let Some(path) = csv_out {
        write_atomic(path, &table)?;
    }
    emit(&doc, out)
}

pub fn feasibility(mu: &Path, nu: &Path, out: &OutArgs) -> Result<(), Failure> {
    let mu = read_measure(mu)?;
    let nu = read_measure(nu)?;
    let f = biadapted_feasibility(&mu, &nu)?;
    let doc = feasibility_document(&mu, &nu, &f);
    round_trip(&doc, &(mu.clone(), nu.clone(), f), parse_feasibility)?;
    emit(&doc, out)
}

fn write_instance(inst: &Instance, dir: &Path) -> Result<(), Failure> {
    let files = [
        ("mu.json", measure_document(&inst.mu), Some(&inst.mu)),
        ("nu.json", measure_document(&inst.nu), Some(&inst.nu)),
    ];
    for (name, doc, mu) in files {
        if let Some(mu) = mu {
            round_trip(&doc, mu, parse_measure)?;
        }
        write_atomic(&dir.join(name), &to_canonical_string(&doc))?;
    }
    if let Some(pi) = &inst.pi {
        let doc = coupling_document(pi);
        round_trip(&doc, pi, parse_coupling)?;
        write_atomic(&dir.join("pi.json"), &to_canonical_string(&doc))?;
    }
    Ok(())
}

pub fn gen(kind: GenKind) -> Result<(), Failure> {
    let (inst, dir) = match kind {
        GenKind::RandomTree { seed, steps, branching, denominator, points, out_dir } => {
            let shape = TreeShape { steps, branching, denominator, points: points.unwrap_or(branching) };
            (gen::random_tree(seed, shape)?, out_dir)
        }
        GenKind::InfoGap { seed, out_dir } => (gen::information_sensitive(seed)?, out_dir),
        GenKind::PaperExample { out_dir } => (gen::paper_example()?, out_dir),
        GenKind::Fixture { name, out_dir } => (gen::fixture(&name)?, out_dir),
    };
    write_instance(&inst, &dir)
}
