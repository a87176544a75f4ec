//! Canonical JSON documents.
//!
//! Object keys are sorted, rationals are reduced `"num/den"` strings,
//! coordinates are decimal strings where they have a finite decimal form,
//! and every top-level document carries `"schema"` and `"kind"`.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed};
use serde_json::{json, Map, Value};

use crate::adapted::AdaptednessWitness;
use crate::approx::{ConvergenceReport, ConvergenceRow, Feasibility, FeasibilityWitness, MeshSpec, SurjectiveReport};
use crate::coupling::{CausalityReport, CausalityWitness, Coupling, Direction, MongeClass};
use crate::error::{Error, Result};
use crate::lifting::{
    block_space, microatomize, AdaptedBijection, Lift, MapDirection, MicroPath, MicroPoint, MicroSpace, RefinementPlan,
    StaticLift,
};
use crate::measure::PathMeasure;
use crate::rational::{format_rational, parse_rational, Exponent, Rational};
use crate::solvers::{Certificate, CostSpec, SolveResult};
use crate::space::{Path, PathSpace, Point, Step, StepMetric};

pub const SCHEMA: &str = "bicausal-ot/1";

/// Pretty-printed with sorted keys and a trailing newline.
pub fn to_canonical_string(doc: &Value) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("json values always serialize");
    s.push('\n');
    s
}

pub fn parse_document(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::Schema(format!("invalid JSON: {e}")))
}

/// Wraps a body object as a top-level document.
pub fn document(kind: &str, body: Value) -> Value {
    let mut map = match body {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("value".into(), other);
            m
        }
    };
    map.insert("schema".into(), Value::from(SCHEMA));
    map.insert("kind".into(), Value::from(kind));
    Value::Object(map)
}

/// The `kind` of a document; the schema tag, when present, must match.
pub fn document_kind(doc: &Value) -> Result<Option<&str>> {
    let obj = doc.as_object().ok_or_else(|| Error::Schema("document must be an object".into()))?;
    if let Some(s) = obj.get("schema") {
        if s.as_str() != Some(SCHEMA) {
            return Err(Error::Schema(format!("unsupported schema {s}, expected {SCHEMA:?}")));
        }
    }
    Ok(obj.get("kind").and_then(Value::as_str))
}

fn expect_kind(doc: &Value, allowed: &[&str]) -> Result<()> {
    match document_kind(doc)? {
        Some(k) if !allowed.contains(&k) => {
            Err(Error::Schema(format!("expected a {} document, got {k:?}", allowed.join(" or "))))
        }
        _ => Ok(()),
    }
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| Error::Schema(format!("missing field {key:?}")))
}

fn array<'a>(v: &'a Value, what: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| Error::Schema(format!("{what} must be an array")))
}

fn string<'a>(v: &'a Value, what: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| Error::Schema(format!("{what} must be a string")))
}

fn unsigned(v: &Value, what: &str) -> Result<u64> {
    v.as_u64().ok_or_else(|| Error::Schema(format!("{what} must be a non-negative integer")))
}

pub fn rational_value(r: &Rational) -> Value {
    Value::from(format_rational(r))
}

pub fn parse_rational_value(v: &Value, what: &str) -> Result<Rational> {
    parse_rational(string(v, what)?)
}

/// Decimal text for rationals whose denominator divides a power of ten,
/// `num/den` otherwise.
pub fn format_coordinate(r: &Rational) -> String {
    let den = r.denom().clone();
    let (mut twos, mut fives, mut rest) = (0u32, 0u32, den);
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    while rest.is_multiple_of(&two) {
        rest /= &two;
        twos += 1;
    }
    while rest.is_multiple_of(&five) {
        rest /= &five;
        fives += 1;
    }
    if !rest.is_one() {
        return format_rational(r);
    }
    let digits = twos.max(fives) as usize;
    let scaled = (r * Rational::from_integer(num_traits::pow(BigInt::from(10), digits))).to_integer();
    let sign = if scaled.is_negative() { "-" } else { "" };
    let text = scaled.abs().to_string();
    if digits == 0 {
        return format!("{sign}{text}");
    }
    let padded = format!("{:0>width$}", text, width = digits + 1);
    let (whole, frac) = padded.split_at(padded.len() - digits);
    format!("{sign}{whole}.{frac}")
}

fn labels_value(labels: Vec<String>) -> Value {
    Value::Array(labels.into_iter().map(Value::from).collect())
}

fn labels_of(v: &Value, what: &str) -> Result<Vec<String>> {
    array(v, what)?.iter().map(|x| string(x, what).map(str::to_string)).collect()
}

fn path_value(space: &PathSpace, path: &[usize]) -> Value {
    labels_value(space.labels(path))
}

fn parse_path(space: &PathSpace, v: &Value) -> Result<Path> {
    space.path_of(&labels_of(v, "path")?)
}

// Spaces, measures, couplings.

pub fn space_body(space: &PathSpace) -> Value {
    let steps: Vec<Value> = space
        .steps()
        .iter()
        .map(|step| {
            let points: Vec<Value> = step
                .points
                .iter()
                .map(|p| {
                    json!({
                        "label": p.label,
                        "coord": p.coord.iter().map(format_coordinate).collect::<Vec<_>>(),
                    })
                })
                .collect();
            let mut m = Map::new();
            m.insert("points".into(), Value::Array(points));
            if step.metric != StepMetric::default() {
                m.insert("metric".into(), Value::from(step.metric.name()));
            }
            Value::Object(m)
        })
        .collect();
    Value::Array(steps)
}

pub fn parse_space(steps: &Value) -> Result<PathSpace> {
    let steps = array(steps, "steps")?
        .iter()
        .map(|s| {
            let points = array(field(s, "points")?, "points")?
                .iter()
                .map(|p| {
                    let label = string(field(p, "label")?, "label")?.to_string();
                    let coord = array(field(p, "coord")?, "coord")?
                        .iter()
                        .map(|c| parse_rational_value(c, "coordinate"))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(Point::new(label, coord))
                })
                .collect::<Result<Vec<_>>>()?;
            let metric = match s.get("metric") {
                Some(m) => StepMetric::from_name(string(m, "metric")?)?,
                None => StepMetric::default(),
            };
            Ok(Step::new(points).with_metric(metric))
        })
        .collect::<Result<Vec<_>>>()?;
    PathSpace::new(steps)
}

pub fn measure_body(mu: &PathMeasure) -> Value {
    let space = mu.space();
    let mass: Vec<Value> =
        mu.masses().iter().map(|(p, m)| json!({ "path": path_value(space, p), "value": format_rational(m) })).collect();
    json!({ "steps": space_body(space), "mass": mass })
}

pub fn measure_document(mu: &PathMeasure) -> Value {
    document("measure", measure_body(mu))
}

pub fn parse_measure(doc: &Value) -> Result<PathMeasure> {
    expect_kind(doc, &["measure"])?;
    let space = Arc::new(parse_space(field(doc, "steps")?)?);
    let mass = array(field(doc, "mass")?, "mass")?
        .iter()
        .map(|e| Ok((parse_path(&space, field(e, "path")?)?, parse_rational_value(field(e, "value")?, "mass")?)))
        .collect::<Result<Vec<_>>>()?;
    PathMeasure::new(space, mass)
}

pub fn coupling_body(pi: &Coupling) -> Value {
    let mass: Vec<Value> = pi
        .masses()
        .iter()
        .map(|((x, y), m)| {
            json!({
                "pair": [path_value(pi.left(), x), path_value(pi.right(), y)],
                "value": format_rational(m),
            })
        })
        .collect();
    json!({
        "left": { "steps": space_body(pi.left()) },
        "right": { "steps": space_body(pi.right()) },
        "mass": mass,
    })
}

pub fn coupling_document(pi: &Coupling) -> Value {
    document("coupling", coupling_body(pi))
}

fn parse_coupling_body(v: &Value) -> Result<Coupling> {
    let left = Arc::new(parse_space(field(field(v, "left")?, "steps")?)?);
    let right = Arc::new(parse_space(field(field(v, "right")?, "steps")?)?);
    let mass = array(field(v, "mass")?, "mass")?
        .iter()
        .map(|e| {
            let pair = array(field(e, "pair")?, "pair")?;
            if pair.len() != 2 {
                return Err(Error::Schema("pair must hold two paths".into()));
            }
            let x = parse_path(&left, &pair[0])?;
            let y = parse_path(&right, &pair[1])?;
            Ok(((x, y), parse_rational_value(field(e, "value")?, "mass")?))
        })
        .collect::<Result<Vec<_>>>()?;
    Coupling::new(left, right, mass)
}

/// Reads a coupling document, or the coupling carried by a solve result or
/// a lift.
pub fn parse_coupling(doc: &Value) -> Result<Coupling> {
    match document_kind(doc)? {
        Some("solve-result") => parse_coupling_body(field(doc, "optimizer")?),
        Some("lift") | Some("static-lift") => parse_coupling_body(field(doc, "coupling")?),
        Some("coupling") | None => parse_coupling_body(doc),
        Some(k) => Err(Error::Schema(format!("expected a coupling document, got {k:?}"))),
    }
}

// Reports.

pub fn witness_value(w: &CausalityWitness) -> Value {
    json!({
        "direction": w.direction.name(),
        "prefix_len": w.prefix_len,
        "x_history": w.x_history,
        "y_history": w.y_history,
        "point": w.point,
        "coupling_conditional": format_rational(&w.coupling_conditional),
        "marginal_conditional": format_rational(&w.marginal_conditional),
    })
}

pub fn parse_witness(v: &Value) -> Result<CausalityWitness> {
    let direction = match string(field(v, "direction")?, "direction")? {
        "forward" => Direction::Forward,
        "backward" => Direction::Backward,
        other => return Err(Error::Schema(format!("unknown direction {other:?}"))),
    };
    Ok(CausalityWitness {
        direction,
        prefix_len: unsigned(field(v, "prefix_len")?, "prefix_len")? as usize,
        x_history: labels_of(field(v, "x_history")?, "x_history")?,
        y_history: labels_of(field(v, "y_history")?, "y_history")?,
        point: string(field(v, "point")?, "point")?.to_string(),
        coupling_conditional: parse_rational_value(field(v, "coupling_conditional")?, "conditional")?,
        marginal_conditional: parse_rational_value(field(v, "marginal_conditional")?, "conditional")?,
    })
}

pub fn causality_value(report: &CausalityReport) -> Value {
    json!({
        "holds": report.holds(),
        "witness": report.witness.as_ref().map_or(Value::Null, witness_value),
    })
}

fn path_map_value(left: &PathSpace, right: &PathSpace, map: &BTreeMap<Path, Path>) -> Value {
    Value::Array(map.iter().map(|(x, y)| json!({ "from": path_value(left, x), "to": path_value(right, y) })).collect())
}

pub fn monge_value(pi: &Coupling, class: &MongeClass) -> Value {
    json!({
        "class": class.name(),
        "map": class.map().map_or(Value::Null, |m| path_map_value(pi.left(), pi.right(), m)),
    })
}

pub fn error_document(err: &Error) -> Value {
    let details = match err {
        Error::MassSumNotOne { actual } => json!({ "actual": format_rational(actual) }),
        Error::NegativeMass { path } | Error::UndefinedOnSupport { path } => json!({ "path": path }),
        Error::UnknownLabel { path, step } => json!({ "path": path, "step": step }),
        Error::StepOutOfRange { step, steps } => json!({ "step": step, "steps": steps }),
        Error::UnbalancedMasses { rows, cols } => {
            json!({ "rows": format_rational(rows), "cols": format_rational(cols) })
        }
        Error::TooLarge { work, limit } => json!({ "work": work.to_string(), "limit": limit.to_string() }),
        Error::NotBicausal(w) => json!({ "witness": witness_value(w) }),
        Error::BudgetExceeded { required, budget } => json!({ "required": required, "budget": budget }),
        Error::PlanInvalid { step, history } => json!({ "step": step, "history": history }),
        Error::PlanNotRefining { step } => json!({ "step": step }),
        _ => Value::Null,
    };
    let mut body = json!({ "code": err.code(), "message": err.to_string() });
    if !details.is_null() {
        body["details"] = details;
    }
    document("error", body)
}

// Costs and solve results.

pub fn cost_value(cost: &CostSpec, left: &PathSpace, right: &PathSpace) -> Value {
    match cost {
        CostSpec::MetricPower(p) => json!({ "type": "metric", "p": format_rational(p.value()) }),
        CostSpec::Separable(tables) => json!({
            "type": "separable",
            "tables": tables
                .iter()
                .map(|t| t.iter().map(|r| r.iter().map(format_rational).collect::<Vec<_>>()).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        }),
        CostSpec::General(table) => json!({
            "type": "general",
            "entries": table
                .iter()
                .map(|((x, y), c)| json!({
                    "pair": [path_value(left, x), path_value(right, y)],
                    "value": format_rational(c),
                }))
                .collect::<Vec<_>>(),
        }),
    }
}

/// Parses a cost block; general tables name paths by labels of the given
/// spaces, separable tables index points in declaration order.
pub fn parse_cost(v: &Value, left: &PathSpace, right: &PathSpace) -> Result<CostSpec> {
    expect_kind(v, &["cost"])?;
    match string(field(v, "type")?, "cost type")? {
        "metric" => Ok(CostSpec::MetricPower(Exponent::new(parse_rational_value(field(v, "p")?, "p")?)?)),
        "separable" => {
            let tables = array(field(v, "tables")?, "tables")?
                .iter()
                .map(|t| {
                    array(t, "table")?
                        .iter()
                        .map(|r| array(r, "row")?.iter().map(|c| parse_rational_value(c, "cost")).collect())
                        .collect()
                })
                .collect::<Result<Vec<Vec<Vec<Rational>>>>>()?;
            Ok(CostSpec::Separable(tables))
        }
        "general" => {
            let mut table = BTreeMap::new();
            for e in array(field(v, "entries")?, "entries")? {
                let pair = array(field(e, "pair")?, "pair")?;
                if pair.len() != 2 {
                    return Err(Error::Schema("pair must hold two paths".into()));
                }
                let key = (parse_path(left, &pair[0])?, parse_path(right, &pair[1])?);
                table.insert(key, parse_rational_value(field(e, "value")?, "cost")?);
            }
            Ok(CostSpec::General(table))
        }
        other => Err(Error::Schema(format!("unknown cost type {other:?}"))),
    }
}

fn certificate_value(cert: &Certificate, pi: &Coupling) -> Value {
    let entries = |space: &PathSpace, list: &[(Path, Rational)]| -> Value {
        list.iter().map(|(p, v)| json!({ "path": path_value(space, p), "value": format_rational(v) })).collect()
    };
    match cert {
        Certificate::Duals { rows, cols } => json!({
            "type": "duals",
            "rows": entries(pi.left(), rows),
            "cols": entries(pi.right(), cols),
        }),
        Certificate::Stagewise { values } => json!({
            "type": "stagewise",
            "values": values
                .iter()
                .map(|((x, y), v)| json!({
                    "pair": [path_value(pi.left(), x), path_value(pi.right(), y)],
                    "value": format_rational(v),
                }))
                .collect::<Vec<_>>(),
        }),
        Certificate::Enumeration { subproblems, vertices } => json!({
            "type": "enumeration",
            "subproblems": subproblems,
            "vertices": vertices.to_string(),
        }),
        Certificate::Linear { variables, constraints } => json!({
            "type": "linear",
            "variables": variables,
            "constraints": constraints,
        }),
    }
}

fn parse_certificate(v: &Value, pi: &Coupling) -> Result<Certificate> {
    let entries = |space: &PathSpace, key: &str| -> Result<Vec<(Path, Rational)>> {
        array(field(v, key)?, key)?
            .iter()
            .map(|e| Ok((parse_path(space, field(e, "path")?)?, parse_rational_value(field(e, "value")?, key)?)))
            .collect()
    };
    match string(field(v, "type")?, "certificate type")? {
        "duals" => Ok(Certificate::Duals { rows: entries(pi.left(), "rows")?, cols: entries(pi.right(), "cols")? }),
        "stagewise" => {
            let mut values = BTreeMap::new();
            for e in array(field(v, "values")?, "values")? {
                let pair = array(field(e, "pair")?, "pair")?;
                if pair.len() != 2 {
                    return Err(Error::Schema("pair must hold two histories".into()));
                }
                let x = pi.left().prefix_of(&labels_of(&pair[0], "history")?)?;
                let y = pi.right().prefix_of(&labels_of(&pair[1], "history")?)?;
                values.insert((x, y), parse_rational_value(field(e, "value")?, "value")?);
            }
            Ok(Certificate::Stagewise { values })
        }
        "enumeration" => Ok(Certificate::Enumeration {
            subproblems: unsigned(field(v, "subproblems")?, "subproblems")? as usize,
            vertices: string(field(v, "vertices")?, "vertices")?
                .parse()
                .map_err(|_| Error::Schema("vertices must be an integer string".into()))?,
        }),
        "linear" => Ok(Certificate::Linear {
            variables: unsigned(field(v, "variables")?, "variables")? as usize,
            constraints: unsigned(field(v, "constraints")?, "constraints")? as usize,
        }),
        other => Err(Error::Schema(format!("unknown certificate type {other:?}"))),
    }
}

/// A solve result together with what produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveRecord {
    pub problem: String,
    pub solver: String,
    pub cost: CostSpec,
    pub result: SolveResult,
}

pub fn solve_document(record: &SolveRecord) -> Value {
    let pi = &record.result.optimizer;
    document(
        "solve-result",
        json!({
            "problem": record.problem,
            "solver": record.solver,
            "cost": cost_value(&record.cost, pi.left(), pi.right()),
            "value": format_rational(&record.result.value),
            "optimizer": coupling_body(pi),
            "certificate": certificate_value(&record.result.certificate, pi),
        }),
    )
}

pub fn parse_solve(doc: &Value) -> Result<SolveRecord> {
    expect_kind(doc, &["solve-result"])?;
    let optimizer = parse_coupling_body(field(doc, "optimizer")?)?;
    let cost = parse_cost(field(doc, "cost")?, optimizer.left(), optimizer.right())?;
    let certificate = parse_certificate(field(doc, "certificate")?, &optimizer)?;
    Ok(SolveRecord {
        problem: string(field(doc, "problem")?, "problem")?.to_string(),
        solver: string(field(doc, "solver")?, "solver")?.to_string(),
        cost,
        result: SolveResult { value: parse_rational_value(field(doc, "value")?, "value")?, optimizer, certificate },
    })
}

// Micro-paths and lifts.

pub fn micro_path_value(micro: &MicroSpace, mp: &[MicroPoint]) -> Value {
    Value::Array(micro.labels(mp).into_iter().map(|(l, s)| json!([l, s])).collect())
}

pub fn parse_micro_path(micro: &MicroSpace, v: &Value) -> Result<MicroPath> {
    let items = array(v, "micro-path")?;
    if items.len() > micro.steps() {
        return Err(Error::Schema("micro-path longer than the space".into()));
    }
    items.iter().enumerate().map(|(t, item)| parse_micro_point(micro, t, item)).collect()
}

fn map_value(bij: &AdaptedBijection) -> Value {
    Value::Array(
        bij.map(MapDirection::Forward)
            .iter()
            .map(|(x, y)| json!({ "x": micro_path_value(bij.left(), x), "y": micro_path_value(bij.right(), y) }))
            .collect(),
    )
}

fn components_value(bij: &AdaptedBijection, direction: MapDirection) -> Value {
    let (from, to) = match direction {
        MapDirection::Forward => (bij.left(), bij.right()),
        MapDirection::Inverse => (bij.right(), bij.left()),
    };
    match bij.components(direction) {
        None => Value::Null,
        Some(tables) => Value::Array(
            tables
                .iter()
                .enumerate()
                .map(|(t, table)| {
                    Value::Array(
                        table
                            .iter()
                            .map(|(prefix, &(y, s))| {
                                json!({
                                    "prefix": micro_path_value(from, prefix),
                                    "image": [to.base().label(t, y), s],
                                })
                            })
                            .collect(),
                    )
                })
                .collect(),
        ),
    }
}

fn parse_micro_point(micro: &MicroSpace, t: usize, v: &Value) -> Result<MicroPoint> {
    let pair = array(v, "micro-point")?;
    if pair.len() != 2 {
        return Err(Error::Schema("micro-point must be [label, slot]".into()));
    }
    let label = string(&pair[0], "label")?;
    let x = micro
        .base()
        .index_of(t, label)
        .ok_or_else(|| Error::UnknownLabel { path: vec![label.to_string()], step: t })?;
    Ok((x, unsigned(&pair[1], "slot")? as usize))
}

fn plan_value(plan: &RefinementPlan) -> Value {
    json!(plan.denominators)
}

fn parse_plan(v: &Value) -> Result<RefinementPlan> {
    let dens = array(v, "plan")?.iter().map(|d| unsigned(d, "denominator")).collect::<Result<Vec<_>>>()?;
    RefinementPlan::new(dens)
}

fn bijection_fields(bij: &AdaptedBijection) -> Value {
    json!({
        "map": map_value(bij),
        "components": {
            "forward": components_value(bij, MapDirection::Forward),
            "inverse": components_value(bij, MapDirection::Inverse),
        },
    })
}

pub fn lift_document(pi: &Coupling, lift: &Lift) -> Value {
    let mut body = bijection_fields(&lift.bijection);
    body["coupling"] = coupling_body(pi);
    body["plan"] = plan_value(&lift.plan);
    body["micro_paths"] = Value::from(lift.bijection.left().len());
    document("lift", body)
}

pub fn static_lift_document(pi: &Coupling, lift: &StaticLift) -> Value {
    let mut body = bijection_fields(&lift.lift.bijection);
    body["coupling"] = coupling_body(pi);
    body["plan"] = plan_value(&lift.lift.plan);
    body["micro_paths"] = Value::from(lift.lift.bijection.left().len());
    document("static-lift", body)
}

/// A lift read back from disk: the base coupling, the rebuilt bijection
/// (bijectivity is checked while parsing), and the stored component tables.
#[derive(Debug, Clone)]
pub struct ParsedLift {
    pub is_static: bool,
    pub coupling: Coupling,
    pub plan: RefinementPlan,
    pub bijection: AdaptedBijection,
    pub forward_components: Option<Vec<BTreeMap<MicroPath, MicroPoint>>>,
    pub inverse_components: Option<Vec<BTreeMap<MicroPath, MicroPoint>>>,
    /// Block paths of the static lift's one-step spaces.
    pub blocks: Option<(Vec<Path>, Vec<Path>)>,
}

impl ParsedLift {
    /// The coupling the bijection projects to, on the base spaces.
    pub fn projection(&self) -> Result<Coupling> {
        let block = self.bijection.lifted().project()?;
        match &self.blocks {
            None => Ok(block),
            Some((lb, rb)) => Coupling::new(
                self.coupling.left().clone(),
                self.coupling.right().clone(),
                block.masses().iter().map(|((x, y), m)| ((lb[x[0]].clone(), rb[y[0]].clone()), m.clone())),
            ),
        }
    }
}

pub fn parse_lift(doc: &Value) -> Result<ParsedLift> {
    let is_static = match document_kind(doc)? {
        Some("lift") => false,
        Some("static-lift") => true,
        other => return Err(Error::Schema(format!("expected a lift document, got {other:?}"))),
    };
    let coupling = parse_coupling_body(field(doc, "coupling")?)?;
    let plan = parse_plan(field(doc, "plan")?)?;
    let (mu, nu) = coupling.marginals();
    let (mu, nu, blocks) = if is_static {
        let (ls, lb) = block_space(&mu)?;
        let (rs, rb) = block_space(&nu)?;
        let lm = PathMeasure::new(ls, mu.masses().values().cloned().enumerate().map(|(k, m)| (vec![k], m)))?;
        let rm = PathMeasure::new(rs, nu.masses().values().cloned().enumerate().map(|(k, m)| (vec![k], m)))?;
        (lm, rm, Some((lb, rb)))
    } else {
        (mu, nu, None)
    };
    let left = Arc::new(microatomize(&mu, &plan)?);
    let right = Arc::new(microatomize(&nu, &plan)?);
    let mut forward = BTreeMap::new();
    for e in array(field(doc, "map")?, "map")? {
        let x = parse_micro_path(&left, field(e, "x")?)?;
        let y = parse_micro_path(&right, field(e, "y")?)?;
        if forward.insert(x, y).is_some() {
            return Err(Error::Schema("micro-path mapped twice".into()));
        }
    }
    let bijection = AdaptedBijection::new(left.clone(), right.clone(), forward)?;
    let comps = field(doc, "components")?;
    let read = |v: &Value, from: &MicroSpace, to: &MicroSpace| {
        if v.is_null() {
            Ok(None)
        } else {
            parse_components(v, from, to).map(Some)
        }
    };
    let forward_components = read(field(comps, "forward")?, &left, &right)?;
    let inverse_components = read(field(comps, "inverse")?, &right, &left)?;
    Ok(ParsedLift { is_static, coupling, plan, bijection, forward_components, inverse_components, blocks })
}

fn parse_components(v: &Value, from: &MicroSpace, to: &MicroSpace) -> Result<Vec<BTreeMap<MicroPath, MicroPoint>>> {
    array(v, "components")?
        .iter()
        .enumerate()
        .map(|(t, table)| {
            array(table, "component table")?
                .iter()
                .map(|e| {
                    let prefix = parse_micro_path(from, field(e, "prefix")?)?;
                    Ok((prefix, parse_micro_point(to, t, field(e, "image")?)?))
                })
                .collect()
        })
        .collect()
}

// Approximation reports and feasibility.

fn row_value(row: &ConvergenceRow) -> Value {
    json!({
        "mesh": row.mesh.label(),
        "wp_p": format_rational(&row.wp_p),
        "lemma_cost": format_rational(&row.lemma_cost),
        "bound": format_rational(&row.bound),
        "cost_gap": row.cost_gap.as_ref().map_or(Value::Null, rational_value),
        "cells_ok": row.cells_ok,
        "biadapted": row.biadapted,
        "within_bound": row.within_bound,
        "coupling": coupling_body(&row.coupling),
    })
}

pub fn approx_document(target: &Coupling, report: &ConvergenceReport) -> Value {
    document(
        "approx-report",
        json!({
            "p": format_rational(report.p.value()),
            "plan": plan_value(&report.plan),
            "all_ok": report.all_ok(),
            "target": coupling_body(target),
            "rows": report.rows.iter().map(row_value).collect::<Vec<_>>(),
        }),
    )
}

/// The stored fields of one approximation row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredRow {
    pub mesh: MeshSpec,
    pub wp_p: Rational,
    pub lemma_cost: Rational,
    pub bound: Rational,
    pub cost_gap: Option<Rational>,
    pub cells_ok: bool,
    pub biadapted: bool,
    pub within_bound: bool,
    pub coupling: Coupling,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredReport {
    pub p: Exponent,
    pub plan: RefinementPlan,
    pub all_ok: bool,
    pub target: Coupling,
    pub rows: Vec<StoredRow>,
}

fn boolean(v: &Value, what: &str) -> Result<bool> {
    v.as_bool().ok_or_else(|| Error::Schema(format!("{what} must be a boolean")))
}

pub fn parse_approx(doc: &Value) -> Result<StoredReport> {
    expect_kind(doc, &["approx-report"])?;
    let rows = array(field(doc, "rows")?, "rows")?
        .iter()
        .map(|r| {
            let gap = field(r, "cost_gap")?;
            Ok(StoredRow {
                mesh: MeshSpec::parse(string(field(r, "mesh")?, "mesh")?)?,
                wp_p: parse_rational_value(field(r, "wp_p")?, "wp_p")?,
                lemma_cost: parse_rational_value(field(r, "lemma_cost")?, "lemma_cost")?,
                bound: parse_rational_value(field(r, "bound")?, "bound")?,
                cost_gap: if gap.is_null() { None } else { Some(parse_rational_value(gap, "cost_gap")?) },
                cells_ok: boolean(field(r, "cells_ok")?, "cells_ok")?,
                biadapted: boolean(field(r, "biadapted")?, "biadapted")?,
                within_bound: boolean(field(r, "within_bound")?, "within_bound")?,
                coupling: parse_coupling_body(field(r, "coupling")?)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StoredReport {
        p: Exponent::new(parse_rational_value(field(doc, "p")?, "p")?)?,
        plan: parse_plan(field(doc, "plan")?)?,
        all_ok: boolean(field(doc, "all_ok")?, "all_ok")?,
        target: parse_coupling_body(field(doc, "target")?)?,
        rows,
    })
}

pub fn adaptedness_value<T>(w: &AdaptednessWitness<T>, show: impl Fn(&[T]) -> Value) -> Value {
    json!({
        "step": w.step,
        "first": { "input": show(&w.first.0), "output": show(&w.first.1) },
        "second": { "input": show(&w.second.0), "output": show(&w.second.1) },
    })
}

pub fn surjective_document(target: &Coupling, report: &SurjectiveReport) -> Value {
    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "mesh": r.mesh.label(),
                "wp_p": format_rational(&r.wp_p),
                "lemma_cost": format_rational(&r.lemma_cost),
                "bound": format_rational(&r.bound),
                "cells_ok": r.cells_ok,
                "adapted": r.violation.is_none(),
                "violation": r.violation.as_ref().map_or(Value::Null, |w| {
                    adaptedness_value(w, |p| json!(p))
                }),
                "within_bound": r.within_bound,
                "coupling": coupling_body(&r.coupling),
            })
        })
        .collect();
    document(
        "approx-surjective-report",
        json!({
            "p": format_rational(report.p.value()),
            "plan": plan_value(&report.plan),
            "all_ok": report.all_ok(),
            "target": coupling_body(target),
            "rows": rows,
        }),
    )
}

pub fn feasibility_document(mu: &PathMeasure, nu: &PathMeasure, f: &Feasibility) -> Value {
    let mut body = match f {
        Feasibility::Feasible { map } => json!({
            "feasible": true,
            "map": path_map_value(mu.space(), nu.space(), map),
        }),
        Feasibility::Infeasible(w) => json!({
            "feasible": false,
            "witness": {
                "x_history": w.x_history,
                "y_history": w.y_history,
                "x_masses": w.x_masses.iter().map(format_rational).collect::<Vec<_>>(),
                "y_masses": w.y_masses.iter().map(format_rational).collect::<Vec<_>>(),
            },
        }),
    };
    body["mu"] = measure_body(mu);
    body["nu"] = measure_body(nu);
    document("feasibility", body)
}

pub fn parse_feasibility(doc: &Value) -> Result<(PathMeasure, PathMeasure, Feasibility)> {
    expect_kind(doc, &["feasibility"])?;
    let mu = parse_measure(field(doc, "mu")?)?;
    let nu = parse_measure(field(doc, "nu")?)?;
    let f = if boolean(field(doc, "feasible")?, "feasible")? {
        let mut map = BTreeMap::new();
        for e in array(field(doc, "map")?, "map")? {
            map.insert(parse_path(mu.space(), field(e, "from")?)?, parse_path(nu.space(), field(e, "to")?)?);
        }
        Feasibility::Feasible { map }
    } else {
        let w = field(doc, "witness")?;
        let masses = |key: &str| -> Result<Vec<Rational>> {
            array(field(w, key)?, key)?.iter().map(|m| parse_rational_value(m, key)).collect()
        };
        Feasibility::Infeasible(FeasibilityWitness {
            x_history: labels_of(field(w, "x_history")?, "x_history")?,
            y_history: labels_of(field(w, "y_history")?, "y_history")?,
            x_masses: masses("x_masses")?,
            y_masses: masses("y_masses")?,
        })
    };
    Ok((mu, nu, f))
}

/// Decimal rendering rounded half away from zero, for CSV exports only.
pub fn decimal_string(r: &Rational, digits: usize) -> String {
    let scale = Rational::from_integer(num_traits::pow(BigInt::from(10), digits));
    let scaled = r * scale;
    let half = Rational::new(BigInt::one(), BigInt::from(2));
    let rounded = if scaled.is_negative() { -((-scaled) + half).floor() } else { (scaled + half).floor() };
    let value = Rational::new(rounded.to_integer(), num_traits::pow(BigInt::from(10), digits));
    format_coordinate(&value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    fn sample_measure() -> PathMeasure {
        let s = Arc::new(PathSpace::from_coordinates(&[&["0", "1.5"], &["-1", "1/3"]]).unwrap());
        PathMeasure::new(s, [(vec![0, 0], ratio(1, 4)), (vec![1, 1], ratio(3, 4))]).unwrap()
    }

    #[test]
    fn coordinates_prefer_decimals() {
        assert_eq!(format_coordinate(&ratio(3, 2)), "1.5");
        assert_eq!(format_coordinate(&ratio(-1, 4)), "-0.25");
        assert_eq!(format_coordinate(&ratio(-1, 40)), "-0.025");
        assert_eq!(format_coordinate(&ratio(7, 1)), "7");
        assert_eq!(format_coordinate(&ratio(1, 3)), "1/3");
        assert_eq!(decimal_string(&ratio(2, 3), 4), "0.6667");
        assert_eq!(decimal_string(&ratio(-1, 8), 2), "-0.13");
    }

    #[test]
    fn measure_round_trip() {
        let mu = sample_measure();
        let text = to_canonical_string(&measure_document(&mu));
        assert!(text.contains("\"schema\": \"bicausal-ot/1\""));
        assert!(text.contains("\"value\": \"3/4\""));
        let back = parse_measure(&parse_document(&text).unwrap()).unwrap();
        assert_eq!(back, mu);
        assert_eq!(to_canonical_string(&measure_document(&back)), text);
    }

    #[test]
    fn coupling_round_trip_and_schema_check() {
        let mu = sample_measure();
        let pi = Coupling::product(&mu, &mu).unwrap();
        let doc = coupling_document(&pi);
        assert_eq!(parse_coupling(&doc).unwrap(), pi);
        let mut bad = doc.clone();
        bad["schema"] = Value::from("other/2");
        assert!(matches!(parse_coupling(&bad), Err(Error::Schema(_))));
        assert!(matches!(parse_measure(&doc), Err(Error::Schema(_))));
    }

    #[test]
    fn handwritten_measure_without_tags() {
        let text = r#"{"steps":[{"points":[{"label":"a","coord":["0","1.5"]}]}],
                       "mass":[{"path":["a"],"value":"1"}]}"#;
        let mu = parse_measure(&parse_document(text).unwrap()).unwrap();
        assert_eq!(mu.support_len(), 1);
        let bad = r#"{"steps":[{"points":[{"label":"a","coord":["0"]}]}],"mass":[{"path":["b"],"value":"1"}]}"#;
        assert_eq!(parse_measure(&parse_document(bad).unwrap()).unwrap_err().code(), "UNKNOWN_LABEL");
    }
}
