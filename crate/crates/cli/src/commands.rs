use std::collections::VecDeque;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use nsl_core::bounds_audit::{audit, AuditReport, Scenario};
use nsl_core::charge::{central_charge, slope, stability_verdict, ChargeDatum};
use nsl_core::curve_graph::{chain_profile, is_admissible_tree, is_p1_tree, CurveGraph, Subcurve};
use nsl_core::error_charge::{err_charge, is_flat, FMDatum};
use nsl_core::generate::{random_datum, DatumLimits};
use nsl_core::reduction_engine::{
    replay, run, step_bound, validate_semistable_type, EngineError, Greedy, Move, MoveGenerator, RunResult,
    Scripted, Seeded,
};
use nsl_core::sheaf_on_tree::{classify_positivity, h0, h0_oracle, is_globally_generated_oracle, Gluing, SheafOnTree};

use crate::{Command, Outcome, EXIT_CERTIFICATE, EXIT_REPORT_FAIL, EXIT_SCHEMA, EXIT_STUCK};

fn read_value(path: &Path) -> Result<Value, Outcome> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Outcome::fail(EXIT_SCHEMA, format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Outcome::fail(EXIT_SCHEMA, format!("{}: {e}", path.display())))
}

fn parse<T: DeserializeOwned>(v: Value) -> Result<T, Outcome> {
    serde_json::from_value(v).map_err(|e| Outcome::fail(EXIT_SCHEMA, e))
}

fn read<T: DeserializeOwned>(path: &Path) -> Result<T, Outcome> {
    parse(read_value(path)?)
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<(), Outcome> {
    let text = serde_json::to_string_pretty(v).expect("serializable");
    std::fs::write(path, text + "\n")
        .map_err(|e| Outcome::fail(EXIT_SCHEMA, format!("cannot write {}: {e}", path.display())))
}

#[derive(Deserialize)]
struct TreeQuery {
    graph: CurveGraph,
    subcurve: Subcurve,
}

#[derive(Deserialize)]
struct StabilityQuery {
    total: ChargeDatum,
    #[serde(default)]
    subobjects: Vec<ChargeDatum>,
}

#[derive(Deserialize)]
struct ReduceQuery {
    datum: FMDatum,
    #[serde(default)]
    moves: Option<Vec<Move>>,
}

pub(crate) fn dispatch(c: Command) -> Outcome {
    let r = match c {
        Command::Genus(i) => genus(i.path()),
        Command::Tree(i) => tree(i.path()),
        Command::H0 { input, seed } => h0_cmd(input.path(), seed),
        Command::Positivity { input, seed } => positivity(input.path(), seed),
        Command::Charge(i) => charge(i.path()),
        Command::Slope(i) => slope_cmd(i.path()),
        Command::Stability(i) => stability(i.path()),
        Command::Err(i) => err_cmd(i.path()),
        Command::Reduce { input, seed, trace } => reduce(input.path(), seed, trace.as_deref()),
        Command::Audit { input, report } => audit_cmd(input.path(), report.as_deref()),
        Command::Fuzz { seed, cases } => Ok(fuzz(seed, cases)),
    };
    r.unwrap_or_else(|o| o)
}

fn genus(p: &Path) -> Result<Outcome, Outcome> {
    let g: CurveGraph = read(p)?;
    Ok(Outcome::ok(json!({ "genus": g.genus() })))
}

fn tree(p: &Path) -> Result<Outcome, Outcome> {
    let v = read_value(p)?;
    let (g, s) = if v.get("graph").is_some() {
        let q: TreeQuery = parse(v)?;
        (q.graph, q.subcurve)
    } else {
        let g: CurveGraph = parse(v)?;
        let all = g.all();
        (g, all)
    };
    if let Some(x) = s.vertices.iter().find(|x| g.vertex(x).is_none()) {
        return Err(Outcome::fail(EXIT_SCHEMA, format!("unknown vertex {x}")));
    }
    let chain = chain_profile(&g, &s).map(|c| c.is_chain).unwrap_or(false);
    Ok(Outcome::ok(json!({
        "is_p1_tree": is_p1_tree(&g, &s),
        "chain": chain,
        "admissible": is_admissible_tree(&g, &s),
    })))
}

fn gluing(seed: Option<u64>) -> Gluing {
    seed.map_or(Gluing::Stored, Gluing::Seeded)
}

fn h0_cmd(p: &Path, seed: Option<u64>) -> Result<Outcome, Outcome> {
    let f: SheafOnTree = read(p)?;
    let n = h0(&f).map_err(|e| Outcome::fail(EXIT_SCHEMA, e))?;
    let mut body = json!({ "h0": n });
    if let Some(s) = seed {
        let o = h0_oracle(&f, Gluing::Seeded(s)).map_err(|e| Outcome::fail(EXIT_SCHEMA, e))?;
        body["h0_oracle"] = json!(o);
    }
    Ok(Outcome::ok(body))
}

fn positivity(p: &Path, seed: Option<u64>) -> Result<Outcome, Outcome> {
    let f: SheafOnTree = read(p)?;
    let class = classify_positivity(&f);
    let gg = if f.is_nonnegative() {
        json!(is_globally_generated_oracle(&f, gluing(seed)).map_err(|e| Outcome::fail(EXIT_SCHEMA, e))?)
    } else {
        json!(false)
    };
    Ok(Outcome::ok(json!({ "class": class, "globally_generated": gg })))
}

fn charge(p: &Path) -> Result<Outcome, Outcome> {
    let d: ChargeDatum = read(p)?;
    d.validate().map_err(|e| Outcome::fail(EXIT_SCHEMA, e))?;
    Ok(Outcome::ok(json!(central_charge(&d))))
}

fn slope_cmd(p: &Path) -> Result<Outcome, Outcome> {
    let d: ChargeDatum = read(p)?;
    d.validate().map_err(|e| Outcome::fail(EXIT_SCHEMA, e))?;
    match slope(&central_charge(&d)) {
        Ok(s) => Ok(Outcome::ok(json!({ "slope": s }))),
        Err(e) => Err(Outcome::fail(EXIT_REPORT_FAIL, e)),
    }
}

fn stability(p: &Path) -> Result<Outcome, Outcome> {
    let q: StabilityQuery = read(p)?;
    let rep = stability_verdict(&q.total, &q.subobjects).map_err(|e| Outcome::fail(EXIT_SCHEMA, e))?;
    Ok(Outcome::ok(json!(rep)))
}

fn err_cmd(p: &Path) -> Result<Outcome, Outcome> {
    let d: FMDatum = read(p)?;
    let z = err_charge(&d);
    Ok(Outcome::ok(json!({ "re": z.re, "im": z.im, "flat": is_flat(&d) })))
}

fn engine_failure(e: EngineError) -> Outcome {
    let code = match e {
        EngineError::StuckState(_) => EXIT_STUCK,
        EngineError::InvalidState(_) => EXIT_SCHEMA,
        _ => EXIT_CERTIFICATE,
    };
    let mut o = Outcome::fail(code, &e);
    if let EngineError::StuckState(z) = &e {
        o.body["err"] = json!(z);
    }
    o
}

fn reduce(p: &Path, seed: Option<u64>, trace: Option<&Path>) -> Result<Outcome, Outcome> {
    let v = read_value(p)?;
    let (datum, moves) = if v.get("datum").is_some() {
        let q: ReduceQuery = parse(v)?;
        (q.datum, q.moves)
    } else {
        (parse::<FMDatum>(v)?, None)
    };
    let mut generator: Box<dyn MoveGenerator> = match (moves, seed) {
        (Some(m), _) => Box::new(Scripted(VecDeque::from(m))),
        (None, Some(s)) => Box::new(Seeded::new(s)),
        (None, None) => Box::new(Greedy),
    };
    let out: RunResult = run(datum.clone(), generator.as_mut()).map_err(engine_failure)?;
    if let Some(t) = trace {
        write_json(
            t,
            &json!({
                "initial": datum,
                "steps": out.state.trace,
                "final": out.state.datum,
            }),
        )?;
    }
    let z = err_charge(&out.state.datum);
    Ok(Outcome::ok(json!({ "steps": out.steps, "err": z })))
}

fn audit_cmd(p: &Path, report: Option<&Path>) -> Result<Outcome, Outcome> {
    let v = read_value(p)?;
    let scenario = if v.get("datum").is_some() && v.get("rank").is_none() {
        #[derive(Deserialize)]
        struct Wrapped {
            datum: FMDatum,
        }
        let w: Wrapped = parse(v)?;
        Scenario::from_datum(&w.datum).map_err(|e| Outcome::fail(EXIT_SCHEMA, e))?
    } else {
        parse::<Scenario>(v)?
    };
    let rep: AuditReport = audit(&scenario);
    if let Some(r) = report {
        write_json(r, &rep)?;
    }
    Ok(Outcome {
        code: if rep.pass { 0 } else { EXIT_REPORT_FAIL },
        body: json!(rep),
    })
}

/// One seeded case: random datum, seeded reduction, replay and audits.
pub(crate) fn fuzz_case(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = random_datum(&mut rng, &DatumLimits::default());
    let bound = step_bound(&d).map_err(|e| e.to_string())?;
    let out = run(d.clone(), &mut Seeded::new(seed)).map_err(|e| e.to_string())?;
    if !err_charge(&out.state.datum).is_zero() {
        return Err("final Err is not zero".into());
    }
    if out.steps as u64 > bound {
        return Err(format!("{} steps exceed the bound {bound}", out.steps));
    }
    replay(&d, &out.state.trace).map_err(|e| e.to_string())?;
    let rep = validate_semistable_type(&out.state.datum, &[], true).map_err(|e| e.to_string())?;
    if !rep.condition3_violations.is_empty() {
        return Err("constant component with fewer than three special points".into());
    }
    let scenario = Scenario::from_datum(&out.state.datum).map_err(|e| e.to_string())?;
    if !audit(&scenario).pass {
        return Err("audit failed".into());
    }
    Ok(())
}

fn fuzz(seed: u64, cases: u64) -> Outcome {
    let results: Vec<(u64, Result<(), String>)> = (0..cases)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i);
            (s, fuzz_case(s))
        })
        .collect();
    let failures: Vec<Value> = results
        .iter()
        .filter_map(|(s, r)| r.as_ref().err().map(|e| json!({ "seed": s, "error": e })))
        .collect();
    for f in &failures {
        log::warn!("fuzz failure: {f}");
    }
    let failed = failures.len() as u64;
    Outcome {
        code: if failed == 0 { 0 } else { EXIT_REPORT_FAIL },
        body: json!({ "cases": cases, "passed": cases - failed, "failed": failed }),
    }
}
