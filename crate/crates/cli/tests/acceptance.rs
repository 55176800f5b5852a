//! One PASS/FAIL line per acceptance criterion.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use nsl_core::bounds_audit::{audit, Scenario};
use nsl_core::charge::{lattice_membership, order, precedes, ChargeValue};
use nsl_core::curve_graph::CurveGraph;
use nsl_core::error_charge::{definity_check, err_charge, is_flat, FMDatum};
use nsl_core::generate::{
    defect_vectors, forests, product, random_datum, random_parts, random_sheaf, random_tree, splitting_types,
    DatumLimits,
};
use nsl_core::reduction_engine::{
    replay, run, step_bound, step_bound_real_part, validate_semistable_type, Move, Seeded,
};
use nsl_core::sheaf_on_tree::{
    classify_positivity, delta_flat_change, degree, h0, h0_oracle, is_globally_generated_oracle,
    pushforward_collapse, pushforward_collapse_oracle, AttachContext, Gluing, Positivity, SheafOnTree,
    SplittingType,
};
use nsl_core::Q;

struct Outcome {
    pass: bool,
    summary: String,
}

fn outcome(pass: bool, summary: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        summary: summary.into(),
    }
}

/// Instances on a forest: per-vertex type lists and the defect vectors.
fn instances(
    g: &CurveGraph,
    r: u32,
    cap: impl Fn(usize) -> i64,
    all_defects: bool,
) -> (Vec<Vec<SplittingType>>, Vec<BTreeMap<String, u32>>) {
    let per_vertex: Vec<Vec<SplittingType>> = g
        .vertex_ids()
        .map(|v| splitting_types(r, cap(g.degree(v))))
        .collect();
    let defects = if all_defects {
        defect_vectors(g, r)
    } else {
        vec![g.edges().iter().map(|e| (e.id.clone(), 0)).collect()]
    };
    (per_vertex, defects)
}

fn sheaf_of(g: &CurveGraph, r: u32, types: &[SplittingType], defects: &BTreeMap<String, u32>) -> SheafOnTree {
    let vt = g.vertex_ids().cloned().zip(types.iter().cloned()).collect();
    SheafOnTree::new(g.clone(), r, vt, defects.clone()).unwrap()
}

/// Below `deg_v - 1` a part changes the rank of the gluing system; from
/// there on each unit adds exactly one section.
fn h0_cap(deg: usize) -> i64 {
    (deg as i64 - 1).clamp(0, 4)
}

fn c1_h0() -> Outcome {
    let fs = forests(6);
    let jobs: Vec<(usize, u32)> = (0..fs.len()).flat_map(|i| (1..=3).map(move |r| (i, r))).collect();
    let results: Vec<(u64, Vec<String>)> = jobs
        .par_iter()
        .map(|&(i, r)| {
            let g = &fs[i];
            let (types, defects) = instances(g, r, h0_cap, true);
            let mut n = 0;
            let mut bad = Vec::new();
            for ts in product(&types) {
                for ds in &defects {
                    let f = sheaf_of(g, r, &ts, ds);
                    n += 1;
                    let (a, b) = (h0(&f).unwrap(), h0_oracle(&f, Gluing::Canonical).unwrap());
                    if a != b && bad.len() < 3 {
                        bad.push(serde_json::to_string(&f).unwrap());
                    }
                }
            }
            (n, bad)
        })
        .collect();
    let exhaustive: u64 = results.iter().map(|r| r.0).sum();
    let mut bad: Vec<String> = results.into_iter().flat_map(|r| r.1).collect();

    let full: Vec<u64> = (0..3000u64).collect();
    let mut shifted: Vec<String> = full
        .par_iter()
        .filter_map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let r = rng.gen_range(1..=3);
            let f = random_sheaf(&mut rng, 6, r, 4);
            (h0(&f).unwrap() != h0_oracle(&f, Gluing::Canonical).unwrap()).then(|| serde_json::to_string(&f).unwrap())
        })
        .collect();
    let glued: Vec<u64> = (0..1000u64).collect();
    let mut seeded: Vec<String> = glued
        .par_iter()
        .filter_map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(10_000 + s);
            let r = rng.gen_range(1..=3);
            let f = random_sheaf(&mut rng, 6, r, 4);
            (h0(&f).unwrap() != h0_oracle(&f, Gluing::Seeded(s)).unwrap()).then(|| serde_json::to_string(&f).unwrap())
        })
        .collect();
    bad.append(&mut shifted);
    bad.append(&mut seeded);
    outcome(
        bad.is_empty(),
        format!(
            "h0 = oracle on {exhaustive} reduced exhaustive instances, 3000 full-range canonical, 1000 seeded gluings; {} mismatches{}",
            bad.len(),
            bad.first().map(|b| format!(" e.g. {b}")).unwrap_or_default()
        ),
    )
}

fn c2_gluing_independence() -> Outcome {
    let bad: Vec<u64> = (0..200u64)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = ChaCha8Rng::seed_from_u64(20_000 + i);
            let r = rng.gen_range(1..=3);
            let f = random_sheaf(&mut rng, 6, r, 4);
            let dims: Vec<u64> = (0..10)
                .map(|k| h0_oracle(&f, Gluing::Seeded(i * 100 + k)).unwrap())
                .collect();
            dims.iter().any(|&d| d != dims[0])
        })
        .collect();
    outcome(
        bad.is_empty(),
        format!("200 instances x 10 gluings; {} with varying dimension", bad.len()),
    )
}

fn c3_strict_positivity() -> Outcome {
    let cap = |deg: usize| (deg.max(1) as i64).min(4);
    let fs = forests(6);
    let jobs: Vec<(usize, u32)> = (0..fs.len()).flat_map(|i| (1..=3).map(move |r| (i, r))).collect();
    let results: Vec<(u64, u64, Vec<String>)> = jobs
        .par_iter()
        .map(|&(i, r)| {
            let g = &fs[i];
            let (types, zero) = instances(g, r, cap, false);
            let (mut n, mut rechecked, mut bad) = (0, 0, Vec::new());
            for ts in product(&types) {
                let mut check = |f: &SheafOnTree| {
                    n += 1;
                    let gg = is_globally_generated_oracle(f, Gluing::Canonical).unwrap();
                    let lhs = classify_positivity(f) == Positivity::StrictlyPositive;
                    let rhs = gg && ts.iter().all(|t| t.degree() > 0);
                    if lhs != rhs && bad.len() < 3 {
                        bad.push(serde_json::to_string(f).unwrap());
                    }
                    gg
                };
                let f = sheaf_of(g, r, &ts, &zero[0]);
                if !check(&f) {
                    rechecked += 1;
                    for ds in defect_vectors(g, r) {
                        check(&sheaf_of(g, r, &ts, &ds));
                    }
                }
            }
            (n, rechecked, bad)
        })
        .collect();
    let n: u64 = results.iter().map(|r| r.0).sum();
    let rechecked: u64 = results.iter().map(|r| r.1).sum();
    let mut bad: Vec<String> = results.into_iter().flat_map(|r| r.2).collect();
    let sampled: Vec<String> = (0..2000u64)
        .into_par_iter()
        .filter_map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(30_000 + s);
            let r = rng.gen_range(1..=3);
            let f = random_sheaf(&mut rng, 6, r, 4);
            let gg = is_globally_generated_oracle(&f, Gluing::Canonical).unwrap();
            let lhs = classify_positivity(&f) == Positivity::StrictlyPositive;
            let rhs = gg && f.vertex_types().values().all(|t| t.degree() > 0);
            (lhs != rhs).then(|| serde_json::to_string(&f).unwrap())
        })
        .collect();
    bad.extend(sampled);
    outcome(
        bad.is_empty(),
        format!(
            "{n} instances ({rechecked} re-run over all defect vectors) + 2000 random with defects; {} counterexamples",
            bad.len()
        ),
    )
}

fn random_positive_sheaf(rng: &mut ChaCha8Rng) -> SheafOnTree {
    let r = rng.gen_range(1..=3);
    let n = rng.gen_range(1..=4);
    let tree = random_tree(rng, n, "t");
    let ids: Vec<String> = tree.vertex_ids().cloned().collect();
    let lucky = ids[rng.gen_range(0..n)].clone();
    let types = ids
        .iter()
        .map(|v| {
            let mut t = random_parts(rng, r, 2);
            if *v == lucky && t.degree() == 0 {
                let mut p = t.parts().to_vec();
                p[r as usize - 1] = 1;
                t = SplittingType::from(p);
            }
            (v.clone(), t)
        })
        .collect();
    let defects = tree.edges().iter().map(|e| (e.id.clone(), rng.gen_range(0..=r))).collect();
    SheafOnTree::new(tree, r, types, defects).unwrap()
}

fn c4_delta_decrease() -> Outcome {
    let bad: Vec<String> = (0..500u64)
        .into_par_iter()
        .filter_map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(40_000 + s);
            let f = random_positive_sheaf(&mut rng);
            let r = f.rank();
            let ctx = if rng.gen_bool(0.5) {
                AttachContext::smooth(rng.gen_range(0..=r))
            } else {
                AttachContext::node(rng.gen_range(0..=r), rng.gen_range(0..=r))
            };
            let change = delta_flat_change(&f, &ctx).ok()?;
            let formula = pushforward_collapse(&f, &ctx).unwrap();
            let oracle = pushforward_collapse_oracle(&f, &ctx, Gluing::Seeded(s)).unwrap();
            (change != -degree(&f) || formula != oracle).then(|| {
                format!(
                    "seed {s}: change {change}, deg {}, formula {formula:?}, oracle {oracle:?}",
                    degree(&f)
                )
            })
        })
        .collect();
    outcome(
        bad.is_empty(),
        format!("500 collapse scenarios; {} mismatches{}", bad.len(), bad.first().map(|b| format!(": {b}")).unwrap_or_default()),
    )
}

fn datum(seed: u64) -> FMDatum {
    random_datum(&mut ChaCha8Rng::seed_from_u64(seed), &DatumLimits::default())
}

fn c5_error_charge_laws() -> Outcome {
    let bad: Vec<String> = (0..1000u64)
        .into_par_iter()
        .filter_map(|s| {
            let d = datum(50_000 + s);
            let z = err_charge(&d);
            let mut why = Vec::new();
            if z.is_zero() != is_flat(&d) {
                why.push("Err = 0 but not flat, or the converse");
            }
            if z.im.is_positive() {
                why.push("-Im Err < 0");
            }
            if z.im.is_zero() && !(z.re.is_integer() && !z.re.is_negative()) {
                why.push("Im Err = 0 but Err is not a nonnegative integer");
            }
            if !definity_check(&d).all() {
                why.push("definity check");
            }
            let trace = run(d.clone(), &mut Seeded::new(s)).map(|o| o.state.trace);
            match trace {
                Ok(t) => {
                    let values: Vec<ChargeValue> = std::iter::once(z)
                        .chain(t.iter().flat_map(|x| [x.err_before.clone(), x.err_after.clone()]))
                        .collect();
                    if !lattice_membership(&values, d.lattice()).unwrap() {
                        why.push("trace value outside the lattice");
                    }
                }
                Err(_) => why.push("reduction failed"),
            }
            (!why.is_empty()).then(|| format!("seed {s}: {}", why.join(", ")))
        })
        .collect();
    outcome(
        bad.is_empty(),
        format!("1000 data; {} violations{}", bad.len(), bad.first().map(|b| format!(": {b}")).unwrap_or_default()),
    )
}

struct RunStats {
    steps: u64,
    within_bound: bool,
    within_real_bound: bool,
    conserved: bool,
    failure: Option<String>,
}

fn reduction_case(s: u64) -> RunStats {
    let d = datum(60_000 + s);
    let bound = step_bound(&d).unwrap();
    let real_bound = step_bound_real_part(&d).unwrap();
    let fail = |m: String| RunStats {
        steps: 0,
        within_bound: false,
        within_real_bound: false,
        conserved: false,
        failure: Some(format!("seed {s}: {m}")),
    };
    let out = match run(d.clone(), &mut Seeded::new(s)) {
        Ok(o) => o,
        Err(e) => return fail(e.to_string()),
    };
    let mut problems = Vec::new();
    let mut recomputed = d.clone();
    let mut state = nsl_core::reduction_engine::ReductionState::new(d.clone());
    for t in &out.state.trace {
        let before = err_charge(&recomputed);
        state = match nsl_core::reduction_engine::apply(&state, &t.mv) {
            Ok(x) => x,
            Err(e) => return fail(format!("replay: {e}")),
        };
        recomputed = state.datum.clone();
        let after = err_charge(&recomputed);
        let ok = match t.mv {
            Move::D { .. } => order(&after, &before).is_eq(),
            _ => precedes(&after, &before),
        };
        if !ok {
            problems.push(format!("step {} not decreasing", t.index));
        }
    }
    if replay(&d, &out.state.trace).is_err() {
        problems.push("trace replay".into());
    }
    if !err_charge(&out.state.datum).is_zero() {
        problems.push("final Err nonzero".into());
    }
    match validate_semistable_type(&out.state.datum, &[], true) {
        Ok(r) if r.condition3_violations.is_empty() => {}
        _ => problems.push("special-point condition".into()),
    }
    match Scenario::from_datum(&out.state.datum) {
        Ok(sc) if audit(&sc).pass => {}
        _ => problems.push("audit".into()),
    }
    let initial = serde_json::to_string(d.total_charge()).unwrap();
    let conserved = out
        .state
        .trace
        .iter()
        .all(|t| serde_json::to_string(&t.total_charge).unwrap() == initial)
        && serde_json::to_string(out.state.datum.total_charge()).unwrap() == initial;
    RunStats {
        steps: out.steps as u64,
        within_bound: out.steps as u64 <= bound,
        within_real_bound: Q::int(out.steps as i64) <= real_bound,
        conserved,
        failure: (!problems.is_empty()).then(|| format!("seed {s}: {}", problems.join(", "))),
    }
}

fn c6_c7_reduction() -> (Outcome, Outcome, Duration) {
    let t = Instant::now();
    let stats: Vec<RunStats> = (0..300u64).into_par_iter().map(reduction_case).collect();
    let elapsed = t.elapsed();
    let failures: Vec<&String> = stats.iter().filter_map(|s| s.failure.as_ref()).collect();
    let steps: u64 = stats.iter().map(|s| s.steps).sum();
    let over = stats.iter().filter(|s| !s.within_bound).count();
    let over_real = stats.iter().filter(|s| !s.within_real_bound).count();
    let c6 = outcome(
        failures.is_empty() && over == 0 && elapsed < Duration::from_secs(120),
        format!(
            "300 seeded runs, {steps} steps, {} failures, {over} over the step bound ({over_real} over the bound with the full real part){}",
            failures.len(),
            failures.first().map(|f| format!(": {f}")).unwrap_or_default()
        ),
    );
    let leaks = stats.iter().filter(|s| !s.conserved).count();
    let c7 = outcome(leaks == 0, format!("total_charge identical on every step of 300 traces; {leaks} leaks"));
    (c6, c7, elapsed)
}

fn c8_order_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(80_000);
    let mut point = |rng: &mut ChaCha8Rng| {
        ChargeValue::new(Q::new(rng.gen_range(-6..=6), 2), Q::int(-rng.gen_range(0..=4)))
    };
    let mut bad = 0;
    for _ in 0..10_000 {
        let (a, b, c) = (point(&mut rng), point(&mut rng), point(&mut rng));
        if precedes(&a, &a) {
            bad += 1;
        }
        if precedes(&a, &b) && precedes(&b, &c) && !precedes(&a, &c) {
            bad += 1;
        }
        if a != b && !(precedes(&a, &b) ^ precedes(&b, &a)) {
            bad += 1;
        }
    }
    let _ = &mut point;
    outcome(bad == 0, format!("10000 triples; {bad} violations"))
}

fn c9_cli() -> Outcome {
    let cases = common::cases();
    let bad: Vec<String> = cases.iter().filter_map(|c| common::check(c).err()).collect();
    outcome(
        bad.is_empty(),
        format!("{} golden cases byte-exact on two runs; {} differ{}", cases.len(), bad.len(), bad.first().map(|b| format!(": {b}")).unwrap_or_default()),
    )
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let x = f();
    (x, t.elapsed())
}

fn main() {
    let mut lines = Vec::new();
    let (c1, t1) = timed(c1_h0);
    let c1 = Outcome {
        pass: c1.pass && t1 < Duration::from_secs(60),
        summary: c1.summary,
    };
    lines.push((1, c1, t1));
    let (c2, t) = timed(c2_gluing_independence);
    lines.push((2, c2, t));
    let (c3, t) = timed(c3_strict_positivity);
    lines.push((3, c3, t));
    let (c4, t) = timed(c4_delta_decrease);
    lines.push((4, c4, t));
    let (c5, t) = timed(c5_error_charge_laws);
    lines.push((5, c5, t));
    let (c6, c7, t) = c6_c7_reduction();
    lines.push((6, c6, t));
    lines.push((7, c7, t));
    let (c8, t) = timed(c8_order_laws);
    lines.push((8, c8, t));
    let (c9, t) = timed(c9_cli);
    lines.push((9, c9, t));
    let mut all = true;
    for (n, o, t) in &lines {
        all &= o.pass;
        println!(
            "{} C{n} {} [{:.2}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.summary,
            t.as_secs_f64()
        );
    }
    if !all {
        std::process::exit(1);
    }
}
