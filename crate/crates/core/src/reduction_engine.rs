//! Semistable reduction as a rewrite system on [`FMDatum`] values.
//!
//! Three moves: `C1` bubbles a tree at a vertical torsion, `C2` bubbles a
//! positive tree at a defect or point torsion, `D` collapses constant
//! rational trees. Every move carries a certificate that is re-derived from
//! the states before and after.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::charge::{order, precedes, stability_verdict, ChargeDatum, ChargeValue, StabilityReport};
use crate::curve_graph::{
    collapse, fresh_id, insert_tree, is_admissible_tree, CurveGraph, EdgeId, GraphError, PointId, Site,
    Subcurve, VertexId,
};
use crate::error_charge::{err_charge, ComponentData, CurveClass, DatumError, FMDatum, TorsionRecord};
use crate::rational::Q;
use crate::sheaf_on_tree::{
    classify_positivity, degree, delta_flat_total, pushforward_collapse, AttachContext, Positivity,
    SheafOnTree, SplittingType,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("move does not decrease the error charge: {0}")]
    NoDecrease(String),
    #[error("charge not conserved: {0}")]
    ChargeLeak(String),
    #[error("payload sheaf is not positive")]
    NotPositivePayload,
    #[error("arithmetic mismatch: {0}")]
    ArithmeticMismatch(String),
    #[error("wrong phase: {0}")]
    PhaseError(String),
    #[error("target is not an admissible tree in the contracted locus: {0}")]
    NotAdmissible(String),
    #[error("component {0} is not constant")]
    NotConstant(VertexId),
    #[error("collapse requires zero error charge")]
    NonzeroErr,
    #[error("no move available with Err = ({}, {})", .0.re, .0.im)]
    StuckState(ChargeValue),
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("step limit {0} exceeded")]
    StepLimit(usize),
}

impl EngineError {
    /// Certificate failures, as opposed to running out of moves or bad input.
    pub fn is_certificate_failure(&self) -> bool {
        !matches!(self, EngineError::StuckState(_) | EngineError::InvalidState(_))
    }
}

impl From<GraphError> for EngineError {
    fn from(e: GraphError) -> Self {
        EngineError::InvalidPayload(e.to_string())
    }
}

fn datum_error(e: DatumError) -> EngineError {
    match e {
        DatumError::ChargeLeak { expected, found } => EngineError::ChargeLeak(format!(
            "parts sum to {}, total is {}",
            serde_json::to_string(&found).unwrap(),
            serde_json::to_string(&expected).unwrap()
        )),
        other => EngineError::InvalidPayload(other.to_string()),
    }
}

/// Tree to be glued in at a site, with its sheaf data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bubble {
    pub tree: CurveGraph,
    pub attach: Vec<VertexId>,
    pub vertex_types: BTreeMap<VertexId, SplittingType>,
    #[serde(default)]
    pub edge_defects: BTreeMap<EdgeId, u32>,
    pub attach_defects: Vec<u32>,
}

impl Bubble {
    pub fn sheaf(&self, rank: u32) -> Result<SheafOnTree, EngineError> {
        if !self.tree.is_connected() {
            return Err(EngineError::InvalidPayload("bubble tree is disconnected".into()));
        }
        SheafOnTree::new(
            self.tree.clone(),
            rank,
            self.vertex_types.clone(),
            self.edge_defects.clone(),
        )
        .map_err(|e| EngineError::InvalidPayload(e.to_string()))
    }

    fn context(&self) -> AttachContext {
        if self.attach.len() == 1 {
            AttachContext::smooth(self.attach_defects[0])
        } else {
            AttachContext::node(self.attach_defects[0], self.attach_defects[1])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Move {
    C1 {
        site: PointId,
        bubble: Bubble,
        absorbed: ChargeDatum,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        classes: BTreeMap<VertexId, CurveClass>,
    },
    C2 {
        site: Site,
        bubble: Bubble,
        ker_chi: i64,
    },
    D {
        target: Subcurve,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Certificate {
    C1 {
        neg_im_before: Q,
        neg_im_after: Q,
        absorbed_jl: Q,
    },
    C2 {
        degree: i64,
        ker_chi: i64,
        #[serde(skip_serializing_if = "Option::is_none")]
        eta: Option<i64>,
        torsion_length: i64,
        #[serde(skip_serializing_if = "Option::is_none")]
        image_defect: Option<u32>,
        expected_drop: i64,
        recomputed_drop: Q,
    },
    D {
        constant_before: usize,
        constant_after: usize,
        genus_before: u64,
        genus_after: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub index: usize,
    #[serde(rename = "move")]
    pub mv: Move,
    pub err_before: ChargeValue,
    pub err_after: ChargeValue,
    pub total_charge: ChargeDatum,
    pub certificate: Certificate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReductionState {
    pub datum: FMDatum,
    pub trace: Vec<TraceStep>,
}

impl ReductionState {
    pub fn new(datum: FMDatum) -> ReductionState {
        ReductionState {
            datum,
            trace: Vec::new(),
        }
    }
}

/// Vertices of the contracted locus that are constant.
pub fn constant_components(d: &FMDatum) -> Result<Vec<VertexId>, EngineError> {
    let st = d
        .core_map()
        .map_err(|e| EngineError::InvalidState(e.to_string()))?;
    Ok(st
        .contracted
        .vertices
        .iter()
        .filter(|v| d.is_constant(v))
        .cloned()
        .collect())
}

/// Rational components of the contracted locus with trivial bundle and no
/// curve class: the ones that are or can become constant.
pub fn potential_constants(d: &FMDatum) -> Result<usize, EngineError> {
    let st = d
        .core_map()
        .map_err(|e| EngineError::InvalidState(e.to_string()))?;
    Ok(st
        .contracted
        .vertices
        .iter()
        .filter(|v| {
            let c = &d.components()[*v];
            c.parts.as_ref().is_some_and(SplittingType::is_trivial) && c.class.is_zero()
        })
        .count())
}

fn neg_im(z: &ChargeValue) -> Q {
    -&z.im
}

/// Bubbles the tree in and returns the new curve, components and defects.
fn graft(
    d: &FMDatum,
    site: &Site,
    b: &Bubble,
    classes: &BTreeMap<VertexId, CurveClass>,
) -> Result<(CurveGraph, BTreeMap<VertexId, ComponentData>, BTreeMap<EdgeId, u32>), EngineError> {
    if b.attach_defects.len() != b.attach.len() {
        return Err(EngineError::InvalidPayload("attach defects do not match attach vertices".into()));
    }
    if b.attach_defects.iter().any(|&x| x > d.rank()) {
        return Err(EngineError::InvalidPayload("attach defect exceeds rank".into()));
    }
    let ins = insert_tree(d.curve(), site, &b.tree, &b.attach)?;
    let mut comps = d.components().clone();
    for v in b.tree.vertex_ids() {
        let parts = b.vertex_types[v].clone();
        comps.insert(
            v.clone(),
            ComponentData::split(parts, classes.get(v).cloned().unwrap_or_default()),
        );
    }
    let mut defects = d.edge_defects().clone();
    defects.extend(b.edge_defects.iter().map(|(e, x)| (e.clone(), *x)));
    if let Site::Node(e) = site {
        defects.remove(e);
    }
    for (e, x) in ins.attach_edges.iter().zip(&b.attach_defects) {
        defects.insert(e.clone(), *x);
    }
    Ok((ins.graph, comps, defects))
}

/// Re-attaches a consumed marked point to the bubble if records still use it.
fn relocate(
    curve: CurveGraph,
    point: &str,
    onto: &VertexId,
    points: &mut [TorsionRecord],
    vertical: &mut [TorsionRecord],
) -> Result<CurveGraph, EngineError> {
    if !points.iter().chain(vertical.iter()).any(|t| t.point == point) {
        return Ok(curve);
    }
    let id = fresh_id(point, |x| curve.has_id(x));
    for t in points.iter_mut().chain(vertical.iter_mut()) {
        if t.point == point {
            t.point = id.clone();
        }
    }
    Ok(curve.with_marked_point(id, onto.clone())?)
}

pub fn apply_c1(s: &ReductionState, m: &Move) -> Result<ReductionState, EngineError> {
    let Move::C1 {
        site,
        bubble,
        absorbed,
        classes,
    } = m
    else {
        return Err(EngineError::InvalidPayload("not a C1 move".into()));
    };
    let d = &s.datum;
    let before = err_charge(d);
    if d.vertical_torsions().is_empty() {
        return Err(EngineError::PhaseError("no vertical torsion to resolve".into()));
    }
    let Some(idx) = d.vertical_torsions().iter().position(|t| t.point == *site) else {
        return Err(EngineError::InvalidPayload(format!("no vertical torsion at {site}")));
    };
    if bubble.attach.len() != 1 {
        return Err(EngineError::InvalidPayload("C1 bubble attaches at one vertex".into()));
    }
    absorbed
        .validate()
        .map_err(|e| EngineError::InvalidPayload(e.to_string()))?;
    if !absorbed.jl_beta.is_positive() {
        return Err(EngineError::NoDecrease("absorbed (J+L).beta is zero".into()));
    }
    if bubble.attach_defects.len() != 1 {
        return Err(EngineError::InvalidPayload("C1 bubble needs one attach defect".into()));
    }
    let sheaf = bubble.sheaf(d.rank())?;
    if classify_positivity(&sheaf) == Positivity::NotNonnegative {
        return Err(EngineError::InvalidPayload("bubble sheaf has a negative part".into()));
    }
    let gained = degree(&sheaf) + delta_flat_total(&sheaf) as i64 + bubble.attach_defects[0] as i64;
    if gained != absorbed.chi {
        return Err(EngineError::ChargeLeak(format!(
            "bubble adds {gained} to chi, absorbed chi is {}",
            absorbed.chi
        )));
    }
    let mut classes = classes.clone();
    if classes.is_empty() {
        classes.insert(bubble.attach[0].clone(), CurveClass::of(absorbed));
    }
    if let Some(v) = classes.keys().find(|v| bubble.tree.vertex(v).is_none()) {
        return Err(EngineError::InvalidPayload(format!("class on unknown vertex {v}")));
    }
    let class_sum: ChargeDatum = classes.values().map(|c| c.with_chi(0)).sum();
    if CurveClass::of(&class_sum) != CurveClass::of(absorbed) {
        return Err(EngineError::ChargeLeak("bubble classes do not add up to the absorbed class".into()));
    }

    let record = &d.vertical_torsions()[idx];
    let rest = ChargeDatum::new(
        record.charge.chi - absorbed.chi,
        &record.charge.b_beta - &absorbed.b_beta,
        &record.charge.jl_beta - &absorbed.jl_beta,
        record
            .charge
            .h_beta
            .checked_sub(absorbed.h_beta)
            .ok_or_else(|| EngineError::ChargeLeak("absorbed H.beta exceeds the record".into()))?,
    );
    let mut vertical = d.vertical_torsions().to_vec();
    let mut points = d.point_torsions().to_vec();
    vertical.remove(idx);
    if rest.jl_beta.is_positive() {
        vertical.insert(
            idx,
            TorsionRecord {
                point: site.clone(),
                charge: rest,
            },
        );
    } else if rest.jl_beta.is_zero() && rest.b_beta.is_zero() && rest.h_beta == 0 && rest.chi >= 0 {
        if rest.chi > 0 {
            points.push(TorsionRecord {
                point: site.clone(),
                charge: rest,
            });
        }
    } else {
        return Err(EngineError::ChargeLeak("remainder of the vertical torsion is not a sheaf".into()));
    }

    let (curve, comps, defects) = graft(d, &Site::Marked(site.clone()), bubble, &classes)?;
    let curve = relocate(curve, site, &bubble.attach[0], &mut points, &mut vertical)?;
    let next = FMDatum::new(
        curve,
        d.rank(),
        comps,
        defects,
        points,
        vertical,
        d.total_charge().clone(),
        d.lattice().clone(),
    )
    .map_err(datum_error)?;
    let after = err_charge(&next);
    if !(neg_im(&after) < neg_im(&before)) || !precedes(&after, &before) {
        return Err(EngineError::NoDecrease(format!(
            "-Im went from {} to {}",
            neg_im(&before),
            neg_im(&after)
        )));
    }
    let cert = Certificate::C1 {
        neg_im_before: neg_im(&before),
        neg_im_after: neg_im(&after),
        absorbed_jl: absorbed.jl_beta.clone(),
    };
    Ok(push(s, next, m, before, after, cert))
}

fn push(
    s: &ReductionState,
    next: FMDatum,
    m: &Move,
    before: ChargeValue,
    after: ChargeValue,
    certificate: Certificate,
) -> ReductionState {
    let mut trace = s.trace.clone();
    trace.push(TraceStep {
        index: trace.len(),
        mv: m.clone(),
        err_before: before,
        err_after: after,
        total_charge: next.total_charge().clone(),
        certificate,
    });
    ReductionState { datum: next, trace }
}

pub fn apply_c2(s: &ReductionState, m: &Move) -> Result<ReductionState, EngineError> {
    let Move::C2 { site, bubble, ker_chi } = m else {
        return Err(EngineError::InvalidPayload("not a C2 move".into()));
    };
    let d = &s.datum;
    let before = err_charge(d);
    if !before.im.is_zero() {
        return Err(EngineError::PhaseError("-Im Err is positive".into()));
    }
    if before.is_zero() {
        return Err(EngineError::PhaseError("Err is already zero".into()));
    }
    let sheaf = bubble.sheaf(d.rank())?;
    if classify_positivity(&sheaf) < Positivity::Positive {
        return Err(EngineError::NotPositivePayload);
    }
    let expected_arity = match site {
        Site::Marked(_) => 1,
        Site::Node(_) => 2,
    };
    if bubble.attach.len() != expected_arity {
        return Err(EngineError::InvalidPayload(format!(
            "site needs {expected_arity} attach vertices"
        )));
    }
    if bubble.attach_defects.len() != expected_arity {
        return Err(EngineError::InvalidPayload("attach defects do not match attach vertices".into()));
    }
    let push_fwd = pushforward_collapse(&sheaf, &bubble.context())
        .map_err(|e| EngineError::InvalidPayload(e.to_string()))?;
    if push_fwd.torsion_length != *ker_chi {
        return Err(EngineError::ArithmeticMismatch(format!(
            "declared ker_chi {ker_chi}, collapse gives torsion {}",
            push_fwd.torsion_length
        )));
    }
    let mut points = d.point_torsions().to_vec();
    let relocated = match site {
        Site::Node(e) => {
            let Some(&de) = d.edge_defects().get(e) else {
                return Err(EngineError::InvalidPayload(format!("unknown node {e}")));
            };
            if de == 0 {
                return Err(EngineError::InvalidPayload(format!("node {e} has no defect")));
            }
            if push_fwd.image_defect != Some(de) || *ker_chi != 0 {
                return Err(EngineError::ArithmeticMismatch(format!(
                    "collapse gives defect {:?} and torsion {}, node has defect {de} and no torsion",
                    push_fwd.image_defect, push_fwd.torsion_length
                )));
            }
            None
        }
        Site::Marked(p) => {
            let tau: i64 = points.iter().filter(|t| t.point == *p).map(|t| t.charge.chi).sum();
            if tau == 0 {
                return Err(EngineError::InvalidPayload(format!("no point torsion at {p}")));
            }
            if *ker_chi > tau {
                return Err(EngineError::ArithmeticMismatch(format!(
                    "collapse gives torsion {ker_chi}, the point carries only {tau}"
                )));
            }
            points.retain(|t| t.point != *p);
            if tau > *ker_chi {
                points.push(TorsionRecord {
                    point: p.clone(),
                    charge: ChargeDatum::points(tau - ker_chi),
                });
            }
            Some(p.clone())
        }
    };
    let (mut curve, comps, defects) = graft(d, site, bubble, &BTreeMap::new())?;
    let mut vertical = d.vertical_torsions().to_vec();
    if let Some(p) = relocated {
        curve = relocate(curve, &p, &bubble.attach[0], &mut points, &mut vertical)?;
    }
    let next = FMDatum::new(
        curve,
        d.rank(),
        comps,
        defects,
        points,
        vertical,
        d.total_charge().clone(),
        d.lattice().clone(),
    )
    .map_err(datum_error)?;
    let after = err_charge(&next);
    let deg = degree(&sheaf);
    let drop = &before.re - &after.re;
    if !after.im.is_zero() || drop != Q::int(deg) {
        return Err(EngineError::ArithmeticMismatch(format!(
            "Err dropped by {drop}, bubble degree is {deg}"
        )));
    }
    if !precedes(&after, &before) {
        return Err(EngineError::NoDecrease("Err did not decrease".into()));
    }
    let cert = Certificate::C2 {
        degree: deg,
        ker_chi: *ker_chi,
        eta: push_fwd.eta,
        torsion_length: push_fwd.torsion_length,
        image_defect: push_fwd.image_defect,
        expected_drop: deg,
        recomputed_drop: drop,
    };
    Ok(push(s, next, m, before, after, cert))
}

pub fn apply_d(s: &ReductionState, m: &Move) -> Result<ReductionState, EngineError> {
    let Move::D { target } = m else {
        return Err(EngineError::InvalidPayload("not a D move".into()));
    };
    let d = &s.datum;
    let before = err_charge(d);
    if !before.is_zero() {
        return Err(EngineError::NonzeroErr);
    }
    if target.is_empty() {
        return Err(EngineError::NotAdmissible("empty target".into()));
    }
    let st = d
        .core_map()
        .map_err(|e| EngineError::InvalidState(e.to_string()))?;
    if let Some(v) = target.vertices.iter().find(|v| !st.contracted.contains(v)) {
        return Err(EngineError::NotAdmissible(format!("{v} is not in the contracted locus")));
    }
    if !is_admissible_tree(d.curve(), target) {
        return Err(EngineError::NotAdmissible("not an admissible P1-tree".into()));
    }
    if let Some(v) = target.vertices.iter().find(|v| !d.is_constant(v)) {
        return Err(EngineError::NotConstant(v.clone()));
    }
    let constant_before = constant_components(d)?.len();
    let c = collapse(d.curve(), target)?;
    let mut comps = d.components().clone();
    comps.retain(|v, _| !target.contains(v));
    let defects: BTreeMap<EdgeId, u32> = c
        .graph
        .edges()
        .iter()
        .map(|e| (e.id.clone(), d.edge_defects().get(&e.id).copied().unwrap_or(0)))
        .collect();
    let next = FMDatum::new(
        c.graph,
        d.rank(),
        comps,
        defects,
        d.point_torsions().to_vec(),
        d.vertical_torsions().to_vec(),
        d.total_charge().clone(),
        d.lattice().clone(),
    )
    .map_err(datum_error)?;
    let after = err_charge(&next);
    let constant_after = constant_components(&next)?.len();
    let cert = Certificate::D {
        constant_before,
        constant_after,
        genus_before: d.curve().genus(),
        genus_after: next.curve().genus(),
    };
    if after != before {
        return Err(EngineError::ArithmeticMismatch("collapse changed Err".into()));
    }
    if constant_after >= constant_before {
        return Err(EngineError::NoDecrease("constant count did not drop".into()));
    }
    if d.curve().genus() != next.curve().genus() {
        return Err(EngineError::ArithmeticMismatch("collapse changed the genus".into()));
    }
    Ok(push(s, next, m, before, after, cert))
}

pub fn apply(s: &ReductionState, m: &Move) -> Result<ReductionState, EngineError> {
    match m {
        Move::C1 { .. } => apply_c1(s, m),
        Move::C2 { .. } => apply_c2(s, m),
        Move::D { .. } => apply_d(s, m),
    }
}

pub trait MoveGenerator {
    fn next_move(&mut self, d: &FMDatum, step: usize) -> Option<Move>;
}

/// Moves supplied up front, then nothing.
pub struct Scripted(pub std::collections::VecDeque<Move>);

impl MoveGenerator for Scripted {
    fn next_move(&mut self, _: &FMDatum, _: usize) -> Option<Move> {
        self.0.pop_front()
    }
}

/// Smallest positive `|Im|` of a lattice vector.
pub fn im_unit(d: &FMDatum) -> Option<Q> {
    let [g, h] = &d.lattice().generators;
    q_gcd(&g.im, &h.im)
}

fn q_gcd(a: &Q, b: &Q) -> Option<Q> {
    use num_integer::Integer;
    if a.is_zero() && b.is_zero() {
        return None;
    }
    let (pa, qa) = (a.0.numer().clone(), a.0.denom().clone());
    let (pb, qb) = (b.0.numer().clone(), b.0.denom().clone());
    let num = (&pa * &qb).gcd(&(&pb * &qa));
    Some(Q(num_rational::BigRational::new(num, qa * qb)))
}

/// Step budget for the built-in generators: one C1 per lattice unit of
/// `-Im Err`, one C2 per unit of zero-dimensional error, one D per
/// potentially constant component.
pub fn step_bound(d: &FMDatum) -> Result<u64, EngineError> {
    let z = err_charge(d);
    let c1 = match im_unit(d) {
        Some(u) if !z.im.is_zero() => {
            let k = (neg_im(&z) / u).ceil();
            num_traits::ToPrimitive::to_u64(&k).unwrap_or(u64::MAX)
        }
        _ => 0,
    };
    let zero_dim: i64 = d.point_torsions().iter().map(|t| t.charge.chi).sum();
    Ok(c1 + d.delta_total() + zero_dim as u64 + potential_constants(d)? as u64)
}

/// The same budget with the whole real part of the initial Err in place of
/// its zero-dimensional share.
pub fn step_bound_real_part(d: &FMDatum) -> Result<Q, EngineError> {
    let z = err_charge(d);
    let c1 = match im_unit(d) {
        Some(u) if !z.im.is_zero() => neg_im(&z) / u,
        _ => Q::zero(),
    };
    Ok(c1 + z.re + Q::int(potential_constants(d)? as i64))
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub state: ReductionState,
    pub steps: usize,
}

pub fn run(initial: FMDatum, generator: &mut dyn MoveGenerator) -> Result<RunResult, EngineError> {
    run_from(ReductionState::new(initial), generator)
}

pub fn run_from(
    mut state: ReductionState,
    generator: &mut dyn MoveGenerator,
) -> Result<RunResult, EngineError> {
    state
        .datum
        .core_map()
        .map_err(|e| EngineError::InvalidState(e.to_string()))?;
    let limit = 10_000 + 10 * step_bound(&state.datum)? as usize;
    loop {
        let step = state.trace.len();
        if step > limit {
            return Err(EngineError::StepLimit(limit));
        }
        let Some(m) = generator.next_move(&state.datum, step) else {
            let z = err_charge(&state.datum);
            if !z.is_zero() {
                return Err(EngineError::StuckState(z));
            }
            return Ok(RunResult {
                steps: state.trace.len(),
                state,
            });
        };
        log::debug!("step {step}: {}", serde_json::to_string(&m).unwrap_or_default());
        state = apply(&state, &m)?;
    }
}

/// Replays a trace from its initial datum and re-checks every step against
/// freshly computed error charges.
pub fn replay(initial: &FMDatum, trace: &[TraceStep]) -> Result<FMDatum, EngineError> {
    let mut s = ReductionState::new(initial.clone());
    for (i, t) in trace.iter().enumerate() {
        let before = err_charge(&s.datum);
        if before != t.err_before {
            return Err(EngineError::ArithmeticMismatch(format!("step {i}: recorded err_before differs")));
        }
        s = apply(&s, &t.mv)?;
        let after = err_charge(&s.datum);
        if after != t.err_after {
            return Err(EngineError::ArithmeticMismatch(format!("step {i}: recorded err_after differs")));
        }
        let ok = match t.mv {
            Move::D { .. } => order(&after, &before).is_eq(),
            _ => precedes(&after, &before),
        };
        if !ok || s.datum.total_charge() != &t.total_charge {
            return Err(EngineError::NoDecrease(format!("step {i} fails on recomputation")));
        }
    }
    Ok(s.datum)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TypeVerdict {
    Stable,
    StrictlySemistable,
    Unstable,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SemistableReport {
    pub verdict: TypeVerdict,
    pub err_zero: bool,
    pub core_charge_matches: bool,
    pub stability: Option<StabilityReport>,
    pub condition2: bool,
    pub condition3_violations: Vec<VertexId>,
}

/// Final-state checks: the core carries the whole charge and is stable
/// against `destabilizers`, contracted components carry nonnegative data
/// (and, in the strong form, no defects at their nodes), and every constant
/// contracted component has at least three special points.
pub fn validate_semistable_type(
    d: &FMDatum,
    destabilizers: &[ChargeDatum],
    strong: bool,
) -> Result<SemistableReport, EngineError> {
    let err_zero = err_charge(d).is_zero();
    let core_charge_matches = &d.tf_charge() == d.total_charge();
    let stability = stability_verdict(d.total_charge(), destabilizers).ok();
    let st = d
        .core_map()
        .map_err(|e| EngineError::InvalidState(e.to_string()))?;
    let contracted = &st.contracted;
    let condition2 = contracted.vertices.iter().all(|v| {
        let nonneg = d.components()[v]
            .parts
            .as_ref()
            .is_some_and(SplittingType::is_nonnegative);
        let exact = d.curve().incident(v).all(|e| d.edge_defects()[&e.id] == 0);
        nonneg && (!strong || exact)
    });
    let condition3_violations: Vec<VertexId> = contracted
        .vertices
        .iter()
        .filter(|v| d.is_constant(v) && d.curve().degree(v) < 3)
        .cloned()
        .collect();
    let verdict = match &stability {
        _ if !err_zero || !core_charge_matches || !condition2 || !condition3_violations.is_empty() => {
            TypeVerdict::Invalid
        }
        None => TypeVerdict::Invalid,
        Some(r) => match r.verdict {
            crate::charge::Verdict::Stable => TypeVerdict::Stable,
            crate::charge::Verdict::StrictlySemistable => TypeVerdict::StrictlySemistable,
            crate::charge::Verdict::Unstable => TypeVerdict::Unstable,
        },
    };
    Ok(SemistableReport {
        verdict,
        err_zero,
        core_charge_matches,
        stability,
        condition2,
        condition3_violations,
    })
}

fn part_vector(r: u32, degree: i64) -> SplittingType {
    let mut parts = vec![0; r as usize];
    parts[r as usize - 1] = degree;
    SplittingType::from(parts)
}

/// Spreads `total` over `slots` nonnegative entries, each at most `cap`.
fn spread(rng: &mut impl Rng, total: u32, slots: usize, cap: u32) -> Option<Vec<u32>> {
    if slots as u64 * cap as u64 > u32::MAX as u64 || total > slots as u32 * cap {
        return None;
    }
    let mut out = vec![0; slots];
    for _ in 0..total {
        let open: Vec<usize> = (0..slots).filter(|&i| out[i] < cap).collect();
        out[open[rng.gen_range(0..open.len())]] += 1;
    }
    Some(out)
}

fn random_parts(rng: &mut impl Rng, r: u32, degree: i64) -> SplittingType {
    let mut parts = vec![0i64; r as usize];
    for _ in 0..degree {
        parts[rng.gen_range(0..r as usize)] += 1;
    }
    SplittingType::from(parts)
}

/// Path of `n` fresh rational vertices.
fn bubble_path(d: &FMDatum, step: usize, n: usize) -> (CurveGraph, Vec<VertexId>, Vec<EdgeId>) {
    let taken = |x: &str| d.curve().has_id(x);
    let vs: Vec<VertexId> = (0..n).map(|i| fresh_id(&format!("b{step}.{i}"), taken)).collect();
    let es: Vec<EdgeId> = (1..n).map(|i| fresh_id(&format!("b{step}.e{i}"), taken)).collect();
    let raw = serde_json::json!({
        "vertices": vs.iter().map(|v| serde_json::json!({"id": v, "genus": 0})).collect::<Vec<_>>(),
        "edges": es.iter().enumerate().map(|(i, e)| serde_json::json!({"id": e, "ends": [vs[i], vs[i + 1]]})).collect::<Vec<_>>(),
    });
    (serde_json::from_value(raw).expect("path graph"), vs, es)
}

enum C2Site {
    Point(PointId, u32),
    Node(EdgeId, u32),
}

fn c2_site(d: &FMDatum) -> Option<C2Site> {
    let mut taus: BTreeMap<&str, i64> = BTreeMap::new();
    for t in d.point_torsions() {
        *taus.entry(t.point.as_str()).or_default() += t.charge.chi;
    }
    let point = taus.into_iter().next();
    let node = d.edge_defects().iter().find(|(_, &x)| x > 0);
    match (point, node) {
        (Some((p, tau)), Some((e, _))) if p <= e.as_str() => Some(C2Site::Point(p.to_string(), tau as u32)),
        (Some((p, tau)), None) => Some(C2Site::Point(p.to_string(), tau as u32)),
        (_, Some((e, &x))) => Some(C2Site::Node(e.clone(), x)),
        (None, None) => None,
    }
}

fn c1_site(d: &FMDatum) -> Option<&TorsionRecord> {
    d.vertical_torsions().iter().min_by(|a, b| a.point.cmp(&b.point))
}

fn d_move(d: &FMDatum) -> Option<Move> {
    let constants = constant_components(d).ok()?;
    constants
        .into_iter()
        .find(|v| d.curve().degree(v) < 3)
        .map(|v| Move::D {
            target: Subcurve::of([v]),
        })
}

/// Lowest-id site first, one-vertex bubbles of degree one, full absorption
/// of vertical torsion.
#[derive(Debug, Default, Clone)]
pub struct Greedy;

impl MoveGenerator for Greedy {
    fn next_move(&mut self, d: &FMDatum, step: usize) -> Option<Move> {
        let r = d.rank();
        if let Some(t) = c1_site(d) {
            if t.charge.chi < 0 {
                return None;
            }
            let (tree, vs, _) = bubble_path(d, step, 1);
            return Some(Move::C1 {
                site: t.point.clone(),
                bubble: Bubble {
                    tree,
                    attach: vec![vs[0].clone()],
                    vertex_types: [(vs[0].clone(), part_vector(r, t.charge.chi))].into(),
                    edge_defects: BTreeMap::new(),
                    attach_defects: vec![0],
                },
                absorbed: t.charge.clone(),
                classes: BTreeMap::new(),
            });
        }
        if let Some(site) = c2_site(d) {
            let (tree, vs, _) = bubble_path(d, step, 1);
            let types: BTreeMap<_, _> = [(vs[0].clone(), part_vector(r, 1))].into();
            return Some(match site {
                C2Site::Point(p, tau) => {
                    let a = (tau - 1).min(r);
                    Move::C2 {
                        site: Site::Marked(p),
                        bubble: Bubble {
                            tree,
                            attach: vec![vs[0].clone()],
                            vertex_types: types,
                            edge_defects: BTreeMap::new(),
                            attach_defects: vec![a],
                        },
                        ker_chi: 1 + a as i64,
                    }
                }
                C2Site::Node(e, x) => {
                    let minus = (x - 1).min(r);
                    Move::C2 {
                        site: Site::Node(e),
                        bubble: Bubble {
                            tree,
                            attach: vec![vs[0].clone(), vs[0].clone()],
                            vertex_types: types,
                            edge_defects: BTreeMap::new(),
                            attach_defects: vec![minus, x - 1 - minus],
                        },
                        ker_chi: 0,
                    }
                }
            });
        }
        if !err_charge(d).is_zero() {
            return None;
        }
        d_move(d)
    }
}

/// Same phases as [`Greedy`], with random bubble trees of one to three
/// positive vertices and random spreading of degree and defects.
pub struct Seeded {
    rng: ChaCha8Rng,
}

impl Seeded {
    pub fn new(seed: u64) -> Seeded {
        Seeded {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl MoveGenerator for Seeded {
    fn next_move(&mut self, d: &FMDatum, step: usize) -> Option<Move> {
        let r = d.rank();
        let rng = &mut self.rng;
        if let Some(t) = c1_site(d) {
            if t.charge.chi < 0 {
                return None;
            }
            let chi = t.charge.chi;
            let n = rng.gen_range(1..=3usize).min(chi.max(1) as usize);
            let (tree, vs, _) = bubble_path(d, step, n);
            let degs = if chi as usize >= n {
                let mut v = vec![1u32; n];
                let extra = spread(rng, chi as u32 - n as u32, n, u32::MAX / 8)?;
                v.iter_mut().zip(extra).for_each(|(a, b)| *a += b);
                v
            } else {
                vec![chi as u32]
            };
            let attach = vs[rng.gen_range(0..n)].clone();
            let types = vs
                .iter()
                .zip(&degs)
                .map(|(v, &k)| (v.clone(), random_parts(rng, r, k as i64)))
                .collect();
            return Some(Move::C1 {
                site: t.point.clone(),
                bubble: Bubble {
                    tree,
                    attach: vec![attach],
                    vertex_types: types,
                    edge_defects: BTreeMap::new(),
                    attach_defects: vec![0],
                },
                absorbed: t.charge.clone(),
                classes: BTreeMap::new(),
            });
        }
        if let Some(site) = c2_site(d) {
            let budget = match site {
                C2Site::Point(_, tau) => tau,
                C2Site::Node(_, x) => x,
            };
            let n = rng.gen_range(1..=3u32).min(budget) as usize;
            let deg = rng.gen_range(n as u32..=budget);
            let (tree, vs, es) = bubble_path(d, step, n);
            let mut degs = vec![1u32; n];
            let extra = spread(rng, deg - n as u32, n, u32::MAX / 8)?;
            degs.iter_mut().zip(extra).for_each(|(a, b)| *a += b);
            let types: BTreeMap<_, _> = vs
                .iter()
                .zip(&degs)
                .map(|(v, &k)| (v.clone(), random_parts(rng, r, k as i64)))
                .collect();
            return Some(match site {
                C2Site::Point(p, tau) => {
                    let room = (n as u32) * r;
                    let rest = rng.gen_range(0..=(tau - deg).min(room));
                    let defects = spread(rng, rest, n, r)?;
                    let attach = vs[rng.gen_range(0..n)].clone();
                    Move::C2 {
                        site: Site::Marked(p),
                        bubble: Bubble {
                            tree,
                            attach: vec![attach],
                            vertex_types: types,
                            edge_defects: es.iter().cloned().zip(defects[1..].iter().copied()).collect(),
                            attach_defects: vec![defects[0]],
                        },
                        ker_chi: (deg + rest) as i64,
                    }
                }
                C2Site::Node(e, x) => {
                    let defects = spread(rng, x - deg, n + 1, r)?;
                    let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
                    Move::C2 {
                        site: Site::Node(e),
                        bubble: Bubble {
                            tree,
                            attach: vec![vs[a].clone(), vs[b].clone()],
                            vertex_types: types,
                            edge_defects: es.iter().cloned().zip(defects[2..].iter().copied()).collect(),
                            attach_defects: vec![defects[0], defects[1]],
                        },
                        ker_chi: 0,
                    }
                }
            });
        }
        if !err_charge(d).is_zero() {
            return None;
        }
        d_move(d)
    }
}
