//! Combinatorial Fourier-Mukai data and the error charge.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::charge::{central_charge, ChargeDatum, ChargeError, ChargeValue, LatticeBasis};
use crate::curve_graph::{
    fresh_id, stabilize, CurveGraph, EdgeId, GraphError, PointId, Stabilization, Subcurve, VertexId,
};
use crate::rational::Q;
use crate::sheaf_on_tree::{SheafError, SheafOnTree, SplittingType};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DatumError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Charge(#[from] ChargeError),
    #[error(transparent)]
    Sheaf(#[from] SheafError),
    #[error("rank must be positive")]
    ZeroRank,
    #[error("vertex {0} has no component data")]
    MissingComponent(VertexId),
    #[error("component data for {0}: {1}")]
    BadComponent(VertexId, String),
    #[error("unknown id {0}")]
    UnknownId(String),
    #[error("defect {1} on edge {0} exceeds rank")]
    DefectTooLarge(EdgeId, u32),
    #[error("torsion record at {0}: {1}")]
    BadTorsion(PointId, String),
    #[error("charge not conserved: parts sum to {found:?}, total is {expected:?}")]
    ChargeLeak {
        expected: ChargeDatum,
        found: ChargeDatum,
    },
}

/// Pairings of the curve class carried by one component.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct CurveClass {
    pub b_beta: Q,
    pub jl_beta: Q,
    pub h_beta: u64,
}

impl CurveClass {
    pub fn is_zero(&self) -> bool {
        self.b_beta.is_zero() && self.jl_beta.is_zero() && self.h_beta == 0
    }

    pub fn of(d: &ChargeDatum) -> CurveClass {
        CurveClass {
            b_beta: d.b_beta.clone(),
            jl_beta: d.jl_beta.clone(),
            h_beta: d.h_beta,
        }
    }

    pub fn with_chi(&self, chi: i64) -> ChargeDatum {
        ChargeDatum::new(chi, self.b_beta.clone(), self.jl_beta.clone(), self.h_beta)
    }
}

/// Torsion-free data on one component: a splitting type on rational
/// components, a plain degree on the others.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentData {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parts: Option<SplittingType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<i64>,
    #[serde(default, skip_serializing_if = "CurveClass::is_zero")]
    pub class: CurveClass,
}

impl ComponentData {
    pub fn split(parts: impl Into<SplittingType>, class: CurveClass) -> ComponentData {
        ComponentData {
            parts: Some(parts.into()),
            degree: None,
            class,
        }
    }

    pub fn with_degree(degree: i64, class: CurveClass) -> ComponentData {
        ComponentData {
            parts: None,
            degree: Some(degree),
            class,
        }
    }

    pub fn bundle_degree(&self) -> i64 {
        match (&self.parts, self.degree) {
            (Some(p), _) => p.degree(),
            (None, Some(d)) => d,
            (None, None) => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorsionRecord {
    pub point: PointId,
    pub charge: ChargeDatum,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDatum")]
pub struct FMDatum {
    pub(crate) curve: CurveGraph,
    pub(crate) rank: u32,
    pub(crate) components: BTreeMap<VertexId, ComponentData>,
    pub(crate) edge_defects: BTreeMap<EdgeId, u32>,
    pub(crate) point_torsions: Vec<TorsionRecord>,
    pub(crate) vertical_torsions: Vec<TorsionRecord>,
    pub(crate) total_charge: ChargeDatum,
    pub(crate) lattice: LatticeBasis,
}

#[derive(Deserialize)]
struct RawDatum {
    curve: CurveGraph,
    rank: u32,
    components: BTreeMap<VertexId, ComponentData>,
    #[serde(default)]
    edge_defects: BTreeMap<EdgeId, u32>,
    #[serde(default)]
    point_torsions: Vec<TorsionRecord>,
    #[serde(default)]
    vertical_torsions: Vec<TorsionRecord>,
    total_charge: ChargeDatum,
    #[serde(default)]
    lattice: LatticeBasis,
}

impl TryFrom<RawDatum> for FMDatum {
    type Error = DatumError;
    fn try_from(r: RawDatum) -> Result<Self, DatumError> {
        FMDatum::new(
            r.curve,
            r.rank,
            r.components,
            r.edge_defects,
            r.point_torsions,
            r.vertical_torsions,
            r.total_charge,
            r.lattice,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Definity {
    pub neg_im_nonneg: bool,
    pub im_zero_iff_no_vertical: bool,
    pub integer_when_im_zero: bool,
}

impl Definity {
    pub fn all(&self) -> bool {
        self.neg_im_nonneg && self.im_zero_iff_no_vertical && self.integer_when_im_zero
    }
}

impl FMDatum {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        curve: CurveGraph,
        rank: u32,
        components: BTreeMap<VertexId, ComponentData>,
        edge_defects: BTreeMap<EdgeId, u32>,
        point_torsions: Vec<TorsionRecord>,
        vertical_torsions: Vec<TorsionRecord>,
        total_charge: ChargeDatum,
        lattice: LatticeBasis,
    ) -> Result<FMDatum, DatumError> {
        let mut d = FMDatum {
            curve,
            rank,
            components,
            edge_defects,
            point_torsions,
            vertical_torsions,
            total_charge,
            lattice,
        };
        d.normalize_points()?;
        d.validate()?;
        Ok(d)
    }

    /// Same as [`FMDatum::new`] with `total_charge` set to the sum of the parts.
    pub fn balanced(
        curve: CurveGraph,
        rank: u32,
        components: BTreeMap<VertexId, ComponentData>,
        edge_defects: BTreeMap<EdgeId, u32>,
        point_torsions: Vec<TorsionRecord>,
        vertical_torsions: Vec<TorsionRecord>,
        lattice: LatticeBasis,
    ) -> Result<FMDatum, DatumError> {
        let mut d = FMDatum {
            curve,
            rank,
            components,
            edge_defects,
            point_torsions,
            vertical_torsions,
            total_charge: ChargeDatum::default(),
            lattice,
        };
        d.normalize_points()?;
        for e in d.curve.edges() {
            d.edge_defects.entry(e.id.clone()).or_insert(0);
        }
        if d.curve.vertices().iter().any(|v| !d.components.contains_key(&v.id)) {
            d.validate()?;
        }
        d.total_charge = d.parts_charge();
        d.validate()?;
        Ok(d)
    }

    /// Torsion records may name a vertex; give each such vertex one marked
    /// point and point the records there.
    fn normalize_points(&mut self) -> Result<(), DatumError> {
        let mut made: BTreeMap<VertexId, PointId> = BTreeMap::new();
        let names: Vec<PointId> = self
            .point_torsions
            .iter()
            .chain(&self.vertical_torsions)
            .map(|t| t.point.clone())
            .collect();
        for p in names {
            if self.curve.marked_point(&p).is_some() || made.contains_key(&p) {
                continue;
            }
            if self.curve.vertex(&p).is_none() {
                return Err(DatumError::UnknownId(p));
            }
            let id = fresh_id(&format!("{p}.pt"), |x| self.curve.has_id(x));
            self.curve = self.curve.with_marked_point(id.clone(), p.clone())?;
            made.insert(p, id);
        }
        for t in self
            .point_torsions
            .iter_mut()
            .chain(self.vertical_torsions.iter_mut())
        {
            if let Some(id) = made.get(&t.point) {
                t.point = id.clone();
            }
        }
        Ok(())
    }

    pub fn validate(&mut self) -> Result<(), DatumError> {
        if self.rank == 0 {
            return Err(DatumError::ZeroRank);
        }
        let r = self.rank;
        for v in self.curve.vertices() {
            let c = self
                .components
                .get(&v.id)
                .ok_or_else(|| DatumError::MissingComponent(v.id.clone()))?;
            let bad = |m: &str| Err(DatumError::BadComponent(v.id.clone(), m.to_string()));
            match (&c.parts, c.degree, v.genus) {
                (Some(p), None, 0) if p.rank() == r as usize => {}
                (Some(_), None, 0) => return bad("splitting type has the wrong rank"),
                (None, Some(_), g) if g > 0 => {}
                (_, _, 0) => return bad("rational component needs exactly a splitting type"),
                _ => return bad("positive-genus component needs exactly a degree"),
            }
            c.class.with_chi(0).validate().map_err(|e| {
                DatumError::BadComponent(v.id.clone(), e.to_string())
            })?;
        }
        if let Some(k) = self.components.keys().find(|k| self.curve.vertex(k).is_none()) {
            return Err(DatumError::UnknownId(k.clone()));
        }
        if let Some(k) = self.edge_defects.keys().find(|k| self.curve.edge(k).is_none()) {
            return Err(DatumError::UnknownId(k.clone()));
        }
        for e in self.curve.edges() {
            let d = *self.edge_defects.entry(e.id.clone()).or_insert(0);
            if d > r {
                return Err(DatumError::DefectTooLarge(e.id.clone(), d));
            }
        }
        for t in &self.point_torsions {
            let bad = |m: &str| Err(DatumError::BadTorsion(t.point.clone(), m.to_string()));
            if self.curve.marked_point(&t.point).is_none() {
                return Err(DatumError::UnknownId(t.point.clone()));
            }
            t.charge.validate()?;
            if !t.charge.jl_beta.is_zero() {
                return bad("point torsion must be zero-dimensional");
            }
            if t.charge.chi <= 0 {
                return bad("point torsion needs positive length");
            }
        }
        for t in &self.vertical_torsions {
            let bad = |m: &str| Err(DatumError::BadTorsion(t.point.clone(), m.to_string()));
            if self.curve.marked_point(&t.point).is_none() {
                return Err(DatumError::UnknownId(t.point.clone()));
            }
            t.charge.validate()?;
            if !t.charge.jl_beta.is_positive() || t.charge.h_beta == 0 {
                return bad("vertical torsion must be one-dimensional");
            }
        }
        self.total_charge.validate()?;
        self.lattice.coordinates(&ChargeValue::zero())?;
        let found = self.parts_charge();
        if found != self.total_charge {
            return Err(DatumError::ChargeLeak {
                expected: self.total_charge.clone(),
                found,
            });
        }
        Ok(())
    }

    pub fn curve(&self) -> &CurveGraph {
        &self.curve
    }

    pub fn rank(&self) -> u32 {
        self.rank
    }

    pub fn components(&self) -> &BTreeMap<VertexId, ComponentData> {
        &self.components
    }

    pub fn edge_defects(&self) -> &BTreeMap<EdgeId, u32> {
        &self.edge_defects
    }

    pub fn point_torsions(&self) -> &[TorsionRecord] {
        &self.point_torsions
    }

    pub fn vertical_torsions(&self) -> &[TorsionRecord] {
        &self.vertical_torsions
    }

    pub fn total_charge(&self) -> &ChargeDatum {
        &self.total_charge
    }

    pub fn lattice(&self) -> &LatticeBasis {
        &self.lattice
    }

    pub fn core_map(&self) -> Result<Stabilization, GraphError> {
        stabilize(&self.curve)
    }

    /// Euler characteristic of the torsion-free part: components glued
    /// along nodes, each node costing `r - delta`.
    pub fn tf_chi(&self) -> i64 {
        let r = self.rank as i64;
        let comp: i64 = self
            .curve
            .vertices()
            .iter()
            .map(|v| self.components[&v.id].bundle_degree() + r * (1 - v.genus as i64))
            .sum();
        let nodes: i64 = self
            .curve
            .edges()
            .iter()
            .map(|e| r - self.edge_defects[&e.id] as i64)
            .sum();
        comp - nodes
    }

    pub fn tf_charge(&self) -> ChargeDatum {
        let class = self
            .components
            .values()
            .fold(CurveClass::default(), |a, c| CurveClass {
                b_beta: a.b_beta + &c.class.b_beta,
                jl_beta: a.jl_beta + &c.class.jl_beta,
                h_beta: a.h_beta + c.class.h_beta,
            });
        class.with_chi(self.tf_chi())
    }

    pub fn torsion_charge(&self) -> ChargeDatum {
        self.point_torsions
            .iter()
            .chain(&self.vertical_torsions)
            .map(|t| t.charge.clone())
            .sum()
    }

    pub fn parts_charge(&self) -> ChargeDatum {
        self.tf_charge() + self.torsion_charge()
    }

    pub fn delta_total(&self) -> u64 {
        self.edge_defects.values().map(|&d| d as u64).sum()
    }

    pub fn torsion_at(&self, point: &str) -> impl Iterator<Item = &TorsionRecord> {
        let p = point.to_string();
        self.point_torsions
            .iter()
            .chain(&self.vertical_torsions)
            .filter(move |t| t.point == p)
    }

    /// Rational component with trivial bundle, no curve class, no defect at
    /// its nodes and no torsion on it.
    pub fn is_constant(&self, v: &str) -> bool {
        let Some(vx) = self.curve.vertex(v) else {
            return false;
        };
        let c = &self.components[v];
        vx.genus == 0
            && c.parts.as_ref().is_some_and(SplittingType::is_trivial)
            && c.class.is_zero()
            && self.curve.incident(v).all(|e| self.edge_defects[&e.id] == 0)
            && self
                .curve
                .points_on(v)
                .all(|p| self.torsion_at(&p.id).next().is_none())
    }

    /// Sheaf on a rational-tree region of the curve.
    pub fn tree_fragment(&self, s: &Subcurve) -> Result<SheafOnTree, DatumError> {
        let tree = self.curve.restrict(s);
        let mut types = BTreeMap::new();
        for v in tree.vertex_ids() {
            let parts = self.components[v].parts.clone().ok_or_else(|| {
                DatumError::BadComponent(v.clone(), "not a rational component".into())
            })?;
            types.insert(v.clone(), parts);
        }
        let defects = tree
            .edges()
            .iter()
            .map(|e| (e.id.clone(), self.edge_defects[&e.id]))
            .collect();
        Ok(SheafOnTree::new(tree, self.rank, types, defects)?)
    }

    pub fn marked_vertices_with_torsion(&self) -> BTreeSet<VertexId> {
        self.point_torsions
            .iter()
            .chain(&self.vertical_torsions)
            .filter_map(|t| self.curve.marked_point(&t.point).map(|p| p.vertex.clone()))
            .collect()
    }
}

pub fn err_charge(d: &FMDatum) -> ChargeValue {
    central_charge(&d.torsion_charge()) + ChargeValue::real(Q::int(d.delta_total() as i64))
}

pub fn is_flat(d: &FMDatum) -> bool {
    d.point_torsions.is_empty() && d.vertical_torsions.is_empty() && d.delta_total() == 0
}

pub fn definity_check(d: &FMDatum) -> Definity {
    let z = err_charge(d);
    Definity {
        neg_im_nonneg: !z.im.is_positive(),
        im_zero_iff_no_vertical: z.im.is_zero() == d.vertical_torsions.is_empty(),
        integer_when_im_zero: !z.im.is_zero() || (z.re.is_integer() && !z.re.is_negative()),
    }
}

pub use crate::charge::lattice_membership;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve_graph::tests::graph;

    fn class(b: Q, jl: i64, h: u64) -> CurveClass {
        CurveClass {
            b_beta: b,
            jl_beta: Q::int(jl),
            h_beta: h,
        }
    }

    /// genus-2 core vertex with a pendant rational tail.
    fn base(defect: u32, points: Vec<TorsionRecord>, vertical: Vec<TorsionRecord>) -> Result<FMDatum, DatumError> {
        let curve = graph(&[("c", 2), ("t", 0)], &[("e", "c", "t")], &[("m", "t")]);
        let comps = BTreeMap::from([
            ("c".to_string(), ComponentData::with_degree(1, class(Q::zero(), 1, 1))),
            ("t".to_string(), ComponentData::split(vec![0, 1], CurveClass::default())),
        ]);
        let defects = BTreeMap::from([("e".to_string(), defect)]);
        // chi_tf = (1 + 2(1-2)) + (1 + 2) - (2 - defect)
        let tf = 1 - 2 + 3 - (2 - defect as i64);
        let tors: ChargeDatum = points.iter().chain(&vertical).map(|t| t.charge.clone()).sum();
        let total = class(Q::zero(), 1, 1).with_chi(tf) + tors;
        FMDatum::new(curve, 2, comps, defects, points, vertical, total, LatticeBasis::default())
    }

    fn pt(p: &str, chi: i64) -> TorsionRecord {
        TorsionRecord {
            point: p.into(),
            charge: ChargeDatum::points(chi),
        }
    }

    fn vert(p: &str, chi: i64, jl: i64) -> TorsionRecord {
        TorsionRecord {
            point: p.into(),
            charge: ChargeDatum::new(chi, Q::zero(), Q::int(jl), 1),
        }
    }

    #[test]
    fn err_examples() {
        let flat = base(0, vec![], vec![]).unwrap();
        assert_eq!(err_charge(&flat), ChargeValue::zero());
        assert!(is_flat(&flat));
        assert!(definity_check(&flat).all());

        let d = base(2, vec![pt("m", 2)], vec![]).unwrap();
        assert_eq!(err_charge(&d), ChargeValue::real(Q::int(4)));
        assert!(!is_flat(&d));
        assert!(definity_check(&d).all());

        let d = base(0, vec![], vec![vert("m", 0, 1)]).unwrap();
        assert_eq!(err_charge(&d), ChargeValue::new(Q::zero(), Q::int(-1)));
        assert!(definity_check(&d).all());

        let d = base(1, vec![], vec![]).unwrap();
        assert!(!is_flat(&d));
        assert_eq!(err_charge(&d), ChargeValue::real(Q::one()));
    }

    #[test]
    fn vertex_points_are_normalized() {
        let d = base(0, vec![pt("c", 1), pt("c", 2)], vec![]).unwrap();
        let p = &d.point_torsions()[0].point;
        assert_eq!(p, "c.pt");
        assert_eq!(d.curve().marked_point(p).unwrap().vertex, "c");
        assert_eq!(d.point_torsions()[1].point, *p);
    }

    #[test]
    fn rejects_leaks_and_bad_records() {
        let mut d = base(0, vec![], vec![]).unwrap();
        d.total_charge.chi += 1;
        assert!(matches!(d.validate(), Err(DatumError::ChargeLeak { .. })));
        assert!(matches!(base(0, vec![pt("m", 0)], vec![]), Err(DatumError::BadTorsion(..))));
        assert!(matches!(base(0, vec![], vec![vert("m", 1, 0)]), Err(DatumError::Charge(_))));
        assert!(matches!(base(3, vec![], vec![]), Err(DatumError::DefectTooLarge(..))));
        assert!(matches!(base(0, vec![pt("zz", 1)], vec![]), Err(DatumError::UnknownId(_))));
    }

    #[test]
    fn constant_components() {
        let d = base(0, vec![], vec![]).unwrap();
        assert!(!d.is_constant("t"));
        let mut d2 = d.clone();
        d2.components.get_mut("t").unwrap().parts = Some(vec![0, 0].into());
        d2.total_charge.chi -= 1;
        d2.validate().unwrap();
        assert!(d2.is_constant("t"));
        assert!(!d2.is_constant("c"));
    }

    #[test]
    fn json_round_trip() {
        let d = base(1, vec![pt("c", 2)], vec![vert("m", 1, 2)]).unwrap();
        let s = serde_json::to_string(&d).unwrap();
        let back: FMDatum = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
    }
}
