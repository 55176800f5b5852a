//! Torsion-free sheaves on rational trees, encoded by splitting types and
//! per-node flatness defects, plus a brute-force section-space oracle.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curve_graph::{is_p1_tree, CurveGraph, EdgeId, GraphError, Subcurve, VertexId};
use crate::linalg::{self, Echelon, Scalar, Small};
use crate::rational::Q;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SheafError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("underlying curve is not a P1-tree")]
    NotATree,
    #[error("rank must be positive")]
    ZeroRank,
    #[error("vertex {0} has no splitting type")]
    MissingType(VertexId),
    #[error("splitting type on {0} has {1} parts, rank is {2}")]
    WrongRank(VertexId, usize, u32),
    #[error("defect {1} on edge {0} exceeds rank {2}")]
    DefectTooLarge(EdgeId, u32, u32),
    #[error("unknown id {0}")]
    UnknownId(String),
    #[error("negative splitting part present")]
    NotNonnegative,
    #[error("sheaf is not positive on the tree")]
    NotPositive,
    #[error("malformed gluing data: {0}")]
    MalformedGluing(String),
    #[error("attach context expects {expected} boundary defects, got {got}")]
    BadContext { expected: usize, got: usize },
}

/// Sorted twist degrees `a_1 <= ... <= a_r`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "Vec<i64>", into = "Vec<i64>")]
pub struct SplittingType(Vec<i64>);

impl From<Vec<i64>> for SplittingType {
    fn from(mut v: Vec<i64>) -> Self {
        v.sort_unstable();
        SplittingType(v)
    }
}

impl From<SplittingType> for Vec<i64> {
    fn from(s: SplittingType) -> Self {
        s.0
    }
}

impl SplittingType {
    pub fn parts(&self) -> &[i64] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> i64 {
        self.0.iter().sum()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.0.first().is_none_or(|&a| a >= 0)
    }

    pub fn is_positive(&self) -> bool {
        self.is_nonnegative() && self.0.last().is_some_and(|&a| a > 0)
    }

    pub fn is_trivial(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }

    pub fn zero(r: u32) -> SplittingType {
        SplittingType(vec![0; r as usize])
    }
}

/// Matching data at one node: an attach point on each side and the two
/// `(r - delta) x r` maps whose images are identified.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeGluing {
    pub points: [Q; 2],
    pub left: Vec<Vec<Q>>,
    pub right: Vec<Vec<Q>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSheaf")]
pub struct SheafOnTree {
    tree: CurveGraph,
    rank: u32,
    vertex_types: BTreeMap<VertexId, SplittingType>,
    edge_defects: BTreeMap<EdgeId, u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gluing: Option<BTreeMap<EdgeId, EdgeGluing>>,
}

#[derive(Deserialize)]
struct RawSheaf {
    tree: CurveGraph,
    rank: u32,
    vertex_types: BTreeMap<VertexId, SplittingType>,
    #[serde(default)]
    edge_defects: BTreeMap<EdgeId, u32>,
    #[serde(default)]
    gluing: Option<BTreeMap<EdgeId, EdgeGluing>>,
}

impl TryFrom<RawSheaf> for SheafOnTree {
    type Error = SheafError;
    fn try_from(r: RawSheaf) -> Result<Self, SheafError> {
        let s = SheafOnTree::new(r.tree, r.rank, r.vertex_types, r.edge_defects)?;
        match r.gluing {
            Some(g) => s.with_gluing(g),
            None => Ok(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Positivity {
    NotNonnegative,
    Nonnegative,
    Positive,
    StrictlyPositive,
}

/// Which matching data the oracle uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gluing {
    /// Last `r - delta` coordinates identified by the identity.
    Canonical,
    /// The gluing stored on the sheaf, or canonical if there is none.
    Stored,
    Seeded(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttachKind {
    SmoothPoint,
    Node,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachContext {
    pub kind: AttachKind,
    pub boundary_defects: Vec<u32>,
}

impl AttachContext {
    pub fn smooth(d: u32) -> Self {
        AttachContext {
            kind: AttachKind::SmoothPoint,
            boundary_defects: vec![d],
        }
    }

    pub fn node(minus: u32, plus: u32) -> Self {
        AttachContext {
            kind: AttachKind::Node,
            boundary_defects: vec![minus, plus],
        }
    }

    pub fn attach_count(&self) -> usize {
        match self.kind {
            AttachKind::SmoothPoint => 1,
            AttachKind::Node => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pushforward {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<i64>,
    pub torsion_length: i64,
    pub image_defect: Option<u32>,
}

impl SheafOnTree {
    pub fn new(
        tree: CurveGraph,
        rank: u32,
        vertex_types: BTreeMap<VertexId, SplittingType>,
        mut edge_defects: BTreeMap<EdgeId, u32>,
    ) -> Result<SheafOnTree, SheafError> {
        if rank == 0 {
            return Err(SheafError::ZeroRank);
        }
        if !is_p1_tree(&tree, &tree.all()) {
            return Err(SheafError::NotATree);
        }
        for v in tree.vertex_ids() {
            let t = vertex_types
                .get(v)
                .ok_or_else(|| SheafError::MissingType(v.clone()))?;
            if t.rank() != rank as usize {
                return Err(SheafError::WrongRank(v.clone(), t.rank(), rank));
            }
        }
        if let Some(k) = vertex_types.keys().find(|k| tree.vertex(k).is_none()) {
            return Err(SheafError::UnknownId(k.clone()));
        }
        if let Some(k) = edge_defects.keys().find(|k| tree.edge(k).is_none()) {
            return Err(SheafError::UnknownId(k.clone()));
        }
        for e in tree.edges() {
            let d = *edge_defects.entry(e.id.clone()).or_insert(0);
            if d > rank {
                return Err(SheafError::DefectTooLarge(e.id.clone(), d, rank));
            }
        }
        Ok(SheafOnTree {
            tree,
            rank,
            vertex_types,
            edge_defects,
            gluing: None,
        })
    }

    pub fn with_gluing(mut self, g: BTreeMap<EdgeId, EdgeGluing>) -> Result<SheafOnTree, SheafError> {
        let bad = |m: String| Err(SheafError::MalformedGluing(m));
        let r = self.rank as usize;
        for e in self.tree.edges() {
            let Some(gl) = g.get(&e.id) else {
                return bad(format!("edge {} has no gluing", e.id));
            };
            let rows = r - self.edge_defects[&e.id] as usize;
            for m in [&gl.left, &gl.right] {
                if m.len() != rows || m.iter().any(|row| row.len() != r) {
                    return bad(format!("edge {} needs {rows}x{r} maps", e.id));
                }
                if linalg::rank(m) != rows {
                    return bad(format!("edge {} map is not of full rank", e.id));
                }
            }
        }
        if let Some(k) = g.keys().find(|k| self.tree.edge(k).is_none()) {
            return bad(format!("unknown edge {k}"));
        }
        for v in self.tree.vertex_ids() {
            let mut seen = BTreeSet::new();
            for e in self.tree.incident(v) {
                let side = if e.ends[0] == *v { 0 } else { 1 };
                if !seen.insert(g[&e.id].points[side].clone()) {
                    return bad(format!("repeated attach point on {v}"));
                }
            }
        }
        self.gluing = Some(g);
        Ok(self)
    }

    /// Locally free sheaf with the given types.
    pub fn locally_free(
        tree: CurveGraph,
        rank: u32,
        vertex_types: BTreeMap<VertexId, SplittingType>,
    ) -> Result<SheafOnTree, SheafError> {
        SheafOnTree::new(tree, rank, vertex_types, BTreeMap::new())
    }

    pub fn tree(&self) -> &CurveGraph {
        &self.tree
    }

    pub fn rank(&self) -> u32 {
        self.rank
    }

    pub fn vertex_types(&self) -> &BTreeMap<VertexId, SplittingType> {
        &self.vertex_types
    }

    pub fn edge_defects(&self) -> &BTreeMap<EdgeId, u32> {
        &self.edge_defects
    }

    pub fn gluing(&self) -> Option<&BTreeMap<EdgeId, EdgeGluing>> {
        self.gluing.as_ref()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.vertex_types.values().all(SplittingType::is_nonnegative)
    }

    pub fn is_locally_free(&self) -> bool {
        self.edge_defects.values().all(|&d| d == 0)
    }

    /// Restriction to a union of components.
    pub fn restrict(&self, s: &Subcurve) -> SheafOnTree {
        let tree = self.tree.restrict(s);
        let vertex_types = self
            .vertex_types
            .iter()
            .filter(|(v, _)| s.contains(v))
            .map(|(v, t)| (v.clone(), t.clone()))
            .collect();
        let edge_defects = tree
            .edges()
            .iter()
            .map(|e| (e.id.clone(), self.edge_defects[&e.id]))
            .collect();
        SheafOnTree {
            tree,
            rank: self.rank,
            vertex_types,
            edge_defects,
            gluing: None,
        }
    }
}

pub fn degree(f: &SheafOnTree) -> i64 {
    f.vertex_types.values().map(SplittingType::degree).sum()
}

pub fn delta_flat_total(f: &SheafOnTree) -> u64 {
    f.edge_defects.values().map(|&d| d as u64).sum()
}

pub fn h0(f: &SheafOnTree) -> Result<u64, SheafError> {
    if !f.is_nonnegative() {
        return Err(SheafError::NotNonnegative);
    }
    let comps = f.tree.components(&f.tree.all()).len() as u64;
    Ok(f.rank as u64 * comps + degree(f) as u64 + delta_flat_total(f))
}

pub fn classify_positivity(f: &SheafOnTree) -> Positivity {
    if !f.is_nonnegative() {
        return Positivity::NotNonnegative;
    }
    let pos = |v: &VertexId| f.vertex_types[v].is_positive();
    if f.tree.vertex_ids().all(pos) {
        return Positivity::StrictlyPositive;
    }
    let comps = f.tree.components(&f.tree.all());
    if comps.iter().all(|c| c.vertices.iter().any(pos)) {
        Positivity::Positive
    } else {
        Positivity::Nonnegative
    }
}

pub fn constrained_sections_lower_bound(f: &SheafOnTree, a: u64) -> Result<i64, SheafError> {
    Ok(h0(f)? as i64 - f.rank as i64 * a as i64)
}

pub fn pushforward_collapse(f: &SheafOnTree, ctx: &AttachContext) -> Result<Pushforward, SheafError> {
    check_context(f, ctx)?;
    if !f.is_nonnegative() {
        return Err(SheafError::NotNonnegative);
    }
    let local = degree(f) + delta_flat_total(f) as i64;
    let boundary: i64 = ctx.boundary_defects.iter().map(|&d| d as i64).sum();
    let r = f.rank as i64;
    Ok(match ctx.kind {
        AttachKind::SmoothPoint => Pushforward {
            eta: None,
            torsion_length: local + boundary,
            image_defect: None,
        },
        AttachKind::Node => {
            let eta = local + boundary;
            Pushforward {
                eta: Some(eta),
                torsion_length: (eta - r).max(0),
                image_defect: Some(eta.min(r) as u32),
            }
        }
    })
}

fn check_context(f: &SheafOnTree, ctx: &AttachContext) -> Result<(), SheafError> {
    if ctx.boundary_defects.len() != ctx.attach_count() {
        return Err(SheafError::BadContext {
            expected: ctx.attach_count(),
            got: ctx.boundary_defects.len(),
        });
    }
    if let Some(&d) = ctx.boundary_defects.iter().find(|&&d| d > f.rank) {
        return Err(SheafError::DefectTooLarge("boundary".into(), d, f.rank));
    }
    Ok(())
}

/// Defect bookkeeping when the tree is collapsed into `ctx`: returns
/// `-deg`, after checking that the local defects (tree plus boundary)
/// exceed what survives (image defect plus torsion) by exactly the degree.
pub fn delta_flat_change(f: &SheafOnTree, ctx: &AttachContext) -> Result<i64, SheafError> {
    if classify_positivity(f) < Positivity::Positive {
        return Err(SheafError::NotPositive);
    }
    let p = pushforward_collapse(f, ctx)?;
    let before = delta_flat_total(f) as i64 + ctx.boundary_defects.iter().map(|&d| d as i64).sum::<i64>();
    let after = p.image_defect.unwrap_or(0) as i64 + p.torsion_length;
    let change = before - after;
    assert_eq!(change, -degree(f), "defect bookkeeping out of balance");
    Ok(change)
}

impl PartialOrd for Positivity {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Positivity {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (*self as u8).cmp(&(*other as u8))
    }
}

/// Linear system whose kernel is the space of global sections.
pub struct SectionSystem {
    rank: usize,
    offsets: BTreeMap<VertexId, Vec<(usize, usize)>>,
    attach_points: BTreeMap<VertexId, BTreeSet<Q>>,
    unknowns: usize,
    echelon: Echelon,
}

impl SectionSystem {
    pub fn build(f: &SheafOnTree, gluing: Gluing) -> Result<SectionSystem, SheafError> {
        if !f.is_nonnegative() {
            return Err(SheafError::NotNonnegative);
        }
        let r = f.rank as usize;
        let mut offsets = BTreeMap::new();
        let mut unknowns = 0;
        for (v, t) in &f.vertex_types {
            let mut blocks = Vec::with_capacity(r);
            for &a in t.parts() {
                let n = (a + 1) as usize;
                blocks.push((unknowns, n));
                unknowns += n;
            }
            offsets.insert(v.clone(), blocks);
        }
        let glue = match (gluing, &f.gluing) {
            (Gluing::Stored, Some(g)) => g.clone(),
            (Gluing::Seeded(seed), _) => random_gluing(f, seed),
            _ => canonical_gluing(f),
        };
        let mut attach_points: BTreeMap<VertexId, BTreeSet<Q>> = BTreeMap::new();
        for e in f.tree.edges() {
            let gl = &glue[&e.id];
            for side in 0..2 {
                attach_points
                    .entry(e.ends[side].clone())
                    .or_default()
                    .insert(gl.points[side].clone());
            }
        }
        let echelon = match gluing_rows::<Small>(f, &glue, &offsets, unknowns) {
            Some(rows) => Echelon::from_rows(unknowns, rows),
            None => Echelon::from_rows(
                unknowns,
                gluing_rows::<Q>(f, &glue, &offsets, unknowns).expect("exact rows"),
            ),
        };
        Ok(SectionSystem {
            rank: r,
            offsets,
            attach_points,
            unknowns,
            echelon,
        })
    }

    pub fn h0(&self) -> usize {
        self.echelon.nullity()
    }

    pub fn unknowns(&self) -> usize {
        self.unknowns
    }

    /// A point of `v` avoiding its attach points and `avoid`.
    fn generic_point(&self, v: &str, avoid: &BTreeSet<Q>) -> Q {
        let used = self.attach_points.get(v);
        let mut x = Q::new(-13, 7);
        while used.is_some_and(|u| u.contains(&x)) || avoid.contains(&x) {
            x = x - Q::one();
        }
        x
    }

    /// Rows forcing every coordinate of the section on `v` to vanish at `x`.
    fn vanishing_rows<S: Scalar>(&self, v: &str, x: &Q) -> Option<Vec<Vec<S>>> {
        let x = S::from_q(x)?;
        let mut rows = Vec::with_capacity(self.rank);
        for &(off, n) in &self.offsets[v] {
            let mut row = vec![S::zero(); self.unknowns];
            let mut pw = S::one();
            for j in 0..n {
                row[off + j] = pw.clone();
                pw = pw.mul(&x)?;
            }
            rows.push(row);
        }
        Some(rows)
    }

    fn rank_with_points(&self, points: &[(&str, Q)]) -> usize {
        let small: Option<Vec<Vec<Small>>> = points
            .iter()
            .map(|(v, x)| self.vanishing_rows::<Small>(v, x))
            .collect::<Option<Vec<_>>>()
            .map(|b| b.concat());
        match small {
            Some(rows) => self.echelon.rank_with_rows(&rows),
            None => {
                let rows: Vec<Vec<Q>> = points
                    .iter()
                    .flat_map(|(v, x)| self.vanishing_rows::<Q>(v, x).expect("exact rows"))
                    .collect();
                self.echelon.rank_with_rows(&rows)
            }
        }
    }

    /// Whether global sections span the fiber at a generic point of `v`.
    pub fn surjective_at(&self, v: &str) -> bool {
        let x = self.generic_point(v, &BTreeSet::new());
        self.rank_with_points(&[(v, x)]) - self.echelon.rank() == self.rank
    }

    /// Dimension of sections vanishing at `a` generic points, spread over
    /// the vertices in id order.
    pub fn vanishing_dimension(&self, a: usize) -> usize {
        let verts: Vec<&VertexId> = self.offsets.keys().collect();
        let mut used: BTreeMap<&VertexId, BTreeSet<Q>> = BTreeMap::new();
        let mut points = Vec::with_capacity(a);
        for i in 0..a {
            let v = verts[i % verts.len()];
            let avoid = used.entry(v).or_default();
            let x = self.generic_point(v, avoid);
            avoid.insert(x.clone());
            points.push((v.as_str(), x));
        }
        self.unknowns - self.rank_with_points(&points)
    }
}

fn gluing_rows<S: Scalar>(
    f: &SheafOnTree,
    glue: &BTreeMap<EdgeId, EdgeGluing>,
    offsets: &BTreeMap<VertexId, Vec<(usize, usize)>>,
    unknowns: usize,
) -> Option<Vec<Vec<S>>> {
    let mut rows = Vec::new();
    for e in f.tree.edges() {
        let gl = &glue[&e.id];
        for i in 0..gl.left.len() {
            let mut row = vec![S::zero(); unknowns];
            for side in 0..2 {
                let m = if side == 0 { &gl.left } else { &gl.right };
                let t = S::from_q(&gl.points[side])?;
                for (k, &(off, n)) in offsets[&e.ends[side]].iter().enumerate() {
                    if m[i][k].is_zero() {
                        continue;
                    }
                    let mut c = S::from_q(&m[i][k])?;
                    if side == 1 {
                        c = c.neg()?;
                    }
                    for j in 0..n {
                        row[off + j] = row[off + j].add(&c)?;
                        c = c.mul(&t)?;
                    }
                }
            }
            rows.push(row);
        }
    }
    Some(rows)
}

pub fn canonical_gluing(f: &SheafOnTree) -> BTreeMap<EdgeId, EdgeGluing> {
    let r = f.rank as usize;
    let mut next: BTreeMap<String, i64> = BTreeMap::new();
    let mut point = |v: &str| {
        let c = next.entry(v.to_string()).or_insert(0);
        *c += 1;
        Q::int(*c - 1)
    };
    let mut out = BTreeMap::new();
    for e in f.tree.edges() {
        let rows = r - f.edge_defects[&e.id] as usize;
        let proj: Vec<Vec<Q>> = (0..rows)
            .map(|i| {
                (0..r)
                    .map(|k| if k == r - rows + i { Q::one() } else { Q::zero() })
                    .collect()
            })
            .collect();
        let points = [point(&e.ends[0]), point(&e.ends[1])];
        out.insert(
            e.id.clone(),
            EdgeGluing {
                points,
                left: proj.clone(),
                right: proj,
            },
        );
    }
    out
}

pub fn random_gluing(f: &SheafOnTree, seed: u64) -> BTreeMap<EdgeId, EdgeGluing> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = f.rank as usize;
    let mut used: BTreeMap<String, BTreeSet<Q>> = BTreeMap::new();
    let mut point = |rng: &mut ChaCha8Rng, v: &str| loop {
        let q = Q::new(rng.gen_range(-20..=20), rng.gen_range(1..=3));
        if used.entry(v.to_string()).or_default().insert(q.clone()) {
            return q;
        }
    };
    let matrix = |rng: &mut ChaCha8Rng, rows: usize| loop {
        let m: Vec<Vec<Q>> = (0..rows)
            .map(|_| (0..r).map(|_| Q::int(rng.gen_range(-3..=3))).collect())
            .collect();
        if linalg::rank(&m) == rows {
            return m;
        }
    };
    let mut out = BTreeMap::new();
    for e in f.tree.edges() {
        let rows = r - f.edge_defects[&e.id] as usize;
        let points = [point(&mut rng, &e.ends[0]), point(&mut rng, &e.ends[1])];
        let left = matrix(&mut rng, rows);
        let right = matrix(&mut rng, rows);
        out.insert(e.id.clone(), EdgeGluing { points, left, right });
    }
    out
}

pub fn h0_oracle(f: &SheafOnTree, gluing: Gluing) -> Result<u64, SheafError> {
    Ok(SectionSystem::build(f, gluing)?.h0() as u64)
}

pub fn is_globally_generated_oracle(f: &SheafOnTree, gluing: Gluing) -> Result<bool, SheafError> {
    let sys = SectionSystem::build(f, gluing)?;
    Ok(f.tree.vertex_ids().all(|v| sys.surjective_at(v)))
}

/// Section-space accounting of a collapse, independent of the closed form:
/// the fiber of the push-forward at the image point has dimension
/// `h0(tree) + boundary defects`; its torsion-free part is capped by the
/// `r` (smooth point) or `2r` (node) branches meeting there.
pub fn pushforward_collapse_oracle(
    f: &SheafOnTree,
    ctx: &AttachContext,
    gluing: Gluing,
) -> Result<Pushforward, SheafError> {
    check_context(f, ctx)?;
    let r = f.rank as i64;
    let fiber = h0_oracle(f, gluing)? as i64 + ctx.boundary_defects.iter().map(|&d| d as i64).sum::<i64>();
    Ok(match ctx.kind {
        AttachKind::SmoothPoint => Pushforward {
            eta: None,
            torsion_length: fiber - r,
            image_defect: None,
        },
        AttachKind::Node => {
            let tf = fiber.min(2 * r);
            Pushforward {
                eta: Some(fiber - r),
                torsion_length: fiber - tf,
                image_defect: Some((tf - r) as u32),
            }
        }
    })
}

/// Oracle counterpart of the constrained-sections bound.
pub fn constrained_sections_oracle(f: &SheafOnTree, a: usize, gluing: Gluing) -> Result<u64, SheafError> {
    Ok(SectionSystem::build(f, gluing)?.vanishing_dimension(a) as u64)
}
