//! Dual graphs of nodal curves.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub type VertexId = String;
pub type EdgeId = String;
pub type PointId = String;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("unknown vertex {0}")]
    UnknownVertex(String),
    #[error("unknown edge {0}")]
    UnknownEdge(String),
    #[error("unknown marked point {0}")]
    UnknownPoint(String),
    #[error("subcurve is not a P1-tree")]
    NotATree,
    #[error("subcurve is not admissible: component {0:?} has {1} attach edges")]
    Inadmissible(Vec<VertexId>, usize),
    #[error("site needs {expected} attach vertices, got {got}")]
    AttachArity { expected: usize, got: usize },
    #[error("inserted tree must be a nonempty connected genus-0 tree")]
    BadInsertTree,
    #[error("inserted tree reuses id {0}")]
    IdClash(String),
    #[error("curve has genus {0}, need at least 2")]
    GenusTooSmall(u64),
    #[error("curve is disconnected")]
    Disconnected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: VertexId,
    pub genus: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub ends: [VertexId; 2],
}

impl Edge {
    pub fn is_loop(&self) -> bool {
        self.ends[0] == self.ends[1]
    }

    pub fn touches(&self, v: &str) -> bool {
        self.ends[0] == v || self.ends[1] == v
    }

    pub fn other(&self, v: &str) -> &VertexId {
        if self.ends[0] == v {
            &self.ends[1]
        } else {
            &self.ends[0]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkedPoint {
    pub id: PointId,
    pub vertex: VertexId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph")]
pub struct CurveGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    marked_points: Vec<MarkedPoint>,
}

#[derive(Deserialize)]
struct RawGraph {
    vertices: Vec<Vertex>,
    #[serde(default)]
    edges: Vec<Edge>,
    #[serde(default)]
    marked_points: Vec<MarkedPoint>,
}

impl TryFrom<RawGraph> for CurveGraph {
    type Error = GraphError;
    fn try_from(r: RawGraph) -> Result<Self, GraphError> {
        CurveGraph::new(r.vertices, r.edges, r.marked_points)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subcurve {
    pub vertices: BTreeSet<VertexId>,
}

impl Subcurve {
    pub fn of<I, S>(ids: I) -> Subcurve
    where
        I: IntoIterator<Item = S>,
        S: Into<VertexId>,
    {
        Subcurve {
            vertices: ids.into_iter().map(Into::into).collect(),
        }
    }

    pub fn contains(&self, v: &str) -> bool {
        self.vertices.contains(v)
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainProfile {
    pub is_chain: bool,
    pub length: usize,
    pub ends: Vec<VertexId>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImagePoint {
    Marked(PointId),
    Node(EdgeId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexImage {
    Vertex(VertexId),
    Point(ImagePoint),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollapsedComponent {
    pub vertices: Vec<VertexId>,
    pub attach_edges: Vec<EdgeId>,
    pub image: ImagePoint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Collapse {
    pub graph: CurveGraph,
    pub vertex_image: BTreeMap<VertexId, VertexImage>,
    pub collapsed_to: Vec<CollapsedComponent>,
    /// Marked points and edges that disappeared, with where they went.
    pub point_image: BTreeMap<PointId, ImagePoint>,
    pub edge_image: BTreeMap<EdgeId, ImagePoint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Site {
    Marked(PointId),
    Node(EdgeId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Insertion {
    pub graph: CurveGraph,
    /// New edges joining the tree to the old graph, in `attach` order.
    pub attach_edges: Vec<EdgeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Stabilization {
    pub core: CurveGraph,
    pub contracted: Subcurve,
    pub vertex_image: BTreeMap<VertexId, VertexImage>,
}

/// Returns `base`, or `base` with primes appended until it is not taken.
pub fn fresh_id(base: &str, taken: impl Fn(&str) -> bool) -> String {
    let mut id = base.to_string();
    while taken(&id) {
        id.push('\'');
    }
    id
}

impl CurveGraph {
    pub fn new(
        mut vertices: Vec<Vertex>,
        mut edges: Vec<Edge>,
        mut marked_points: Vec<MarkedPoint>,
    ) -> Result<CurveGraph, GraphError> {
        vertices.sort_by(|a, b| a.id.cmp(&b.id));
        edges.sort_by(|a, b| a.id.cmp(&b.id));
        marked_points.sort_by(|a, b| a.id.cmp(&b.id));
        for w in vertices.windows(2) {
            if w[0].id == w[1].id {
                return Err(GraphError::DuplicateId(w[0].id.clone()));
            }
        }
        for w in edges.windows(2) {
            if w[0].id == w[1].id {
                return Err(GraphError::DuplicateId(w[0].id.clone()));
            }
        }
        for w in marked_points.windows(2) {
            if w[0].id == w[1].id {
                return Err(GraphError::DuplicateId(w[0].id.clone()));
            }
        }
        let g = CurveGraph {
            vertices,
            edges,
            marked_points,
        };
        for e in &g.edges {
            for v in &e.ends {
                if g.vertex(v).is_none() {
                    return Err(GraphError::UnknownVertex(v.clone()));
                }
            }
        }
        for p in &g.marked_points {
            if g.vertex(&p.vertex).is_none() {
                return Err(GraphError::UnknownVertex(p.vertex.clone()));
            }
        }
        Ok(g)
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn marked_points(&self) -> &[MarkedPoint] {
        &self.marked_points
    }

    pub fn vertex(&self, id: &str) -> Option<&Vertex> {
        self.vertices
            .binary_search_by(|v| v.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.vertices[i])
    }

    pub fn edge(&self, id: &str) -> Option<&Edge> {
        self.edges
            .binary_search_by(|e| e.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.edges[i])
    }

    pub fn marked_point(&self, id: &str) -> Option<&MarkedPoint> {
        self.marked_points
            .binary_search_by(|p| p.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.marked_points[i])
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = &VertexId> {
        self.vertices.iter().map(|v| &v.id)
    }

    pub fn has_id(&self, id: &str) -> bool {
        self.vertex(id).is_some() || self.edge(id).is_some() || self.marked_point(id).is_some()
    }

    /// Edge-end count at `v`; a self-loop counts twice.
    pub fn degree(&self, v: &str) -> usize {
        self.edges
            .iter()
            .map(|e| (e.ends[0] == v) as usize + (e.ends[1] == v) as usize)
            .sum()
    }

    pub fn incident(&self, v: &str) -> impl Iterator<Item = &Edge> {
        let v = v.to_string();
        self.edges.iter().filter(move |e| e.touches(&v))
    }

    pub fn points_on(&self, v: &str) -> impl Iterator<Item = &MarkedPoint> {
        let v = v.to_string();
        self.marked_points.iter().filter(move |p| p.vertex == v)
    }

    pub fn genus(&self) -> u64 {
        let g: u64 = self.vertices.iter().map(|v| v.genus as u64).sum();
        let comps = self.components(&self.all()).len() as i64;
        let b1 = self.edges.len() as i64 - self.vertices.len() as i64 + comps;
        g + b1 as u64
    }

    pub fn all(&self) -> Subcurve {
        Subcurve::of(self.vertex_ids().cloned())
    }

    pub fn is_connected(&self) -> bool {
        self.components(&self.all()).len() <= 1
    }

    /// Edges with both ends in `s`.
    pub fn internal_edges<'a>(&'a self, s: &'a Subcurve) -> impl Iterator<Item = &'a Edge> {
        self.edges
            .iter()
            .filter(move |e| s.contains(&e.ends[0]) && s.contains(&e.ends[1]))
    }

    /// Edges with exactly one end in `s`.
    pub fn attach_edges<'a>(&'a self, s: &'a Subcurve) -> impl Iterator<Item = &'a Edge> {
        self.edges
            .iter()
            .filter(move |e| s.contains(&e.ends[0]) != s.contains(&e.ends[1]))
    }

    /// Connected components of the induced subgraph, each sorted, ordered by
    /// smallest member.
    pub fn components(&self, s: &Subcurve) -> Vec<Subcurve> {
        let mut parent: BTreeMap<&str, &str> =
            s.vertices.iter().map(|v| (v.as_str(), v.as_str())).collect();
        fn find<'a>(p: &mut BTreeMap<&'a str, &'a str>, x: &'a str) -> &'a str {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut y = x;
            while p[y] != r {
                let n = p[y];
                p.insert(y, r);
                y = n;
            }
            r
        }
        for e in self.internal_edges(s) {
            let a = find(&mut parent, &e.ends[0]);
            let b = find(&mut parent, &e.ends[1]);
            if a != b {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                parent.insert(hi, lo);
            }
        }
        let mut groups: BTreeMap<&str, Subcurve> = BTreeMap::new();
        for v in &s.vertices {
            let r = find(&mut parent, v);
            groups.entry(r).or_default().vertices.insert(v.clone());
        }
        groups.into_values().collect()
    }

    pub fn restrict(&self, s: &Subcurve) -> CurveGraph {
        CurveGraph {
            vertices: self
                .vertices
                .iter()
                .filter(|v| s.contains(&v.id))
                .cloned()
                .collect(),
            edges: self.internal_edges(s).cloned().collect(),
            marked_points: self
                .marked_points
                .iter()
                .filter(|p| s.contains(&p.vertex))
                .cloned()
                .collect(),
        }
    }

    pub fn with_marked_point(&self, id: PointId, vertex: VertexId) -> Result<CurveGraph, GraphError> {
        let mut pts = self.marked_points.clone();
        pts.push(MarkedPoint { id, vertex });
        CurveGraph::new(self.vertices.clone(), self.edges.clone(), pts)
    }

    pub fn without_marked_point(&self, id: &str) -> CurveGraph {
        let mut g = self.clone();
        g.marked_points.retain(|p| p.id != id);
        g
    }

    fn check_subcurve(&self, s: &Subcurve) -> Result<(), GraphError> {
        match s.vertices.iter().find(|v| self.vertex(v).is_none()) {
            Some(v) => Err(GraphError::UnknownVertex(v.clone())),
            None => Ok(()),
        }
    }
}

pub fn genus(g: &CurveGraph) -> u64 {
    g.genus()
}

pub fn is_p1_tree(g: &CurveGraph, s: &Subcurve) -> bool {
    if !s
        .vertices
        .iter()
        .all(|v| g.vertex(v).is_some_and(|v| v.genus == 0))
    {
        return false;
    }
    let e = g.internal_edges(s).count();
    e + g.components(s).len() == s.vertices.len()
}

pub fn chain_profile(g: &CurveGraph, s: &Subcurve) -> Result<ChainProfile, GraphError> {
    if !is_p1_tree(g, s) {
        return Err(GraphError::NotATree);
    }
    let mut deg: BTreeMap<&str, usize> = s.vertices.iter().map(|v| (v.as_str(), 0)).collect();
    for e in g.internal_edges(s) {
        *deg.get_mut(e.ends[0].as_str()).unwrap() += 1;
        *deg.get_mut(e.ends[1].as_str()).unwrap() += 1;
    }
    let connected = g.components(s).len() == 1;
    let is_chain = connected && deg.values().all(|&d| d <= 2);
    let ends = if is_chain {
        deg.iter()
            .filter(|(_, &d)| d <= 1)
            .map(|(v, _)| v.to_string())
            .collect()
    } else {
        Vec::new()
    };
    Ok(ChainProfile {
        is_chain,
        length: s.vertices.len(),
        ends,
    })
}

pub fn is_admissible_tree(g: &CurveGraph, s: &Subcurve) -> bool {
    is_p1_tree(g, s)
        && g.components(s).iter().all(|c| {
            let n = g.attach_edges(c).count();
            n == 1 || n == 2
        })
}

pub fn collapse(g: &CurveGraph, s: &Subcurve) -> Result<Collapse, GraphError> {
    g.check_subcurve(s)?;
    if !is_p1_tree(g, s) {
        return Err(GraphError::NotATree);
    }
    let comps = g.components(s);
    let mut plan = Vec::with_capacity(comps.len());
    for c in &comps {
        let attach: Vec<&Edge> = g.attach_edges(c).collect();
        if attach.len() != 1 && attach.len() != 2 {
            return Err(GraphError::Inadmissible(
                c.vertices.iter().cloned().collect(),
                attach.len(),
            ));
        }
        plan.push((c, attach));
    }

    let mut vertices: Vec<Vertex> = g
        .vertices
        .iter()
        .filter(|v| !s.contains(&v.id))
        .cloned()
        .collect();
    let removed_edges: BTreeSet<&str> = g
        .edges
        .iter()
        .filter(|e| s.contains(&e.ends[0]) || s.contains(&e.ends[1]))
        .map(|e| e.id.as_str())
        .collect();
    let mut edges: Vec<Edge> = g
        .edges
        .iter()
        .filter(|e| !removed_edges.contains(e.id.as_str()))
        .cloned()
        .collect();
    let mut points: Vec<MarkedPoint> = g
        .marked_points
        .iter()
        .filter(|p| !s.contains(&p.vertex))
        .cloned()
        .collect();

    let mut vertex_image = BTreeMap::new();
    for v in &vertices {
        vertex_image.insert(v.id.clone(), VertexImage::Vertex(v.id.clone()));
    }
    let mut collapsed_to = Vec::new();
    let mut point_image = BTreeMap::new();
    let mut edge_image = BTreeMap::new();

    for (c, attach) in plan {
        let outer = |e: &Edge| e.ends.iter().find(|v| !c.contains(v)).unwrap().clone();
        let image = if attach.len() == 1 {
            let base = attach[0].id.clone();
            let id = fresh_id(&base, |x| {
                points.iter().any(|p| p.id == x) || g.marked_point(x).is_some()
            });
            points.push(MarkedPoint {
                id: id.clone(),
                vertex: outer(attach[0]),
            });
            ImagePoint::Marked(id)
        } else {
            let id = attach[0].id.clone().min(attach[1].id.clone());
            edges.push(Edge {
                id: id.clone(),
                ends: [outer(attach[0]), outer(attach[1])],
            });
            ImagePoint::Node(id)
        };
        for v in &c.vertices {
            vertex_image.insert(v.clone(), VertexImage::Point(image.clone()));
        }
        for p in g.marked_points.iter().filter(|p| c.contains(&p.vertex)) {
            point_image.insert(p.id.clone(), image.clone());
        }
        for e in g
            .edges
            .iter()
            .filter(|e| c.contains(&e.ends[0]) || c.contains(&e.ends[1]))
        {
            edge_image.insert(e.id.clone(), image.clone());
        }
        collapsed_to.push(CollapsedComponent {
            vertices: c.vertices.iter().cloned().collect(),
            attach_edges: attach.iter().map(|e| e.id.clone()).collect(),
            image,
        });
    }
    vertices.sort_by(|a, b| a.id.cmp(&b.id));
    let graph = CurveGraph::new(vertices, edges, points)?;
    Ok(Collapse {
        graph,
        vertex_image,
        collapsed_to,
        point_image,
        edge_image,
    })
}

pub fn insert_tree(
    g: &CurveGraph,
    site: &Site,
    t: &CurveGraph,
    attach: &[VertexId],
) -> Result<Insertion, GraphError> {
    if t.vertices.is_empty() || !t.is_connected() || !is_p1_tree(t, &t.all()) {
        return Err(GraphError::BadInsertTree);
    }
    for id in t
        .vertex_ids()
        .chain(t.edges.iter().map(|e| &e.id))
        .chain(t.marked_points.iter().map(|p| &p.id))
    {
        if g.has_id(id) {
            return Err(GraphError::IdClash(id.clone()));
        }
    }
    for a in attach {
        if t.vertex(a).is_none() {
            return Err(GraphError::UnknownVertex(a.clone()));
        }
    }
    let taken = |x: &str| g.edge(x).is_some() || t.edge(x).is_some();
    let mut vertices = g.vertices.clone();
    vertices.extend(t.vertices.iter().cloned());
    let mut edges = g.edges.clone();
    edges.extend(t.edges.iter().cloned());
    let mut points = g.marked_points.clone();
    points.extend(t.marked_points.iter().cloned());
    let attach_edges = match site {
        Site::Marked(m) => {
            if attach.len() != 1 {
                return Err(GraphError::AttachArity {
                    expected: 1,
                    got: attach.len(),
                });
            }
            let p = g
                .marked_point(m)
                .ok_or_else(|| GraphError::UnknownPoint(m.clone()))?;
            points.retain(|q| q.id != *m);
            let id = fresh_id(m, taken);
            edges.push(Edge {
                id: id.clone(),
                ends: [p.vertex.clone(), attach[0].clone()],
            });
            vec![id]
        }
        Site::Node(e) => {
            if attach.len() != 2 {
                return Err(GraphError::AttachArity {
                    expected: 2,
                    got: attach.len(),
                });
            }
            let old = g.edge(e).ok_or_else(|| GraphError::UnknownEdge(e.clone()))?;
            edges.retain(|x| x.id != *e);
            let second = fresh_id(&format!("{e}'"), taken);
            edges.push(Edge {
                id: e.clone(),
                ends: [old.ends[0].clone(), attach[0].clone()],
            });
            edges.push(Edge {
                id: second.clone(),
                ends: [attach[1].clone(), old.ends[1].clone()],
            });
            vec![e.clone(), second]
        }
    };
    Ok(Insertion {
        graph: CurveGraph::new(vertices, edges, points)?,
        attach_edges,
    })
}

pub fn stabilize(g: &CurveGraph) -> Result<Stabilization, GraphError> {
    stabilize_by(g, |cands| cands.first().cloned())
}

fn stabilize_by(
    g: &CurveGraph,
    pick: impl Fn(&[VertexId]) -> Option<VertexId>,
) -> Result<Stabilization, GraphError> {
    if !g.is_connected() {
        return Err(GraphError::Disconnected);
    }
    let genus = g.genus();
    if genus < 2 {
        return Err(GraphError::GenusTooSmall(genus));
    }
    let mut cur = g.clone();
    let mut image: BTreeMap<VertexId, VertexImage> = g
        .vertex_ids()
        .map(|v| (v.clone(), VertexImage::Vertex(v.clone())))
        .collect();
    let mut contracted = Subcurve::default();
    loop {
        let cands: Vec<VertexId> = cur
            .vertices
            .iter()
            .filter(|v| v.genus == 0 && cur.degree(&v.id) < 3)
            .map(|v| v.id.clone())
            .collect();
        let Some(v) = pick(&cands) else { break };
        let step = collapse(&cur, &Subcurve::of([v.clone()]))?;
        let new_point = match &step.vertex_image[&v] {
            VertexImage::Point(p) => p.clone(),
            VertexImage::Vertex(_) => unreachable!(),
        };
        for img in image.values_mut() {
            let moved = match img {
                VertexImage::Vertex(w) => *w == v,
                VertexImage::Point(ImagePoint::Marked(p)) => step.point_image.contains_key(p),
                VertexImage::Point(ImagePoint::Node(e)) => step.edge_image.contains_key(e),
            };
            if moved {
                *img = VertexImage::Point(new_point.clone());
            }
        }
        contracted.vertices.insert(v);
        cur = step.graph;
    }
    Ok(Stabilization {
        core: cur,
        contracted,
        vertex_image: image,
    })
}

/// Exact isomorphism test for small graphs (genus, multiplicities and
/// marked-point counts are preserved).
pub fn is_isomorphic(a: &CurveGraph, b: &CurveGraph) -> bool {
    if a.vertices.len() != b.vertices.len()
        || a.edges.len() != b.edges.len()
        || a.marked_points.len() != b.marked_points.len()
    {
        return false;
    }
    let sig = |g: &CurveGraph, v: &str| {
        (
            g.vertex(v).unwrap().genus,
            g.degree(v),
            g.points_on(v).count(),
        )
    };
    let mult = |g: &CurveGraph, x: &str, y: &str| {
        g.edges
            .iter()
            .filter(|e| (e.ends[0] == x && e.ends[1] == y) || (e.ends[0] == y && e.ends[1] == x))
            .count()
    };
    let av: Vec<&str> = a.vertex_ids().map(String::as_str).collect();
    let bv: Vec<&str> = b.vertex_ids().map(String::as_str).collect();
    fn go(
        i: usize,
        av: &[&str],
        bv: &[&str],
        map: &mut Vec<usize>,
        used: &mut Vec<bool>,
        ok: &dyn Fn(&[usize], usize, usize) -> bool,
    ) -> bool {
        if i == av.len() {
            return true;
        }
        for j in 0..bv.len() {
            if !used[j] && ok(map, i, j) {
                used[j] = true;
                map.push(j);
                if go(i + 1, av, bv, map, used, ok) {
                    return true;
                }
                map.pop();
                used[j] = false;
            }
        }
        false
    }
    let ok = |map: &[usize], i: usize, j: usize| {
        if sig(a, av[i]) != sig(b, bv[j]) || mult(a, av[i], av[i]) != mult(b, bv[j], bv[j]) {
            return false;
        }
        map.iter()
            .enumerate()
            .all(|(k, &m)| mult(a, av[k], av[i]) == mult(b, bv[m], bv[j]))
    };
    go(0, &av, &bv, &mut Vec::new(), &mut vec![false; bv.len()], &ok)
}
