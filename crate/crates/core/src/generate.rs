//! Enumerations and seeded samplers for trees, sheaves and FM data.

use std::collections::BTreeMap;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::charge::{ChargeDatum, LatticeBasis};
use crate::curve_graph::{is_isomorphic, CurveGraph, Edge, MarkedPoint, Vertex};
use crate::error_charge::{err_charge, ComponentData, CurveClass, FMDatum, TorsionRecord};
use crate::rational::Q;
use crate::sheaf_on_tree::{SheafOnTree, SplittingType};

fn vertex(id: impl Into<String>, genus: u32) -> Vertex {
    Vertex {
        id: id.into(),
        genus,
        label: None,
    }
}

fn edge(id: impl Into<String>, a: &str, b: &str) -> Edge {
    Edge {
        id: id.into(),
        ends: [a.to_string(), b.to_string()],
    }
}

/// Rational forest on vertices `v0..` given by parent links (`None` starts a
/// new component).
pub fn forest_from_parents(parents: &[Option<usize>]) -> CurveGraph {
    let vs = (0..parents.len()).map(|i| vertex(format!("v{i}"), 0)).collect();
    let es = parents
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.map(|p| edge(format!("e{i}"), &format!("v{p}"), &format!("v{i}"))))
        .collect();
    CurveGraph::new(vs, es, Vec::new()).expect("forest")
}

/// All rational forests with at most `max_n` vertices, one per isomorphism
/// class.
pub fn forests(max_n: usize) -> Vec<CurveGraph> {
    let mut all: Vec<Vec<Option<usize>>> = Vec::new();
    let mut layer: Vec<Vec<Option<usize>>> = vec![vec![None]];
    for _ in 1..=max_n {
        let mut graphs: Vec<CurveGraph> = Vec::new();
        let mut kept = Vec::new();
        for p in layer {
            let g = forest_from_parents(&p);
            if !graphs.iter().any(|h| is_isomorphic(h, &g)) {
                graphs.push(g);
                kept.push(p);
            }
        }
        let mut next = Vec::new();
        for p in &kept {
            for choice in std::iter::once(None).chain((0..p.len()).map(Some)) {
                let mut q = p.clone();
                q.push(choice);
                next.push(q);
            }
        }
        all.extend(kept);
        layer = next;
    }
    all.iter().map(|p| forest_from_parents(p)).collect()
}

/// Splitting types of rank `r` with parts in `0..=max_part`.
pub fn splitting_types(r: u32, max_part: i64) -> Vec<SplittingType> {
    (0..=max_part)
        .combinations_with_replacement(r as usize)
        .map(SplittingType::from)
        .collect()
}

/// Cartesian product that yields one empty tuple for no factors.
pub fn product<T: Clone>(lists: &[Vec<T>]) -> Vec<Vec<T>> {
    if lists.is_empty() {
        return vec![Vec::new()];
    }
    lists.iter().map(|l| l.iter().cloned()).multi_cartesian_product().collect()
}

/// Every defect vector on the edges of `g`, entries in `0..=r`.
pub fn defect_vectors(g: &CurveGraph, r: u32) -> Vec<BTreeMap<String, u32>> {
    let ids: Vec<&String> = g.edges().iter().map(|e| &e.id).collect();
    product(&vec![(0..=r).collect::<Vec<_>>(); ids.len()])
        .into_iter()
        .map(|ds| ids.iter().map(|e| e.to_string()).zip(ds).collect())
        .collect()
}

/// Uniform random rational tree on `n` vertices (random recursive tree,
/// vertices then shuffled).
pub fn random_tree(rng: &mut impl Rng, n: usize, prefix: &str) -> CurveGraph {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let name = |i: usize| format!("{prefix}{}", order[i]);
    let vs = (0..n).map(|i| vertex(name(i), 0)).collect();
    let es = (1..n)
        .map(|i| {
            let p = rng.gen_range(0..i);
            edge(format!("{prefix}e{i}"), &name(p), &name(i))
        })
        .collect();
    CurveGraph::new(vs, es, Vec::new()).expect("tree")
}

pub fn random_parts(rng: &mut impl Rng, r: u32, max_part: i64) -> SplittingType {
    let mut parts: Vec<i64> = (0..r).map(|_| rng.gen_range(0..=max_part)).collect();
    parts.sort();
    SplittingType::from(parts)
}

/// Nonnegative sheaf on a random tree with `1..=max_n` vertices.
pub fn random_sheaf(rng: &mut impl Rng, max_n: usize, r: u32, max_part: i64) -> SheafOnTree {
    let n = rng.gen_range(1..=max_n);
    let tree = random_tree(rng, n, "v");
    let types = tree
        .vertex_ids()
        .map(|v| (v.clone(), random_parts(rng, r, max_part)))
        .collect();
    let defects = tree
        .edges()
        .iter()
        .map(|e| (e.id.clone(), rng.gen_range(0..=r)))
        .collect();
    SheafOnTree::new(tree, r, types, defects).expect("valid sheaf")
}

/// Bounds for [`random_datum`].
#[derive(Debug, Clone)]
pub struct DatumLimits {
    pub max_neg_im: i64,
    pub max_re: i64,
    pub flat_probability: f64,
}

impl Default for DatumLimits {
    fn default() -> Self {
        DatumLimits {
            max_neg_im: 5,
            max_re: 20,
            flat_probability: 0.2,
        }
    }
}

fn half(rng: &mut impl Rng, lo: i64, hi: i64) -> Q {
    Q::new(rng.gen_range(2 * lo..=2 * hi), 2)
}

struct Builder {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    points: Vec<MarkedPoint>,
    comps: BTreeMap<String, ComponentData>,
}

impl Builder {
    fn add(&mut self, id: String, genus: u32, data: ComponentData) {
        self.vertices.push(vertex(id.clone(), genus));
        self.comps.insert(id, data);
    }

    fn join(&mut self, a: &str, b: &str) {
        let id = format!("k{}", self.edges.len());
        self.edges.push(edge(id, a, b));
    }
}

fn tree_component(rng: &mut impl Rng, r: u32) -> ComponentData {
    match rng.gen_range(0..6) {
        0 | 1 | 2 => ComponentData::split(SplittingType::zero(r), CurveClass::default()),
        3 => ComponentData::split(
            SplittingType::zero(r),
            CurveClass {
                b_beta: Q::zero(),
                jl_beta: Q::one(),
                h_beta: 1,
            },
        ),
        _ => {
            let deg = rng.gen_range(1..=2);
            let mut parts = vec![0i64; r as usize];
            for _ in 0..deg {
                parts[rng.gen_range(0..r as usize)] += 1;
            }
            parts.sort();
            ComponentData::split(parts, CurveClass::default())
        }
    }
}

/// Random stable core with unstable rational trees hung on it, defects and
/// torsion records; `-Im Err` and `Re Err` stay within `limits`. The
/// lattice is spanned by `1/2` and `-i`.
pub fn random_datum(rng: &mut impl Rng, limits: &DatumLimits) -> FMDatum {
    loop {
        if let Some(d) = try_random_datum(rng, limits) {
            let z = err_charge(&d);
            if -&z.im <= Q::int(limits.max_neg_im) && z.re <= Q::int(limits.max_re) {
                return d;
            }
        }
    }
}

fn try_random_datum(rng: &mut impl Rng, limits: &DatumLimits) -> Option<FMDatum> {
    let r = rng.gen_range(1..=3u32);
    let mut b = Builder {
        vertices: Vec::new(),
        edges: Vec::new(),
        points: Vec::new(),
        comps: BTreeMap::new(),
    };
    let core_class = CurveClass {
        b_beta: half(rng, -1, 1),
        jl_beta: Q::int(rng.gen_range(1..=2)),
        h_beta: rng.gen_range(1..=2),
    };
    let positive_genus = |rng: &mut dyn rand::RngCore, class: CurveClass| {
        ComponentData::with_degree(rng.gen_range(-1..=3), class)
    };
    let rational = |rng: &mut dyn rand::RngCore, class: CurveClass| {
        let mut parts: Vec<i64> = (0..r).map(|_| rng.gen_range(0..=2)).collect();
        parts.sort();
        ComponentData::split(parts, class)
    };
    match rng.gen_range(0..5) {
        0 => b.add("c0".into(), 2, positive_genus(rng, core_class)),
        1 => {
            b.add("c0".into(), 1, positive_genus(rng, core_class));
            b.add("c1".into(), 1, positive_genus(rng, CurveClass::default()));
            b.join("c0", "c1");
        }
        2 => {
            b.add("c0".into(), 0, rational(rng, core_class));
            b.join("c0", "c0");
            b.join("c0", "c0");
        }
        3 => {
            b.add("c0".into(), 0, rational(rng, core_class));
            b.add("c1".into(), 0, rational(rng, CurveClass::default()));
            for _ in 0..3 {
                b.join("c0", "c1");
            }
        }
        _ => {
            b.add("c0".into(), 1, positive_genus(rng, core_class));
            b.join("c0", "c0");
        }
    }
    let core: Vec<String> = b.vertices.iter().map(|v| v.id.clone()).collect();
    for t in 0..rng.gen_range(0..=3) {
        let bridging = rng.gen_bool(0.4);
        let star = !bridging && rng.gen_bool(0.2);
        let n = if star { 4 } else { rng.gen_range(1..=3) };
        let ids: Vec<String> = (0..n).map(|j| format!("t{t}.{j}")).collect();
        for id in &ids {
            let data = tree_component(rng, r);
            b.add(id.clone(), 0, data);
        }
        if star {
            for leaf in &ids[1..] {
                b.join(&ids[0], leaf);
            }
        } else {
            for w in ids.windows(2) {
                b.join(&w[0], &w[1]);
            }
        }
        let a = core.choose(rng).unwrap().clone();
        b.join(&a, &ids[0]);
        if bridging {
            let c = core.choose(rng).unwrap().clone();
            b.join(&ids[n - 1], &c);
        }
    }
    let flat = rng.gen_bool(limits.flat_probability);
    let mut defects = BTreeMap::new();
    let mut point_torsions = Vec::new();
    let mut vertical_torsions = Vec::new();
    if !flat {
        for e in &b.edges {
            if rng.gen_bool(0.25) {
                defects.insert(e.id.clone(), rng.gen_range(1..=r));
            }
        }
        let ids: Vec<String> = b.vertices.iter().map(|v| v.id.clone()).collect();
        for i in 0..rng.gen_range(0..=2) {
            let p = format!("m{i}");
            b.points.push(MarkedPoint {
                id: p.clone(),
                vertex: ids.choose(rng).unwrap().clone(),
            });
            point_torsions.push(TorsionRecord {
                point: p,
                charge: ChargeDatum::points(rng.gen_range(1..=3)),
            });
        }
        for i in 0..rng.gen_range(0..=2) {
            let p = format!("w{i}");
            b.points.push(MarkedPoint {
                id: p.clone(),
                vertex: ids.choose(rng).unwrap().clone(),
            });
            let jl = rng.gen_range(1..=2);
            vertical_torsions.push(TorsionRecord {
                point: p,
                charge: ChargeDatum::new(
                    rng.gen_range(0..=2),
                    half(rng, -1, 1),
                    Q::int(jl),
                    rng.gen_range(1..=jl as u64),
                ),
            });
        }
    }
    let curve = CurveGraph::new(b.vertices, b.edges, b.points).ok()?;
    FMDatum::balanced(
        curve,
        r,
        b.comps,
        defects,
        point_torsions,
        vertical_torsions,
        LatticeBasis::units(Q::new(1, 2), Q::one()),
    )
    .ok()
}
