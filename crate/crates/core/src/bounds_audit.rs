//! Boundedness inequalities checked on a decomposed datum.

use serde::{Deserialize, Serialize};

use crate::curve_graph::{CurveGraph, Subcurve, VertexId};
use crate::error_charge::FMDatum;
use crate::sheaf_on_tree::{h0, pushforward_collapse, AttachContext, SheafOnTree};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AuditError {
    #[error("curve does not stabilize: {0}")]
    Unstable(String),
    #[error("bad fragment: {0}")]
    Fragment(String),
}

/// Split of the curve: `core` maps isomorphically onto the stable model,
/// the other three parts make up the contracted locus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub core: Vec<VertexId>,
    pub u_plus: Vec<VertexId>,
    pub u_zero: Vec<VertexId>,
    pub u_one: Vec<VertexId>,
}

/// A connected piece of the class-free contracted locus meeting the
/// positive part, with its number of attach points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fragment {
    pub sheaf: SheafOnTree,
    pub n_a: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorsionSummary {
    /// Length of the zero-dimensional torsion of the push-forward.
    pub torsion_length: i64,
    pub chi_quotient: i64,
    pub chi_core: i64,
    pub attach_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub rank: u32,
    #[serde(default)]
    pub decomposition: Decomposition,
    /// `H.beta` of each component of `u_one`.
    #[serde(default)]
    pub vertical_h: Vec<u64>,
    pub h_beta_total: u64,
    #[serde(default)]
    pub fragments: Vec<Fragment>,
    pub core_node_count: u32,
    #[serde(default)]
    pub core_defects: Vec<u32>,
    pub torsion_summary: TorsionSummary,
    /// Contracted trees, for the informational leaf count.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trees: Vec<CurveGraph>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub pass: bool,
    pub checks: Vec<CheckReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub info: Vec<String>,
}

fn report(name: &str, violations: Vec<String>) -> CheckReport {
    CheckReport {
        name: name.into(),
        pass: violations.is_empty(),
        violations,
    }
}

pub fn check_component_bound(s: &Scenario) -> CheckReport {
    let mut v: Vec<String> = s
        .vertical_h
        .iter()
        .enumerate()
        .filter(|(_, &h)| h == 0)
        .map(|(i, _)| format!("component {i} has H.beta = 0"))
        .collect();
    if s.vertical_h.len() != s.decomposition.u_one.len() && !s.decomposition.u_one.is_empty() {
        v.push("u_one and vertical_h differ in length".into());
    }
    let count = s.vertical_h.len() as u64;
    if count >= s.h_beta_total && count > 0 {
        v.push(format!("{count} components, H.beta = {}", s.h_beta_total));
    }
    report("component_bound", v)
}

pub fn check_torsion_bound(s: &Scenario) -> CheckReport {
    let l = s.torsion_summary.torsion_length;
    let r = s.rank as i64;
    let v = s
        .fragments
        .iter()
        .enumerate()
        .filter_map(|(i, f)| match h0(&f.sheaf) {
            Ok(h) if l >= h as i64 - r * f.n_a as i64 => None,
            Ok(h) => Some(format!("fragment {i}: l = {l} < {h} - {r}*{}", f.n_a)),
            Err(e) => Some(format!("fragment {i}: {e}")),
        })
        .collect();
    report("torsion_bound", v)
}

pub fn check_delta_bound(s: &Scenario) -> CheckReport {
    let total: u64 = s.core_defects.iter().map(|&d| d as u64).sum();
    let cap = s.rank as u64 * s.core_node_count as u64;
    let mut v = Vec::new();
    if s.core_defects.len() > s.core_node_count as usize {
        v.push(format!("{} defects on {} nodes", s.core_defects.len(), s.core_node_count));
    }
    if total > cap {
        v.push(format!("core defects sum to {total} > {cap}"));
    }
    report("delta_bound", v)
}

pub fn check_euler_window(s: &Scenario) -> CheckReport {
    let t = &s.torsion_summary;
    let diff = (t.chi_core - t.chi_quotient).abs();
    let cap = 2 * s.rank as i64 * t.attach_count as i64;
    let v = if diff > cap {
        vec![format!("|{} - {}| = {diff} > {cap}", t.chi_core, t.chi_quotient)]
    } else {
        Vec::new()
    };
    report("euler_window", v)
}

/// Leaves against branch vertices on each contracted tree; reported, not
/// asserted.
pub fn leaf_count_info(s: &Scenario) -> Vec<String> {
    s.trees
        .iter()
        .filter(|t| t.vertices().len() >= 2)
        .map(|t| {
            let leaves = t.vertex_ids().filter(|v| t.degree(v) == 1).count();
            let branch = t.vertex_ids().filter(|v| t.degree(v) >= 3).count();
            let ids: Vec<&str> = t.vertex_ids().map(String::as_str).collect();
            format!(
                "tree {{{}}}: {leaves} leaves, {branch} branch vertices, {}",
                ids.join(","),
                if leaves >= branch + 2 { "holds" } else { "fails" }
            )
        })
        .collect()
}

pub fn audit(s: &Scenario) -> AuditReport {
    let checks = vec![
        check_component_bound(s),
        check_torsion_bound(s),
        check_delta_bound(s),
        check_euler_window(s),
    ];
    AuditReport {
        pass: checks.iter().all(|c| c.pass),
        checks,
        info: leaf_count_info(s),
    }
}

impl Scenario {
    /// Derives the decomposition and bookkeeping from a datum.
    pub fn from_datum(d: &FMDatum) -> Result<Scenario, AuditError> {
        let g = d.curve();
        let r = d.rank();
        let st = d.core_map().map_err(|e| AuditError::Unstable(e.to_string()))?;
        let contracted = &st.contracted;
        let comps = d.components();
        let mut dec = Decomposition::default();
        for v in g.vertex_ids() {
            let c = &comps[v];
            let part = if !contracted.contains(v) {
                &mut dec.core
            } else if !c.class.is_zero() {
                &mut dec.u_one
            } else if c.parts.as_ref().is_some_and(|p| p.is_positive()) {
                &mut dec.u_plus
            } else {
                &mut dec.u_zero
            };
            part.push(v.clone());
        }
        let vertical_h = dec.u_one.iter().map(|v| comps[v].class.h_beta).collect();

        let zero_locus = Subcurve::of(dec.u_plus.iter().chain(&dec.u_zero));
        let mut fragments = Vec::new();
        for piece in g.components(&zero_locus) {
            if !piece.vertices.iter().any(|v| dec.u_plus.contains(v)) {
                continue;
            }
            let n_a = g.attach_edges(&piece).count() as u32;
            let sheaf = d
                .tree_fragment(&piece)
                .map_err(|e| AuditError::Fragment(e.to_string()))?;
            fragments.push(Fragment { sheaf, n_a });
        }

        let mut torsion_length: i64 = d.point_torsions().iter().map(|t| t.charge.chi).sum();
        let mut core_defects: Vec<u32> = g
            .edges()
            .iter()
            .filter(|e| !contracted.contains(&e.ends[0]) && !contracted.contains(&e.ends[1]))
            .map(|e| d.edge_defects()[&e.id])
            .collect();
        let mut trees = Vec::new();
        for t in g.components(contracted) {
            let attach: Vec<u32> = g.attach_edges(&t).map(|e| d.edge_defects()[&e.id]).collect();
            let ctx = match attach[..] {
                [a] => AttachContext::smooth(a),
                [a, b] => AttachContext::node(a, b),
                _ => return Err(AuditError::Unstable("contracted tree with bad attach count".into())),
            };
            let sheaf = d
                .tree_fragment(&t)
                .map_err(|e| AuditError::Fragment(e.to_string()))?;
            let p = pushforward_collapse(&sheaf, &ctx).map_err(|e| AuditError::Fragment(e.to_string()))?;
            torsion_length += p.torsion_length;
            core_defects.extend(p.image_defect);
            trees.push(sheaf.tree().clone());
        }

        let core = Subcurve::of(&dec.core);
        let rr = r as i64;
        let chi_core: i64 = dec
            .core
            .iter()
            .map(|v| comps[v].bundle_degree() + rr * (1 - g.vertex(v).unwrap().genus as i64))
            .sum::<i64>()
            - g.internal_edges(&core)
                .map(|e| rr - d.edge_defects()[&e.id] as i64)
                .sum::<i64>();
        let point_chi: i64 = d.point_torsions().iter().map(|t| t.charge.chi).sum();
        let chi_quotient = d.tf_chi() + point_chi - torsion_length;
        let attach_count = g.attach_edges(&core).count() as u32;

        Ok(Scenario {
            rank: r,
            decomposition: dec,
            vertical_h,
            h_beta_total: d.total_charge().h_beta,
            fragments,
            core_node_count: st.core.edges().len() as u32,
            core_defects,
            torsion_summary: TorsionSummary {
                torsion_length,
                chi_quotient,
                chi_core,
                attach_count,
            },
            trees,
        })
    }
}

pub fn audit_datum(d: &FMDatum) -> Result<AuditReport, AuditError> {
    Ok(audit(&Scenario::from_datum(d)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sheaf_on_tree::tests::two_chain;

    fn blank(r: u32) -> Scenario {
        Scenario {
            rank: r,
            decomposition: Decomposition::default(),
            vertical_h: Vec::new(),
            h_beta_total: 1,
            fragments: Vec::new(),
            core_node_count: 0,
            core_defects: Vec::new(),
            torsion_summary: TorsionSummary::default(),
            trees: Vec::new(),
        }
    }

    #[test]
    fn component_bound_examples() {
        let mut s = blank(1);
        s.vertical_h = vec![1, 1, 1];
        s.h_beta_total = 4;
        assert!(check_component_bound(&s).pass);
        s.vertical_h = vec![1, 1, 1, 1];
        assert!(!check_component_bound(&s).pass);
        s.vertical_h.clear();
        assert!(check_component_bound(&s).pass);
    }

    #[test]
    fn torsion_bound_examples() {
        let mut s = blank(2);
        s.fragments = vec![Fragment {
            sheaf: two_chain(),
            n_a: 1,
        }];
        s.torsion_summary.torsion_length = 2;
        assert!(check_torsion_bound(&s).pass);
        s.torsion_summary.torsion_length = 1;
        assert!(!check_torsion_bound(&s).pass);
    }

    #[test]
    fn torsion_bound_from_pendant_collapse() {
        let f = two_chain();
        let p = pushforward_collapse(&f, &AttachContext::smooth(0)).unwrap();
        let mut s = blank(2);
        s.fragments = vec![Fragment { sheaf: f, n_a: 1 }];
        s.torsion_summary.torsion_length = p.torsion_length;
        assert!(check_torsion_bound(&s).pass);
    }

    #[test]
    fn delta_bound_examples() {
        let mut s = blank(2);
        s.core_node_count = 2;
        s.core_defects = vec![1, 2];
        assert!(check_delta_bound(&s).pass);
        s.core_defects = vec![0, 0];
        assert!(check_delta_bound(&s).pass);
        s.core_defects = vec![2, 2, 2];
        assert!(!check_delta_bound(&s).pass);
    }

    #[test]
    fn euler_window_examples() {
        let mut s = blank(2);
        s.torsion_summary = TorsionSummary {
            torsion_length: 0,
            chi_quotient: 0,
            chi_core: 3,
            attach_count: 1,
        };
        assert!(check_euler_window(&s).pass);
        s.torsion_summary.chi_core = 5;
        assert!(!check_euler_window(&s).pass);
    }

    #[test]
    fn derived_scenarios_pass() {
        use crate::generate::{random_datum, DatumLimits};
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let d = random_datum(&mut rng, &DatumLimits::default());
            let rep = audit_datum(&d).unwrap();
            assert!(rep.pass, "{}", serde_json::to_string(&rep).unwrap());
        }
    }
}
