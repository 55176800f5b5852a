//! Exact combinatorics of nodal curves, sheaves on rational trees,
//! central charges and the semistable reduction rewrite system.

pub mod bounds_audit;
pub mod charge;
pub mod curve_graph;
pub mod error_charge;
pub mod generate;
pub mod linalg;
pub mod rational;
pub mod reduction_engine;
pub mod sheaf_on_tree;

pub use rational::Q;
