//! Coupling graph over a registry.
//!
//! An edge `from -> to` exists when some output attribute of `from` is an
//! input of `to` and the link policy admits it. All shared attributes of a
//! pair collapse into one labeled edge.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::registry::{ApiLibrary, ApiSpec, AttributeKind, OutputPath};

/// Which shared attributes count as a coupling.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkPolicy {
    /// Only attributes of kind `entity_id`.
    EntityId,
    /// Only output attributes flagged `linkable`.
    #[default]
    Linkable,
    /// Plain name intersection of outputs and inputs.
    Raw,
}

impl LinkPolicy {
    pub fn admits(self, output: &crate::registry::AttributeSpec) -> bool {
        match self {
            LinkPolicy::EntityId => output.kind == AttributeKind::EntityId,
            LinkPolicy::Linkable => output.linkable,
            LinkPolicy::Raw => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CouplingEdge {
    pub from: String,
    pub to: String,
    pub attributes: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiGraph {
    pub policy: LinkPolicy,
    pub nodes: Vec<String>,
    pub edges: Vec<CouplingEdge>,
    pub indegree: BTreeMap<String, usize>,
}

/// Shared attributes of `from`'s outputs and `to`'s inputs admitted by `policy`.
pub fn coupling_attributes(from: &ApiSpec, to: &ApiSpec, policy: LinkPolicy) -> BTreeSet<String> {
    from.flattened_outputs()
        .iter()
        .map(OutputPath::attribute)
        .filter(|out| policy.admits(out) && to.input(&out.name).is_some())
        .map(|out| out.name.clone())
        .collect()
}

pub fn build_graph(lib: &ApiLibrary, policy: LinkPolicy) -> ApiGraph {
    let nodes: Vec<String> = lib.names().map(str::to_string).collect();
    let mut indegree: BTreeMap<String, usize> = nodes.iter().map(|n| (n.clone(), 0)).collect();
    let mut edges = Vec::new();
    for from in &lib.apis {
        for to in &lib.apis {
            let attributes = coupling_attributes(from, to, policy);
            if attributes.is_empty() {
                continue;
            }
            *indegree.get_mut(&to.name).expect("node") += 1;
            edges.push(CouplingEdge { from: from.name.clone(), to: to.name.clone(), attributes });
        }
    }
    edges.sort();
    ApiGraph { policy, nodes, edges, indegree }
}

impl ApiGraph {
    pub fn edge(&self, from: &str, to: &str) -> Option<&CouplingEdge> {
        self.edges.iter().find(|e| e.from == from && e.to == to)
    }

    pub fn successors<'a>(&'a self, from: &'a str) -> impl Iterator<Item = &'a CouplingEdge> + 'a {
        self.edges.iter().filter(move |e| e.from == from)
    }

    pub fn contains(&self, node: &str) -> bool {
        self.indegree.contains_key(node)
    }

    pub fn indegree_of(&self, node: &str) -> Option<usize> {
        self.indegree.get(node).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph api_graph {\n  rankdir=LR;\n");
        for n in &self.nodes {
            let _ = writeln!(out, "  \"{n}\";");
        }
        for e in &self.edges {
            let label = e.attributes.iter().cloned().collect::<Vec<_>>().join(",");
            let _ = writeln!(out, "  \"{}\" -> \"{}\" [label=\"{}\"];", e.from, e.to, label);
        }
        out.push_str("}\n");
        out
    }
}

/// Nodes with zero indegree, in node order.
pub fn entry_apis(g: &ApiGraph) -> Vec<String> {
    g.nodes.iter().filter(|n| g.indegree.get(*n) == Some(&0)).cloned().collect()
}
