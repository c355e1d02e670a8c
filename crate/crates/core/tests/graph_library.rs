//! Brute-force oracles for the coupling graph, path enumeration and the
//! concise library, computed from the raw registry JSON.

use std::collections::{BTreeMap, BTreeSet};

use apiplan_core::graph::{build_graph, entry_apis, LinkPolicy};
use apiplan_core::registry::{default_library, DEFAULT_REGISTRY};
use apiplan_core::solutions::{build_library, enumerate_solutions, is_valid, Solution, StructuralJudge};
use serde_json::Value;

type Edges = BTreeMap<(String, String), BTreeSet<String>>;

fn raw_apis() -> Vec<Value> {
    let doc: Value = serde_json::from_str(DEFAULT_REGISTRY).unwrap();
    doc["apis"].as_array().unwrap().clone()
}

/// Every id-typed output name, including fields nested inside record lists.
fn id_outputs(api: &Value) -> BTreeSet<String> {
    fn walk(attrs: &[Value], out: &mut BTreeSet<String>) {
        for a in attrs {
            if a["kind"] == "entity_id" {
                out.insert(a["name"].as_str().unwrap().to_string());
            }
            if let Some(fields) = a.get("fields").and_then(Value::as_array) {
                walk(fields, out);
            }
        }
    }
    let mut out = BTreeSet::new();
    walk(api["outputs"].as_array().unwrap(), &mut out);
    out
}

fn input_names(api: &Value) -> BTreeSet<String> {
    api["inputs"].as_array().unwrap().iter().map(|i| i["name"].as_str().unwrap().to_string()).collect()
}

fn oracle_edges() -> Edges {
    let apis = raw_apis();
    let mut edges = Edges::new();
    for a in &apis {
        for b in &apis {
            let shared: BTreeSet<String> = id_outputs(a).intersection(&input_names(b)).cloned().collect();
            if !shared.is_empty() {
                let name = |v: &Value| v["name"].as_str().unwrap().to_string();
                edges.insert((name(a), name(b)), shared);
            }
        }
    }
    edges
}

fn oracle_entries(edges: &Edges) -> BTreeSet<String> {
    raw_apis()
        .iter()
        .map(|a| a["name"].as_str().unwrap().to_string())
        .filter(|n| !edges.keys().any(|(_, to)| to == n))
        .collect()
}

fn oracle_paths(edges: &Edges, max_hops: usize) -> BTreeSet<Solution> {
    fn dfs(edges: &Edges, cur: Solution, max_hops: usize, out: &mut BTreeSet<Solution>) {
        out.insert(cur.clone());
        if cur.steps.len() == max_hops {
            return;
        }
        for ((from, to), links) in edges {
            if from != cur.tail() {
                continue;
            }
            for l in links {
                let mut next = cur.clone();
                next.steps.push(to.clone());
                next.hop_links.push(l.clone());
                dfs(edges, next, max_hops, out);
            }
        }
    }
    let mut out = BTreeSet::new();
    for e in oracle_entries(edges) {
        dfs(edges, Solution::single(&e), max_hops, &mut out);
    }
    out
}

#[test]
fn graph_matches_pairwise_oracle() {
    let lib = default_library();
    for policy in [LinkPolicy::EntityId, LinkPolicy::Linkable] {
        let g = build_graph(&lib, policy);
        let got: Edges = g.edges.iter().map(|e| ((e.from.clone(), e.to.clone()), e.attributes.clone())).collect();
        assert_eq!(got, oracle_edges(), "{policy:?}");
        let entries: BTreeSet<String> = entry_apis(&g).into_iter().collect();
        assert_eq!(entries, oracle_entries(&oracle_edges()));
        assert_eq!(entries, BTreeSet::from(["searchPerson".to_string(), "searchPublication".to_string()]));
    }
}

#[test]
fn enumeration_matches_dfs_oracle() {
    let g = build_graph(&default_library(), LinkPolicy::default());
    for h in 1..=4 {
        let got: BTreeSet<Solution> = enumerate_solutions(&g, h).unwrap().into_iter().collect();
        assert_eq!(got, oracle_paths(&oracle_edges(), h), "H={h}");
    }
    let keys: BTreeSet<String> = enumerate_solutions(&g, 3).unwrap().iter().map(Solution::key).collect();
    assert!(keys.contains("searchPerson -> getPersonPubs -> getPublication"));
    assert!(keys.contains("searchPublication -> getPublication -> getPersonBasicInfo"));
}

#[test]
fn enumerated_paths_are_valid_and_sorted() {
    let g = build_graph(&default_library(), LinkPolicy::default());
    let paths = enumerate_solutions(&g, 3).unwrap();
    assert!(paths.windows(2).all(|w| w[0] < w[1]));
    for p in &paths {
        assert!(is_valid(p, &g).unwrap(), "{p}");
    }
}

#[test]
fn library_keeps_first_shortest_per_signature() {
    let lib = default_library();
    let g = build_graph(&lib, LinkPolicy::default());
    let raw: BTreeMap<String, BTreeSet<String>> =
        raw_apis().iter().map(|a| (a["name"].as_str().unwrap().to_string(), input_names(a))).collect();
    let mut best: BTreeMap<(BTreeSet<String>, String), Solution> = BTreeMap::new();
    for s in oracle_paths(&oracle_edges(), 3) {
        let sig = (raw[s.head()].clone(), s.tail().to_string());
        let keep = match best.get(&sig) {
            Some(b) => (s.steps.len(), &s) < (b.steps.len(), b),
            None => true,
        };
        if keep {
            best.insert(sig, s);
        }
    }
    let expected: BTreeSet<Solution> = best.into_values().collect();
    let library = build_library(&g, 3, &StructuralJudge::new(&lib)).unwrap();
    let got: BTreeSet<Solution> = library.iter().cloned().collect();
    assert_eq!(got, expected);
    assert_eq!(library.len(), 10);
}
