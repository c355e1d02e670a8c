//! Solutions (API calling sequences) and the concise solution library.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{entry_apis, ApiGraph};
use crate::llm::{LlmBackend, LlmError, Stage};
use crate::registry::ApiLibrary;

pub const DEFAULT_MAX_HOPS: usize = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SolutionError {
    #[error("hop limit must be positive")]
    ZeroHops,
    #[error("unknown API `{0}` in solution")]
    UnknownApi(String),
    #[error("solution must contain at least one API")]
    Empty,
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("equivalence judge failed: {0}")]
    Backend(#[from] LlmError),
    #[error("equivalence judge gave an unusable verdict: {0:?}")]
    Verdict(String),
    #[error(transparent)]
    Solution(#[from] SolutionError),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Solution {
    pub steps: Vec<String>,
    /// Attribute threaded across each hop; `len == steps.len() - 1`.
    pub hop_links: Vec<String>,
}

impl Solution {
    pub fn new<S: Into<String>>(steps: impl IntoIterator<Item = S>, hop_links: impl IntoIterator<Item = S>) -> Self {
        Solution {
            steps: steps.into_iter().map(Into::into).collect(),
            hop_links: hop_links.into_iter().map(Into::into).collect(),
        }
    }

    pub fn single(api: &str) -> Self {
        Solution { steps: vec![api.to_string()], hop_links: Vec::new() }
    }

    pub fn head(&self) -> &str {
        &self.steps[0]
    }

    pub fn tail(&self) -> &str {
        self.steps.last().expect("nonempty solution")
    }

    /// `a -> b -> c`
    pub fn key(&self) -> String {
        self.steps.join(" -> ")
    }

    /// Parses `a -> b -> c`; surrounding whitespace is ignored.
    pub fn parse_steps(text: &str) -> Result<Vec<String>, SolutionError> {
        let steps: Vec<String> = text.split("->").map(|s| s.trim().to_string()).collect();
        if steps.iter().any(|s| s.is_empty() || !s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')) {
            return Err(SolutionError::Empty);
        }
        Ok(steps)
    }

    /// Rebuilds hop links from the graph, taking the first label of each edge.
    pub fn from_steps(steps: Vec<String>, g: &ApiGraph) -> Result<Self, SolutionError> {
        if steps.is_empty() {
            return Err(SolutionError::Empty);
        }
        let mut hop_links = Vec::new();
        for pair in steps.windows(2) {
            for s in pair {
                if !g.contains(s) {
                    return Err(SolutionError::UnknownApi(s.clone()));
                }
            }
            let link = g.edge(&pair[0], &pair[1]).and_then(|e| e.attributes.iter().next().cloned()).unwrap_or_default();
            hop_links.push(link);
        }
        if steps.len() == 1 && !g.contains(&steps[0]) {
            return Err(SolutionError::UnknownApi(steps[0].clone()));
        }
        Ok(Solution { steps, hop_links })
    }
}

impl fmt::Display for Solution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.steps[0])?;
        for (link, step) in self.hop_links.iter().zip(&self.steps[1..]) {
            write!(f, " -[{link}]-> {step}")?;
        }
        Ok(())
    }
}

pub fn hop_count(s: &Solution) -> usize {
    s.steps.len()
}

/// Every path of 1..=`max_hops` APIs starting at an entry API, one solution
/// per choice of hop link, sorted by (steps, links).
pub fn enumerate_solutions(g: &ApiGraph, max_hops: usize) -> Result<Vec<Solution>, SolutionError> {
    if max_hops == 0 {
        return Err(SolutionError::ZeroHops);
    }
    let mut out = Vec::new();
    let mut stack: Vec<Solution> = entry_apis(g).iter().map(|e| Solution::single(e)).collect();
    while let Some(partial) = stack.pop() {
        if partial.steps.len() < max_hops {
            for edge in g.successors(partial.tail()) {
                for link in &edge.attributes {
                    let mut next = partial.clone();
                    next.steps.push(edge.to.clone());
                    next.hop_links.push(link.clone());
                    stack.push(next);
                }
            }
        }
        out.push(partial);
    }
    out.sort();
    Ok(out)
}

pub fn is_valid(s: &Solution, g: &ApiGraph) -> Result<bool, SolutionError> {
    if s.steps.is_empty() {
        return Err(SolutionError::Empty);
    }
    for step in &s.steps {
        if !g.contains(step) {
            return Err(SolutionError::UnknownApi(step.clone()));
        }
    }
    if g.indegree_of(s.head()) != Some(0) || s.hop_links.len() + 1 != s.steps.len() {
        return Ok(false);
    }
    Ok(s.steps
        .windows(2)
        .zip(&s.hop_links)
        .all(|(pair, link)| g.edge(&pair[0], &pair[1]).is_some_and(|e| e.attributes.contains(link))))
}

/// Decides whether two solutions retrieve the same information.
pub trait EquivalenceJudge {
    fn equivalent(&self, a: &Solution, b: &Solution) -> Result<bool, JudgeError>;
}

/// Equivalent iff same entry-input attribute set and same terminal API.
pub struct StructuralJudge<'a> {
    lib: &'a ApiLibrary,
}

impl<'a> StructuralJudge<'a> {
    pub fn new(lib: &'a ApiLibrary) -> Self {
        StructuralJudge { lib }
    }

    fn signature(&self, s: &Solution) -> Result<(BTreeSet<String>, String), SolutionError> {
        let head = self.lib.get(s.head()).ok_or_else(|| SolutionError::UnknownApi(s.head().to_string()))?;
        let inputs = head.inputs.iter().map(|i| i.name.clone()).collect();
        Ok((inputs, s.tail().to_string()))
    }
}

impl EquivalenceJudge for StructuralJudge<'_> {
    fn equivalent(&self, a: &Solution, b: &Solution) -> Result<bool, JudgeError> {
        Ok(self.signature(a)? == self.signature(b)?)
    }
}

/// Asks a model; expects a reply whose first word is yes or no.
pub struct LlmJudge<'a> {
    backend: &'a dyn LlmBackend,
}

impl<'a> LlmJudge<'a> {
    pub fn new(backend: &'a dyn LlmBackend) -> Self {
        LlmJudge { backend }
    }

    pub fn prompt(a: &Solution, b: &Solution) -> String {
        format!(
            "Two API calling sequences are given. Answer `yes` if both can obtain the same \
             information for the same user input, otherwise answer `no`.\n\
             Task: {}\nQuery: {} | {}\n",
            Stage::Judge.as_str(),
            a.key(),
            b.key()
        )
    }
}

impl EquivalenceJudge for LlmJudge<'_> {
    fn equivalent(&self, a: &Solution, b: &Solution) -> Result<bool, JudgeError> {
        let reply = self.backend.complete(&Self::prompt(a, b))?;
        let word = reply
            .split_whitespace()
            .next()
            .unwrap_or("")
            .trim_matches(|c: char| !c.is_ascii_alphabetic())
            .to_ascii_lowercase();
        match word.as_str() {
            "yes" => Ok(true),
            "no" => Ok(false),
            _ => Err(JudgeError::Verdict(reply)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Enumerated,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    RejectedEquivalent,
    ReplacedLonger,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibraryEntry {
    #[serde(flatten)]
    pub solution: Solution,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionLibrary {
    pub max_hops: usize,
    pub solutions: Vec<LibraryEntry>,
}

impl SolutionLibrary {
    pub fn new(max_hops: usize) -> Self {
        SolutionLibrary { max_hops, solutions: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Solution> {
        self.solutions.iter().map(|e| &e.solution)
    }

    /// Lookup by API sequence (links ignored).
    pub fn find_steps(&self, steps: &[String]) -> Option<&Solution> {
        self.iter().find(|s| s.steps == steps)
    }

    /// Conciseness-preserving insert. The judge runs against every stored
    /// solution before anything is mutated, so a judge error leaves the
    /// library untouched.
    pub fn insert_concise(
        &mut self,
        s: Solution,
        provenance: Provenance,
        judge: &dyn EquivalenceJudge,
    ) -> Result<InsertOutcome, JudgeError> {
        let mut longer = Vec::new();
        for (i, stored) in self.solutions.iter().enumerate() {
            if stored.solution == s {
                return Ok(InsertOutcome::RejectedEquivalent);
            }
            if judge.equivalent(&stored.solution, &s)? {
                if hop_count(&stored.solution) <= hop_count(&s) {
                    return Ok(InsertOutcome::RejectedEquivalent);
                }
                longer.push(i);
            }
        }
        let outcome = if longer.is_empty() {
            InsertOutcome::Inserted
        } else {
            for i in longer.into_iter().rev() {
                self.solutions.remove(i);
            }
            InsertOutcome::ReplacedLonger
        };
        self.solutions.push(LibraryEntry { solution: s, provenance });
        self.solutions.sort_by(|a, b| a.solution.cmp(&b.solution));
        Ok(outcome)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("library serializes")
    }
}

/// Enumerates and inserts every valid solution in enumeration order.
pub fn build_library(
    g: &ApiGraph,
    max_hops: usize,
    judge: &dyn EquivalenceJudge,
) -> Result<SolutionLibrary, JudgeError> {
    let mut lib = SolutionLibrary::new(max_hops);
    for s in enumerate_solutions(g, max_hops)? {
        if is_valid(&s, g)? {
            lib.insert_concise(s, Provenance::Enumerated, judge)?;
        }
    }
    Ok(lib)
}
