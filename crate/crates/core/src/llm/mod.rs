//! Model backends and prompt rendering.
//!
//! Every prompt ends with a `Task: <stage>` line followed by a final
//! `Query: <text>` line. The stub backend keys its fixtures on those two lines,
//! which keeps offline runs independent of the rest of the prompt wording.

mod cache;
mod prompts;
mod remote;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::sha256_hex;

pub use cache::CachedBackend;
pub use prompts::{compose, default_extract_prompt, render_prompts, PromptBundle, PromptError, DEFAULT_EXEMPLARS};
pub use remote::{BackendConfig, BackendKind, RemoteChat, API_KEY_ENV};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LlmError {
    #[error("retryable transport failure: {0}")]
    Retryable(String),
    #[error("backend returned status {status}: {body}")]
    Backend { status: u16, body: String },
    #[error("no stub fixture for {0}")]
    StubMiss(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("completion cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Solution,
    Plan,
    Answer,
    Template,
    Synthesize,
    Extract,
    Judge,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Solution, Stage::Plan, Stage::Answer, Stage::Template, Stage::Synthesize, Stage::Extract, Stage::Judge];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Solution => "solution",
            Stage::Plan => "plan",
            Stage::Answer => "answer",
            Stage::Template => "template",
            Stage::Synthesize => "synthesize",
            Stage::Extract => "extract",
            Stage::Judge => "judge",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.as_str() == s)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A text completion backend. Implementations must allow concurrent calls.
pub trait LlmBackend: Send + Sync {
    /// Stable identifier, part of the cache key.
    fn id(&self) -> String;
    fn complete(&self, prompt: &str) -> Result<String, LlmError>;
}

impl<T: LlmBackend + ?Sized> LlmBackend for Box<T> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        (**self).complete(prompt)
    }
}

impl<T: LlmBackend + ?Sized> LlmBackend for std::sync::Arc<T> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        (**self).complete(prompt)
    }
}

/// Builds the configured backend, wrapped in a completion cache when
/// `cache_dir` is set.
pub fn open_backend(cfg: &BackendConfig) -> Result<Box<dyn LlmBackend>, LlmError> {
    let inner: Box<dyn LlmBackend> = match cfg.kind {
        BackendKind::Stub => {
            let path = cfg
                .stub_fixtures
                .as_ref()
                .ok_or_else(|| LlmError::Config("stub backend needs `stub_fixtures`".into()))?;
            Box::new(StubBackend::load(path)?)
        }
        BackendKind::RemoteChat => Box::new(RemoteChat::from_config(cfg)?),
    };
    Ok(match &cfg.cache_dir {
        Some(dir) => Box::new(CachedBackend::new(inner, dir)?),
        None => inner,
    })
}

/// Digest of a query with whitespace runs collapsed.
pub fn query_digest(query: &str) -> String {
    sha256_hex(query.split_whitespace().collect::<Vec<_>>().join(" "))
}

/// The `(stage, query)` pair a prompt is addressed by.
pub fn prompt_key(prompt: &str) -> (Option<Stage>, Option<&str>) {
    let mut stage = None;
    let mut query = None;
    for line in prompt.lines() {
        if let Some(rest) = line.strip_prefix("Task: ") {
            stage = Stage::parse(rest.trim());
        } else if let Some(rest) = line.strip_prefix("Query: ") {
            query = Some(rest.trim());
        }
    }
    (stage, query)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubEntry {
    pub query: String,
    pub responses: BTreeMap<Stage, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubFixtures {
    pub entries: Vec<StubEntry>,
}

/// Offline backend answering from fixtures keyed by a digest of the query line.
#[derive(Debug, Clone, Default)]
pub struct StubBackend {
    entries: BTreeMap<String, StubEntry>,
}

impl StubBackend {
    pub fn from_fixtures(f: StubFixtures) -> Self {
        let mut stub = StubBackend::default();
        for e in f.entries {
            stub.insert(e);
        }
        stub
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Config(format!("cannot read stub fixtures {}: {e}", path.display())))?;
        let f: StubFixtures = serde_json::from_str(&text)
            .map_err(|e| LlmError::Config(format!("bad stub fixtures {}: {e}", path.display())))?;
        Ok(Self::from_fixtures(f))
    }

    fn insert(&mut self, e: StubEntry) {
        let key = query_digest(&e.query);
        match self.entries.get_mut(&key) {
            Some(existing) => {
                existing.responses.extend(e.responses);
                if e.default.is_some() {
                    existing.default = e.default;
                }
            }
            None => {
                self.entries.insert(key, e);
            }
        }
    }

    pub fn with(mut self, query: &str, stage: Stage, response: &str) -> Self {
        self.insert(StubEntry {
            query: query.to_string(),
            responses: BTreeMap::from([(stage, response.to_string())]),
            default: None,
        });
        self
    }

    /// Response used for any stage without a specific fixture.
    pub fn with_default(mut self, query: &str, response: &str) -> Self {
        self.insert(StubEntry {
            query: query.to_string(),
            responses: BTreeMap::new(),
            default: Some(response.to_string()),
        });
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn fixtures(&self) -> StubFixtures {
        StubFixtures { entries: self.entries.values().cloned().collect() }
    }
}

impl LlmBackend for StubBackend {
    fn id(&self) -> String {
        "stub".into()
    }

    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let (stage, query) = prompt_key(prompt);
        let query = query.ok_or_else(|| LlmError::StubMiss("prompt has no `Query:` line".into()))?;
        let entry =
            self.entries.get(&query_digest(query)).ok_or_else(|| LlmError::StubMiss(format!("query {query:?}")))?;
        stage
            .and_then(|s| entry.responses.get(&s))
            .or(entry.default.as_ref())
            .cloned()
            .ok_or_else(|| LlmError::StubMiss(format!("stage {} of query {query:?}", stage.map_or("?", Stage::as_str))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stub_returns_fixture_text() {
        let stub = StubBackend::default()
            .with("who wrote X?", Stage::Solution, "solution: searchPublication -> getPublication")
            .with("who wrote X?", Stage::Plan, "plan(...)");
        let p = compose(Stage::Solution, "Pick a solution.", "who wrote X?");
        assert_eq!(stub.complete(&p).unwrap(), "solution: searchPublication -> getPublication");
        let p = compose(Stage::Plan, "Write a plan.\nSolution: a -> b", "who wrote X?");
        assert_eq!(stub.complete(&p).unwrap(), "plan(...)");
    }

    #[test]
    fn stub_miss() {
        let stub = StubBackend::default().with("q1", Stage::Solution, "x");
        assert!(matches!(stub.complete(&compose(Stage::Solution, "", "q2")), Err(LlmError::StubMiss(_))));
        assert!(matches!(stub.complete(&compose(Stage::Answer, "", "q1")), Err(LlmError::StubMiss(_))));
        assert!(matches!(stub.complete("no query here"), Err(LlmError::StubMiss(_))));
    }

    #[test]
    fn default_response_and_fixture_round_trip() {
        let stub = StubBackend::default().with_default("q", "fallback").with("q", Stage::Plan, "p");
        assert_eq!(stub.complete(&compose(Stage::Answer, "", "q")).unwrap(), "fallback");
        assert_eq!(stub.complete(&compose(Stage::Plan, "", "q")).unwrap(), "p");
        let json = serde_json::to_string(&stub.fixtures()).unwrap();
        let back = StubBackend::from_fixtures(serde_json::from_str(&json).unwrap());
        assert_eq!(back.complete(&compose(Stage::Plan, "", "q")).unwrap(), "p");
    }

    #[test]
    fn key_is_the_final_query_line() {
        let p = compose(Stage::Plan, "Example query: earlier\nplan(x: text)", "later");
        assert_eq!(prompt_key(&p), (Some(Stage::Plan), Some("later")));
    }
}
