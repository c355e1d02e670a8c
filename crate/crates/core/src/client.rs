//! The API client contract plans execute against.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde_json::Value;
use thiserror::Error;

use crate::corpus::{query_endpoint, Corpus};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ApiError {
    #[error("NOT_FOUND: {0}")]
    NotFound(String),
    #[error("BAD_REQUEST: {0}")]
    BadRequest(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Protocol(String),
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::NotFound(_) => "NOT_FOUND",
            ApiError::BadRequest(_) => "BAD_REQUEST",
            ApiError::Transport(_) => "TRANSPORT",
            ApiError::Protocol(_) => "PROTOCOL",
        }
    }

    /// Transport and protocol failures say nothing about the plan itself.
    pub fn is_transport(&self) -> bool {
        matches!(self, ApiError::Transport(_) | ApiError::Protocol(_))
    }
}

/// Must tolerate concurrent callers.
pub trait ApiClient: Send + Sync {
    fn call(&self, api: &str, args: &BTreeMap<String, Value>) -> Result<Value, ApiError>;
}

impl<T: ApiClient + ?Sized> ApiClient for Arc<T> {
    fn call(&self, api: &str, args: &BTreeMap<String, Value>) -> Result<Value, ApiError> {
        (**self).call(api, args)
    }
}

impl<T: ApiClient + ?Sized> ApiClient for &T {
    fn call(&self, api: &str, args: &BTreeMap<String, Value>) -> Result<Value, ApiError> {
        (**self).call(api, args)
    }
}

/// In-process client answering straight from a corpus.
#[derive(Clone)]
pub struct LocalClient {
    corpus: Arc<Corpus>,
}

impl LocalClient {
    pub fn new(corpus: Arc<Corpus>) -> Self {
        LocalClient { corpus }
    }
}

impl ApiClient for LocalClient {
    fn call(&self, api: &str, args: &BTreeMap<String, Value>) -> Result<Value, ApiError> {
        query_endpoint(&self.corpus, api, args)
    }
}

/// Wraps a client and counts calls.
pub struct CountingClient<C> {
    inner: C,
    calls: AtomicUsize,
}

impl<C: ApiClient> CountingClient<C> {
    pub fn new(inner: C) -> Self {
        CountingClient { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<C: ApiClient> ApiClient for CountingClient<C> {
    fn call(&self, api: &str, args: &BTreeMap<String, Value>) -> Result<Value, ApiError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.call(api, args)
    }
}
