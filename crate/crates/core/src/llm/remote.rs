use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{LlmBackend, LlmError};

/// Environment variable holding the API key. Keys are never read from files.
pub const API_KEY_ENV: &str = "APIPLAN_LLM_API_KEY";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Stub,
    RemoteChat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: f64,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub max_retries: usize,
    pub stub_fixtures: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Stub,
            endpoint: None,
            model: None,
            temperature: 0.0,
            timeout_secs: 60,
            max_in_flight: 4,
            max_retries: 2,
            stub_fixtures: None,
            cache_dir: None,
        }
    }
}

impl BackendConfig {
    /// Overrides from `APIPLAN_LLM_ENDPOINT` and `APIPLAN_LLM_MODEL`.
    pub fn apply_env(mut self) -> Self {
        if let Ok(v) = std::env::var("APIPLAN_LLM_ENDPOINT") {
            self.endpoint = Some(v);
            self.kind = BackendKind::RemoteChat;
        }
        if let Ok(v) = std::env::var("APIPLAN_LLM_MODEL") {
            self.model = Some(v);
        }
        self
    }
}

/// Counting semaphore bounding in-flight requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Gate { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|p| p.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|p| p.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|p| p.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Generic chat-completions client: POSTs `{model, messages, temperature}`.
pub struct RemoteChat {
    endpoint: String,
    model: String,
    temperature: f64,
    api_key: Option<String>,
    max_retries: usize,
    http: reqwest::blocking::Client,
    gate: Gate,
}

impl RemoteChat {
    pub fn from_config(cfg: &BackendConfig) -> Result<Self, LlmError> {
        let endpoint =
            cfg.endpoint.clone().ok_or_else(|| LlmError::Config("remote_chat backend needs an endpoint".into()))?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs.max(1)))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(RemoteChat {
            endpoint,
            model: cfg.model.clone().unwrap_or_else(|| "default".into()),
            temperature: cfg.temperature,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            max_retries: cfg.max_retries,
            http,
            gate: Gate::new(cfg.max_in_flight),
        })
    }

    fn request_once(&self, prompt: &str) -> Result<String, LlmError> {
        let body = json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let _permit = self.gate.acquire();
        let mut req = self.http.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| LlmError::Retryable(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| LlmError::Retryable(e.to_string()))?;
        if !status.is_success() {
            return Err(LlmError::Backend { status: status.as_u16(), body: text });
        }
        // Standard chat-completion shape yields the message content; any other
        // body is passed through as is.
        let content = serde_json::from_str::<Value>(&text)
            .ok()
            .and_then(|v| v.pointer("/choices/0/message/content").and_then(Value::as_str).map(str::to_string));
        Ok(content.unwrap_or(text))
    }
}

impl LlmBackend for RemoteChat {
    fn id(&self) -> String {
        format!("remote:{}:{}:t{}", self.endpoint, self.model, self.temperature)
    }

    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let mut attempt = 0;
        loop {
            match self.request_once(prompt) {
                Err(LlmError::Retryable(_)) if attempt < self.max_retries => {
                    attempt += 1;
                    std::thread::sleep(Duration::from_millis(100 * attempt as u64));
                }
                other => return other,
            }
        }
    }
}
