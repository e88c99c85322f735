use std::env;
use std::thread;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{CallContext, CompletionRequest, CompletionResult, ModelBackend, ReasoningLevel, TokenSource};

pub const ENV_ENDPOINT: &str = "REPOT_ENDPOINT";
pub const ENV_API_KEY: &str = "REPOT_API_KEY";
pub const ENV_MODEL: &str = "REPOT_MODEL";

/// Chat-completions endpoint settings.
#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub api_key: Option<String>,
    /// Used when a request leaves `model_name` empty.
    pub model: String,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: None,
            model: model.into(),
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(600),
        }
    }

    /// Reads `REPOT_ENDPOINT`, `REPOT_API_KEY` and `REPOT_MODEL`.
    pub fn from_env() -> Result<Self, String> {
        let endpoint = env::var(ENV_ENDPOINT).map_err(|_| format!("{ENV_ENDPOINT} is not set"))?;
        let model = env::var(ENV_MODEL).unwrap_or_default();
        let mut cfg = Self::new(endpoint, model);
        cfg.api_key = env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        Ok(cfg)
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
}

enum Attempt {
    Done { text: String, usage: Option<(u64, u64)> },
    Retry(String),
    Fatal(String),
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    fn body(&self, request: &CompletionRequest) -> Value {
        let model = if request.model_name.is_empty() { &self.config.model } else { &request.model_name };
        let mut body = json!({
            "model": model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        if request.reasoning_level == ReasoningLevel::Medium {
            body["reasoning_effort"] = json!("medium");
        }
        body
    }

    fn attempt(&self, body: &Value) -> Attempt {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(format!("transport error: {e}")),
        };
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        if status == 429 || status >= 500 {
            return Attempt::Retry(format!("HTTP {status}: {}", truncate(&text)));
        }
        if status >= 400 {
            return Attempt::Fatal(format!("HTTP {status}: {}", truncate(&text)));
        }
        let v: Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => return Attempt::Fatal(format!("response is not JSON: {e}")),
        };
        let Some(content) = v.pointer("/choices/0/message/content").and_then(Value::as_str) else {
            return Attempt::Fatal("response has no choices[0].message.content".into());
        };
        let usage = match (
            v.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
            v.pointer("/usage/completion_tokens").and_then(Value::as_u64),
        ) {
            (Some(p), Some(c)) => Some((p, c)),
            _ => None,
        };
        Attempt::Done { text: content.to_string(), usage }
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}

impl ModelBackend for RemoteBackend {
    fn complete(&self, call: CallContext<'_>, request: &CompletionRequest) -> CompletionResult {
        let body = self.body(request);
        let start = Instant::now();
        let elapsed = || start.elapsed().as_micros().div_ceil(1000) as u64;
        let mut backoff = self.config.initial_backoff;
        let mut last = String::from("no attempts made");
        for attempt in 1..=self.config.max_attempts.max(1) {
            match self.attempt(&body) {
                Attempt::Done { text, usage } => {
                    let mut r = CompletionResult::proxied(&request.prompt, text, elapsed());
                    if let Some((p, c)) = usage {
                        r.prompt_tokens = p;
                        r.completion_tokens = c;
                        r.token_source = TokenSource::Provider;
                    }
                    return r;
                }
                Attempt::Fatal(e) => return CompletionResult::failed(&request.prompt, e, elapsed()),
                Attempt::Retry(e) => {
                    tracing::warn!(key = call.key, ordinal = call.ordinal, attempt, error = %e, "completion failed");
                    last = e;
                    if attempt < self.config.max_attempts {
                        thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        CompletionResult::failed(&request.prompt, last, elapsed())
    }

    fn describe(&self) -> String {
        format!("remote {} ({})", self.config.endpoint, self.config.model)
    }
}
