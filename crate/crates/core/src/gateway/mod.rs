//! Model backends, the program sandbox, and plan extraction.
//!
//! Every backend implements [`ModelBackend`]. Calls carry a [`CallContext`]
//! naming the logical stream (a problem id, or a derail case/condition key)
//! and the 0-based ordinal of the call within that stream, so scripted
//! backends can answer deterministically under any scheduling.

mod extract;
mod remote;
mod sandbox;

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::{extract_plan, extract_tokens, find_code_block, last_moves_line, ExtractionError};
pub use remote::{RemoteBackend, RemoteConfig};
pub use sandbox::{ProgramExecutor, Sandbox, SandboxConfig, SandboxError, SandboxLimits, SandboxResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReasoningLevel {
    #[default]
    None,
    Medium,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub reasoning_level: ReasoningLevel,
    pub model_name: String,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            temperature: 0.0,
            max_output_tokens: 16384,
            reasoning_level: ReasoningLevel::None,
            model_name: String::new(),
        }
    }
}

/// Where token counts came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TokenSource {
    #[default]
    Proxy,
    Provider,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
    pub backend_error: Option<String>,
    pub token_source: TokenSource,
}

impl CompletionResult {
    /// A successful result with whitespace-proxy token counts.
    pub fn proxied(prompt: &str, text: String, latency_ms: u64) -> Self {
        Self {
            prompt_tokens: proxy_tokens(prompt),
            completion_tokens: proxy_tokens(&text),
            text,
            latency_ms,
            backend_error: None,
            token_source: TokenSource::Proxy,
        }
    }

    pub fn failed(prompt: &str, error: impl Into<String>, latency_ms: u64) -> Self {
        Self {
            text: String::new(),
            prompt_tokens: proxy_tokens(prompt),
            completion_tokens: 0,
            latency_ms,
            backend_error: Some(error.into()),
            token_source: TokenSource::Proxy,
        }
    }
}

/// Whitespace-separated word count.
pub fn proxy_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CallContext<'a> {
    pub key: &'a str,
    pub ordinal: usize,
}

pub trait ModelBackend: Send + Sync {
    fn complete(&self, call: CallContext<'_>, request: &CompletionRequest) -> CompletionResult;

    /// Short description recorded in trace headers.
    fn describe(&self) -> String;
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("cannot read script {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("script line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// One canned completion. Records with a `key` answer that stream in order;
/// records without one form a shared queue used by unlisted streams.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRecord {
    #[serde(default, alias = "problem_id", skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    pub text: String,
}

pub struct ScriptedBackend {
    keyed: HashMap<String, Vec<String>>,
    shared: Mutex<VecDeque<String>>,
}

impl ScriptedBackend {
    pub fn new(records: impl IntoIterator<Item = ScriptRecord>) -> Self {
        let mut keyed: HashMap<String, Vec<String>> = HashMap::new();
        let mut shared = VecDeque::new();
        for r in records {
            match r.key {
                Some(k) => keyed.entry(k).or_default().push(r.text),
                None => shared.push_back(r.text),
            }
        }
        Self { keyed, shared: Mutex::new(shared) }
    }

    /// A shared queue of completions, answered in call order.
    pub fn queue<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Self {
        Self::new(texts.into_iter().map(|t| ScriptRecord { key: None, text: t.into() }))
    }

    /// Reads a JSONL script of [`ScriptRecord`]s.
    pub fn from_file(path: &Path) -> Result<Self, ScriptError> {
        let text = fs::read_to_string(path)
            .map_err(|source| ScriptError::Io { path: path.display().to_string(), source })?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: ScriptRecord = serde_json::from_str(line)
                .map_err(|e| ScriptError::Malformed { line: i + 1, message: e.to_string() })?;
            records.push(r);
        }
        Ok(Self::new(records))
    }
}

impl ModelBackend for ScriptedBackend {
    fn complete(&self, call: CallContext<'_>, request: &CompletionRequest) -> CompletionResult {
        let text = match self.keyed.get(call.key) {
            Some(texts) => texts.get(call.ordinal).cloned(),
            None => self.shared.lock().expect("script queue poisoned").pop_front(),
        };
        match text {
            Some(t) => CompletionResult::proxied(&request.prompt, t, 0),
            None => CompletionResult::failed(&request.prompt, "script exhausted", 0),
        }
    }

    fn describe(&self) -> String {
        "scripted".into()
    }
}

/// Backend driven by a closure; handy for policies that read the prompt.
pub struct FnBackend<F> {
    policy: F,
}

impl<F> FnBackend<F>
where
    F: Fn(CallContext<'_>, &CompletionRequest) -> Result<String, String> + Send + Sync,
{
    pub fn new(policy: F) -> Self {
        Self { policy }
    }
}

impl<F> ModelBackend for FnBackend<F>
where
    F: Fn(CallContext<'_>, &CompletionRequest) -> Result<String, String> + Send + Sync,
{
    fn complete(&self, call: CallContext<'_>, request: &CompletionRequest) -> CompletionResult {
        match (self.policy)(call, request) {
            Ok(text) => CompletionResult::proxied(&request.prompt, text, 0),
            Err(e) => CompletionResult::failed(&request.prompt, e, 0),
        }
    }

    fn describe(&self) -> String {
        "policy".into()
    }
}
