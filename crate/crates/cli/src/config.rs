//! TOML run configuration. Hyperparameters use their short names (`R`, `T`,
//! `k`, `K`, `temperature`, `max_output_tokens`, `reasoning_level`,
//! `phi_threshold`); command-line flags override file values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use repot_core::derail::Condition;
use repot_core::gateway::{ReasoningLevel, SandboxConfig, SandboxLimits};
use repot_core::runner::{Method, MethodConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Scripted,
    Remote,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub suite: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub method: Option<String>,
    pub seed: Option<u64>,
    pub parallel: Option<usize>,
    pub backend: Option<BackendKind>,
    pub script: Option<PathBuf>,
    /// Model label; for the remote backend also the requested model.
    pub model: Option<String>,
    #[serde(rename = "R")]
    pub r: Option<usize>,
    #[serde(rename = "T")]
    pub t: Option<usize>,
    pub k: Option<usize>,
    #[serde(rename = "K")]
    pub max_repair_moves: Option<usize>,
    pub temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
    pub reasoning_level: Option<ReasoningLevel>,
    pub phi_threshold: Option<f64>,
    #[serde(default)]
    pub remote: RemoteSection,
    #[serde(default)]
    pub sandbox: SandboxSection,
    #[serde(default)]
    pub derail: DerailSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteSection {
    /// Overrides `REPOT_ENDPOINT`.
    pub endpoint: Option<String>,
    pub max_attempts: Option<u32>,
    pub timeout_s: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandboxSection {
    pub interpreter: Option<Vec<String>>,
    pub wall_ms: Option<u64>,
    pub mem_mb: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerailSection {
    pub cases: Option<PathBuf>,
    pub per_problem: Option<usize>,
    pub target: Option<usize>,
    pub conditions: Option<Vec<String>>,
    pub stateguard_calls: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

/// Flags shared by `run` and `derail`; each overrides the file value.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Problem suite (JSONL).
    #[arg(long)]
    pub suite: Option<PathBuf>,
    /// Output trace file (JSONL).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    pub parallel: Option<usize>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Scripted responses, one JSON record per completion.
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
}

/// Fully resolved settings; written verbatim into the trace header.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub suite: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub parallel: usize,
    pub backend: BackendKind,
    pub script: Option<PathBuf>,
    pub model: String,
    pub method: MethodConfig,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub reasoning_level: ReasoningLevel,
    pub remote: RemoteSection,
    pub sandbox: SandboxConfig,
}

pub fn resolve(file: &FileConfig, o: &Overrides, method: Option<&str>) -> Result<Resolved> {
    let method_name = method.map(str::to_string).or_else(|| file.method.clone()).unwrap_or_else(|| "repot".into());
    let method: Method = method_name.parse()?;
    let mut mc = MethodConfig::new(method);
    if let Some(v) = file.r {
        mc.r = v;
    }
    if let Some(v) = file.t {
        mc.t = v;
    }
    if let Some(v) = file.k {
        mc.k = v;
    }
    if let Some(v) = file.phi_threshold {
        mc.phi_threshold = v;
    }
    mc.max_repair_moves = file.max_repair_moves.or(mc.max_repair_moves);
    mc.validate()?;

    let defaults = repot_core::gateway::CompletionRequest::new("");
    let temperature = file.temperature.unwrap_or(defaults.temperature);
    if !(0.0..=2.0).contains(&temperature) {
        bail!("temperature must lie in [0, 2], got {temperature}");
    }
    let max_output_tokens = file.max_output_tokens.unwrap_or(defaults.max_output_tokens);
    if max_output_tokens == 0 {
        bail!("max_output_tokens must be positive");
    }

    let suite = o.suite.clone().or_else(|| file.suite.clone()).context("no suite given (use --suite or `suite` in the config)")?;
    let out = o.out.clone().or_else(|| file.out.clone()).context("no output path given (use --out or `out` in the config)")?;
    let backend = o.backend.or(file.backend).unwrap_or(BackendKind::Scripted);
    let script = o.script.clone().or_else(|| file.script.clone());
    if backend == BackendKind::Scripted && script.is_none() {
        bail!("the scripted backend needs a response file (use --script FILE or `script` in the config)");
    }

    let mut sandbox = SandboxConfig::default();
    if let Some(i) = &file.sandbox.interpreter {
        sandbox.interpreter = i.clone();
    }
    let defaults_limits = SandboxLimits::default();
    sandbox.limits = SandboxLimits {
        wall_ms: file.sandbox.wall_ms.unwrap_or(defaults_limits.wall_ms),
        mem_bytes: file.sandbox.mem_mb.map_or(defaults_limits.mem_bytes, |m| m << 20),
    };

    Ok(Resolved {
        suite,
        out,
        seed: o.seed.or(file.seed).unwrap_or(0),
        parallel: o.parallel.or(file.parallel).unwrap_or(1).max(1),
        backend,
        script,
        model: o.model.clone().or_else(|| file.model.clone()).unwrap_or_default(),
        method: mc,
        temperature,
        max_output_tokens,
        reasoning_level: file.reasoning_level.unwrap_or_default(),
        remote: file.remote.clone(),
        sandbox,
    })
}

pub fn parse_conditions(names: &[String]) -> Result<Vec<Condition>> {
    if names.is_empty() {
        return Ok(Condition::ALL.to_vec());
    }
    names.iter().map(|n| n.parse::<Condition>().map_err(anyhow::Error::msg)).collect()
}
