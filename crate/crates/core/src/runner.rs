//! Prompt construction and generation collection.
//!
//! Prompts come in two modes: zero-shot (instruction + linearized context
//! only) and one-shot (a compact grammar summary and one instruction–output
//! demonstration in front). Completions are fetched from a
//! chat/completions-style endpoint with retry and bounded concurrency, or
//! replayed from an archive keyed by prompt digest so runs are reproducible
//! offline.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::EvalExample;
use crate::metrics::{aggregate, evaluate_example, MetricConfig, MetricReport};
use crate::repofs::canonical_serialize;

pub const REPLAY_SCHEMA: &str = "dslbench.replay.v1";
pub const GENERATION_SCHEMA: &str = "dslbench.generations.v1";

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error("prompt assets do not match mode: {0}")]
    AssetMismatch(String),
    #[error("no examples to run")]
    NoExamples,
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned status {status}: {excerpt}")]
    Endpoint { status: u16, excerpt: String },
    #[error("endpoint response was not a chat completion: {0}")]
    MalformedResponse(String),
    #[error("replay archive has no entry for prompt digest {digest}")]
    ReplayMiss { digest: String },
    #[error("malformed replay line {line}: {message}")]
    MalformedReplayLine { line: usize, message: String },
    #[error("unsupported replay schema `{0}`")]
    UnsupportedSchema(String),
    #[error("failed to build http client: {0}")]
    Client(String),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    ZeroShot,
    OneShot,
}

impl PromptMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PromptMode::ZeroShot => "zero-shot",
            PromptMode::OneShot => "one-shot",
        }
    }
}

/// A single instruction–output demonstration for one-shot prompting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub instruction: String,
    pub output_document: String,
}

/// Optional prompt assets; one-shot mode requires both.
#[derive(Debug, Clone, Default)]
pub struct PromptAssets {
    pub grammar_summary: Option<String>,
    pub demonstration: Option<Demonstration>,
}

/// A fully resolved prompt; `rendered` text is byte-stable across runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSpec {
    pub mode: PromptMode,
    pub grammar_summary: Option<String>,
    pub demonstration: Option<Demonstration>,
    pub instruction: String,
    pub context_document: String,
}

/// Renders the prompt for an example. Zero-shot prompts contain only the
/// instruction and the canonical context document; one-shot prompts lead
/// with the grammar summary and the demonstration, in fixed order.
pub fn build_prompt(
    example: &EvalExample,
    mode: PromptMode,
    assets: &PromptAssets,
) -> Result<(PromptSpec, String), RunnerError> {
    validate_assets(mode, assets)?;
    let context_document = canonical_serialize(&example.context);
    let spec = PromptSpec {
        mode,
        grammar_summary: assets.grammar_summary.clone(),
        demonstration: assets.demonstration.clone(),
        instruction: example.instruction.clone(),
        context_document,
    };
    let rendered = render_prompt(&spec);
    Ok((spec, rendered))
}

fn validate_assets(mode: PromptMode, assets: &PromptAssets) -> Result<(), RunnerError> {
    match mode {
        PromptMode::OneShot => {
            if assets.grammar_summary.is_none() || assets.demonstration.is_none() {
                return Err(RunnerError::AssetMismatch(
                    "one-shot mode requires a grammar summary and a demonstration".to_string(),
                ));
            }
        }
        PromptMode::ZeroShot => {
            if assets.grammar_summary.is_some() || assets.demonstration.is_some() {
                return Err(RunnerError::AssetMismatch(
                    "zero-shot mode forbids grammar summary and demonstration".to_string(),
                ));
            }
        }
    }
    Ok(())
}

fn render_prompt(spec: &PromptSpec) -> String {
    let mut out = String::new();
    if let Some(grammar) = &spec.grammar_summary {
        out.push_str("### DSL grammar\n");
        out.push_str(grammar);
        if !grammar.ends_with('\n') {
            out.push('\n');
        }
        out.push('\n');
    }
    if let Some(demo) = &spec.demonstration {
        out.push_str("### Example\nInstruction: ");
        out.push_str(&demo.instruction);
        out.push_str("\nOutput:\n");
        out.push_str(&demo.output_document);
        if !demo.output_document.ends_with('\n') {
            out.push('\n');
        }
        out.push('\n');
    }
    out.push_str("### Task\nInstruction: ");
    out.push_str(&spec.instruction);
    out.push_str("\nContext:\n");
    out.push_str(&spec.context_document);
    out.push_str("\nOutput:\n");
    out
}

/// Hex SHA-256 of the rendered prompt; replay archives are keyed by it.
pub fn prompt_digest(prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Decoding parameters sent with each request.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenParams {
    pub max_tokens: u32,
    pub temperature: f64,
    pub seed: Option<u64>,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            max_tokens: 4096,
            temperature: 0.0,
            seed: Some(0),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay_ms: 100,
        }
    }
}

/// Remote endpoint configuration. The auth token is read from the
/// environment variable named in `token_env`, never stored in config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    pub token_env: Option<String>,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            model: model.into(),
            token_env: None,
            timeout_secs: 120,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub total_tokens: Option<u64>,
}

/// Verbatim model output plus endpoint metadata.
#[derive(Debug, Clone)]
pub struct CompletionText {
    pub text: String,
    pub model: Option<String>,
    pub usage: Option<TokenUsage>,
    pub latency_ms: u64,
}

/// Source of completions: a live endpoint or a replay archive.
pub trait Transport: Sync {
    fn complete(&self, prompt: &str, params: &GenParams) -> Result<CompletionText, RunnerError>;
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    model: Option<String>,
    usage: Option<TokenUsage>,
}

/// Blocking HTTP transport for chat/completions-style endpoints. Transient
/// transport failures and 5xx responses are retried with exponential
/// backoff; non-retryable statuses surface immediately with a body excerpt.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    config: EndpointConfig,
    url: String,
    bearer: Option<String>,
}

impl HttpTransport {
    pub fn new(config: EndpointConfig) -> Result<Self, RunnerError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| RunnerError::Client(e.to_string()))?;
        let base = config.base_url.trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        let bearer = config
            .token_env
            .as_deref()
            .and_then(|name| std::env::var(name).ok());
        Ok(HttpTransport {
            client,
            config,
            url,
            bearer,
        })
    }
}

impl Transport for HttpTransport {
    fn complete(&self, prompt: &str, params: &GenParams) -> Result<CompletionText, RunnerError> {
        let request = ChatRequest {
            model: &self.config.model,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: params.temperature,
            max_tokens: params.max_tokens,
            seed: params.seed,
        };
        let started = Instant::now();
        let max_attempts = self.config.retry.max_attempts.max(1);
        let mut last_failure = String::new();
        for attempt in 1..=max_attempts {
            if attempt > 1 {
                let delay = self.config.retry.base_delay_ms << (attempt - 2);
                std::thread::sleep(Duration::from_millis(delay));
            }
            let mut builder = self.client.post(&self.url).json(&request);
            if let Some(token) = &self.bearer {
                builder = builder.bearer_auth(token);
            }
            match builder.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_server_error() {
                        last_failure = format!("status {status}");
                        continue;
                    }
                    let body = response
                        .text()
                        .map_err(|e| RunnerError::MalformedResponse(e.to_string()))?;
                    if !status.is_success() {
                        return Err(RunnerError::Endpoint {
                            status: status.as_u16(),
                            excerpt: excerpt(&body),
                        });
                    }
                    let parsed: ChatResponse = serde_json::from_str(&body)
                        .map_err(|_| RunnerError::MalformedResponse(excerpt(&body)))?;
                    let choice = parsed
                        .choices
                        .into_iter()
                        .next()
                        .ok_or_else(|| RunnerError::MalformedResponse("no choices".to_string()))?;
                    return Ok(CompletionText {
                        text: choice.message.content,
                        model: parsed.model,
                        usage: parsed.usage,
                        latency_ms: started.elapsed().as_millis() as u64,
                    });
                }
                Err(e) => {
                    last_failure = e.to_string();
                }
            }
        }
        Err(RunnerError::Transport {
            attempts: max_attempts,
            message: last_failure,
        })
    }
}

fn excerpt(body: &str) -> String {
    const LIMIT: usize = 200;
    if body.len() <= LIMIT {
        body.to_string()
    } else {
        let mut end = LIMIT;
        while !body.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}…", &body[..end])
    }
}

#[derive(Serialize, Deserialize)]
struct ReplayLine {
    schema_version: String,
    digest: String,
    response: String,
}

/// Record-per-line archive of `(prompt digest, response text)` pairs.
#[derive(Debug, Clone, Default)]
pub struct ReplayArchive {
    entries: std::collections::HashMap<String, String>,
}

impl ReplayArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, prompt: &str, response: impl Into<String>) {
        self.entries.insert(prompt_digest(prompt), response.into());
    }

    pub fn get(&self, digest: &str) -> Option<&str> {
        self.entries.get(digest).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, RunnerError> {
        let mut archive = ReplayArchive::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ReplayLine =
                serde_json::from_str(line).map_err(|e| RunnerError::MalformedReplayLine {
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            if parsed.schema_version != REPLAY_SCHEMA {
                return Err(RunnerError::UnsupportedSchema(parsed.schema_version));
            }
            archive.entries.insert(parsed.digest, parsed.response);
        }
        Ok(archive)
    }

    pub fn to_jsonl(&self) -> String {
        let mut digests: Vec<&String> = self.entries.keys().collect();
        digests.sort();
        let mut out = String::new();
        for digest in digests {
            let line = serde_json::to_string(&ReplayLine {
                schema_version: REPLAY_SCHEMA.to_string(),
                digest: digest.clone(),
                response: self.entries[digest].clone(),
            })
            .expect("replay line serializes");
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

/// Deterministic offline transport: completions come from the archive, a
/// missing digest is an error, and latency is always reported as zero.
pub struct ReplayTransport {
    archive: ReplayArchive,
}

impl ReplayTransport {
    pub fn new(archive: ReplayArchive) -> Self {
        ReplayTransport { archive }
    }
}

impl Transport for ReplayTransport {
    fn complete(&self, prompt: &str, _params: &GenParams) -> Result<CompletionText, RunnerError> {
        let digest = prompt_digest(prompt);
        match self.archive.get(&digest) {
            Some(response) => Ok(CompletionText {
                text: response.to_string(),
                model: Some("replay".to_string()),
                usage: None,
                latency_ms: 0,
            }),
            None => Err(RunnerError::ReplayMiss { digest }),
        }
    }
}

/// One collected generation; `raw_text` is stored verbatim so the validity
/// metric sees exactly what the model produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub example_id: String,
    pub raw_text: String,
    pub latency_ms: u64,
    pub model: Option<String>,
    pub usage: Option<TokenUsage>,
    /// Per-example endpoint failure; the run itself never aborts on one.
    pub error: Option<String>,
}

#[derive(Serialize)]
struct GenerationLineOut<'a> {
    schema_version: &'a str,
    #[serde(flatten)]
    result: &'a GenerationResult,
}

pub fn generations_to_jsonl(results: &[GenerationResult]) -> String {
    let mut out = String::new();
    for result in results {
        let line = serde_json::to_string(&GenerationLineOut {
            schema_version: GENERATION_SCHEMA,
            result,
        })
        .expect("generation serializes");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Everything a run produces: scored report plus the raw generation log.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricReport,
    pub generations: Vec<GenerationResult>,
}

/// Builds a prompt per example, collects completions through the transport
/// with at most `jobs` requests in flight, evaluates each output, and
/// aggregates. Per-example endpoint failures are recorded as invalid
/// outputs; results are sorted by example id before aggregation.
pub fn run_eval(
    examples: &[EvalExample],
    mode: PromptMode,
    assets: &PromptAssets,
    transport: &dyn Transport,
    params: &GenParams,
    metric_cfg: &MetricConfig,
    jobs: usize,
) -> Result<RunOutput, RunnerError> {
    if examples.is_empty() {
        return Err(RunnerError::NoExamples);
    }
    validate_assets(mode, assets)?;

    let jobs = jobs.max(1).min(examples.len());
    let next = AtomicUsize::new(0);
    let collected: Mutex<Vec<(GenerationResult, crate::metrics::ExampleRecord)>> =
        Mutex::new(Vec::with_capacity(examples.len()));

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= examples.len() {
                    break;
                }
                let example = &examples[idx];
                let (_, prompt) =
                    build_prompt(example, mode, assets).expect("assets validated above");
                let generation = match transport.complete(&prompt, params) {
                    Ok(completion) => GenerationResult {
                        example_id: example.id.clone(),
                        raw_text: completion.text,
                        latency_ms: completion.latency_ms,
                        model: completion.model,
                        usage: completion.usage,
                        error: None,
                    },
                    Err(e) => GenerationResult {
                        example_id: example.id.clone(),
                        raw_text: String::new(),
                        latency_ms: 0,
                        model: None,
                        usage: None,
                        error: Some(e.to_string()),
                    },
                };
                let record = evaluate_example(
                    &example.id,
                    &example.context,
                    &example.target,
                    &generation.raw_text,
                    metric_cfg,
                );
                collected.lock().unwrap().push((generation, record));
            });
        }
    });

    let mut collected = collected.into_inner().unwrap();
    collected.sort_by(|a, b| a.0.example_id.cmp(&b.0.example_id));
    let (generations, records): (Vec<_>, Vec<_>) = collected.into_iter().unzip();
    let report = aggregate(records)?;
    Ok(RunOutput {
        report,
        generations,
    })
}
