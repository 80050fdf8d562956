//! Sampling client for OpenAI-compatible chat-completion endpoints, with an
//! append-only JSONL cache, bounded request concurrency, retries, and a
//! pluggable behavior judge.
//!
//! Auth tokens are referenced by environment-variable name and are never
//! written to disk. Cache keys are `(endpoint model, question id,
//! sample_index, params hash)`, so a complete cache replays byte-identically
//! with the endpoint unreachable.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{whitespace_token_count, TraceRecord, DEFAULT_SYSTEM_TEXT};
use crate::error::{Error, Result};
use crate::patterns::Behavior;

/// Default rubric sent to the external behavior judge; editable via the CLI.
pub const DEFAULT_JUDGE_RUBRIC: &str = include_str!("../assets/judge_rubric.txt");

/// Connection settings for one endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Base URL including the version segment, e.g. `http://host:8000/v1`.
    pub base_url: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub auth_env: Option<String>,
    pub model: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_retry_budget")]
    pub retry_budget: u32,
    #[serde(default = "default_retry_backoff_ms")]
    pub retry_backoff_ms: u64,
}

fn default_timeout_secs() -> u64 {
    120
}
fn default_max_in_flight() -> usize {
    4
}
fn default_retry_budget() -> u32 {
    3
}
fn default_retry_backoff_ms() -> u64 {
    200
}

impl EndpointConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<EndpointConfig> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: EndpointConfig = serde_json::from_reader(file)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout_secs == 0 {
            return Err(Error::InvalidInput("timeout must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(Error::InvalidInput("max_in_flight must be >= 1".into()));
        }
        Ok(())
    }

    fn token(&self) -> Result<Option<String>> {
        match &self.auth_env {
            None => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(v) => Ok(Some(v)),
                Err(_) => Err(Error::Auth(format!(
                    "auth environment variable {var} is not set"
                ))),
            },
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path)
    }
}

/// Sampling parameters for collection runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Samples per question (k).
    #[serde(default = "default_n_samples")]
    pub n_samples: u32,
    #[serde(default = "default_system_text")]
    pub system_text: String,
}

fn default_temperature() -> f64 {
    0.6
}
fn default_max_tokens() -> u32 {
    32_768
}
fn default_n_samples() -> u32 {
    16
}
fn default_system_text() -> String {
    DEFAULT_SYSTEM_TEXT.to_string()
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            temperature: default_temperature(),
            max_tokens: default_max_tokens(),
            n_samples: default_n_samples(),
            system_text: default_system_text(),
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidInput("n_samples must be >= 1".into()));
        }
        if self.max_tokens == 0 {
            return Err(Error::InvalidInput("max_tokens must be >= 1".into()));
        }
        Ok(())
    }

    /// Stable hash over every sampling-relevant field; part of the cache key.
    pub fn params_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.temperature.to_bits().to_le_bytes());
        hasher.update(self.max_tokens.to_le_bytes());
        hasher.update(self.n_samples.to_le_bytes());
        hasher.update(self.system_text.as_bytes());
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One completion, as cached and as returned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub question_id: String,
    pub sample_index: u32,
    pub text: String,
    pub finish_reason: String,
    /// Endpoint-reported completion tokens, when usage was provided.
    pub token_count: Option<u64>,
    pub latency_ms: u64,
}

/// A question to collect samples for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub gold_answer: String,
}

/// Load questions from JSONL (`{"id", "question", "gold_answer"}`).
pub fn load_questions(path: impl AsRef<Path>) -> Result<Vec<Question>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let q: Question = serde_json::from_str(&line)
            .map_err(|e| Error::Schema(vec![(idx + 1, e.to_string())]))?;
        out.push(q);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheEntry {
    model: String,
    params_hash: String,
    #[serde(flatten)]
    result: CompletionResult,
}

/// A sample that exhausted its retries; the run continues without it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedSample {
    pub question_id: String,
    pub sample_index: u32,
    pub error: String,
}

/// Outcome of a collection run.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectOutcome {
    pub records: Vec<TraceRecord>,
    pub failed: Vec<FailedSample>,
    pub cache_hits: usize,
    pub requests_issued: usize,
}

fn read_cache(
    path: &Path,
    model: &str,
    params_hash: &str,
) -> Result<HashMap<(String, u32), CompletionResult>> {
    let mut map = HashMap::new();
    if !path.exists() {
        return Ok(map);
    }
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: CacheEntry = serde_json::from_str(&line)
            .map_err(|e| Error::Schema(vec![(idx + 1, format!("cache: {e}"))]))?;
        if entry.model == model && entry.params_hash == params_hash {
            map.insert(
                (entry.result.question_id.clone(), entry.result.sample_index),
                entry.result,
            );
        }
    }
    Ok(map)
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
    n: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    completion_tokens: Option<u64>,
}

enum RequestFailure {
    Auth(String),
    Retryable(String),
    Fatal(String),
}

fn classify_response(status: reqwest::StatusCode, body: &str) -> RequestFailure {
    if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
        RequestFailure::Auth(format!("status {status}: {body}"))
    } else if status.is_server_error()
        || status == reqwest::StatusCode::REQUEST_TIMEOUT
        || status == reqwest::StatusCode::TOO_MANY_REQUESTS
    {
        RequestFailure::Retryable(format!("status {status}"))
    } else {
        RequestFailure::Fatal(format!("status {status}: {body}"))
    }
}

fn chat_once(
    client: &reqwest::blocking::Client,
    endpoint: &EndpointConfig,
    token: Option<&str>,
    system_text: &str,
    user_text: &str,
    temperature: f64,
    max_tokens: u32,
) -> std::result::Result<CompletionResult, RequestFailure> {
    let request = ChatRequest {
        model: &endpoint.model,
        messages: vec![
            ChatMessage {
                role: "system",
                content: system_text,
            },
            ChatMessage {
                role: "user",
                content: user_text,
            },
        ],
        temperature,
        max_tokens,
        n: 1,
    };
    let started = Instant::now();
    let mut builder = client.post(endpoint.url("chat/completions")).json(&request);
    if let Some(token) = token {
        builder = builder.bearer_auth(token);
    }
    let response = builder.send().map_err(|e| {
        if e.is_timeout() || e.is_connect() || e.is_request() {
            RequestFailure::Retryable(e.to_string())
        } else {
            RequestFailure::Fatal(e.to_string())
        }
    })?;
    let status = response.status();
    let body = response
        .text()
        .map_err(|e| RequestFailure::Retryable(e.to_string()))?;
    if !status.is_success() {
        return Err(classify_response(status, &body));
    }
    let parsed: ChatResponse = serde_json::from_str(&body)
        .map_err(|e| RequestFailure::Fatal(format!("malformed reply: {e}")))?;
    let choice = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| RequestFailure::Fatal("malformed reply: no choices".into()))?;
    let text = choice
        .message
        .content
        .ok_or_else(|| RequestFailure::Fatal("malformed reply: missing content".into()))?;
    Ok(CompletionResult {
        question_id: String::new(),
        sample_index: 0,
        text,
        finish_reason: choice.finish_reason.unwrap_or_else(|| "unknown".into()),
        token_count: parsed.usage.and_then(|u| u.completion_tokens),
        latency_ms: started.elapsed().as_millis() as u64,
    })
}

/// Run `chat_once` with the endpoint's retry budget and exponential backoff.
/// Auth and fatal failures are not retried.
fn chat_with_retries(
    client: &reqwest::blocking::Client,
    endpoint: &EndpointConfig,
    token: Option<&str>,
    system_text: &str,
    user_text: &str,
    temperature: f64,
    max_tokens: u32,
) -> std::result::Result<CompletionResult, RequestFailure> {
    let mut attempt = 0u32;
    loop {
        match chat_once(
            client, endpoint, token, system_text, user_text, temperature, max_tokens,
        ) {
            Ok(result) => return Ok(result),
            Err(RequestFailure::Retryable(msg)) if attempt < endpoint.retry_budget => {
                let backoff = endpoint.retry_backoff_ms.saturating_mul(1 << attempt.min(16));
                std::thread::sleep(Duration::from_millis(backoff));
                attempt += 1;
                let _ = msg;
            }
            Err(other) => return Err(other),
        }
    }
}

fn http_client(endpoint: &EndpointConfig) -> Result<reqwest::blocking::Client> {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(endpoint.timeout_secs))
        .build()
        .map_err(|e| Error::Endpoint(format!("client construction: {e}")))
}

/// Collect `k` samples per question, reading and writing the JSONL cache.
///
/// Cache-hit pairs never touch the network; fresh results are appended to
/// the cache before the call returns, so an interrupted run resumes without
/// duplicating completed `(id, sample_index)` pairs. Questions whose
/// requests exhaust the retry budget are reported in `failed` and do not
/// abort the run.
pub fn collect_samples(
    questions: &[Question],
    endpoint: &EndpointConfig,
    params: &SamplingParams,
    cache_path: impl AsRef<Path>,
    dataset_tag: &str,
) -> Result<CollectOutcome> {
    endpoint.validate()?;
    params.validate()?;
    let cache_path = cache_path.as_ref();
    let params_hash = params.params_hash();
    let mut cached = read_cache(cache_path, &endpoint.model, &params_hash)?;
    let cache_hits_possible: Vec<(String, u32)> = questions
        .iter()
        .flat_map(|q| (0..params.n_samples).map(move |i| (q.id.clone(), i)))
        .collect();
    let pending: Vec<(Question, u32)> = questions
        .iter()
        .flat_map(|q| {
            (0..params.n_samples)
                .filter(|i| !cached.contains_key(&(q.id.clone(), *i)))
                .map(move |i| (q.clone(), i))
        })
        .collect();
    let cache_hits = cache_hits_possible.len() - pending.len();

    let mut failed: Vec<FailedSample> = Vec::new();
    let requests_issued = pending.len();
    if !pending.is_empty() {
        let token = endpoint.token()?;
        let appender = {
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(cache_path)
                .map_err(|source| Error::Io {
                    path: cache_path.to_path_buf(),
                    source,
                })?;
            Arc::new(Mutex::new(BufWriter::new(file)))
        };
        let queue = Arc::new(Mutex::new(std::collections::VecDeque::from(pending)));
        let collected: Arc<Mutex<Vec<CompletionResult>>> = Arc::new(Mutex::new(Vec::new()));
        let failures: Arc<Mutex<Vec<FailedSample>>> = Arc::new(Mutex::new(Vec::new()));
        let workers = endpoint.max_in_flight.min(queue.lock().unwrap().len()).max(1);

        std::thread::scope(|scope| -> Result<()> {
            let mut handles = Vec::new();
            for _ in 0..workers {
                let queue = Arc::clone(&queue);
                let collected = Arc::clone(&collected);
                let failures = Arc::clone(&failures);
                let appender = Arc::clone(&appender);
                let token = token.clone();
                let params_hash = params_hash.clone();
                let handle = scope.spawn(move || -> Result<()> {
                    let client = http_client(endpoint)?;
                    loop {
                        let task = queue.lock().unwrap().pop_front();
                        let Some((question, sample_index)) = task else {
                            return Ok(());
                        };
                        match chat_with_retries(
                            &client,
                            endpoint,
                            token.as_deref(),
                            &params.system_text,
                            &question.question,
                            params.temperature,
                            params.max_tokens,
                        ) {
                            Ok(mut result) => {
                                result.question_id = question.id.clone();
                                result.sample_index = sample_index;
                                let entry = CacheEntry {
                                    model: endpoint.model.clone(),
                                    params_hash: params_hash.clone(),
                                    result: result.clone(),
                                };
                                {
                                    let mut w = appender.lock().unwrap();
                                    serde_json::to_writer(&mut *w, &entry)?;
                                    w.write_all(b"\n").map_err(|source| Error::Io {
                                        path: cache_path.to_path_buf(),
                                        source,
                                    })?;
                                    w.flush().map_err(|source| Error::Io {
                                        path: cache_path.to_path_buf(),
                                        source,
                                    })?;
                                }
                                collected.lock().unwrap().push(result);
                            }
                            Err(RequestFailure::Auth(msg)) => {
                                return Err(Error::Auth(msg));
                            }
                            Err(RequestFailure::Retryable(msg))
                            | Err(RequestFailure::Fatal(msg)) => {
                                failures.lock().unwrap().push(FailedSample {
                                    question_id: question.id.clone(),
                                    sample_index,
                                    error: msg,
                                });
                            }
                        }
                    }
                });
                handles.push(handle);
            }
            for handle in handles {
                handle.join().expect("collector thread panicked")?;
            }
            Ok(())
        })?;

        for result in Arc::try_unwrap(collected).unwrap().into_inner().unwrap() {
            cached.insert((result.question_id.clone(), result.sample_index), result);
        }
        failed = Arc::try_unwrap(failures).unwrap().into_inner().unwrap();
        failed.sort_by(|a, b| (&a.question_id, a.sample_index).cmp(&(&b.question_id, b.sample_index)));
    }

    let mut records = Vec::new();
    for q in questions {
        for i in 0..params.n_samples {
            let Some(result) = cached.get(&(q.id.clone(), i)) else {
                continue;
            };
            let mut record = TraceRecord::new(&q.id, &q.question, &result.text, &q.gold_answer)
                .with_sample_index(i);
            record.model = endpoint.model.clone();
            record.dataset = dataset_tag.to_string();
            match result.token_count {
                Some(n) => {
                    record.token_count = Some(n);
                    record.token_count_exact = true;
                }
                None => {
                    record.token_count = Some(whitespace_token_count(&result.text));
                    record.token_count_exact = false;
                }
            }
            records.push(record);
        }
    }
    Ok(CollectOutcome {
        records,
        failed,
        cache_hits,
        requests_issued,
    })
}

/// Judge verdict plus the raw reply for logging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeOutcome {
    pub behavior: Behavior,
    pub raw_reply: String,
}

/// Ask the external judge to classify a boundary window. A reply that names
/// none of the four categories abstains; the raw reply is preserved.
pub fn judge_behavior(
    window: &str,
    endpoint: &EndpointConfig,
    rubric_text: &str,
) -> Result<JudgeOutcome> {
    endpoint.validate()?;
    let token = endpoint.token()?;
    let client = http_client(endpoint)?;
    let result = chat_with_retries(
        &client,
        endpoint,
        token.as_deref(),
        rubric_text,
        window,
        0.0,
        64,
    )
    .map_err(|failure| match failure {
        RequestFailure::Auth(msg) => Error::Auth(msg),
        RequestFailure::Retryable(msg) => Error::Endpoint(msg),
        RequestFailure::Fatal(msg) => Error::MalformedReply(msg),
    })?;
    Ok(JudgeOutcome {
        behavior: parse_behavior_label(&result.text),
        raw_reply: result.text,
    })
}

/// Earliest category name mentioned in the reply wins.
fn parse_behavior_label(reply: &str) -> Behavior {
    let lower = reply.to_lowercase();
    let candidates = [
        (Behavior::Verification, vec!["verification"]),
        (Behavior::Backtracking, vec!["backtracking"]),
        (Behavior::SubgoalSetting, vec!["sub-goal setting", "subgoal setting", "sub-goal", "subgoal"]),
        (Behavior::BackwardChaining, vec!["backward chaining", "backward-chaining"]),
    ];
    let mut best: Option<(usize, Behavior)> = None;
    for (behavior, names) in candidates {
        for name in names {
            if let Some(pos) = lower.find(name) {
                if best.is_none_or(|(b, _)| pos < b) {
                    best = Some((pos, behavior));
                }
            }
        }
    }
    best.map(|(_, b)| b).unwrap_or(Behavior::Abstain)
}

/// Endpoint health report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthReport {
    pub reachable: bool,
    pub models: Vec<String>,
}

#[derive(Deserialize)]
struct ModelsResponse {
    #[serde(default)]
    data: Vec<ModelEntry>,
}

#[derive(Deserialize)]
struct ModelEntry {
    id: String,
}

/// One minimal request against the models listing. Auth failures, timeouts,
/// and unreachable hosts map to distinct error variants; the retry budget
/// applies.
pub fn health_check(endpoint: &EndpointConfig) -> Result<HealthReport> {
    endpoint.validate()?;
    let token = endpoint.token()?;
    let client = http_client(endpoint)?;
    let mut attempt = 0u32;
    loop {
        let mut builder = client.get(endpoint.url("models"));
        if let Some(token) = token.as_deref() {
            builder = builder.bearer_auth(token);
        }
        let outcome = builder.send();
        match outcome {
            Ok(response) => {
                let status = response.status();
                let body = response.text().unwrap_or_default();
                if status.is_success() {
                    let parsed: ModelsResponse = serde_json::from_str(&body)
                        .map_err(|e| Error::MalformedReply(e.to_string()))?;
                    return Ok(HealthReport {
                        reachable: true,
                        models: parsed.data.into_iter().map(|m| m.id).collect(),
                    });
                }
                match classify_response(status, &body) {
                    RequestFailure::Auth(msg) => return Err(Error::Auth(msg)),
                    RequestFailure::Retryable(msg) if attempt < endpoint.retry_budget => {
                        std::thread::sleep(Duration::from_millis(
                            endpoint.retry_backoff_ms.saturating_mul(1 << attempt.min(16)),
                        ));
                        attempt += 1;
                        let _ = msg;
                    }
                    RequestFailure::Retryable(msg) | RequestFailure::Fatal(msg) => {
                        return Err(Error::Endpoint(msg))
                    }
                }
            }
            Err(e) if (e.is_timeout() || e.is_connect()) && attempt < endpoint.retry_budget => {
                std::thread::sleep(Duration::from_millis(
                    endpoint.retry_backoff_ms.saturating_mul(1 << attempt.min(16)),
                ));
                attempt += 1;
            }
            Err(e) => return Err(Error::Endpoint(e.to_string())),
        }
    }
}
