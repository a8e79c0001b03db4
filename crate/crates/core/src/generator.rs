//! Candidate-generation backends: an OpenAI-compatible HTTP client, a
//! deterministic scripted mock, and a record/replay cache.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::operators::{estimate_tokens, PromptBundle, PromptKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeneratorError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("replay cache miss for prompt {0}")]
    CacheMiss(String),
    #[error("generator configuration: {0}")]
    Config(String),
    #[error("generator i/o: {0}")]
    Io(String),
}

impl GeneratorError {
    /// Fatal errors abort the run; the rest only cost the operator its child.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            GeneratorError::CacheMiss(_) | GeneratorError::Config(_) | GeneratorError::Io(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Http,
    Scripted,
    Replay,
}

/// Price in currency units per 1k tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TokenPrice {
    pub prompt_per_1k: f64,
    pub completion_per_1k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub backend: BackendKind,
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub request_timeout_ms: u64,
    pub max_retries: u32,
    pub retry_base_delay_ms: u64,
    pub max_in_flight: usize,
    pub api_key_env_var: String,
    /// Replay source, or the recording target for the http backend.
    pub cache_path: Option<PathBuf>,
    /// Script file for the scripted backend.
    pub script_path: Option<PathBuf>,
    /// Per-model price table.
    pub prices: BTreeMap<String, TokenPrice>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Http,
            endpoint_url: String::new(),
            model_name: String::new(),
            temperature: 0.8,
            max_output_tokens: 4096,
            request_timeout_ms: 120_000,
            max_retries: 3,
            retry_base_delay_ms: 500,
            max_in_flight: 4,
            api_key_env_var: "OPENAI_API_KEY".to_string(),
            cache_path: None,
            script_path: None,
            prices: BTreeMap::new(),
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        let bad = |m: &str| Err(GeneratorError::Config(m.to_string()));
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return bad("temperature must be >= 0");
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be >= 1");
        }
        match self.backend {
            BackendKind::Http => {
                if self.endpoint_url.is_empty() || self.model_name.is_empty() {
                    return bad("http backend requires endpoint_url and model_name");
                }
                if self.request_timeout_ms == 0 {
                    return bad("request_timeout_ms must be > 0");
                }
            }
            BackendKind::Scripted => {
                if self.script_path.is_none() {
                    return bad("scripted backend requires script_path");
                }
            }
            BackendKind::Replay => {
                if self.cache_path.is_none() {
                    return bad("replay backend requires cache_path");
                }
            }
        }
        Ok(())
    }

    pub fn estimate_cost(&self, prompt_tokens: u64, completion_tokens: u64) -> f64 {
        match self.prices.get(&self.model_name) {
            Some(p) => {
                prompt_tokens as f64 / 1000.0 * p.prompt_per_1k
                    + completion_tokens as f64 / 1000.0 * p.completion_per_1k
            }
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorExchange {
    /// Assigned by the engine in call order.
    pub request_id: u64,
    pub prompt_kind: PromptKind,
    pub prompt_hash: String,
    pub prompt_text: String,
    pub response_text: String,
    pub latency_ms: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub estimated_cost: f64,
    pub backend_tag: String,
    pub model_name: String,
}

/// SHA-256 over kind, prompt text, model name and temperature.
pub fn prompt_hash(kind: PromptKind, text: &str, model_name: &str, temperature: f64) -> String {
    let mut h = Sha256::new();
    for part in [kind.as_str(), text, model_name, &format!("{temperature:?}")] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

pub trait Generator: Send + Sync {
    fn generate(&self, prompt: &PromptBundle) -> Result<GeneratorExchange, GeneratorError>;

    /// Upper bound on concurrent `generate` calls worth issuing.
    fn max_in_flight(&self) -> usize {
        1
    }
}

fn local_exchange(
    cfg: &BackendConfig,
    tag: &str,
    prompt: &PromptBundle,
    response: String,
    started: Instant,
) -> GeneratorExchange {
    let prompt_tokens = prompt.token_estimate as u64;
    let completion_tokens = estimate_tokens(&response) as u64;
    GeneratorExchange {
        request_id: 0,
        prompt_kind: prompt.kind,
        prompt_hash: prompt_hash(prompt.kind, &prompt.rendered_text, &cfg.model_name, cfg.temperature),
        prompt_text: prompt.rendered_text.clone(),
        response_text: response,
        latency_ms: started.elapsed().as_millis() as u64,
        prompt_tokens,
        completion_tokens,
        estimated_cost: cfg.estimate_cost(prompt_tokens, completion_tokens),
        backend_tag: tag.to_string(),
        model_name: cfg.model_name.clone(),
    }
}

// ---------------------------------------------------------------- scripted

/// A prompt-matching rule. Every present condition must hold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptRule {
    pub kind: Option<PromptKind>,
    /// 1-based ordinal among calls of this rule's kind (or all calls).
    pub call: Option<usize>,
    pub contains_all: Vec<String>,
    pub contains_none: Vec<String>,
    pub response: String,
    pub max_uses: Option<usize>,
}

/// Responses are resolved in order: the first matching rule with uses left,
/// then the per-kind queue, then the shared queue, then `fallback`.
///
/// `{call}` in a response is replaced by the per-kind call ordinal and
/// `{n}` by the overall call ordinal, which makes repeated replies distinct.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Script {
    pub rules: Vec<ScriptRule>,
    pub queues: BTreeMap<PromptKind, Vec<String>>,
    pub default: Vec<String>,
    pub fallback: Option<String>,
}

impl Script {
    pub fn load(path: &Path) -> Result<Self, GeneratorError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GeneratorError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| GeneratorError::Config(format!("script {}: {e}", path.display())))
    }
}

#[derive(Debug, Default)]
struct ScriptState {
    total_calls: usize,
    kind_calls: HashMap<PromptKind, usize>,
    rule_uses: Vec<usize>,
    queues: HashMap<PromptKind, VecDeque<String>>,
    default: VecDeque<String>,
}

#[derive(Debug)]
pub struct ScriptedGenerator {
    cfg: BackendConfig,
    script: Script,
    state: Mutex<ScriptState>,
}

impl ScriptedGenerator {
    pub fn new(script: Script, cfg: BackendConfig) -> Self {
        let state = ScriptState {
            rule_uses: vec![0; script.rules.len()],
            queues: script
                .queues
                .iter()
                .map(|(k, v)| (*k, v.iter().cloned().collect()))
                .collect(),
            default: script.default.iter().cloned().collect(),
            ..ScriptState::default()
        };
        Self {
            cfg,
            script,
            state: Mutex::new(state),
        }
    }

    /// Calls served so far.
    pub fn calls(&self) -> usize {
        self.state.lock().expect("script state").total_calls
    }
}

impl Generator for ScriptedGenerator {
    fn generate(&self, prompt: &PromptBundle) -> Result<GeneratorExchange, GeneratorError> {
        let started = Instant::now();
        let mut state = self.state.lock().expect("script state");
        state.total_calls += 1;
        let total = state.total_calls;
        let ordinal = {
            let c = state.kind_calls.entry(prompt.kind).or_insert(0);
            *c += 1;
            *c
        };
        let text = &prompt.rendered_text;
        let matched = self.script.rules.iter().enumerate().position(|(i, rule)| {
            let call_of_rule = if rule.kind.is_some() { ordinal } else { total };
            rule.kind.is_none_or(|k| k == prompt.kind)
                && rule.call.is_none_or(|c| c == call_of_rule)
                && rule.max_uses.is_none_or(|m| state.rule_uses[i] < m)
                && rule.contains_all.iter().all(|s| text.contains(s.as_str()))
                && !rule.contains_none.iter().any(|s| text.contains(s.as_str()))
        });
        let response = match matched {
            Some(i) => {
                state.rule_uses[i] += 1;
                Some(self.script.rules[i].response.clone())
            }
            None => state
                .queues
                .get_mut(&prompt.kind)
                .and_then(VecDeque::pop_front)
                .or_else(|| state.default.pop_front())
                .or_else(|| self.script.fallback.clone()),
        };
        drop(state);
        let response = response.ok_or_else(|| {
            GeneratorError::Backend(format!("script has no response for {} call {ordinal}", prompt.kind.as_str()))
        })?;
        let response = response
            .replace("{call}", &ordinal.to_string())
            .replace("{n}", &total.to_string());
        Ok(local_exchange(&self.cfg, "scripted", prompt, response, started))
    }
}

// ------------------------------------------------------------------ replay

/// Serves recorded exchanges by prompt hash. Repeated prompts are served in
/// recording order; once a hash's recordings run out its last one repeats.
#[derive(Debug)]
pub struct ReplayGenerator {
    cfg: BackendConfig,
    recorded: HashMap<String, Vec<GeneratorExchange>>,
    cursors: Mutex<HashMap<String, usize>>,
}

pub fn read_exchanges(path: &Path) -> Result<Vec<GeneratorExchange>, GeneratorError> {
    let file = File::open(path).map_err(|e| GeneratorError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| GeneratorError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let exchange: GeneratorExchange = serde_json::from_str(&line).map_err(|e| {
            GeneratorError::Config(format!("{} line {}: {e}", path.display(), i + 1))
        })?;
        out.push(exchange);
    }
    Ok(out)
}

impl ReplayGenerator {
    pub fn new(exchanges: Vec<GeneratorExchange>, cfg: BackendConfig) -> Self {
        let mut recorded: HashMap<String, Vec<GeneratorExchange>> = HashMap::new();
        for e in exchanges {
            recorded.entry(e.prompt_hash.clone()).or_default().push(e);
        }
        Self {
            cfg,
            recorded,
            cursors: Mutex::new(HashMap::new()),
        }
    }

    pub fn load(path: &Path, cfg: BackendConfig) -> Result<Self, GeneratorError> {
        Ok(Self::new(read_exchanges(path)?, cfg))
    }
}

impl Generator for ReplayGenerator {
    fn generate(&self, prompt: &PromptBundle) -> Result<GeneratorExchange, GeneratorError> {
        let started = Instant::now();
        let hash = prompt_hash(prompt.kind, &prompt.rendered_text, &self.cfg.model_name, self.cfg.temperature);
        let entries = self
            .recorded
            .get(&hash)
            .ok_or_else(|| GeneratorError::CacheMiss(hash.clone()))?;
        let mut cursors = self.cursors.lock().expect("replay cursors");
        let cursor = cursors.entry(hash).or_insert(0);
        let mut exchange = entries[(*cursor).min(entries.len() - 1)].clone();
        *cursor += 1;
        exchange.latency_ms = started.elapsed().as_millis() as u64;
        Ok(exchange)
    }
}

/// Appends every successful exchange of `inner` to a JSON Lines file.
pub struct RecordingGenerator {
    inner: Box<dyn Generator>,
    sink: Mutex<File>,
}

impl RecordingGenerator {
    pub fn create(inner: Box<dyn Generator>, path: &Path) -> Result<Self, GeneratorError> {
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| GeneratorError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self {
            inner,
            sink: Mutex::new(file),
        })
    }
}

impl Generator for RecordingGenerator {
    fn generate(&self, prompt: &PromptBundle) -> Result<GeneratorExchange, GeneratorError> {
        let exchange = self.inner.generate(prompt)?;
        let line = serde_json::to_string(&exchange).expect("exchange serializes");
        let mut sink = self.sink.lock().expect("recording sink");
        writeln!(sink, "{line}")
            .and_then(|_| sink.flush())
            .map_err(|e| GeneratorError::Io(e.to_string()))?;
        Ok(exchange)
    }

    fn max_in_flight(&self) -> usize {
        self.inner.max_in_flight()
    }
}

// -------------------------------------------------------------------- http

struct Semaphore {
    in_use: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

impl Semaphore {
    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut n = self.in_use.lock().expect("semaphore");
        while *n >= self.limit {
            n = self.freed.wait(n).expect("semaphore");
        }
        *n += 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.in_use.lock().expect("semaphore") -= 1;
        self.0.freed.notify_one();
    }
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
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReplyMessage,
}

#[derive(Deserialize)]
struct ChatReplyMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

/// Blocking client for `POST {endpoint_url}/chat/completions`.
pub struct HttpGenerator {
    cfg: BackendConfig,
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
    slots: Semaphore,
}

impl HttpGenerator {
    pub fn new(cfg: BackendConfig) -> Result<Self, GeneratorError> {
        cfg.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.request_timeout_ms))
            .build()
            .map_err(|e| GeneratorError::Config(e.to_string()))?;
        let url = format!("{}/chat/completions", cfg.endpoint_url.trim_end_matches('/'));
        let api_key = std::env::var(&cfg.api_key_env_var).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::warn!("{} is not set; sending requests without authorization", cfg.api_key_env_var);
        }
        let slots = Semaphore {
            in_use: Mutex::new(0),
            freed: Condvar::new(),
            limit: cfg.max_in_flight,
        };
        Ok(Self {
            cfg,
            client,
            url,
            api_key,
            slots,
        })
    }

    fn send_once(&self, body: &ChatRequest<'_>) -> Result<ChatResponse, (bool, String)> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| (true, e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err((true, format!("status {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err((false, format!("status {status}: {}", crate::model::truncate_text(&text, 500))));
        }
        let text = resp.text().map_err(|e| (true, e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| (false, format!("non-JSON completion: {e}")))
    }
}

impl Generator for HttpGenerator {
    fn generate(&self, prompt: &PromptBundle) -> Result<GeneratorExchange, GeneratorError> {
        let _slot = self.slots.acquire();
        let body = ChatRequest {
            model: &self.cfg.model_name,
            messages: vec![ChatMessage {
                role: "user",
                content: &prompt.rendered_text,
            }],
            temperature: self.cfg.temperature,
            max_tokens: self.cfg.max_output_tokens,
        };
        let started = Instant::now();
        let mut attempt = 0;
        let parsed = loop {
            match self.send_once(&body) {
                Ok(parsed) => break parsed,
                Err((false, message)) => return Err(GeneratorError::Backend(message)),
                Err((true, message)) => {
                    if attempt >= self.cfg.max_retries {
                        return Err(GeneratorError::Transport(format!(
                            "{message} (after {} attempts)",
                            attempt + 1
                        )));
                    }
                    let delay = self.cfg.retry_base_delay_ms.saturating_mul(1 << attempt.min(16));
                    log::debug!("retrying in {delay} ms: {message}");
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
            }
        };
        let latency_ms = started.elapsed().as_millis() as u64;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .filter(|c| !c.trim().is_empty())
            .ok_or_else(|| GeneratorError::Backend("empty completion".to_string()))?;
        let usage = parsed.usage;
        let prompt_tokens = usage
            .as_ref()
            .and_then(|u| u.prompt_tokens)
            .unwrap_or(prompt.token_estimate as u64);
        let completion_tokens = usage
            .as_ref()
            .and_then(|u| u.completion_tokens)
            .unwrap_or_else(|| estimate_tokens(&content) as u64);
        Ok(GeneratorExchange {
            request_id: 0,
            prompt_kind: prompt.kind,
            prompt_hash: prompt_hash(prompt.kind, &prompt.rendered_text, &self.cfg.model_name, self.cfg.temperature),
            prompt_text: prompt.rendered_text.clone(),
            response_text: content,
            latency_ms,
            prompt_tokens,
            completion_tokens,
            estimated_cost: self.cfg.estimate_cost(prompt_tokens, completion_tokens),
            backend_tag: "http".to_string(),
            model_name: self.cfg.model_name.clone(),
        })
    }

    fn max_in_flight(&self) -> usize {
        self.cfg.max_in_flight
    }
}

/// Builds the configured backend; the http backend records to `cache_path`
/// when one is set.
pub fn build_generator(cfg: &BackendConfig) -> Result<Box<dyn Generator>, GeneratorError> {
    cfg.validate()?;
    match cfg.backend {
        BackendKind::Http => {
            let http: Box<dyn Generator> = Box::new(HttpGenerator::new(cfg.clone())?);
            match &cfg.cache_path {
                Some(path) => Ok(Box::new(RecordingGenerator::create(http, path)?)),
                None => Ok(http),
            }
        }
        BackendKind::Scripted => {
            let path = cfg.script_path.as_ref().expect("validated");
            Ok(Box::new(ScriptedGenerator::new(Script::load(path)?, cfg.clone())))
        }
        BackendKind::Replay => {
            let path = cfg.cache_path.as_ref().expect("validated");
            Ok(Box::new(ReplayGenerator::load(path, cfg.clone())?))
        }
    }
}
