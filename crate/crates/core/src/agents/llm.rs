//! Chat-completion backed policy.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    episode_rng, random_walk_policy, AgentError, Decision, DecisionContext, Policy, PolicyKind,
};
use crate::episode::{run_episode, EpisodeError, History};
use crate::oracle::{build_graph, exploit_value};
use crate::textio::{parse_action, render_prompt, Instruction, InstructionId};
use crate::worldgen::WorldSpec;

/// Environment variable holding the bearer token for the chat endpoint.
pub const API_KEY_VAR: &str = "EXPLOREBENCH_API_KEY";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    /// Replies that may fail to parse before falling back to a random action.
    pub max_retries: u32,
    pub timeout_secs: u64,
    /// Requests per minute.
    pub rate_limit: u32,
    /// Resends after network errors, 429 and 5xx responses.
    pub transport_retries: u32,
    pub backoff_ms: u64,
    /// Replay replies from this JSONL file instead of calling the endpoint.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replay_file: Option<PathBuf>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "http://localhost:8000/v1/chat/completions".into(),
            model_name: "mock".into(),
            temperature: 0.1,
            max_retries: 3,
            timeout_secs: 60,
            rate_limit: 60,
            transport_retries: 5,
            backoff_ms: 500,
            replay_file: None,
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(AgentError::Config(format!(
                "temperature must be non-negative, got {}",
                self.temperature
            )));
        }
        if self.rate_limit == 0 {
            return Err(AgentError::Config("rate_limit must be positive".into()));
        }
        Ok(())
    }

    /// Mock transport when a replay file is set, HTTP otherwise.
    pub fn transport(&self) -> Result<Arc<dyn ChatTransport>, AgentError> {
        self.validate()?;
        Ok(match &self.replay_file {
            Some(path) => Arc::new(MockTransport::from_jsonl(path)?),
            None => Arc::new(HttpTransport::new(self)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn user(model: &str, prompt: &str, temperature: f64) -> Self {
        Self {
            model: model.to_string(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: prompt.to_string(),
            }],
            temperature,
        }
    }
}

pub trait ChatTransport: Send + Sync {
    /// Returns the assistant message text.
    fn complete(&self, request: &ChatRequest) -> Result<String, AgentError>;
}

/// Serves canned replies in order and records every request.
#[derive(Debug, Default)]
pub struct MockTransport {
    replies: Mutex<VecDeque<String>>,
    requests: Mutex<Vec<ChatRequest>>,
}

impl MockTransport {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(replies: I) -> Self {
        Self {
            replies: Mutex::new(replies.into_iter().map(Into::into).collect()),
            requests: Mutex::new(Vec::new()),
        }
    }

    /// One JSON string per line.
    pub fn from_jsonl(path: impl AsRef<Path>) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path)?;
        let mut replies = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let reply: String = serde_json::from_str(line)
                .map_err(|e| AgentError::Config(format!("replay line {}: {e}", i + 1)))?;
            replies.push(reply);
        }
        Ok(Self::new(replies))
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().expect("mock lock").clone()
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().expect("mock lock").len()
    }
}

impl ChatTransport for MockTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, AgentError> {
        self.requests
            .lock()
            .expect("mock lock")
            .push(request.clone());
        self.replies
            .lock()
            .expect("mock lock")
            .pop_front()
            .ok_or_else(|| AgentError::Transport("mock replies exhausted".into()))
    }
}

/// Token bucket shared by all callers of one endpoint.
#[derive(Debug)]
struct RateLimiter {
    capacity: f64,
    per_sec: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    fn new(per_minute: u32) -> Self {
        let per_sec = f64::from(per_minute) / 60.0;
        // Allow bursts of ten seconds' worth of requests.
        let capacity = (per_sec * 10.0).max(1.0);
        Self {
            capacity,
            per_sec,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("limiter lock");
                let now = Instant::now();
                let refill = now.duration_since(state.1).as_secs_f64() * self.per_sec;
                state.0 = (state.0 + refill).min(self.capacity);
                state.1 = now;
                if state.0 >= 1.0 {
                    state.0 -= 1.0;
                    return;
                }
                (1.0 - state.0) / self.per_sec
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

/// OpenAI-compatible chat-completions client.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
    limiter: RateLimiter,
    retries: u32,
    backoff: Duration,
}

impl HttpTransport {
    pub fn new(config: &LlmConfig) -> Result<Self, AgentError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            url: config.endpoint_url.clone(),
            api_key: std::env::var(API_KEY_VAR).ok().filter(|k| !k.is_empty()),
            limiter: RateLimiter::new(config.rate_limit),
            retries: config.transport_retries,
            backoff: Duration::from_millis(config.backoff_ms),
        })
    }

    fn attempt(&self, request: &ChatRequest) -> Result<String, (bool, String)> {
        let mut builder = self.client.post(&self.url).json(request);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| (true, e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            let retryable = status.as_u16() == 429 || status.is_server_error();
            return Err((retryable, format!("HTTP {status}")));
        }
        let body: serde_json::Value = response.json().map_err(|e| (true, e.to_string()))?;
        body["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                (
                    false,
                    "response lacks choices[0].message.content".to_string(),
                )
            })
    }
}

impl ChatTransport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, AgentError> {
        let mut delay = self.backoff;
        let mut last = String::new();
        for attempt in 0..=self.retries {
            self.limiter.acquire();
            match self.attempt(request) {
                Ok(text) => return Ok(text),
                Err((false, msg)) => return Err(AgentError::Transport(msg)),
                Err((true, msg)) => last = msg,
            }
            if attempt < self.retries {
                std::thread::sleep(delay);
                delay *= 2;
            }
        }
        Err(AgentError::Transport(format!(
            "giving up after {} attempts: {last}",
            self.retries + 1
        )))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LlmDiagnostics {
    pub raw_replies: Vec<String>,
    pub requests: u32,
    pub invalid_count: u32,
    /// Whether the action was drawn at random after all replies failed to parse.
    pub fallback: bool,
    pub latency_ms: u64,
}

pub struct LlmPolicy {
    config: LlmConfig,
    transport: Arc<dyn ChatTransport>,
    instruction: Instruction,
    total_episodes: usize,
    seed: u64,
    rng: ChaCha8Rng,
}

impl LlmPolicy {
    pub fn new(
        config: LlmConfig,
        transport: Arc<dyn ChatTransport>,
        instruction: Instruction,
        total_episodes: usize,
        seed: u64,
    ) -> Self {
        Self {
            config,
            transport,
            instruction,
            total_episodes,
            seed,
            rng: episode_rng(seed, 0),
        }
    }
}

impl Policy for LlmPolicy {
    fn name(&self) -> &str {
        &self.config.model_name
    }

    fn kind(&self) -> PolicyKind {
        PolicyKind::Llm
    }

    fn begin_episode(&mut self, _: &WorldSpec, _: &History, episode_index: usize) {
        self.rng = episode_rng(self.seed, episode_index);
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision, AgentError> {
        let first = render_prompt(
            ctx.history,
            ctx.events,
            ctx.observation,
            &self.instruction,
            ctx.world,
            self.total_episodes,
        );
        let retry = first.retry();
        let mut diagnostics = LlmDiagnostics::default();
        let started = Instant::now();
        let mut prompt = &first;
        loop {
            let request = ChatRequest::user(
                &self.config.model_name,
                &prompt.full_text,
                self.config.temperature,
            );
            let reply = self.transport.complete(&request)?;
            diagnostics.requests += 1;
            let parsed = parse_action(&reply, ctx.legal);
            diagnostics.raw_replies.push(reply);
            match parsed {
                Ok(action) => {
                    diagnostics.latency_ms = started.elapsed().as_millis() as u64;
                    return Ok(Decision {
                        action,
                        diagnostics: Some(diagnostics),
                    });
                }
                Err(_) => diagnostics.invalid_count += 1,
            }
            if diagnostics.invalid_count >= self.config.max_retries {
                break;
            }
            prompt = &retry;
        }
        let action = random_walk_policy(ctx.legal, &mut self.rng)?;
        diagnostics.fallback = true;
        diagnostics.latency_ms = started.elapsed().as_millis() as u64;
        Ok(Decision {
            action,
            diagnostics: Some(diagnostics),
        })
    }
}

/// Return of one extra episode in which the model is told to exploit `history`.
///
/// The evaluated run's history is left untouched.
pub fn llm_exploiter_eval(
    history: &History,
    world: &WorldSpec,
    transport: Arc<dyn ChatTransport>,
    config: &LlmConfig,
    seed: u64,
) -> Result<u32, EpisodeError> {
    let mut policy = LlmPolicy::new(
        config.clone(),
        transport,
        Instruction::builtin(InstructionId::SoftLower),
        history.len() + 1,
        seed,
    );
    Ok(run_episode(world, &mut policy, history)?.episode_return())
}

/// One point of the model-versus-optimal exploitation comparison.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonPoint {
    pub episode: usize,
    pub llm_exploit: u32,
    pub optimal_exploit: u32,
}

/// Model and optimal exploitation returns after every prefix of `history`.
pub fn exploit_comparison(
    history: &History,
    world: &WorldSpec,
    transport: Arc<dyn ChatTransport>,
    config: &LlmConfig,
    seed: u64,
) -> Result<Vec<ComparisonPoint>, EpisodeError> {
    (1..=history.len())
        .map(|episode| {
            let prefix = history.prefix(episode);
            let llm_exploit = llm_exploiter_eval(&prefix, world, transport.clone(), config, seed)?;
            let graph = build_graph(&prefix, world).map_err(AgentError::from)?;
            Ok(ComparisonPoint {
                episode,
                llm_exploit,
                optimal_exploit: exploit_value(&graph, world).value,
            })
        })
        .collect()
}
