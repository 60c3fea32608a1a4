//! Chat-completion backends used to generate elucidations.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::corpus::CoteRecord;
use super::prompt::Prompt;
use crate::error::{Error, Result};

pub const API_KEY_ENV: &str = "COTE_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatEndpointConfig {
    pub base_url: String,
    pub model: String,
    pub temperature: f32,
    pub max_tokens: u32,
    pub timeout_secs: f64,
    pub max_parallel: usize,
    pub retry_budget: u32,
    /// First backoff delay; doubles after every failed attempt.
    pub backoff_ms: u64,
}

impl Default for ChatEndpointConfig {
    fn default() -> Self {
        ChatEndpointConfig {
            base_url: "http://localhost:8000/v1".into(),
            model: "Qwen3-8B".into(),
            temperature: 0.7,
            max_tokens: 256,
            timeout_secs: 60.0,
            max_parallel: 4,
            retry_budget: 3,
            backoff_ms: 500,
        }
    }
}

impl ChatEndpointConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_parallel < 1 {
            return Err(Error::invalid("max_parallel must be at least 1"));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(Error::invalid("timeout_secs must be positive"));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(Error::invalid("temperature must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub content: String,
    pub finish_reason: Option<String>,
    pub completion_tokens: Option<u32>,
    pub model: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendError {
    /// Worth retrying: timeouts, connection failures, 5xx, 429.
    Transient(String),
    Fatal(String),
}

pub trait ChatBackend: Sync {
    fn complete(
        &self,
        cfg: &ChatEndpointConfig,
        prompt: &Prompt,
    ) -> Result<Completion, BackendError>;
}

/// Deterministic stand-in for the generator: answers
/// `E:{span}:{type}:{first 8 hex chars of sha256(sentence)}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

pub const MOCK_MODEL: &str = "mock";

impl MockBackend {
    pub fn render(prompt: &Prompt) -> String {
        let digest = Sha256::digest(prompt.sentence_text.as_bytes());
        let hash = hex::encode(digest);
        format!(
            "E:{}:{}:{}",
            prompt.span_text,
            prompt.provenance.span.etype,
            &hash[..8]
        )
    }
}

impl ChatBackend for MockBackend {
    fn complete(
        &self,
        _cfg: &ChatEndpointConfig,
        prompt: &Prompt,
    ) -> Result<Completion, BackendError> {
        Ok(Completion {
            content: Self::render(prompt),
            finish_reason: Some("stop".into()),
            completion_tokens: None,
            model: Some(MOCK_MODEL.into()),
        })
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
    temperature: f32,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    model: Option<String>,
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
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
struct ChatUsage {
    #[serde(default)]
    completion_tokens: Option<u32>,
}

/// OpenAI-compatible `POST {base_url}/chat/completions` client.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl HttpBackend {
    /// Reads the bearer token from `COTE_API_KEY` when set.
    pub fn new(cfg: &ChatEndpointConfig) -> Result<Self> {
        Self::with_api_key(
            cfg,
            std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        )
    }

    pub fn with_api_key(cfg: &ChatEndpointConfig, api_key: Option<String>) -> Result<Self> {
        cfg.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build()
            .map_err(|e| Error::Endpoint(format!("building HTTP client: {e}")))?;
        Ok(HttpBackend { client, api_key })
    }
}

impl ChatBackend for HttpBackend {
    fn complete(
        &self,
        cfg: &ChatEndpointConfig,
        prompt: &Prompt,
    ) -> Result<Completion, BackendError> {
        let url = format!("{}/chat/completions", cfg.base_url.trim_end_matches('/'));
        let body = ChatRequest {
            model: &cfg.model,
            messages: vec![ChatMessage {
                role: "user",
                content: &prompt.text,
            }],
            temperature: cfg.temperature,
            max_tokens: cfg.max_tokens,
        };
        let mut req = self.client.post(&url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() || e.is_connect() || e.is_request() {
                BackendError::Transient(e.to_string())
            } else {
                BackendError::Fatal(e.to_string())
            }
        })?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(BackendError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(BackendError::Fatal(format!(
                "HTTP {status}: {}",
                text.trim()
            )));
        }
        let parsed: ChatResponse = resp
            .json()
            .map_err(|e| BackendError::Transient(format!("malformed response body: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Fatal("response has no choices".into()))?;
        Ok(Completion {
            content: choice.message.content.unwrap_or_default(),
            finish_reason: choice.finish_reason,
            completion_tokens: parsed.usage.and_then(|u| u.completion_tokens),
            model: parsed.model,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ElucidationError {
    /// Transient failures outlasted the retry budget.
    Transient {
        attempts: u32,
        message: String,
    },
    /// The endpoint answered with no usable text.
    Content(String),
    Fatal(String),
}

impl std::fmt::Display for ElucidationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ElucidationError::Transient { attempts, message } => {
                write!(f, "transient failure after {attempts} attempts: {message}")
            }
            ElucidationError::Content(m) => write!(f, "content error: {m}"),
            ElucidationError::Fatal(m) => write!(f, "request failed: {m}"),
        }
    }
}

impl std::error::Error for ElucidationError {}

/// Sends one prompt, retrying transient failures with exponential backoff
/// (`backoff_ms`, doubled per attempt) up to `retry_budget` retries.
pub fn request_elucidation(
    backend: &dyn ChatBackend,
    cfg: &ChatEndpointConfig,
    prompt: &Prompt,
) -> Result<CoteRecord, ElucidationError> {
    let mut attempts = 0;
    let completion = loop {
        attempts += 1;
        match backend.complete(cfg, prompt) {
            Ok(c) => break c,
            Err(BackendError::Fatal(m)) => return Err(ElucidationError::Fatal(m)),
            Err(BackendError::Transient(message)) => {
                if attempts > cfg.retry_budget {
                    return Err(ElucidationError::Transient { attempts, message });
                }
                let delay = cfg
                    .backoff_ms
                    .saturating_mul(1u64 << (attempts - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
        }
    };

    let text = completion.content.trim().to_string();
    if text.is_empty() {
        return Err(ElucidationError::Content(format!(
            "empty elucidation for sentence {:?} span {}",
            prompt.provenance.sentence_id, prompt.provenance.span
        )));
    }
    let tokens = completion
        .completion_tokens
        .filter(|&t| t > 0)
        .unwrap_or_else(|| text.split_whitespace().count() as u32)
        .max(1);
    Ok(CoteRecord {
        text,
        provenance: prompt.provenance.clone(),
        model: completion.model.unwrap_or_else(|| cfg.model.clone()),
        finish_reason: completion.finish_reason,
        tokens,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicU32, Ordering};

    use super::*;
    use crate::cote::{build_prompt, PromptStrategy, StrategyKind};
    use crate::data::{EntitySpan, Sentence, TokenizationMode};

    fn prompt() -> Prompt {
        let s = Sentence::new("s1", ["the", "beam", "spans", "5m"]).unwrap();
        build_prompt(
            &PromptStrategy::default_for(StrategyKind::Explain),
            &s,
            &EntitySpan::new(1, 2, "obj"),
            "obj",
            TokenizationMode::Latin,
        )
        .unwrap()
    }

    fn fast() -> ChatEndpointConfig {
        ChatEndpointConfig {
            backoff_ms: 1,
            retry_budget: 2,
            ..Default::default()
        }
    }

    struct Scripted {
        calls: AtomicU32,
        replies: Vec<Result<Completion, BackendError>>,
    }

    impl ChatBackend for Scripted {
        fn complete(&self, _: &ChatEndpointConfig, _: &Prompt) -> Result<Completion, BackendError> {
            let i = self.calls.fetch_add(1, Ordering::SeqCst) as usize;
            self.replies[i.min(self.replies.len() - 1)].clone()
        }
    }

    fn text(s: &str) -> Result<Completion, BackendError> {
        Ok(Completion {
            content: s.into(),
            finish_reason: Some("stop".into()),
            completion_tokens: Some(3),
            model: None,
        })
    }

    #[test]
    fn mock_renders_span_type_and_hash() {
        let p = prompt();
        let rec = request_elucidation(&MockBackend, &fast(), &p).unwrap();
        let hash = hex::encode(Sha256::digest(b"the beam spans 5m"));
        assert_eq!(rec.text, format!("E:beam:obj:{}", &hash[..8]));
        assert_eq!(rec.model, MOCK_MODEL);
        assert!(rec.tokens >= 1);
    }

    #[test]
    fn retries_then_succeeds() {
        let b = Scripted {
            calls: AtomicU32::new(0),
            replies: vec![Err(BackendError::Transient("500".into())), text("fine")],
        };
        let rec = request_elucidation(&b, &fast(), &prompt()).unwrap();
        assert_eq!(rec.text, "fine");
        assert_eq!(rec.tokens, 3);
        assert_eq!(b.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn budget_exhaustion_is_transient_error() {
        let b = Scripted {
            calls: AtomicU32::new(0),
            replies: vec![Err(BackendError::Transient("HTTP 500".into()))],
        };
        let err = request_elucidation(&b, &fast(), &prompt()).unwrap_err();
        assert_eq!(
            err,
            ElucidationError::Transient {
                attempts: 3,
                message: "HTTP 500".into()
            }
        );
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn empty_text_is_content_error() {
        let b = Scripted {
            calls: AtomicU32::new(0),
            replies: vec![text("   ")],
        };
        assert!(matches!(
            request_elucidation(&b, &fast(), &prompt()),
            Err(ElucidationError::Content(_))
        ));
    }

    #[test]
    fn fatal_is_not_retried() {
        let b = Scripted {
            calls: AtomicU32::new(0),
            replies: vec![Err(BackendError::Fatal("401".into()))],
        };
        assert!(matches!(
            request_elucidation(&b, &fast(), &prompt()),
            Err(ElucidationError::Fatal(_))
        ));
        assert_eq!(b.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn config_validation() {
        assert!(ChatEndpointConfig {
            max_parallel: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ChatEndpointConfig::default().validate().is_ok());
    }
}
