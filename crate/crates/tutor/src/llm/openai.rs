//! Client for OpenAI-compatible `chat/completions` and `embeddings` endpoints.
//!
//! Blocking on purpose: the turn cycle is synchronous, and the service runs
//! each turn on a blocking worker thread.

use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use tutor_core::gateway::{Role, Usage};
use tutor_core::rag::EmbedError;
use tutor_core::{ChatProvider, Completion, Embedder, EmbeddingVector, FinishReason, GatewayError, PromptBundle};

const EXCERPT_CHARS: usize = 512;

#[derive(Debug, Clone)]
pub struct HttpSettings {
    /// Base URL without the `/v1/...` suffix.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    /// Overall budget for one call, retries and backoff included.
    pub deadline: Duration,
    pub max_retries: u32,
    pub backoff: Duration,
}

fn url(endpoint: &str, path: &str) -> String {
    format!("{}{path}", endpoint.trim_end_matches('/'))
}

fn excerpt(body: &str) -> String {
    body.chars().take(EXCERPT_CHARS).collect()
}

fn millis(d: Duration) -> u64 {
    d.as_millis().try_into().unwrap_or(u64::MAX)
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

/// One failed attempt, classified.
enum Attempt {
    Retry(String),
    Fatal(GatewayError),
}

pub struct HttpChatProvider {
    client: Client,
    settings: HttpSettings,
}

impl HttpChatProvider {
    pub fn new(settings: HttpSettings) -> Result<Self, reqwest::Error> {
        let client = Client::builder().build()?;
        Ok(Self { client, settings })
    }

    fn request_body<'a>(&'a self, bundle: &'a PromptBundle) -> ChatRequest<'a> {
        let mut messages = vec![WireMessage {
            role: "system",
            content: &bundle.system_text,
        }];
        messages.extend(bundle.messages.iter().map(|m| WireMessage {
            role: match m.role {
                Role::User => "user",
                Role::Assistant => "assistant",
            },
            content: &m.content,
        }));
        ChatRequest {
            model: &self.settings.model,
            messages,
            temperature: bundle.params.temperature,
            max_tokens: bundle.params.max_tokens,
        }
    }

    fn attempt(&self, body: &ChatRequest<'_>, timeout: Duration) -> Result<(String, FinishReason, Usage), Attempt> {
        let mut req = self
            .client
            .post(url(&self.settings.endpoint, "/v1/chat/completions"))
            .timeout(timeout)
            .json(body);
        if let Some(key) = &self.settings.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Attempt::Retry(e.to_string()))?;
        if !status.is_success() {
            return Err(classify(status, &text));
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| Attempt::Fatal(GatewayError::Malformed(format!("{e}: {}", excerpt(&text)))))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| Attempt::Fatal(GatewayError::Malformed("no choices in response".into())))?;
        let finish = match choice.finish_reason.as_deref() {
            Some("stop") | None => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            Some(_) => FinishReason::ProviderError,
        };
        let content = choice.message.content.unwrap_or_default();
        if finish == FinishReason::Stop && content.trim().is_empty() {
            return Err(Attempt::Fatal(GatewayError::Malformed("empty completion text".into())));
        }
        let usage = parsed.usage.map_or_else(Usage::default, |u| Usage {
            prompt_units: u.prompt_tokens,
            output_units: u.completion_tokens,
        });
        Ok((content, finish, usage))
    }
}

fn classify(status: StatusCode, body: &str) -> Attempt {
    if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() || status == StatusCode::REQUEST_TIMEOUT {
        Attempt::Retry(format!("status {}: {}", status.as_u16(), excerpt(body)))
    } else {
        Attempt::Fatal(GatewayError::Provider {
            status: status.as_u16(),
            body_excerpt: excerpt(body),
        })
    }
}

impl ChatProvider for HttpChatProvider {
    /// Transport errors, timeouts of a single attempt, 408, 429 and 5xx are
    /// retried with doubling backoff. Whatever happens, the call returns by
    /// the deadline: running out of time is `Timeout`, running out of
    /// attempts first is `RetriesExhausted`.
    fn complete(&self, bundle: &PromptBundle) -> Result<Completion, GatewayError> {
        if bundle.params.stream {
            return Err(GatewayError::StreamingUnsupported);
        }
        let started = Instant::now();
        let deadline = self.settings.deadline;
        let body = self.request_body(bundle);
        let attempts = self.settings.max_retries + 1;
        let mut last = String::new();

        for attempt in 0..attempts {
            let remaining = deadline.saturating_sub(started.elapsed());
            if remaining.is_zero() {
                break;
            }
            match self.attempt(&body, remaining) {
                Ok((text, finish_reason, usage)) => {
                    return Ok(Completion {
                        text,
                        finish_reason,
                        usage,
                        latency_ms: millis(started.elapsed()),
                    })
                }
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    tracing::debug!(attempt, error = %msg, "chat completion attempt failed");
                    last = msg;
                }
            }
            if attempt + 1 < attempts {
                let wait = self.settings.backoff.saturating_mul(1 << attempt.min(16));
                let remaining = deadline.saturating_sub(started.elapsed());
                std::thread::sleep(wait.min(remaining));
            }
        }

        let elapsed = started.elapsed();
        if elapsed >= deadline {
            Err(GatewayError::Timeout {
                elapsed_ms: millis(elapsed),
            })
        } else {
            Err(GatewayError::RetriesExhausted { attempts, last })
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f64>,
}

/// Remote embedder. Single attempt per call; failures report whether a
/// retry could help.
pub struct HttpEmbedder {
    client: Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    dim: usize,
    timeout: Duration,
}

impl HttpEmbedder {
    pub fn new(endpoint: String, model: String, api_key: Option<String>, dim: usize, timeout: Duration) -> Result<Self, reqwest::Error> {
        Ok(Self {
            client: Client::builder().build()?,
            endpoint,
            model,
            api_key,
            dim,
            timeout,
        })
    }
}

impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut req = self
            .client
            .post(url(&self.endpoint, "/v1/embeddings"))
            .timeout(self.timeout)
            .json(&EmbedRequest {
                model: &self.model,
                input: text,
            });
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let remote = |retriable, message: String| EmbedError::Remote { retriable, message };
        let resp = req.send().map_err(|e| remote(true, e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| remote(true, e.to_string()))?;
        if !status.is_success() {
            let retriable = matches!(classify(status, ""), Attempt::Retry(_));
            return Err(remote(retriable, format!("status {}: {}", status.as_u16(), excerpt(&body))));
        }
        let parsed: EmbedResponse = serde_json::from_str(&body).map_err(|e| remote(false, e.to_string()))?;
        let values = parsed
            .data
            .into_iter()
            .next()
            .ok_or_else(|| remote(false, "no embedding in response".into()))?
            .embedding;
        if values.len() != self.dim {
            return Err(EmbedError::Dimension {
                expected: self.dim,
                got: values.len(),
            });
        }
        Ok(EmbeddingVector { values })
    }
}
