//! Blocking chat-completions client with retry and an in-flight cap.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ServiceError {
    #[error("authentication failed: {0}")]
    AuthError(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimitExhausted { attempts: u32 },
    #[error("transport error: {0}")]
    TransportError(String),
    #[error("malformed service reply: {0}")]
    MalformedServiceReply(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer credential.
    pub api_key_env: String,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    pub timeout_s: u64,
    pub temperature: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".to_string(),
            model: "gpt-3.5-turbo".to_string(),
            api_key_env: "OPENAI_API_KEY".to_string(),
            max_in_flight: 4,
            max_retries: 5,
            backoff_base_ms: 500,
            backoff_max_ms: 30_000,
            timeout_s: 60,
            temperature: 0.0,
        }
    }
}

impl ServiceConfig {
    /// Delay before retry number `attempt` (0-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .backoff_base_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.backoff_max_ms);
        Duration::from_millis(ms)
    }
}

/// Counting semaphore bounding concurrent requests.
struct InFlight {
    used: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn acquire(&self) -> Permit<'_> {
        let mut used = self.used.lock().unwrap();
        while *used >= self.limit {
            used = self.freed.wait(used).unwrap();
        }
        *used += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.used.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

pub struct ServiceClient {
    cfg: ServiceConfig,
    credential: String,
    agent: ureq::Agent,
    in_flight: InFlight,
}

enum Attempt {
    Done(String),
    Retry { error: ServiceError, after: Option<Duration> },
    Fatal(ServiceError),
}

impl ServiceClient {
    /// Reads the credential from the configured environment variable.
    pub fn from_env(cfg: ServiceConfig) -> Result<Self, ServiceError> {
        let credential = std::env::var(&cfg.api_key_env).unwrap_or_default();
        Self::with_credential(cfg, credential)
    }

    pub fn with_credential(cfg: ServiceConfig, credential: String) -> Result<Self, ServiceError> {
        if credential.trim().is_empty() {
            return Err(ServiceError::AuthError(format!(
                "no credential in ${}",
                cfg.api_key_env
            )));
        }
        let agent = ureq::Agent::new_with_config(
            ureq::Agent::config_builder()
                .http_status_as_error(false)
                .timeout_global(Some(Duration::from_secs(cfg.timeout_s.max(1))))
                .build(),
        );
        let in_flight = InFlight {
            used: Mutex::new(0),
            freed: Condvar::new(),
            limit: cfg.max_in_flight.max(1),
        };
        Ok(Self {
            cfg,
            credential,
            agent,
            in_flight,
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    /// Sends one user message and returns the assistant's reply text.
    /// HTTP 429, 408, 5xx and connection failures are retried with
    /// exponential backoff, honouring `Retry-After` when it asks for longer.
    pub fn query(&self, prompt: &str) -> Result<String, ServiceError> {
        let body = json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.cfg.temperature,
        });
        let mut last = ServiceError::TransportError("no attempt made".into());
        for attempt in 0..=self.cfg.max_retries {
            let outcome = {
                let _permit = self.in_flight.acquire();
                self.attempt(&body)
            };
            match outcome {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry { error, after } => {
                    last = error;
                    if attempt < self.cfg.max_retries {
                        let wait = self.cfg.backoff(attempt);
                        thread::sleep(after.map_or(wait, |a| a.max(wait)));
                    }
                }
            }
        }
        Err(match last {
            ServiceError::RateLimitExhausted { .. } => ServiceError::RateLimitExhausted {
                attempts: self.cfg.max_retries + 1,
            },
            other => other,
        })
    }

    fn attempt(&self, body: &serde_json::Value) -> Attempt {
        let response = match self
            .agent
            .post(&self.cfg.endpoint)
            .header("Authorization", &format!("Bearer {}", self.credential))
            .send_json(body)
        {
            Ok(r) => r,
            Err(ureq::Error::BadUri(u)) => {
                return Attempt::Fatal(ServiceError::TransportError(format!("bad endpoint {u}")))
            }
            Err(e) => {
                return Attempt::Retry {
                    error: ServiceError::TransportError(e.to_string()),
                    after: None,
                }
            }
        };
        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = match response.into_body().read_to_string() {
            Ok(t) => t,
            Err(e) => {
                return Attempt::Retry {
                    error: ServiceError::TransportError(e.to_string()),
                    after: None,
                }
            }
        };
        match status {
            200..=299 => match extract_content(&text) {
                Ok(content) => Attempt::Done(content),
                Err(e) => Attempt::Fatal(e),
            },
            401 | 403 => Attempt::Fatal(ServiceError::AuthError(format!("HTTP {status}"))),
            429 => Attempt::Retry {
                error: ServiceError::RateLimitExhausted { attempts: 0 },
                after: retry_after,
            },
            408 | 500..=599 => Attempt::Retry {
                error: ServiceError::TransportError(format!("HTTP {status}")),
                after: retry_after,
            },
            _ => Attempt::Fatal(ServiceError::TransportError(format!(
                "HTTP {status}: {}",
                text.chars().take(200).collect::<String>()
            ))),
        }
    }
}

/// Pulls `choices[0].message.content` out of a chat-completions reply.
pub(crate) fn extract_content(body: &str) -> Result<String, ServiceError> {
    let value: serde_json::Value = serde_json::from_str(body)
        .map_err(|e| ServiceError::MalformedServiceReply(e.to_string()))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| {
            ServiceError::MalformedServiceReply("missing choices[0].message.content".into())
        })
}
