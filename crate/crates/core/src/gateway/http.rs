//! OpenAI-compatible HTTP access with bounded retries and a per-endpoint
//! minimum request interval.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ForcedLogProbRequest, GenerationRequest, LanguageModel, Tier};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Attempts in total, including the first.
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            initial_backoff_ms: 250,
            max_backoff_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .initial_backoff_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
    /// Minimum spacing between request starts, in milliseconds.
    pub min_interval_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: String::new(),
            api_key: None,
            timeout_secs: 120,
            retry: RetryPolicy::default(),
            min_interval_ms: 0,
        }
    }
}

/// JSON-over-HTTP client shared by the model, embedding and scorer clients.
pub struct HttpClient {
    agent: ureq::Agent,
    config: HttpConfig,
    next_slot: Mutex<Option<Instant>>,
}

impl std::fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpClient")
            .field("base_url", &self.config.base_url)
            .finish()
    }
}

enum Failure {
    Transport(String),
    Status(u16, String),
}

impl HttpClient {
    pub fn new(config: HttpConfig) -> Result<Self> {
        if config.base_url.is_empty() {
            return Err(Error::Config("HTTP endpoint URL is empty".into()));
        }
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build();
        Ok(HttpClient {
            agent: ureq::Agent::new_with_config(agent_config),
            config,
            next_slot: Mutex::new(None),
        })
    }

    pub fn base_url(&self) -> &str {
        &self.config.base_url
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.base_url.trim_end_matches('/'), path.trim_start_matches('/'))
    }

    fn wait_for_slot(&self) {
        if self.config.min_interval_ms == 0 {
            return;
        }
        let interval = Duration::from_millis(self.config.min_interval_ms);
        let wait = {
            let mut slot = self.next_slot.lock().unwrap();
            let now = Instant::now();
            let start = match *slot {
                Some(t) if t > now => t,
                _ => now,
            };
            *slot = Some(start + interval);
            start.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }

    fn attempt(&self, path: &str, body: Option<&Value>) -> std::result::Result<Value, Failure> {
        self.wait_for_slot();
        let url = self.url(path);
        let result = match body {
            Some(b) => {
                let mut req = self.agent.post(&url).header("Content-Type", "application/json");
                if let Some(key) = &self.config.api_key {
                    req = req.header("Authorization", &format!("Bearer {key}"));
                }
                req.send_json(b)
            }
            None => {
                let mut req = self.agent.get(&url);
                if let Some(key) = &self.config.api_key {
                    req = req.header("Authorization", &format!("Bearer {key}"));
                }
                req.call()
            }
        };
        let mut resp = result.map_err(|e| Failure::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(Failure::Status(status, text));
        }
        serde_json::from_str(&text).map_err(|e| Failure::Status(status, format!("invalid JSON body: {e}")))
    }

    fn request(&self, path: &str, body: Option<&Value>) -> Result<Value> {
        let attempts = self.config.retry.max_attempts.max(1);
        let mut last = None;
        for i in 0..attempts {
            if i > 0 {
                std::thread::sleep(self.config.retry.backoff(i - 1));
            }
            match self.attempt(path, body) {
                Ok(v) => return Ok(v),
                Err(Failure::Status(status, body)) if status == 429 || status >= 500 => {
                    last = Some(Failure::Status(status, body));
                }
                Err(Failure::Status(status, body)) => return Err(Error::Remote { status, body }),
                Err(f @ Failure::Transport(_)) => last = Some(f),
            }
        }
        Err(match last {
            Some(Failure::Status(status, body)) => Error::Remote { status, body },
            Some(Failure::Transport(message)) => Error::Gateway { attempts, message },
            None => unreachable!("at least one attempt is made"),
        })
    }

    pub fn post_json(&self, path: &str, body: &Value) -> Result<Value> {
        self.request(path, Some(body))
    }

    pub fn get_json(&self, path: &str) -> Result<Value> {
        self.request(path, None)
    }
}

fn malformed(what: &str, v: &Value) -> Error {
    let mut shown = v.to_string();
    shown.truncate(200);
    Error::Remote {
        status: 200,
        body: format!("malformed {what} response: {shown}"),
    }
}

/// A model served over the OpenAI-compatible chat/completions and
/// completions routes.
#[derive(Debug)]
pub struct HttpModel {
    client: HttpClient,
    model: String,
    tier: Tier,
}

impl HttpModel {
    pub fn new(config: HttpConfig, model: impl Into<String>, tier: Tier) -> Result<Self> {
        Ok(HttpModel {
            client: HttpClient::new(config)?,
            model: model.into(),
            tier,
        })
    }
}

impl LanguageModel for HttpModel {
    fn name(&self) -> String {
        format!("{}@{}", self.model, self.client.base_url())
    }

    fn tier(&self) -> Tier {
        self.tier
    }

    fn generate(&self, req: &GenerationRequest) -> Result<String> {
        let mut body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": req.input_text}],
            "max_tokens": req.max_new_tokens,
            "temperature": 0,
        });
        if let Some(seed) = req.seed {
            body["seed"] = json!(seed);
        }
        let v = self.client.post_json("chat/completions", &body)?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| malformed("chat/completions", &v))
    }

    fn forced_log_prob(&self, req: &ForcedLogProbRequest) -> Result<Vec<f64>> {
        if self.tier != Tier::Logprob {
            return Err(Error::UnsupportedTier("logprob"));
        }
        let prompt = format!("{}{}", req.input_text, req.target_text);
        let body = json!({
            "model": self.model,
            "prompt": prompt,
            "max_tokens": 0,
            "echo": true,
            "logprobs": 0,
            "temperature": 0,
        });
        let v = self.client.post_json("completions", &body)?;
        let lp = v
            .pointer("/choices/0/logprobs")
            .ok_or_else(|| malformed("completions", &v))?;
        let logprobs = lp
            .get("token_logprobs")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed("completions", &v))?;
        let offsets = lp
            .get("text_offset")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed("completions", &v))?;
        if logprobs.len() != offsets.len() {
            return Err(malformed("completions", &v));
        }
        let boundary = req.input_text.chars().count() as u64;
        let mut out = Vec::new();
        for (lp, off) in logprobs.iter().zip(offsets) {
            let off = off.as_u64().ok_or_else(|| malformed("completions", &v))?;
            if off < boundary {
                continue;
            }
            out.push(lp.as_f64().ok_or_else(|| malformed("completions", &v))?);
        }
        if out.is_empty() {
            return Err(malformed("completions", &v));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_saturates() {
        let p = RetryPolicy {
            max_attempts: 5,
            initial_backoff_ms: 100,
            max_backoff_ms: 350,
        };
        assert_eq!(p.backoff(0), Duration::from_millis(100));
        assert_eq!(p.backoff(1), Duration::from_millis(200));
        assert_eq!(p.backoff(2), Duration::from_millis(350));
    }

    #[test]
    fn empty_url_is_config_error() {
        assert!(matches!(HttpClient::new(HttpConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn url_joining() {
        let c = HttpClient::new(HttpConfig {
            base_url: "http://h/v1/".into(),
            ..HttpConfig::default()
        })
        .unwrap();
        assert_eq!(c.url("/chat/completions"), "http://h/v1/chat/completions");
    }
}
