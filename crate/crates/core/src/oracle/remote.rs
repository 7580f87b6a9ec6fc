use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde_json::{json, Value};
use thiserror::Error;

use super::{build_prompt, parse_direction, DirectionOracle, OracleAnswer, OracleError, OracleQuery, PromptMode};

#[derive(Debug, Error, PartialEq)]
pub enum RemoteConfigError {
    #[error("environment variable {0} is not set")]
    Missing(&'static str),
}

/// Connection and sampling settings for [`RemoteOracle`].
#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub mode: PromptMode,
    pub temperature: f64,
    /// Temperature for retries, so a repeated call can produce a different reply.
    pub retry_temperature: f64,
    pub max_tokens: u32,
    /// Total attempts per answer, first call included.
    pub max_attempts: u32,
    pub timeout: Duration,
    pub max_in_flight: usize,
    /// Pause before retrying after HTTP 429.
    pub rate_limit_backoff: Duration,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            mode: PromptMode::ZeroShot,
            temperature: 0.0,
            retry_temperature: 0.7,
            max_tokens: 512,
            max_attempts: 3,
            timeout: Duration::from_secs(60),
            max_in_flight: 4,
            rate_limit_backoff: Duration::from_secs(2),
        }
    }

    /// Reads `ORACLE_ENDPOINT`, `ORACLE_MODEL` and the optional `ORACLE_API_KEY`.
    pub fn from_env() -> Result<Self, RemoteConfigError> {
        let var = |k: &'static str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let endpoint = var("ORACLE_ENDPOINT").ok_or(RemoteConfigError::Missing("ORACLE_ENDPOINT"))?;
        let model = var("ORACLE_MODEL").ok_or(RemoteConfigError::Missing("ORACLE_MODEL"))?;
        let mut cfg = RemoteConfig::new(endpoint, model);
        cfg.api_key = var("ORACLE_API_KEY");
        Ok(cfg)
    }
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("semaphore poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("semaphore poisoned");
        }
        *free -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore poisoned") += 1;
        self.0.cv.notify_one();
    }
}

/// Vision-chat client that sends the rendered snapshot plus a text prompt and
/// parses the last `DIRECTION: <TOKEN>` of the reply.
pub struct RemoteOracle {
    cfg: RemoteConfig,
    agent: ureq::Agent,
    slots: Semaphore,
}

impl RemoteOracle {
    pub fn new(cfg: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let slots = Semaphore {
            free: Mutex::new(cfg.max_in_flight.max(1)),
            cv: Condvar::new(),
        };
        RemoteOracle { cfg, agent, slots }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    fn request_body(&self, system: &str, user: &str, png: &[u8], temperature: f64) -> Value {
        let image = base64::engine::general_purpose::STANDARD.encode(png);
        json!({
            "model": self.cfg.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": [
                    {"type": "text", "text": user},
                    {"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{image}")}},
                ]},
            ],
            "temperature": temperature,
            "max_tokens": self.cfg.max_tokens,
        })
    }

    fn call(&self, body: &Value) -> Result<String, OracleError> {
        let _permit = self.slots.acquire();
        let mut req = self.agent.post(&self.cfg.endpoint);
        if let Some(key) = &self.cfg.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let resp = req.send_json(body).map_err(|e| OracleError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .into_body()
            .read_to_string()
            .map_err(|e| OracleError::Transport(e.to_string()))?;
        match status {
            200..=299 => {}
            429 => return Err(OracleError::RateLimit(text)),
            _ => return Err(OracleError::Transport(format!("HTTP {status}: {text}"))),
        }
        let v: Value =
            serde_json::from_str(&text).map_err(|e| OracleError::Transport(format!("bad JSON body: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| OracleError::Transport("response has no choices[0].message.content".into()))
    }
}

impl DirectionOracle for RemoteOracle {
    fn answer(&self, q: &OracleQuery<'_>) -> Result<OracleAnswer, OracleError> {
        let started = Instant::now();
        let prompt = build_prompt(q, self.cfg.mode);
        let mut last = OracleError::Transport("no attempt made".into());
        for attempt in 0..self.cfg.max_attempts.max(1) {
            let temperature = if attempt == 0 {
                self.cfg.temperature
            } else {
                self.cfg.retry_temperature
            };
            let body = self.request_body(&prompt.system, &prompt.user, &prompt.image_png, temperature);
            match self.call(&body) {
                Ok(text) => {
                    log::debug!("oracle reply (attempt {}): {text}", attempt + 1);
                    match parse_direction(&text) {
                        Ok(direction) => {
                            return Ok(OracleAnswer {
                                direction,
                                raw_response: text,
                                latency: started.elapsed().as_secs_f64(),
                                prompt_mode: Some(self.cfg.mode),
                            })
                        }
                        Err(e) => last = e,
                    }
                }
                Err(e) => {
                    log::warn!("oracle attempt {} failed: {e}", attempt + 1);
                    if matches!(e, OracleError::RateLimit(_)) {
                        std::thread::sleep(self.cfg.rate_limit_backoff);
                    }
                    last = e;
                }
            }
        }
        Err(last)
    }
}
