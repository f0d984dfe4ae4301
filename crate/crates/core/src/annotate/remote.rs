//! Client for OpenAI-compatible chat-completion endpoints with a
//! content-addressed response cache.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{AnnotateError, TokenLedger};
use crate::tokenize::{count_tokens, truncate_tokens};

fn default_max_tokens() -> u32 {
    256
}
fn default_timeout() -> u64 {
    60
}
fn default_attempts() -> u32 {
    5
}
fn default_backoff() -> u64 {
    1000
}
fn default_inflight() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    /// Name used to key the response cache.
    pub id: String,
    /// Full URL of the chat-completion route.
    pub url: String,
    pub model: String,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    /// First retry delay; doubles on every further attempt.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "default_inflight")]
    pub max_inflight: usize,
    #[serde(default)]
    pub cache_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Worth retrying: connection problems, rate limits, server errors.
    Transient(String),
    Permanent(String),
}

pub trait Transport: Send + Sync {
    /// POST `body` and return the decoded JSON reply.
    fn post(&self, cfg: &EndpointConfig, body: &Value) -> Result<Value, TransportError>;
}

/// HTTP transport.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        UreqTransport {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl Transport for UreqTransport {
    fn post(&self, cfg: &EndpointConfig, body: &Value) -> Result<Value, TransportError> {
        let mut req = self.agent.post(&cfg.url);
        if let Some(key) = &cfg.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        match req.send_json(body) {
            Ok(resp) => resp
                .into_json::<Value>()
                .map_err(|e| TransportError::Transient(format!("reading reply: {e}"))),
            Err(ureq::Error::Status(code, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                let msg = format!(
                    "status {code}: {}",
                    text.chars().take(200).collect::<String>()
                );
                if code == 429 || code >= 500 {
                    Err(TransportError::Transient(msg))
                } else {
                    Err(TransportError::Permanent(msg))
                }
            }
            Err(ureq::Error::Transport(t)) => Err(TransportError::Transient(t.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub prompt_digest: String,
    pub response: String,
    pub token_count: u64,
}

struct Cache {
    path: Option<PathBuf>,
    entries: HashMap<String, CacheEntry>,
}

impl Cache {
    fn load(path: Option<PathBuf>) -> Result<Cache, AnnotateError> {
        let mut entries = HashMap::new();
        if let Some(p) = &path {
            if p.exists() {
                let err = |reason: String| AnnotateError::Cache {
                    path: p.display().to_string(),
                    reason,
                };
                let f = File::open(p).map_err(|e| err(e.to_string()))?;
                for (i, line) in BufReader::new(f).lines().enumerate() {
                    let line = line.map_err(|e| err(e.to_string()))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let e: CacheEntry = serde_json::from_str(&line)
                        .map_err(|e| err(format!("line {}: {e}", i + 1)))?;
                    entries.insert(e.prompt_digest.clone(), e);
                }
            }
        }
        Ok(Cache { path, entries })
    }

    fn append(&mut self, e: CacheEntry) -> Result<(), AnnotateError> {
        if let Some(p) = &self.path {
            let err = |reason: String| AnnotateError::Cache {
                path: p.display().to_string(),
                reason,
            };
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(|e| err(e.to_string()))?;
            let line = serde_json::to_string(&e).expect("cache entries serialize");
            writeln!(f, "{line}").map_err(|e| err(e.to_string()))?;
        }
        self.entries.insert(e.prompt_digest.clone(), e);
        Ok(())
    }
}

/// Chat-completion client. Safe to share between threads; at most
/// `max_inflight` requests are outstanding at once.
pub struct RemoteClient {
    cfg: EndpointConfig,
    transport: Box<dyn Transport>,
    cache: Mutex<Cache>,
    inflight: Mutex<usize>,
    slot_free: Condvar,
}

impl RemoteClient {
    pub fn new(cfg: EndpointConfig) -> Result<Self, AnnotateError> {
        let t = UreqTransport::new(Duration::from_secs(cfg.timeout_secs));
        Self::with_transport(cfg, Box::new(t))
    }

    pub fn with_transport(
        cfg: EndpointConfig,
        transport: Box<dyn Transport>,
    ) -> Result<Self, AnnotateError> {
        Ok(RemoteClient {
            cache: Mutex::new(Cache::load(cfg.cache_path.clone())?),
            cfg,
            transport,
            inflight: Mutex::new(0),
            slot_free: Condvar::new(),
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    /// Cache key of `prompt` for this endpoint.
    pub fn digest(&self, prompt: &str) -> String {
        let mut h = Sha256::new();
        h.update(self.cfg.id.as_bytes());
        h.update([0u8]);
        h.update(prompt.as_bytes());
        hex::encode(h.finalize())
    }

    fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
            "max_tokens": self.cfg.max_tokens,
        })
    }

    fn send(&self, prompt: &str) -> Result<String, AnnotateError> {
        let body = self.request_body(prompt);
        let mut delay = Duration::from_millis(self.cfg.backoff_ms);
        let attempts = self.cfg.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.transport.post(&self.cfg, &body) {
                Ok(v) => {
                    return v["choices"][0]["message"]["content"]
                        .as_str()
                        .map(str::to_string)
                        .ok_or_else(|| {
                            AnnotateError::Endpoint("reply has no message content".into())
                        });
                }
                Err(TransportError::Permanent(m)) => return Err(AnnotateError::Endpoint(m)),
                Err(TransportError::Transient(m)) => {
                    tracing::warn!(attempt, error = %m, "transient endpoint failure");
                    last = m;
                    if attempt < attempts {
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(AnnotateError::Endpoint(format!(
            "gave up after {attempts} attempts: {last}"
        )))
    }

    /// Response to `prompt`. Cached prompts are answered without a request
    /// and without charging the ledger; otherwise `max_tokens` is reserved
    /// up front and the response's token count is charged.
    pub fn complete(
        &self,
        prompt: &str,
        ledger: &Mutex<TokenLedger>,
    ) -> Result<String, AnnotateError> {
        let digest = self.digest(prompt);
        if let Some(e) = self.cache.lock().unwrap().entries.get(&digest) {
            ledger.lock().unwrap().record_cached();
            return Ok(e.response.clone());
        }
        let max = self.cfg.max_tokens as u64;
        ledger.lock().unwrap().reserve(max)?;
        {
            let mut n = self.inflight.lock().unwrap();
            while *n >= self.cfg.max_inflight.max(1) {
                n = self.slot_free.wait(n).unwrap();
            }
            *n += 1;
        }
        let sent = self.send(prompt);
        *self.inflight.lock().unwrap() -= 1;
        self.slot_free.notify_one();
        let text = match sent {
            Ok(t) => truncate_tokens(&t, max as usize).to_string(),
            Err(e) => {
                ledger.lock().unwrap().settle(max, None);
                return Err(e);
            }
        };
        let tokens = count_tokens(&text) as u64;
        let mut cache = self.cache.lock().unwrap();
        ledger.lock().unwrap().settle(max, Some(tokens));
        cache.append(CacheEntry {
            prompt_digest: digest,
            response: text.clone(),
            token_count: tokens,
        })?;
        Ok(text)
    }
}
