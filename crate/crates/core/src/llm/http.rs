use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::cache::{CacheMode, ResponseCache};
use super::{Backend, GenerationRequest, Secret};
use crate::error::BackendError;

pub const API_KEY_ENV: &str = "SNIPPET_FORGE_API_KEY";

#[derive(Debug, Clone)]
pub struct BackendConfig {
    pub endpoint_url: String,
    pub api_key: Secret,
    pub max_retries: u32,
    pub retry_backoff_base: Duration,
    pub max_concurrent_requests: usize,
    pub cache_dir: Option<PathBuf>,
    pub cache_mode: CacheMode,
    pub request_timeout: Duration,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "https://api.deepseek.com/chat/completions".into(),
            api_key: Secret::default(),
            max_retries: 3,
            retry_backoff_base: Duration::from_millis(500),
            max_concurrent_requests: 8,
            cache_dir: None,
            cache_mode: CacheMode::ReadWrite,
            request_timeout: Duration::from_secs(300),
        }
    }
}

impl BackendConfig {
    /// Fills `api_key` from the environment when it is unset.
    pub fn with_env_key(mut self) -> Self {
        if self.api_key.is_empty() {
            if let Ok(key) = std::env::var(API_KEY_ENV) {
                self.api_key = Secret::new(key);
            }
        }
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_concurrent_requests == 0 {
            return Err("max_concurrent_requests must be at least 1".into());
        }
        if self.endpoint_url.is_empty() {
            return Err("endpoint_url is empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// The raw POST. Split out so retry, cache and rate limiting can be tested
/// without a socket.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, api_key: &str, body: &str) -> Result<HttpResponse, String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent }
    }
}

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, api_key: &str, body: &str) -> Result<HttpResponse, String> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if !api_key.is_empty() {
            req = req.header("Authorization", &format!("Bearer {api_key}"));
        }
        let mut resp = req.send(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

/// Counting semaphore bounding in-flight requests.
struct Limiter {
    available: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(n: usize) -> Self {
        Self {
            available: Mutex::new(n),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap();
        while *n == 0 {
            n = self.freed.wait(n).unwrap();
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap() += 1;
        self.0.freed.notify_one();
    }
}

/// Chat-completion client with retries, a concurrency bound and an optional
/// disk cache.
pub struct HttpBackend<T: Transport = UreqTransport> {
    config: BackendConfig,
    transport: T,
    cache: Option<ResponseCache>,
    limiter: Limiter,
    network_calls: AtomicUsize,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

impl HttpBackend<UreqTransport> {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        let transport = UreqTransport::new(config.request_timeout);
        Self::with_transport(config, transport)
    }
}

impl<T: Transport> HttpBackend<T> {
    pub fn with_transport(config: BackendConfig, transport: T) -> Result<Self, BackendError> {
        config.validate().map_err(BackendError::Malformed)?;
        let cache = match &config.cache_dir {
            Some(dir) => Some(ResponseCache::new(dir, config.cache_mode)?),
            None => None,
        };
        Ok(Self {
            limiter: Limiter::new(config.max_concurrent_requests),
            config,
            transport,
            cache,
            network_calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
        })
    }

    /// Number of HTTP attempts made so far, retries included.
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    fn send_once(&self, body: &str) -> Result<HttpResponse, String> {
        let _permit = self.limiter.acquire();
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        self.network_calls.fetch_add(1, Ordering::SeqCst);
        let result = self
            .transport
            .post_json(&self.config.endpoint_url, self.config.api_key.expose(), body);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }

    fn call(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let body = json!({
            "model": request.model_name,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        })
        .to_string();

        let mut attempts = 0;
        loop {
            attempts += 1;
            let retryable = match self.send_once(&body) {
                Ok(resp) if (200..300).contains(&resp.status) => return parse_completion(&resp.body),
                Ok(resp) if resp.status == 429 || resp.status >= 500 => BackendError::Status {
                    status: resp.status,
                    attempts,
                    body: truncate(&resp.body),
                },
                Ok(resp) => {
                    return Err(BackendError::Status {
                        status: resp.status,
                        attempts,
                        body: truncate(&resp.body),
                    })
                }
                Err(message) => BackendError::Transport { attempts, message },
            };
            if attempts > self.config.max_retries {
                return Err(retryable);
            }
            let delay = self
                .config
                .retry_backoff_base
                .saturating_mul(2u32.saturating_pow(attempts - 1));
            log::debug!("retrying in {delay:?}: {retryable}");
            std::thread::sleep(delay);
        }
    }
}

impl<T: Transport> Backend for HttpBackend<T> {
    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        request.validate().map_err(BackendError::Malformed)?;
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(request)) {
            return Ok(hit);
        }
        let text = self.call(request)?;
        if let Some(cache) = &self.cache {
            cache.put(request, &text)?;
        }
        Ok(text)
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}

/// Text of the first choice of a chat-completion response.
fn parse_completion(body: &str) -> Result<String, BackendError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| BackendError::Malformed(format!("response is not JSON: {e}")))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::Malformed("response has no choices[0].message.content".into()))
}
