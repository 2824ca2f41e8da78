//! Blocking JSON-over-HTTP helper shared by the remote embedding and chat
//! clients: bearer auth, timeout, bounded retries and an in-flight limit.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    /// Base delay between attempts, doubled after each failure.
    pub backoff: Duration,
    pub max_in_flight: usize,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpConfig {
            endpoint: endpoint.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff: Duration::from_millis(500),
            max_in_flight: 8,
        }
    }

    /// Reads the credential from `var`, leaving it unset when absent.
    pub fn with_api_key_from_env(mut self, var: &str) -> Self {
        self.api_key = std::env::var(var).ok().filter(|k| !k.is_empty());
        self
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Limiter {
    available: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    fn acquire(&self) -> LimiterGuard<'_> {
        let mut n = self.available.lock().expect("limiter poisoned");
        while *n == 0 {
            n = self.freed.wait(n).expect("limiter poisoned");
        }
        *n -= 1;
        LimiterGuard { limiter: self }
    }
}

struct LimiterGuard<'a> {
    limiter: &'a Limiter,
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.limiter.available.lock().expect("limiter poisoned") += 1;
        self.limiter.freed.notify_one();
    }
}

/// JSON POST client.
#[derive(Clone)]
pub struct JsonClient {
    config: HttpConfig,
    agent: ureq::Agent,
    limiter: Arc<Limiter>,
}

impl std::fmt::Debug for JsonClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JsonClient")
            .field("endpoint", &self.config.endpoint)
            .field("max_retries", &self.config.max_retries)
            .finish()
    }
}

impl JsonClient {
    pub fn new(config: HttpConfig) -> Result<Self> {
        if config.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be at least 1".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Ok(JsonClient {
            limiter: Arc::new(Limiter {
                available: Mutex::new(config.max_in_flight),
                freed: Condvar::new(),
            }),
            agent,
            config,
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn attempt<T: DeserializeOwned>(&self, body: &impl Serialize) -> std::result::Result<T, (bool, String)> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            let retriable = status == 429 || status >= 500;
            return Err((retriable, format!("HTTP {status}: {}", text.trim())));
        }
        resp.body_mut()
            .read_json::<T>()
            .map_err(|e| (false, format!("malformed response body: {e}")))
    }

    /// POSTs `body` and decodes the JSON reply, retrying transport failures,
    /// 429 and 5xx responses up to `max_retries` extra times.
    pub fn post<T: DeserializeOwned>(&self, body: &impl Serialize) -> Result<T> {
        let _slot = self.limiter.acquire();
        let mut attempts = 0;
        let mut delay = self.config.backoff;
        loop {
            attempts += 1;
            match self.attempt(body) {
                Ok(v) => return Ok(v),
                Err((retriable, message)) => {
                    if !retriable || attempts > self.config.max_retries {
                        return Err(Error::Remote { attempts, message });
                    }
                    log::warn!("request to {} failed ({message}); retrying", self.config.endpoint);
                    std::thread::sleep(delay);
                    delay *= 2;
                }
            }
        }
    }
}
