//! Blocking JSON-over-HTTP client shared by the remote providers.
//!
//! Every client bounds the number of requests in flight and retries rate
//! limits and transient server errors with exponential backoff.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::Value;

use crate::error::ProviderError;

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
pub struct InFlightLimiter {
    capacity: usize,
    in_use: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a InFlightLimiter,
}

impl InFlightLimiter {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            in_use: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut in_use = self.in_use.lock().unwrap_or_else(|e| e.into_inner());
        while *in_use >= self.capacity {
            in_use = self.freed.wait(in_use).unwrap_or_else(|e| e.into_inner());
        }
        *in_use += 1;
        Permit { limiter: self }
    }

    pub fn in_use(&self) -> usize {
        *self.in_use.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut in_use = self
            .limiter
            .in_use
            .lock()
            .unwrap_or_else(|e| e.into_inner());
        *in_use -= 1;
        self.limiter.freed.notify_one();
    }
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 4,
            base_delay: Duration::from_millis(250),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

fn retryable(status: u16) -> bool {
    matches!(status, 429 | 500 | 502 | 503 | 504)
}

#[derive(Debug, Clone)]
pub struct ClientOptions {
    pub max_in_flight: usize,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl Default for ClientOptions {
    fn default() -> Self {
        Self {
            max_in_flight: 4,
            timeout: Duration::from_secs(60),
            retry: RetryPolicy::default(),
        }
    }
}

pub struct HttpClient {
    agent: ureq::Agent,
    limiter: InFlightLimiter,
    retry: RetryPolicy,
}

impl std::fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpClient")
            .field("max_in_flight", &self.limiter.capacity())
            .finish()
    }
}

impl HttpClient {
    pub fn new(options: ClientOptions) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(options.timeout))
            .http_status_as_error(false)
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
            limiter: InFlightLimiter::new(options.max_in_flight),
            retry: options.retry,
        }
    }

    pub fn limiter(&self) -> &InFlightLimiter {
        &self.limiter
    }

    pub fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
    ) -> Result<Value, ProviderError> {
        let payload = serde_json::to_vec(body).map_err(|e| ProviderError::Decode(e.to_string()))?;
        self.with_retry(|| {
            let mut request = self
                .agent
                .post(url)
                .header("Accept", "application/json")
                .header("Content-Type", "application/json");
            if let Some(key) = bearer {
                request = request.header("Authorization", &format!("Bearer {key}"));
            }
            request.send(&payload[..])
        })
    }

    pub fn get_json(&self, url: &str, query: &[(&str, &str)]) -> Result<Value, ProviderError> {
        self.with_retry(|| {
            let mut request = self.agent.get(url).header("Accept", "application/json");
            for (k, v) in query {
                request = request.query(*k, *v);
            }
            request.call()
        })
    }

    fn with_retry<F>(&self, send: F) -> Result<Value, ProviderError>
    where
        F: Fn() -> Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    {
        let mut attempt = 0;
        loop {
            let outcome = {
                let _permit = self.limiter.acquire();
                send()
            };
            let err = match outcome {
                Ok(mut response) => {
                    let status = response.status().as_u16();
                    if (200..300).contains(&status) {
                        return response
                            .body_mut()
                            .read_json::<Value>()
                            .map_err(|e| ProviderError::Decode(e.to_string()));
                    }
                    if !retryable(status) {
                        return Err(ProviderError::Status(status));
                    }
                    ProviderError::Status(status)
                }
                Err(e) => ProviderError::Transport(e.to_string()),
            };
            if attempt >= self.retry.max_retries {
                return Err(err);
            }
            let delay = self.retry.delay(attempt);
            log::warn!("request failed ({err}); retrying in {delay:?}");
            thread::sleep(delay);
            attempt += 1;
        }
    }
}

/// Reads an environment variable, treating empty values as unset.
pub fn env_var(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.trim().is_empty())
}
