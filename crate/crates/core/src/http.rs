//! Blocking JSON-over-HTTP with bounded retries.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Retries after the first attempt, with exponential backoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: usize,
    pub initial_backoff_ms: u64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            initial_backoff_ms: 100,
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, retry: usize) -> Duration {
        let ms = self.initial_backoff_ms as f64 * self.multiplier.powi(retry as i32);
        Duration::from_millis(ms as u64)
    }
}

pub(crate) enum Attempt {
    Retry(String),
    Fatal(Error),
}

pub(crate) fn with_retry<T>(
    policy: &RetryPolicy,
    what: &str,
    mut op: impl FnMut() -> Result<T, Attempt>,
) -> Result<T> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        match op() {
            Ok(v) => return Ok(v),
            Err(Attempt::Fatal(e)) => return Err(e),
            Err(Attempt::Retry(message)) => {
                if attempt > policy.max_retries {
                    return Err(Error::Transport {
                        attempts: attempt,
                        message,
                    });
                }
                let wait = policy.backoff(attempt - 1);
                log::warn!("{what}: attempt {attempt} failed ({message}); retrying in {wait:?}");
                std::thread::sleep(wait);
            }
        }
    }
}

pub(crate) fn client(timeout: Duration) -> Result<reqwest::blocking::Client> {
    reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| Error::Config(format!("cannot build HTTP client: {e}")))
}

/// POST `body` as JSON and parse a JSON reply, retrying transport failures and 5xx.
pub(crate) fn post_json<B: Serialize, R: DeserializeOwned>(
    client: &reqwest::blocking::Client,
    url: &str,
    bearer: Option<&str>,
    body: &B,
    policy: &RetryPolicy,
) -> Result<R> {
    with_retry(policy, url, || {
        let mut req = client.post(url).json(body);
        if let Some(key) = bearer {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() {
            return Err(Attempt::Retry(format!("server returned {status}")));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(Error::Protocol(format!(
                "server returned {status}"
            ))));
        }
        let text = resp.text().map_err(|e| Attempt::Retry(e.to_string()))?;
        serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(Error::Protocol(format!("bad response body: {e}"))))
    })
}
