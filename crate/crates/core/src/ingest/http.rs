//! Blocking HTTP with retry, per-host rate limiting and an offline switch.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct HttpOptions {
    pub offline: bool,
    pub max_attempts: u32,
    pub backoff: Duration,
    pub timeout: Duration,
    /// Requests per second allowed against a single host.
    pub requests_per_second: f64,
    pub user_agent: String,
}

impl Default for HttpOptions {
    fn default() -> Self {
        Self {
            offline: false,
            max_attempts: 3,
            backoff: Duration::from_millis(200),
            timeout: Duration::from_secs(60),
            requests_per_second: 5.0,
            user_agent: format!("provex/{}", env!("CARGO_PKG_VERSION")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    pub fn json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::from_slice(&self.body)?)
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<HashMap<String, Instant>>,
}

impl RateLimiter {
    fn new(per_second: f64) -> Self {
        let interval = if per_second > 0.0 {
            Duration::from_secs_f64(1.0 / per_second)
        } else {
            Duration::ZERO
        };
        Self {
            interval,
            next_slot: Mutex::new(HashMap::new()),
        }
    }

    fn acquire(&self, host: &str) {
        if self.interval.is_zero() {
            return;
        }
        let wait = {
            let mut slots = self.next_slot.lock().unwrap();
            let now = Instant::now();
            let slot = slots.entry(host.to_string()).or_insert(now);
            let start = (*slot).max(now);
            *slot = start + self.interval;
            start - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

pub struct HttpClient {
    agent: ureq::Agent,
    options: HttpOptions,
    limiter: RateLimiter,
}

const MAX_BODY_BYTES: u64 = 256 << 20;

impl HttpClient {
    pub fn new(options: HttpOptions) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(options.timeout))
            .user_agent(options.user_agent.as_str())
            .build();
        Self {
            agent: config.into(),
            limiter: RateLimiter::new(options.requests_per_second),
            options,
        }
    }

    pub fn offline(&self) -> bool {
        self.options.offline
    }

    pub fn get(&self, url: &str) -> Result<HttpResponse> {
        self.with_retry(url, || {
            let mut resp = self.agent.get(url).call()?;
            let status = resp.status().as_u16();
            let body = resp.body_mut().with_config().limit(MAX_BODY_BYTES).read_to_vec()?;
            Ok(HttpResponse { status, body })
        })
    }

    pub fn post_json(&self, url: &str, body: &serde_json::Value, bearer: Option<&str>) -> Result<HttpResponse> {
        self.with_retry(url, || {
            let mut req = self.agent.post(url).header("Accept", "application/json");
            if let Some(token) = bearer {
                req = req.header("Authorization", &format!("Bearer {token}"));
            }
            let mut resp = req.send_json(body)?;
            let status = resp.status().as_u16();
            let body = resp.body_mut().with_config().limit(MAX_BODY_BYTES).read_to_vec()?;
            Ok(HttpResponse { status, body })
        })
    }

    /// Stream `url` into `dest`, returning the byte count and sha256 digest.
    pub fn download(&self, url: &str, dest: &Path) -> Result<(u64, String)> {
        let resp = self.with_retry(url, || {
            let resp = self.agent.get(url).call()?;
            Ok(resp)
        })?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(Error::HttpStatus {
                url: url.to_string(),
                status,
                body: String::new(),
            });
        }
        let mut reader = resp.into_body().into_reader();
        let mut file = File::create(dest)?;
        let mut hasher = Sha256::new();
        let mut buf = vec![0u8; 64 * 1024];
        let mut total = 0u64;
        loop {
            let n = reader.read(&mut buf)?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
            file.write_all(&buf[..n])?;
            total += n as u64;
        }
        file.flush()?;
        Ok((total, hex::encode(hasher.finalize())))
    }

    fn with_retry<T, F>(&self, url: &str, mut attempt: F) -> Result<T>
    where
        F: FnMut() -> std::result::Result<T, ureq::Error>,
        T: StatusOf,
    {
        if self.options.offline {
            return Err(Error::Offline(url.to_string()));
        }
        let host = host_of(url);
        let attempts = self.options.max_attempts.max(1);
        let mut last_err = String::new();
        for n in 1..=attempts {
            self.limiter.acquire(&host);
            match attempt() {
                Ok(value) => {
                    let status = value.status();
                    if (status >= 500 || status == 429) && n < attempts {
                        last_err = format!("HTTP {status}");
                    } else {
                        return Ok(value);
                    }
                }
                Err(e) => last_err = e.to_string(),
            }
            log::debug!("attempt {n}/{attempts} for {url} failed: {last_err}");
            thread::sleep(self.options.backoff * 2u32.pow(n - 1));
        }
        Err(Error::Network {
            url: url.to_string(),
            attempts,
            message: last_err,
        })
    }
}

trait StatusOf {
    fn status(&self) -> u16;
}

impl StatusOf for HttpResponse {
    fn status(&self) -> u16 {
        self.status
    }
}

impl StatusOf for ureq::http::Response<ureq::Body> {
    fn status(&self) -> u16 {
        ureq::http::Response::status(self).as_u16()
    }
}

fn host_of(url: &str) -> String {
    url.parse::<ureq::http::Uri>()
        .ok()
        .and_then(|u| u.authority().map(|a| a.to_string()))
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offline_refuses_before_any_io() {
        let client = HttpClient::new(HttpOptions {
            offline: true,
            ..Default::default()
        });
        let err = client.get("http://127.0.0.1:9/none").unwrap_err();
        assert!(matches!(err, Error::Offline(_)));
    }

    #[test]
    fn unreachable_host_is_retryable_with_attempt_count() {
        let client = HttpClient::new(HttpOptions {
            max_attempts: 2,
            backoff: Duration::from_millis(1),
            timeout: Duration::from_secs(2),
            ..Default::default()
        });
        // Port 9 (discard) is closed on loopback in practice.
        let err = client.get("http://127.0.0.1:9/none").unwrap_err();
        match &err {
            Error::Network { attempts, .. } => assert_eq!(*attempts, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.is_retryable());
    }

    #[test]
    fn host_extraction() {
        assert_eq!(host_of("http://127.0.0.1:8080/api/records"), "127.0.0.1:8080");
        assert_eq!(host_of("https://zenodo.org/api"), "zenodo.org");
    }
}
