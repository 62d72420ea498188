//! Blocking client for a scorer behind the wire protocol.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use log::warn;

use super::wire::{Health, WireRequest, WireResponse};
use super::{Prediction, ScoreRequest, Scorer};
use crate::error::{Error, Result};

pub const ENDPOINT_ENV: &str = "CTXPROBE_ENDPOINT";
pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;
pub const MAX_ATTEMPTS: u32 = 3;
pub const BACKOFF_BASE: Duration = Duration::from_millis(250);

const EXCERPT_LEN: usize = 200;

struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Permits {
    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteScorer {
    base: String,
    client: reqwest::blocking::Client,
    permits: Permits,
    backoff: Duration,
}

fn excerpt(s: &str) -> String {
    s.chars().take(EXCERPT_LEN).collect()
}

impl RemoteScorer {
    pub fn new(endpoint: &str, max_in_flight: usize) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(Self {
            base: endpoint.trim_end_matches('/').to_string(),
            client,
            permits: Permits {
                free: Mutex::new(max_in_flight.max(1)),
                cv: Condvar::new(),
            },
            backoff: BACKOFF_BASE,
        })
    }

    /// Endpoint from `CTXPROBE_ENDPOINT`.
    pub fn from_env(max_in_flight: usize) -> Result<Self> {
        let ep = std::env::var(ENDPOINT_ENV)
            .map_err(|_| Error::Validation(format!("{ENDPOINT_ENV} is not set")))?;
        Self::new(&ep, max_in_flight)
    }

    pub fn with_backoff(mut self, base: Duration) -> Self {
        self.backoff = base;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.base
    }

    pub fn health(&self) -> Result<Health> {
        let resp = self
            .client
            .get(format!("{}/v1/health", self.base))
            .send()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| Error::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(Error::Transport(format!("health returned {status}")));
        }
        serde_json::from_str(&body).map_err(|e| Error::Protocol {
            message: e.to_string(),
            excerpt: excerpt(&body),
        })
    }

    fn attempt(&self, body: &str) -> Result<String> {
        let resp = self
            .client
            .post(format!("{}/v1/score", self.base))
            .header("content-type", "application/json")
            .body(body.to_string())
            .send()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Error::Transport(e.to_string()))?;
        if status.is_server_error() {
            return Err(Error::Transport(format!("HTTP {status}: {}", excerpt(&text))));
        }
        if !status.is_success() {
            return Err(Error::Protocol {
                message: format!("HTTP {status}"),
                excerpt: excerpt(&text),
            });
        }
        Ok(text)
    }
}

impl Scorer for RemoteScorer {
    fn name(&self) -> String {
        format!("remote({})", self.base)
    }

    fn score(&self, req: &ScoreRequest) -> Result<Prediction> {
        req.validate()?;
        let body = serde_json::to_string(&WireRequest::from(req))?;
        let text = {
            let _permit = self.permits.acquire();
            let mut attempt = 1;
            loop {
                match self.attempt(&body) {
                    Ok(t) => break t,
                    Err(e) if e.is_retryable() && attempt < MAX_ATTEMPTS => {
                        let wait = self.backoff * 2u32.pow(attempt - 1);
                        warn!("request {} failed ({e}), retrying in {wait:?}", req.id);
                        std::thread::sleep(wait);
                        attempt += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        let protocol = |message: String| Error::Protocol {
            message,
            excerpt: excerpt(&text),
        };
        let wire: WireResponse = serde_json::from_str(&text).map_err(|e| protocol(e.to_string()))?;
        if wire.id != req.id {
            return Err(protocol(format!("response id {:?} for request {:?}", wire.id, req.id)));
        }
        let pred = wire.into_prediction();
        pred.check(&req.candidates, req.top_k).map_err(protocol)?;
        Ok(pred)
    }
}
