//! Fetches listing pages through the configured proxy with session handling,
//! CAPTCHA handoff and adaptive politeness, and writes snapshots to the inbox.

mod harvest;
mod rate;

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::NaiveDateTime;
use parking_lot::RwLock;
use regex::Regex;
use reqwest::blocking::Client;
use reqwest::header::{COOKIE, LOCATION, RETRY_AFTER, USER_AGENT};
use reqwest::Method;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use harvest::{
    harvest, read_manifest, snapshot_file_name, HandoffNote, HarvestCounts, HarvestOptions,
    ManifestEntry, HANDOFF_FILE, MANIFEST_FILE,
};
pub use rate::{tune_rate, LimiterStats, Observation, RateLimiter, RateMode, RatePolicy};

use crate::clock::SharedClock;
use crate::extractor::MarketProfile;
use crate::frontier::IMAGE_EXTENSIONS;

pub const DEFAULT_MAX_ATTEMPTS: u32 = 6;
pub const SESSION_COOKIE: &str = "session";
pub const CLIENT_ID_HEADER: &str = "x-client-id";
const BROWSER_UA: &str = "Mozilla/5.0 (Windows NT 10.0; rv:68.0) Gecko/20100101 Firefox/68.0";

#[derive(Debug, Error)]
pub enum HarvestError {
    #[error("challenge page served for {url}; a new session is required")]
    CaptchaRequired { url: String },
    #[error("session expired (redirected to {location})")]
    SessionExpired { location: String },
    #[error("gave up on {url} after {attempts} attempts")]
    ExhaustedRetries { url: String, attempts: u32 },
    #[error("transport error for {url}: {message}")]
    TransportError { url: String, message: String },
    #[error("refusing to request image url {0}")]
    ImageUrlRefused(String),
    #[error("invalid session: {0}")]
    InvalidSession(String),
    #[error("harvester configuration: {0}")]
    Config(String),
    #[error("inbox i/o on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionSource {
    HumanHandoff,
    Config,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub market_id: String,
    pub token: String,
    pub obtained_at: NaiveDateTime,
    pub source: SessionSource,
}

impl Session {
    pub fn new(
        market_id: impl Into<String>,
        token: impl Into<String>,
        obtained_at: NaiveDateTime,
        source: SessionSource,
    ) -> Result<Self, HarvestError> {
        let token = token.into().trim().to_string();
        if token.is_empty() {
            return Err(HarvestError::InvalidSession("token is empty".into()));
        }
        if token.contains([';', '\r', '\n']) {
            return Err(HarvestError::InvalidSession("token contains separator characters".into()));
        }
        Ok(Session {
            market_id: market_id.into(),
            token,
            obtained_at,
            source,
        })
    }

    /// Reads a token written by a human operator (first line of the file).
    pub fn from_token_file(
        market_id: &str,
        path: &Path,
        obtained_at: NaiveDateTime,
    ) -> Result<Self, HarvestError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarvestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let token = text.lines().next().unwrap_or_default();
        Session::new(market_id, token, obtained_at, SessionSource::HumanHandoff)
    }
}

/// What a fetched 200 body must look like to count as real content.
#[derive(Debug, Clone, Copy)]
pub enum PageCheck<'a> {
    Any,
    Marker { marker: &'a Regex, min_body_bytes: usize },
}

impl<'a> PageCheck<'a> {
    /// Listing pages: the profile's listing marker.
    pub fn listing(profile: &'a MarketProfile) -> Self {
        PageCheck::Marker {
            marker: &profile.listing_marker,
            min_body_bytes: profile.min_body_bytes,
        }
    }

    /// Any genuine page of the market (navigation included).
    pub fn page(profile: &'a MarketProfile) -> Self {
        PageCheck::Marker {
            marker: &profile.page_marker,
            min_body_bytes: profile.min_body_bytes,
        }
    }

    fn is_silent_block(&self, body: &str) -> bool {
        match self {
            PageCheck::Any => false,
            PageCheck::Marker { marker, min_body_bytes } => {
                body.len() < *min_body_bytes || !marker.is_match(body)
            }
        }
    }
}

/// True when a 200 body lacks the listing marker or is implausibly short.
pub fn detect_silent_block(html: &str, profile: &MarketProfile) -> bool {
    PageCheck::listing(profile).is_silent_block(html)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchedPage {
    pub url: String,
    pub status: u16,
    pub body: String,
    pub attempts: u32,
    pub throttled: u32,
    pub silent_blocks: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientConfig {
    /// Single forward proxy for every request (e.g. `socks5h://127.0.0.1:9050`
    /// in production, the simulator endpoint in tests).
    pub proxy: Option<String>,
    pub max_attempts: u32,
    pub timeout_ms: u64,
    /// Sent as `x-client-id` so a simulator can tell circuits apart.
    pub client_id: Option<String>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            proxy: None,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            timeout_ms: 60_000,
            client_id: None,
        }
    }
}

/// Rate-limited HTTP client for one market.
pub struct FetchClient {
    http: Client,
    limiter: Arc<RateLimiter>,
    session: RwLock<Option<Session>>,
    profile: Arc<MarketProfile>,
    config: ClientConfig,
    clock: SharedClock,
}

enum Attempt {
    Done(u16, String),
    Retry(Observation, Option<Duration>),
    Transport(String),
}

impl FetchClient {
    pub fn new(
        config: ClientConfig,
        profile: Arc<MarketProfile>,
        limiter: Arc<RateLimiter>,
        clock: SharedClock,
    ) -> Result<Self, HarvestError> {
        if config.max_attempts == 0 {
            return Err(HarvestError::Config("max_attempts must be at least 1".into()));
        }
        let mut builder = Client::builder()
            .redirect(reqwest::redirect::Policy::none())
            .timeout(Duration::from_millis(config.timeout_ms));
        if let Some(proxy) = &config.proxy {
            let proxy = reqwest::Proxy::all(proxy)
                .map_err(|e| HarvestError::Config(format!("proxy `{proxy}`: {e}")))?;
            builder = builder.proxy(proxy);
        } else {
            builder = builder.no_proxy();
        }
        let http = builder
            .build()
            .map_err(|e| HarvestError::Config(format!("http client: {e}")))?;
        Ok(FetchClient {
            http,
            limiter,
            session: RwLock::new(None),
            profile,
            config,
            clock,
        })
    }

    pub fn set_session(&self, session: Option<Session>) {
        *self.session.write() = session;
    }

    pub fn session(&self) -> Option<Session> {
        self.session.read().clone()
    }

    pub fn limiter(&self) -> &Arc<RateLimiter> {
        &self.limiter
    }

    pub fn profile(&self) -> &Arc<MarketProfile> {
        &self.profile
    }

    pub fn clock(&self) -> &SharedClock {
        &self.clock
    }

    fn guard(&self, url: &str) -> Result<(), HarvestError> {
        let path = url::Url::parse(url)
            .map(|u| u.path().to_ascii_lowercase())
            .unwrap_or_else(|_| url.to_ascii_lowercase());
        if IMAGE_EXTENSIONS.iter().any(|ext| path.ends_with(ext)) {
            return Err(HarvestError::ImageUrlRefused(url.to_string()));
        }
        Ok(())
    }

    fn attempt(&self, method: Method, url: &str, check: &PageCheck<'_>) -> Result<Attempt, HarvestError> {
        self.limiter.acquire();
        let mut req = self.http.request(method.clone(), url).header(USER_AGENT, BROWSER_UA);
        if let Some(session) = self.session.read().as_ref() {
            req = req.header(COOKIE, format!("{SESSION_COOKIE}={}", session.token));
        }
        if let Some(id) = &self.config.client_id {
            req = req.header(CLIENT_ID_HEADER, id);
        }
        let started = Instant::now();
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Ok(Attempt::Transport(e.to_string())),
        };
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get(RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let location = resp
            .headers()
            .get(LOCATION)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let body = match resp.text() {
            Ok(b) => b,
            Err(e) => return Ok(Attempt::Transport(e.to_string())),
        };
        let latency = started.elapsed();
        let obs = Observation {
            status,
            latency,
            silent_block: false,
        };
        match status {
            429 => Ok(Attempt::Retry(obs, retry_after)),
            300..=399 => {
                let location = location.unwrap_or_default();
                if location.to_ascii_lowercase().contains("login") {
                    self.limiter.observe(obs);
                    Err(HarvestError::SessionExpired { location })
                } else {
                    self.limiter.observe(obs);
                    Ok(Attempt::Done(status, body))
                }
            }
            200 => {
                if method == Method::GET && self.profile.challenge_signature.is_match(&body) {
                    self.limiter.observe(obs);
                    return Err(HarvestError::CaptchaRequired { url: url.to_string() });
                }
                if method == Method::GET && check.is_silent_block(&body) {
                    return Ok(Attempt::Retry(Observation { silent_block: true, ..obs }, None));
                }
                self.limiter.observe(obs);
                Ok(Attempt::Done(status, body))
            }
            500..=599 => Ok(Attempt::Retry(obs, retry_after)),
            _ => {
                self.limiter.observe(obs);
                Ok(Attempt::Done(status, body))
            }
        }
    }

    fn run(&self, method: Method, url: &str, check: PageCheck<'_>) -> Result<FetchedPage, HarvestError> {
        self.guard(url)?;
        let mut throttled = 0;
        let mut silent_blocks = 0;
        let mut last_transport = None;
        for attempt in 1..=self.config.max_attempts {
            match self.attempt(method.clone(), url, &check)? {
                Attempt::Done(status, body) => {
                    return Ok(FetchedPage {
                        url: url.to_string(),
                        status,
                        body,
                        attempts: attempt,
                        throttled,
                        silent_blocks,
                    })
                }
                Attempt::Retry(obs, retry_after) => {
                    last_transport = None;
                    if obs.silent_block {
                        silent_blocks += 1;
                    }
                    if obs.throttled() {
                        throttled += 1;
                    }
                    self.limiter.observe(obs);
                    if let Some(wait) = retry_after {
                        self.limiter.defer(wait);
                    }
                }
                Attempt::Transport(message) => {
                    self.limiter.observe(Observation::transport_failure());
                    last_transport = Some(message);
                }
            }
        }
        match last_transport {
            Some(message) => Err(HarvestError::TransportError {
                url: url.to_string(),
                message,
            }),
            None => Err(HarvestError::ExhaustedRetries {
                url: url.to_string(),
                attempts: self.config.max_attempts,
            }),
        }
    }

    /// GET with throttle handling. Returns the final non-throttled response
    /// (any status); 429s, 5xx and silent blocks are retried with backoff.
    pub fn fetch_page(&self, url: &str, check: PageCheck<'_>) -> Result<FetchedPage, HarvestError> {
        self.run(Method::GET, url, check)
    }

    /// HEAD request for liveness probes. Returns the final status code.
    pub fn head(&self, url: &str) -> Result<u16, HarvestError> {
        self.run(Method::HEAD, url, PageCheck::Any).map(|p| p.status)
    }
}
