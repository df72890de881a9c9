use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::{ConnectInfo, State};
use axum::http::{header, HeaderMap, Method, StatusCode, Uri};
use axum::response::Response;
use axum::Router;
use chrono::{DateTime, TimeDelta, Utc};
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::render::CHALLENGE_SIGNATURE;
use super::{PageKind, SimError, SimMarket};
use crate::bgserver::BackgroundServer;
use crate::clock::SharedClock;
use crate::frontier::IMAGE_EXTENSIONS;
use crate::harvester::{RateMode, CLIENT_ID_HEADER, SESSION_COOKIE};

/// Test-only endpoint standing in for a human solving the CAPTCHA:
/// `POST` returns a fresh session token as plain text.
pub const ADMIN_SESSION_PATH: &str = "/__admin/session";
const SITEMAP_PATH: &str = "/sitemap.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RequestKind {
    Index,
    Nav,
    Category,
    Listing,
    Image,
    Sitemap,
    Admin,
    OffScope,
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RequestOutcome {
    Served,
    Throttled429,
    SilentThrottle,
    Challenge,
    NotFound,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub at: DateTime<Utc>,
    pub client: String,
    pub method: String,
    pub url: String,
    pub status: u16,
    pub kind: RequestKind,
    pub outcome: RequestOutcome,
}

/// Append-only record of every request the server answered.
#[derive(Default)]
pub struct RequestLog {
    entries: Mutex<Vec<LogEntry>>,
}

impl RequestLog {
    fn push(&self, mut e: LogEntry) {
        let mut entries = self.entries.lock();
        e.seq = entries.len() as u64 + 1;
        entries.push(e);
    }

    pub fn entries(&self) -> Vec<LogEntry> {
        self.entries.lock().clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count_kind(&self, kind: RequestKind) -> usize {
        self.entries.lock().iter().filter(|e| e.kind == kind).count()
    }

    pub fn count_outcome(&self, outcome: RequestOutcome) -> usize {
        self.entries.lock().iter().filter(|e| e.outcome == outcome).count()
    }

    pub fn image_fetches(&self) -> usize {
        self.count_kind(RequestKind::Image)
    }

    pub fn off_scope_fetches(&self) -> usize {
        self.count_kind(RequestKind::OffScope)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("seq\tat\tclient\tmethod\turl\tstatus\tkind\toutcome\n");
        for e in self.entries.lock().iter() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{:?}\t{:?}\n",
                e.seq,
                e.at.format("%Y-%m-%d %H:%M:%S%.6f"),
                e.client,
                e.method,
                e.url,
                e.status,
                e.kind,
                e.outcome
            ));
        }
        out
    }
}

struct Gate {
    listing_serves: u64,
    generation: u64,
    fired: bool,
    tokens: HashMap<String, u64>,
    rng: ChaCha8Rng,
}

struct ServerState {
    market: Arc<SimMarket>,
    clock: SharedClock,
    log: Arc<RequestLog>,
    last_accepted: Mutex<HashMap<String, DateTime<Utc>>>,
    gate: Mutex<Gate>,
}

impl ServerState {
    fn issue_token(&self) -> String {
        let mut gate = self.gate.lock();
        let token: String = (0..32)
            .map(|_| char::from_digit(gate.rng.gen_range(0..16), 16).unwrap())
            .collect();
        let generation = gate.generation;
        gate.tokens.insert(token.clone(), generation);
        token
    }

    /// GCRA-style spacing per client: accept when at least `1/limit_rps`
    /// has passed since the client's last accepted request.
    fn rate_ok(&self, client: &str, now: DateTime<Utc>) -> bool {
        let defense = &self.market.config().defense;
        if defense.rate_limit_mode == RateMode::None {
            return true;
        }
        let interval = TimeDelta::microseconds((1e6 / defense.limit_rps).round() as i64);
        let mut last = self.last_accepted.lock();
        match last.get(client) {
            Some(prev) if now - *prev < interval => false,
            _ => {
                last.insert(client.to_string(), now);
                true
            }
        }
    }
}

fn session_token(headers: &HeaderMap) -> Option<String> {
    let prefix = format!("{SESSION_COOKIE}=");
    headers
        .get_all(header::COOKIE)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(';'))
        .map(str::trim)
        .find_map(|c| c.strip_prefix(&prefix).map(str::to_string))
}

fn html(status: StatusCode, body: String) -> Response {
    Response::builder()
        .status(status)
        .header(header::CONTENT_TYPE, "text/html; charset=utf-8")
        .body(Body::from(body))
        .unwrap()
}

fn challenge_page(market_id: &str) -> String {
    format!(
        "<!DOCTYPE html>\n<html><head><title>{market_id} | Security check</title></head>\n<body><h1>Security check</h1>\n<form {CHALLENGE_SIGNATURE} method=\"post\" action=\"/login\"><p>Type the characters shown below.</p><input name=\"answer\"><button>Continue</button></form>\n</body></html>\n"
    )
}

const SILENT_PAGE: &str = "<html><body><p>Loading...</p></body></html>\n";

async fn handle(
    State(state): State<Arc<ServerState>>,
    ConnectInfo(remote): ConnectInfo<SocketAddr>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
) -> Response {
    let now = state.clock.now();
    let host = uri
        .authority()
        .map(|a| a.host().to_string())
        .or_else(|| {
            headers
                .get(header::HOST)
                .and_then(|h| h.to_str().ok())
                .map(|h| h.split(':').next().unwrap_or(h).to_string())
        })
        .unwrap_or_default();
    let path_and_query = uri
        .path_and_query()
        .map(|p| p.as_str().to_string())
        .unwrap_or_else(|| "/".into());
    let url = format!("http://{host}{path_and_query}");
    let client = headers
        .get(CLIENT_ID_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
        .unwrap_or_else(|| remote.ip().to_string());
    let market = &state.market;
    let log = |status: StatusCode, kind, outcome| {
        state.log.push(LogEntry {
            seq: 0,
            at: now,
            client: client.clone(),
            method: method.to_string(),
            url: url.clone(),
            status: status.as_u16(),
            kind,
            outcome,
        })
    };

    if host != market.host() {
        if uri.path() == ADMIN_SESSION_PATH && method == Method::POST {
            log(StatusCode::OK, RequestKind::Admin, RequestOutcome::Served);
            return Response::new(Body::from(state.issue_token()));
        }
        log(StatusCode::BAD_GATEWAY, RequestKind::OffScope, RequestOutcome::Rejected);
        return html(StatusCode::BAD_GATEWAY, "<html><body>unknown host</body></html>".into());
    }

    let page = market.page(&path_and_query);
    let kind = match page.map(|p| p.kind) {
        Some(PageKind::Index) => RequestKind::Index,
        Some(PageKind::Nav) => RequestKind::Nav,
        Some(PageKind::Category) => RequestKind::Category,
        Some(PageKind::Listing) => RequestKind::Listing,
        None if path_and_query == SITEMAP_PATH => RequestKind::Sitemap,
        None => {
            let lower = uri.path().to_ascii_lowercase();
            if market.image_urls().contains(&url) || IMAGE_EXTENSIONS.iter().any(|e| lower.ends_with(e)) {
                RequestKind::Image
            } else {
                RequestKind::Missing
            }
        }
    };

    let defense = &market.config().defense;
    if !state.rate_ok(&client, now) {
        if defense.rate_limit_mode == RateMode::Http429 {
            log(StatusCode::TOO_MANY_REQUESTS, kind, RequestOutcome::Throttled429);
            let mut resp = html(
                StatusCode::TOO_MANY_REQUESTS,
                "<html><body>429 Too Many Requests</body></html>".into(),
            );
            if let Some(secs) = defense.retry_after_secs {
                resp.headers_mut().insert(header::RETRY_AFTER, secs.into());
            }
            return resp;
        }
        log(StatusCode::OK, kind, RequestOutcome::SilentThrottle);
        return html(StatusCode::OK, SILENT_PAGE.into());
    }

    let is_listing_get = kind == RequestKind::Listing && method == Method::GET;
    let authorized = {
        let mut gate = state.gate.lock();
        if let Some(limit) = defense.captcha_after_requests {
            if is_listing_get && !gate.fired && gate.listing_serves >= limit {
                gate.fired = true;
                gate.generation += 1;
            }
        }
        let token_ok = session_token(&headers)
            .and_then(|t| gate.tokens.get(&t).copied())
            .is_some_and(|g| g == gate.generation);
        let ok = token_ok || !(defense.session_required || gate.fired);
        if ok && is_listing_get {
            gate.listing_serves += 1;
        }
        ok
    };
    if !authorized {
        log(StatusCode::OK, kind, RequestOutcome::Challenge);
        return html(StatusCode::OK, challenge_page(market.market_id()));
    }

    match (page, kind) {
        (Some(p), _) => {
            log(StatusCode::OK, kind, RequestOutcome::Served);
            html(StatusCode::OK, p.body.clone())
        }
        (None, RequestKind::Sitemap) => {
            log(StatusCode::OK, kind, RequestOutcome::Served);
            let mut body = market.sitemap().join("\n");
            body.push('\n');
            Response::builder()
                .header(header::CONTENT_TYPE, "text/plain")
                .body(Body::from(body))
                .unwrap()
        }
        (None, RequestKind::Image) => {
            log(StatusCode::OK, kind, RequestOutcome::Served);
            Response::builder()
                .header(header::CONTENT_TYPE, "image/gif")
                .body(Body::from(&b"GIF89a\x01\x00\x01\x00\x00\x00\x00;"[..]))
                .unwrap()
        }
        _ => {
            log(StatusCode::NOT_FOUND, kind, RequestOutcome::NotFound);
            html(StatusCode::NOT_FOUND, "<html><body>404 Not Found</body></html>".into())
        }
    }
}

/// Running simulator. Clients reach the market by using [`SimServer::proxy_url`]
/// as their HTTP proxy and requesting URLs on [`SimMarket::host`].
pub struct SimServer {
    state: Arc<ServerState>,
    server: BackgroundServer,
}

impl SimServer {
    /// Binds `bind` (e.g. `127.0.0.1:0`) and serves on a background runtime.
    pub fn start(market: Arc<SimMarket>, bind: &str, clock: SharedClock) -> Result<Self, SimError> {
        let seed = market.config().seed;
        let state = Arc::new(ServerState {
            market,
            clock,
            log: Arc::new(RequestLog::default()),
            last_accepted: Mutex::new(HashMap::new()),
            gate: Mutex::new(Gate {
                listing_serves: 0,
                generation: 0,
                fired: false,
                tokens: HashMap::new(),
                rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5e55_10f0),
            }),
        });
        let app = Router::new().fallback(handle).with_state(state.clone());
        let server = BackgroundServer::start(app, bind, "marketsim").map_err(|source| SimError::BindFailure {
            addr: bind.to_string(),
            source,
        })?;
        Ok(SimServer { state, server })
    }

    pub fn addr(&self) -> SocketAddr {
        self.server.addr()
    }

    /// Loopback proxy URL for clients.
    pub fn proxy_url(&self) -> String {
        format!("http://{}", self.addr())
    }

    /// Direct URL of the token endpoint.
    pub fn admin_session_url(&self) -> String {
        format!("http://{}{ADMIN_SESSION_PATH}", self.addr())
    }

    /// Issues a session token without going through HTTP.
    pub fn issue_token(&self) -> String {
        self.state.issue_token()
    }

    pub fn log(&self) -> &Arc<RequestLog> {
        &self.state.log
    }

    pub fn market(&self) -> &Arc<SimMarket> {
        &self.state.market
    }

    /// Listing pages served with content so far.
    pub fn listing_serves(&self) -> u64 {
        self.state.gate.lock().listing_serves
    }

    pub fn gate_fired(&self) -> bool {
        self.state.gate.lock().fired
    }

    /// Stops the server and waits for its thread.
    pub fn shutdown(mut self) {
        self.server.stop();
    }

    /// Blocks the calling thread until the server stops.
    pub fn wait(mut self) {
        self.server.wait();
    }
}
