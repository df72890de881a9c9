//! Link discovery, filtering and the crawl queue.
//!
//! A crawl walks navigation pages breadth-first from a seed URL, pulls anchor
//! links with [`extract_links`], and queues every URL whose length matches the
//! market's listing URL shape. Queued entries are then probed for liveness and
//! either promoted to `Active` or moved to the dead-entry audit log.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::NaiveDateTime;
use parking_lot::Mutex;
use scraper::{Html, Selector};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::clock::SharedClock;
use crate::dndo::{format_timestamp, parse_timestamp};

pub const IMAGE_EXTENSIONS: [&str; 7] = [".png", ".jpg", ".jpeg", ".gif", ".webp", ".bmp", ".svg"];

pub const DEFAULT_LISTING_URL_LEN: (usize, usize) = (114, 120);
pub const DEFAULT_CRAWL_DEPTH: usize = 3;

#[derive(Debug, Error)]
pub enum FrontierError {
    #[error("invalid link filter policy: {0}")]
    InvalidPolicy(String),
    #[error("bad seed url `{0}`")]
    BadSeed(String),
    #[error("frontier log {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("frontier log {path} line {line}: {reason}")]
    CorruptLog {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkFilterPolicy {
    pub min_url_len: usize,
    pub max_url_len: usize,
    pub excluded_extensions: BTreeSet<String>,
    pub exclude_image_embedded: bool,
    /// Host (optionally `host:port`) the crawl is confined to.
    pub scope_host: String,
}

impl LinkFilterPolicy {
    pub fn new(scope_host: impl Into<String>) -> Self {
        LinkFilterPolicy {
            min_url_len: DEFAULT_LISTING_URL_LEN.0,
            max_url_len: DEFAULT_LISTING_URL_LEN.1,
            excluded_extensions: IMAGE_EXTENSIONS.iter().map(|s| s.to_string()).collect(),
            exclude_image_embedded: true,
            scope_host: scope_host.into(),
        }
    }

    pub fn with_url_len(mut self, min: usize, max: usize) -> Self {
        self.min_url_len = min;
        self.max_url_len = max;
        self
    }

    pub fn validate(&self) -> Result<(), FrontierError> {
        if self.min_url_len > self.max_url_len {
            return Err(FrontierError::InvalidPolicy(format!(
                "min_url_len {} exceeds max_url_len {}",
                self.min_url_len, self.max_url_len
            )));
        }
        if self.scope_host.trim().is_empty() {
            return Err(FrontierError::InvalidPolicy("scope_host is empty".into()));
        }
        Ok(())
    }

    pub fn in_scope(&self, url: &Url) -> bool {
        let Some(host) = url.host_str() else {
            return false;
        };
        match self.scope_host.rsplit_once(':') {
            Some((scope, port)) if port.chars().all(|c| c.is_ascii_digit()) => {
                host.eq_ignore_ascii_case(scope)
                    && url.port_or_known_default().map(|p| p.to_string()).as_deref() == Some(port)
            }
            _ => host.eq_ignore_ascii_case(&self.scope_host),
        }
    }

    /// True when the URL path ends in one of the excluded suffixes.
    pub fn has_excluded_extension(&self, url: &str) -> bool {
        let path = match Url::parse(url) {
            Ok(u) => u.path().to_ascii_lowercase(),
            Err(_) => url
                .split(['?', '#'])
                .next()
                .unwrap_or_default()
                .to_ascii_lowercase(),
        };
        self.excluded_extensions
            .iter()
            .any(|ext| path.ends_with(&ext.to_ascii_lowercase()))
    }

    pub fn listing_len_ok(&self, url: &str) -> bool {
        (self.min_url_len..=self.max_url_len).contains(&url.len())
    }
}

fn selector(css: &str) -> Selector {
    Selector::parse(css).expect("static selector")
}

fn resolve(base: &Url, raw: &str) -> Option<Url> {
    let raw = raw.trim();
    if raw.is_empty() {
        return None;
    }
    let mut url = base.join(raw).ok()?;
    if !matches!(url.scheme(), "http" | "https") {
        return None;
    }
    url.set_fragment(None);
    Some(url)
}

/// URLs referenced by image elements: `<img src|srcset|data-src>`,
/// `<picture><source srcset>` and `<input type=image src>`.
fn image_sources(doc: &Html, base: &Url) -> HashSet<String> {
    let mut out = HashSet::new();
    let img = selector("img, picture source, input[type=image]");
    for el in doc.select(&img) {
        let v = el.value();
        for attr in ["src", "data-src"] {
            if let Some(u) = v.attr(attr).and_then(|s| resolve(base, s)) {
                out.insert(u.to_string());
            }
        }
        if let Some(set) = v.attr("srcset") {
            for candidate in set.split(',') {
                if let Some(u) = candidate
                    .split_whitespace()
                    .next()
                    .and_then(|s| resolve(base, s))
                {
                    out.insert(u.to_string());
                }
            }
        }
    }
    out
}

/// Absolute, deduplicated, in-scope anchor targets in document order.
///
/// Image element sources are never returned, neither are anchors that point
/// at an image source found on the same page or whose path has an excluded
/// extension.
pub fn extract_links(html: &str, base_url: &str, policy: &LinkFilterPolicy) -> Vec<String> {
    let Ok(base) = Url::parse(base_url) else {
        return Vec::new();
    };
    let doc = Html::parse_document(html);
    let images = if policy.exclude_image_embedded {
        image_sources(&doc, &base)
    } else {
        HashSet::new()
    };
    let anchors = selector("a[href]");
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for el in doc.select(&anchors) {
        let Some(url) = el.value().attr("href").and_then(|h| resolve(&base, h)) else {
            continue;
        };
        if !policy.in_scope(&url) {
            continue;
        }
        let text = url.to_string();
        if images.contains(&text) || policy.has_excluded_extension(&text) {
            continue;
        }
        if seen.insert(text.clone()) {
            out.push(text);
        }
    }
    out
}

/// Keeps URLs whose total length lies within the policy's bounds.
pub fn filter_listing_urls(urls: &[String], policy: &LinkFilterPolicy) -> Vec<String> {
    urls.iter()
        .filter(|u| policy.listing_len_ok(u))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EntryState {
    Queued,
    Active,
    Dead,
}

impl EntryState {
    fn as_str(&self) -> &'static str {
        match self {
            EntryState::Queued => "Queued",
            EntryState::Active => "Active",
            EntryState::Dead => "Dead",
        }
    }

    fn parse(raw: &str) -> Option<Self> {
        match raw {
            "Queued" => Some(EntryState::Queued),
            "Active" => Some(EntryState::Active),
            "Dead" => Some(EntryState::Dead),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub url: String,
    pub discovered_from: String,
    pub state: EntryState,
    pub enqueued_at: NaiveDateTime,
    pub probe_attempts: u32,
}

#[derive(Debug, Default)]
struct FrontierState {
    /// Queued and Active entries, in enqueue order.
    working: Vec<QueueEntry>,
    position: HashMap<String, usize>,
    pending: VecDeque<String>,
    dead: Vec<QueueEntry>,
    dead_urls: HashSet<String>,
    total_enqueued: usize,
}

struct LogFiles {
    log_path: PathBuf,
    audit_path: PathBuf,
    log: File,
    audit: File,
}

/// Shared crawl queue. All operations take `&self` and are linearizable.
pub struct Frontier {
    state: Mutex<FrontierState>,
    files: Option<Mutex<LogFiles>>,
    clock: SharedClock,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeCounts {
    pub activated: usize,
    pub deleted: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeOptions {
    /// Extra attempts after the first non-200 answer.
    pub retry_budget: u32,
    pub retry_spacing: Duration,
    pub workers: usize,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            retry_budget: 2,
            retry_spacing: Duration::from_secs(1),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchTransportError(pub String);

impl Frontier {
    pub fn in_memory(clock: SharedClock) -> Self {
        Frontier {
            state: Mutex::new(FrontierState::default()),
            files: None,
            clock,
        }
    }

    /// Opens (or creates) a persisted frontier, replaying the state log.
    pub fn open(log_path: &Path, audit_path: &Path, clock: SharedClock) -> Result<Self, FrontierError> {
        let mut state = FrontierState::default();
        if log_path.exists() {
            replay_log(log_path, &mut state)?;
        }
        for p in [log_path, audit_path] {
            if let Some(parent) = p.parent() {
                fs::create_dir_all(parent).map_err(|source| FrontierError::Io {
                    path: parent.to_path_buf(),
                    source,
                })?;
            }
        }
        let open = |p: &Path| {
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(|source| FrontierError::Io {
                    path: p.to_path_buf(),
                    source,
                })
        };
        let files = LogFiles {
            log: open(log_path)?,
            audit: open(audit_path)?,
            log_path: log_path.to_path_buf(),
            audit_path: audit_path.to_path_buf(),
        };
        Ok(Frontier {
            state: Mutex::new(state),
            files: Some(Mutex::new(files)),
            clock,
        })
    }

    fn record(&self, entry: &QueueEntry, at: NaiveDateTime) {
        let Some(files) = &self.files else { return };
        let mut files = files.lock();
        let line = format!(
            "{}\t{}\t{}\t{}\n",
            format_timestamp(&at),
            entry.state.as_str(),
            entry.url,
            entry.discovered_from
        );
        if let Err(e) = files.log.write_all(line.as_bytes()) {
            tracing::error!(path = %files.log_path.display(), "frontier log write failed: {e}");
        }
        if entry.state == EntryState::Dead {
            let audit = format!(
                "{}\t{}\t{}\t{}\n",
                format_timestamp(&at),
                entry.url,
                entry.probe_attempts,
                entry.discovered_from
            );
            if let Err(e) = files.audit.write_all(audit.as_bytes()) {
                tracing::error!(path = %files.audit_path.display(), "audit log write failed: {e}");
            }
        }
    }

    /// Adds a URL once. Returns false (and changes nothing) for URLs already
    /// known in any state.
    pub fn enqueue(&self, url: &str, discovered_from: &str) -> bool {
        let now = self.clock.now_naive();
        let entry = {
            let mut st = self.state.lock();
            if st.position.contains_key(url) || st.dead_urls.contains(url) {
                return false;
            }
            let entry = QueueEntry {
                url: url.to_string(),
                discovered_from: discovered_from.to_string(),
                state: EntryState::Queued,
                enqueued_at: now,
                probe_attempts: 0,
            };
            let idx = st.working.len();
            st.working.push(entry.clone());
            st.position.insert(url.to_string(), idx);
            st.pending.push_back(url.to_string());
            st.total_enqueued += 1;
            entry
        };
        self.record(&entry, now);
        true
    }

    /// Atomically takes the next Queued URL for probing.
    pub fn claim_next(&self) -> Option<String> {
        self.state.lock().pending.pop_front()
    }

    /// Resolves a claimed entry. Dead entries leave the working set and move
    /// to the audit log.
    pub fn resolve(&self, url: &str, alive: bool, attempts: u32) {
        let now = self.clock.now_naive();
        let entry = {
            let mut st = self.state.lock();
            let Some(&idx) = st.position.get(url) else { return };
            if st.working[idx].state != EntryState::Queued {
                return;
            }
            st.working[idx].probe_attempts = attempts;
            if alive {
                st.working[idx].state = EntryState::Active;
                st.working[idx].clone()
            } else {
                let mut entry = st.working.remove(idx);
                entry.state = EntryState::Dead;
                st.position.remove(url);
                reindex(&mut st, idx);
                st.dead_urls.insert(entry.url.clone());
                st.dead.push(entry.clone());
                entry
            }
        };
        self.record(&entry, now);
    }

    pub fn entries(&self) -> Vec<QueueEntry> {
        self.state.lock().working.clone()
    }

    pub fn queued(&self) -> Vec<String> {
        self.urls_in(EntryState::Queued)
    }

    pub fn active(&self) -> Vec<String> {
        self.urls_in(EntryState::Active)
    }

    fn urls_in(&self, state: EntryState) -> Vec<String> {
        self.state
            .lock()
            .working
            .iter()
            .filter(|e| e.state == state)
            .map(|e| e.url.clone())
            .collect()
    }

    pub fn dead_audit(&self) -> Vec<QueueEntry> {
        self.state.lock().dead.clone()
    }

    pub fn len(&self) -> usize {
        self.state.lock().working.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_enqueued(&self) -> usize {
        self.state.lock().total_enqueued
    }

    pub fn clock(&self) -> &SharedClock {
        &self.clock
    }
}

fn reindex(st: &mut FrontierState, from: usize) {
    for i in from..st.working.len() {
        let key = st.working[i].url.clone();
        st.position.insert(key, i);
    }
}

fn replay_log(path: &Path, st: &mut FrontierState) -> Result<(), FrontierError> {
    let file = File::open(path).map_err(|source| FrontierError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| FrontierError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.is_empty() {
            continue;
        }
        let corrupt = |reason: &str| FrontierError::CorruptLog {
            path: path.to_path_buf(),
            line: i + 1,
            reason: reason.to_string(),
        };
        let cols: Vec<&str> = line.splitn(4, '\t').collect();
        if cols.len() != 4 {
            return Err(corrupt("expected 4 tab-separated columns"));
        }
        let at = parse_timestamp(cols[0]).ok_or_else(|| corrupt("bad timestamp"))?;
        let state = EntryState::parse(cols[1]).ok_or_else(|| corrupt("bad state"))?;
        let url = cols[2].to_string();
        match state {
            EntryState::Queued => {
                if st.position.contains_key(&url) || st.dead_urls.contains(&url) {
                    continue;
                }
                let idx = st.working.len();
                st.working.push(QueueEntry {
                    url: url.clone(),
                    discovered_from: cols[3].to_string(),
                    state,
                    enqueued_at: at,
                    probe_attempts: 0,
                });
                st.position.insert(url.clone(), idx);
                st.total_enqueued += 1;
            }
            EntryState::Active => {
                if let Some(&idx) = st.position.get(&url) {
                    st.working[idx].state = EntryState::Active;
                }
            }
            EntryState::Dead => {
                if let Some(idx) = st.position.remove(&url) {
                    let mut entry = st.working.remove(idx);
                    entry.state = EntryState::Dead;
                    reindex(st, idx);
                    st.dead_urls.insert(url);
                    st.dead.push(entry);
                }
            }
        }
    }
    st.pending = st
        .working
        .iter()
        .filter(|e| e.state == EntryState::Queued)
        .map(|e| e.url.clone())
        .collect();
    Ok(())
}

/// Probes every Queued entry: status 200 promotes it to Active, anything
/// else (after the retry budget) moves it to the dead audit log. Transport
/// errors count as non-200.
pub fn probe_liveness<F>(frontier: &Frontier, fetch_fn: F, opts: ProbeOptions) -> ProbeCounts
where
    F: Fn(&str) -> Result<u16, FetchTransportError> + Sync,
{
    let activated = std::sync::atomic::AtomicUsize::new(0);
    let deleted = std::sync::atomic::AtomicUsize::new(0);
    let worker = || {
        while let Some(url) = frontier.claim_next() {
            let mut attempts = 0;
            let alive = loop {
                attempts += 1;
                match fetch_fn(&url) {
                    Ok(200) => break true,
                    Ok(status) => tracing::debug!(%url, status, attempts, "probe not alive"),
                    Err(e) => tracing::debug!(%url, error = %e.0, attempts, "probe transport error"),
                }
                if attempts > opts.retry_budget {
                    break false;
                }
                frontier.clock().sleep(opts.retry_spacing);
            };
            frontier.resolve(&url, alive, attempts);
            let counter = if alive { &activated } else { &deleted };
            counter.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        }
    };
    std::thread::scope(|s| {
        for _ in 0..opts.workers.max(1) {
            s.spawn(worker);
        }
    });
    ProbeCounts {
        activated: activated.into_inner(),
        deleted: deleted.into_inner(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlReport {
    pub pages_fetched: usize,
    pub pages_skipped: usize,
    pub listings_enqueued: usize,
}

/// Breadth-first discovery from `seed_url`. Navigation pages are fetched up
/// to `max_depth - 1` hops; links matching the listing URL length bounds are
/// enqueued rather than fetched.
///
/// `fetch` returns `Ok(None)` for a page that should be skipped (e.g. 404)
/// and `Err` to abort the crawl.
pub fn crawl<F, E>(
    seed_url: &str,
    policy: &LinkFilterPolicy,
    max_depth: usize,
    frontier: &Frontier,
    mut fetch: F,
) -> Result<CrawlReport, E>
where
    F: FnMut(&str) -> Result<Option<String>, E>,
{
    let mut report = CrawlReport::default();
    let mut visited: HashSet<String> = HashSet::new();
    let mut queue: VecDeque<(String, usize)> = VecDeque::new();
    let seed = Url::parse(seed_url)
        .map(|mut u| {
            u.set_fragment(None);
            u.to_string()
        })
        .unwrap_or_else(|_| seed_url.to_string());
    visited.insert(seed.clone());
    queue.push_back((seed, 0));

    while let Some((page, depth)) = queue.pop_front() {
        let Some(html) = fetch(&page)? else {
            report.pages_skipped += 1;
            continue;
        };
        report.pages_fetched += 1;
        for link in extract_links(&html, &page, policy) {
            if policy.listing_len_ok(&link) {
                if frontier.enqueue(&link, &page) {
                    report.listings_enqueued += 1;
                }
            } else if depth + 1 < max_depth && visited.insert(link.clone()) {
                queue.push_back((link, depth + 1));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{Clock, ManualClock, SystemClock};
    use std::sync::Arc;

    fn policy() -> LinkFilterPolicy {
        LinkFilterPolicy::new("market.onion").with_url_len(0, usize::MAX)
    }

    #[test]
    fn anchors_only_no_images() {
        let html = r#"<html><body>
            <a href="/a">a</a><a href="http://market.onion/b#frag">b</a>
            <a href="c?page=2">c</a>
            <img src="/photo.jpg"><img src="/thumb">
            </body></html>"#;
        let links = extract_links(html, "http://market.onion/", &policy());
        assert_eq!(
            links,
            vec![
                "http://market.onion/a",
                "http://market.onion/b",
                "http://market.onion/c?page=2"
            ]
        );
    }

    #[test]
    fn image_only_page_yields_nothing() {
        let html = r#"<img src="http://market.onion/listing/xyz">"#;
        assert!(extract_links(html, "http://market.onion/", &policy()).is_empty());
    }

    #[test]
    fn anchor_to_image_source_or_extension_is_dropped() {
        let html = r#"
            <a href="/view/1"><img src="/view/1"></a>
            <a href="/banner.PNG">banner</a>
            <a href="/pic.webp?x=1">pic</a>
            <picture><source srcset="/hero 1x, /hero2 2x"></picture>
            <a href="/hero2">hero</a>
            <a href="/ok">ok</a>"#;
        let links = extract_links(html, "http://market.onion/", &policy());
        assert_eq!(links, vec!["http://market.onion/ok"]);
    }

    #[test]
    fn off_host_and_non_http_dropped() {
        let html = r#"
            <a href="http://other.onion/x">x</a>
            <a href="mailto:a@b.c">m</a>
            <a href="javascript:void(0)">j</a>
            <a href="/y">y</a><a href="/y">dup</a>"#;
        let links = extract_links(html, "http://market.onion/", &policy());
        assert_eq!(links, vec!["http://market.onion/y"]);
    }

    #[test]
    fn malformed_html_is_tolerated() {
        let html = "<div><a href='/one'>one<p><a href=/two>two</div></span>";
        assert_eq!(extract_links(html, "http://market.onion/", &policy()).len(), 2);
        assert!(extract_links("", "http://market.onion/", &policy()).is_empty());
    }

    #[test]
    fn scope_with_port() {
        let p = LinkFilterPolicy::new("127.0.0.1:8080");
        assert!(p.in_scope(&Url::parse("http://127.0.0.1:8080/x").unwrap()));
        assert!(!p.in_scope(&Url::parse("http://127.0.0.1:9090/x").unwrap()));
    }

    #[test]
    fn length_bounds() {
        let p = LinkFilterPolicy::new("m.onion");
        let long = format!("http://m.onion/{}", "a".repeat(117 - 15));
        assert_eq!(long.len(), 117);
        let short = format!("http://m.onion/{}", "b".repeat(35));
        assert_eq!(short.len(), 50);
        assert_eq!(filter_listing_urls(&[long.clone(), short], &p), vec![long]);
        let all = vec!["x".to_string(), "y".repeat(500)];
        assert_eq!(filter_listing_urls(&all, &p.with_url_len(0, usize::MAX)), all);
    }

    #[test]
    fn policy_validation() {
        assert!(LinkFilterPolicy::new("h").with_url_len(5, 4).validate().is_err());
        assert!(LinkFilterPolicy::new(" ").validate().is_err());
        assert!(LinkFilterPolicy::new("h").validate().is_ok());
    }

    #[test]
    fn enqueue_dedups() {
        let f = Frontier::in_memory(Arc::new(SystemClock));
        assert!(f.enqueue("u1", "seed"));
        assert!(!f.enqueue("u1", "seed"));
        let url = f.claim_next().unwrap();
        f.resolve(&url, true, 1);
        assert!(!f.enqueue("u1", "other"));
        for i in 0..10 {
            f.enqueue(&format!("n{i}"), "seed");
        }
        assert_eq!(f.len(), 11);
    }

    #[test]
    fn probe_statuses() {
        let clock = Arc::new(ManualClock::at_default_epoch());
        let f = Frontier::in_memory(clock.clone());
        f.enqueue("live", "s");
        f.enqueue("gone", "s");
        f.enqueue("flaky", "s");
        let flaky_calls = std::sync::atomic::AtomicU32::new(0);
        let t0 = clock.now();
        let counts = probe_liveness(
            &f,
            |u| match u {
                "live" => Ok(200),
                "gone" => Ok(404),
                _ => {
                    if flaky_calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst) < 2 {
                        Err(FetchTransportError("timeout".into()))
                    } else {
                        Ok(200)
                    }
                }
            },
            ProbeOptions::default(),
        );
        assert_eq!(counts, ProbeCounts { activated: 2, deleted: 1 });
        assert!(f.queued().is_empty());
        assert_eq!(f.active(), vec!["live", "flaky"]);
        let dead = f.dead_audit();
        assert_eq!(dead.len(), 1);
        assert_eq!((dead[0].url.as_str(), dead[0].probe_attempts), ("gone", 3));
        // two retries for "gone" and two for "flaky", 1s apart
        assert_eq!((clock.now() - t0).num_seconds(), 4);
    }

    #[test]
    fn persisted_log_replays() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("f.log");
        let audit = dir.path().join("f.audit.log");
        let clock: SharedClock = Arc::new(ManualClock::at_default_epoch());
        {
            let f = Frontier::open(&log, &audit, clock.clone()).unwrap();
            f.enqueue("a", "seed");
            f.enqueue("b", "seed");
            f.enqueue("c", "seed");
            probe_liveness(
                &f,
                |u| Ok(if u == "b" { 500 } else { 200 }),
                ProbeOptions { retry_budget: 0, ..Default::default() },
            );
            f.enqueue("d", "a");
        }
        let f = Frontier::open(&log, &audit, clock).unwrap();
        assert_eq!(f.active(), vec!["a", "c"]);
        assert_eq!(f.queued(), vec!["d"]);
        assert_eq!(f.dead_audit().len(), 1);
        assert!(!f.enqueue("b", "x"));
        assert_eq!(f.claim_next().as_deref(), Some("d"));
        let audit_text = fs::read_to_string(&audit).unwrap();
        assert_eq!(audit_text.lines().count(), 1);
        assert!(audit_text.contains("\tb\t1\tseed"));
    }

    #[test]
    fn crawl_respects_depth_and_listing_bounds() {
        let p = LinkFilterPolicy::new("m.onion").with_url_len(30, 40);
        let listing = |n: u32| format!("http://m.onion/listing/{n:0>15}");
        assert_eq!(listing(1).len(), 38);
        let pages: HashMap<String, String> = [
            ("http://m.onion/".to_string(), r#"<a href="/cat">c</a>"#.to_string()),
            (
                "http://m.onion/cat".to_string(),
                format!(r#"<a href="{}">l</a><a href="/cat/2">p2</a>"#, listing(1)),
            ),
            (
                "http://m.onion/cat/2".to_string(),
                format!(r#"<a href="{}">l</a><a href="/deeper">d</a>"#, listing(2)),
            ),
        ]
        .into_iter()
        .collect();
        let f = Frontier::in_memory(Arc::new(SystemClock));
        let mut fetched = Vec::new();
        let report = crawl::<_, ()>("http://m.onion/", &p, 3, &f, |u| {
            fetched.push(u.to_string());
            Ok(pages.get(u).cloned())
        })
        .unwrap();
        assert_eq!(fetched, vec!["http://m.onion/", "http://m.onion/cat", "http://m.onion/cat/2"]);
        assert_eq!(report.listings_enqueued, 2);
        assert_eq!(f.queued(), vec![listing(1), listing(2)]);
    }
}
