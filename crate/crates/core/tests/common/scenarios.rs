//! Simulator-backed runs shared by the defense tests and the acceptance
//! target. Each returns measurements; callers decide what passes.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use darknet_miner::dndo::Dndo;
use darknet_miner::extractor::{IndexSink, OutboxSink};
use darknet_miner::frontier::{Frontier, ProbeOptions, DEFAULT_CRAWL_DEPTH};
use darknet_miner::harvester::{harvest, read_manifest, HarvestCounts, HarvestOptions, RateMode};
use darknet_miner::index::IndexStore;
use darknet_miner::marketsim::{scraped_fingerprint, RequestKind, RequestOutcome, SimConfig, UrlScheme};
use darknet_miner::pipeline::{discover, ingest};

use super::{fast_policy, Harness};

/// Client start delay: 10 requests per second, above every tested limit.
pub const START_DELAY_MS: u64 = 100;

#[derive(Debug, Clone)]
pub struct RateOutcome {
    pub limit_rps: f64,
    pub saved: usize,
    pub expected: usize,
    /// 429 responses among listing requests in the second half of the run.
    pub throttled_fraction: f64,
    /// Listing pages served per virtual second over the second half.
    pub served_rps: f64,
}

pub fn rate_convergence(limit_rps: f64, listings: usize) -> RateOutcome {
    let mut cfg = SimConfig {
        listing_count: listings,
        dead_links: 0,
        ..Default::default()
    };
    cfg.defense.rate_limit_mode = RateMode::Http429;
    cfg.defense.limit_rps = limit_rps;
    let h = Harness::new(cfg, fast_policy(START_DELAY_MS));
    let tmp = tempfile::tempdir().unwrap();
    let urls = h.server.market().listing_urls().to_vec();
    let counts = harvest(&h.client, &urls, tmp.path(), &HarvestOptions::default()).unwrap();

    let entries: Vec<_> = h
        .server
        .log()
        .entries()
        .into_iter()
        .filter(|e| e.kind == RequestKind::Listing)
        .collect();
    let tail = &entries[entries.len() / 2..];
    let throttled = tail.iter().filter(|e| e.outcome == RequestOutcome::Throttled429).count();
    let served = tail.iter().filter(|e| e.outcome == RequestOutcome::Served).count();
    let span = (tail.last().unwrap().at - tail.first().unwrap().at).num_milliseconds() as f64 / 1000.0;
    RateOutcome {
        limit_rps,
        saved: counts.saved,
        expected: listings,
        throttled_fraction: throttled as f64 / tail.len() as f64,
        served_rps: if span > 0.0 { (served.saturating_sub(1)) as f64 / span } else { 0.0 },
    }
}

#[derive(Debug, Clone)]
pub struct SilentOutcome {
    pub silent_served: usize,
    pub detected: usize,
    pub saved: usize,
    pub expected: usize,
    pub parsed_identical: usize,
    pub parse_failures: usize,
}

pub fn silent_mode(limit_rps: f64, listings: usize) -> SilentOutcome {
    let mut cfg = SimConfig {
        listing_count: listings,
        dead_links: 0,
        ..Default::default()
    };
    cfg.defense.rate_limit_mode = RateMode::Silent;
    cfg.defense.limit_rps = limit_rps;
    let h = Harness::new(cfg, fast_policy(START_DELAY_MS));
    let tmp = tempfile::tempdir().unwrap();
    let inbox = tmp.path().join("inbox");
    let urls = h.server.market().listing_urls().to_vec();
    let counts = harvest(&h.client, &urls, &inbox, &HarvestOptions::default()).unwrap();
    let silent_served = h.server.log().count_outcome(RequestOutcome::SilentThrottle);

    let outbox = tmp.path().join("outbox");
    let stats = ingest(&inbox, &h.profile, &OutboxSink::new(&outbox), &tmp.path().join("q")).unwrap();
    let got: BTreeMap<String, Dndo> = std::fs::read_dir(&outbox)
        .unwrap()
        .flatten()
        .map(|e| {
            let d = darknet_miner::dndo::parse_dndo(&std::fs::read_to_string(e.path()).unwrap()).unwrap();
            (d.doc_id(), d)
        })
        .collect();
    let parsed_identical = h
        .server
        .market()
        .ground_truth()
        .iter()
        .filter(|t| got.get(&t.doc_id()).is_some_and(|d| scraped_fingerprint(d) == scraped_fingerprint(t)))
        .count();
    SilentOutcome {
        silent_served,
        detected: counts.silent_blocks,
        saved: counts.saved,
        expected: listings,
        parsed_identical,
        parse_failures: stats.failed,
    }
}

#[derive(Debug, Clone)]
pub struct CaptchaOutcome {
    pub first: HarvestCounts,
    pub second: HarvestCounts,
    /// Listing pages served with content during the resumed run.
    pub served_on_resume: u64,
    pub manifest_rows: usize,
    pub manifest_unique: usize,
    pub handoff_written: bool,
}

pub fn captcha_resume(listings: usize, gate_after: u64) -> CaptchaOutcome {
    let mut cfg = SimConfig {
        listing_count: listings,
        dead_links: 0,
        ..Default::default()
    };
    cfg.defense.captcha_after_requests = Some(gate_after);
    let h = Harness::new(cfg, fast_policy(50));
    let tmp = tempfile::tempdir().unwrap();
    let urls = h.server.market().listing_urls().to_vec();
    let first = harvest(&h.client, &urls, tmp.path(), &HarvestOptions::default()).unwrap();
    let market_dir = tmp.path().join(h.server.market().market_id());
    let handoff_written = market_dir.join(darknet_miner::harvester::HANDOFF_FILE).exists();

    h.renew_session();
    let before = h.server.listing_serves();
    let opts = HarvestOptions {
        workers: 1,
        session_probe_url: Some(h.server.market().seed_url()),
    };
    let second = harvest(&h.client, &urls, tmp.path(), &opts).unwrap();
    let served_on_resume = h.server.listing_serves() - before;
    let manifest = read_manifest(&market_dir).unwrap();
    let unique: HashSet<&str> = manifest.iter().map(|e| e.url.as_str()).collect();
    CaptchaOutcome {
        first,
        second,
        served_on_resume,
        manifest_rows: manifest.len(),
        manifest_unique: unique.len(),
        handoff_written,
    }
}

#[derive(Debug, Clone)]
pub struct EndToEndOutcome {
    pub listings: usize,
    pub active: usize,
    pub saved: usize,
    pub indexed: usize,
    pub identical: usize,
    pub image_fetches: usize,
    pub off_scope_fetches: usize,
    pub total_requests: usize,
    pub virtual_elapsed: Duration,
    pub wall: Duration,
}

/// crawl, probe, harvest, parse and index against a defended market.
pub fn end_to_end(listings: usize, limit_rps: f64) -> EndToEndOutcome {
    let started = Instant::now();
    let mut cfg = SimConfig {
        seed: 7,
        listing_count: listings,
        url_scheme: UrlScheme::RandomHex,
        ..Default::default()
    };
    cfg.defense.rate_limit_mode = RateMode::Http429;
    cfg.defense.limit_rps = limit_rps;
    cfg.defense.session_required = true;
    let h = Harness::new(cfg, fast_policy(START_DELAY_MS));
    let t0 = darknet_miner::clock::Clock::now(&*h.clock);
    h.renew_session();

    let frontier = Frontier::in_memory(h.shared_clock());
    let seed = h.server.market().seed_url();
    discover(&h.client, &seed, DEFAULT_CRAWL_DEPTH, &frontier, ProbeOptions::default()).unwrap();
    let active = frontier.active();

    let tmp = tempfile::tempdir().unwrap();
    let inbox = tmp.path().join("inbox");
    let counts = harvest(&h.client, &active, &inbox, &HarvestOptions::default()).unwrap();

    let store = Arc::new(IndexStore::open(tmp.path().join("data"), h.shared_clock()).unwrap());
    let sink = IndexSink::new(store.clone(), "sim");
    ingest(&inbox, &h.profile, &sink, &tmp.path().join("q")).unwrap();
    let got: BTreeMap<String, Dndo> = store
        .read("sim", |c| c.docs().map(|(k, d)| (k.clone(), d.clone())).collect())
        .unwrap_or_default();
    let identical = h
        .server
        .market()
        .ground_truth()
        .iter()
        .filter(|t| got.get(&t.doc_id()).is_some_and(|d| scraped_fingerprint(d) == scraped_fingerprint(t)))
        .count();
    let t1 = darknet_miner::clock::Clock::now(&*h.clock);
    EndToEndOutcome {
        listings,
        active: active.len(),
        saved: counts.saved,
        indexed: got.len(),
        identical,
        image_fetches: h.server.log().image_fetches(),
        off_scope_fetches: h.server.log().off_scope_fetches(),
        total_requests: h.server.log().len(),
        virtual_elapsed: (t1 - t0).to_std().unwrap_or_default(),
        wall: started.elapsed(),
    }
}
