mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use darknet_miner::dndo::Dndo;
use darknet_miner::extractor::IndexSink;
use darknet_miner::frontier::{Frontier, ProbeOptions, DEFAULT_CRAWL_DEPTH};
use darknet_miner::harvester::{harvest, HarvestOptions, RateMode};
use darknet_miner::index::IndexStore;
use darknet_miner::marketsim::{scraped_fingerprint, SimConfig};
use darknet_miner::pipeline::{discover, ingest};

use common::{fast_policy, Harness};

#[test]
fn small_market_round_trip() {
    let mut cfg = SimConfig {
        listing_count: 80,
        ..Default::default()
    };
    cfg.defense.rate_limit_mode = RateMode::Http429;
    cfg.defense.limit_rps = 5.0;
    cfg.defense.session_required = true;
    let h = Harness::new(cfg, fast_policy(100));
    h.renew_session();

    let frontier = Frontier::in_memory(h.shared_clock());
    let seed = h.server.market().seed_url();
    let report = discover(&h.client, &seed, DEFAULT_CRAWL_DEPTH, &frontier, ProbeOptions::default()).unwrap();
    assert_eq!(report.probe.activated, 80);
    assert_eq!(report.probe.deleted, h.server.market().dead_urls().len());

    let tmp = tempfile::tempdir().unwrap();
    let inbox = tmp.path().join("inbox");
    let counts = harvest(&h.client, &frontier.active(), &inbox, &HarvestOptions::default()).unwrap();
    assert_eq!(counts.saved, 80);

    let store = Arc::new(IndexStore::open(tmp.path().join("data"), h.shared_clock()).unwrap());
    let sink = IndexSink::new(store.clone(), "sim");
    let stats = ingest(&inbox, &h.profile, &sink, &tmp.path().join("q")).unwrap();
    assert_eq!((stats.parsed, stats.failed, stats.deleted), (80, 0, 80));

    let got: BTreeMap<String, Dndo> = store.read("sim", |c| c.docs().map(|(k, d)| (k.clone(), d.clone())).collect()).unwrap();
    for truth in h.server.market().ground_truth() {
        let d = &got[&truth.doc_id()];
        assert_eq!(scraped_fingerprint(d), scraped_fingerprint(truth));
    }
    assert_eq!(h.server.log().image_fetches(), 0);
    assert_eq!(h.server.log().off_scope_fetches(), 0);
}
