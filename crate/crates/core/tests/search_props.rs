mod common;

use std::sync::Arc;

use common::oracles::{corpus, load, query, search_oracle, DocSpec, OracleFilters, NUMBER_PAIRS};
use darknet_miner::clock::ManualClock;
use darknet_miner::dndo::ProductClass;
use darknet_miner::index::{CorpusIndex, IndexStore, SearchField, SearchFilters};
use proptest::prelude::*;
use proptest::strategy::ValueTree;

fn build(specs: &[DocSpec]) -> (CorpusIndex, Vec<String>) {
    let mut idx = CorpusIndex::new("oracle");
    let ids = load(&mut idx, specs);
    (idx, ids)
}

fn field_name(f: Option<SearchField>) -> Option<&'static str> {
    f.map(|f| f.as_str())
}

fn check(idx: &CorpusIndex, specs: &[DocSpec], ids: &[String], q: &str, field: Option<SearchField>, of: &OracleFilters) {
    let filters = SearchFilters {
        product_class: of.class,
        flagged: of.flagged,
        seller: of.seller.map(str::to_string),
        ..Default::default()
    };
    let got = idx.search(q, field, &filters).unwrap();
    let want = search_oracle(specs, ids, q, field_name(field), of);
    let got_ids: Vec<&str> = got.iter().map(|h| h.doc_id.as_str()).collect();
    let want_ids: Vec<&str> = want.iter().map(|h| h.doc_id.as_str()).collect();
    assert_eq!(got_ids, want_ids, "query {q:?} field {field:?}");
    for (g, w) in got.iter().zip(&want) {
        assert_eq!(g.score, w.score);
        let fields: Vec<&str> = g.matched_fields.iter().map(|f| f.as_str()).collect();
        assert_eq!(fields, w.matched_fields);
    }
}

fn field_strategy() -> impl Strategy<Value = Option<SearchField>> {
    prop_oneof![
        3 => Just(None),
        1 => Just(Some(SearchField::Title)),
        1 => Just(Some(SearchField::Seller)),
        1 => Just(Some(SearchField::Category)),
        1 => Just(Some(SearchField::Notes)),
    ]
}

fn filter_strategy() -> impl Strategy<Value = OracleFilters> {
    (
        prop_oneof![3 => Just(None), 1 => Just(Some(ProductClass::Digital)), 1 => Just(Some(ProductClass::Physical))],
        prop_oneof![3 => Just(None), 1 => Just(Some(true)), 1 => Just(Some(false))],
        prop_oneof![3 => Just(None), 1 => Just(Some("NightOwl")), 1 => Just(Some("GoldApple"))],
    )
        .prop_map(|(class, flagged, seller)| OracleFilters { class, flagged, seller })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn search_matches_linear_scan(
        specs in corpus(0, 200),
        queries in proptest::collection::vec((query(), field_strategy(), filter_strategy()), 1..12),
    ) {
        let (idx, ids) = build(&specs);
        for (q, field, filters) in &queries {
            check(&idx, &specs, &ids, q, *field, filters);
        }
    }

    #[test]
    fn singular_and_plural_find_each_other(pairs in proptest::sample::subsequence(NUMBER_PAIRS.to_vec(), 20)) {
        let mut idx = CorpusIndex::new("pairs");
        for (i, (_, plural)) in pairs.iter().enumerate() {
            let mut d = darknet_miner::dndo::Dndo::empty(
                darknet_miner::dndo::parse_timestamp("2020-07-03 00:00:00").unwrap(),
            );
            d.url = Some(format!("http://p.onion/listing/{i}"));
            d.title = Some(format!("Premium {plural} Offer"));
            idx.index_record(d);
        }
        for (singular, plural) in &pairs {
            let hits = idx.search(singular, Some(SearchField::Title), &SearchFilters::default()).unwrap();
            prop_assert_eq!(hits.len(), 1, "{} should match {}", singular, plural);
            let back = idx.search(&plural.to_lowercase(), None, &SearchFilters::default()).unwrap();
            prop_assert_eq!(back.len(), 1);
        }
    }
}

#[test]
fn accounts_found_by_account() {
    let mut idx = CorpusIndex::new("x");
    let mut d = darknet_miner::dndo::Dndo::empty(darknet_miner::dndo::parse_timestamp("2020-07-03 00:00:00").unwrap());
    d.url = Some("http://x.onion/listing/1".into());
    d.category = Some("Accounts".into());
    let id = idx.index_record(d);
    let hits = idx.search("account", None, &SearchFilters::default()).unwrap();
    assert_eq!(hits.len(), 1);
    assert_eq!(hits[0].doc_id, id);
}

#[test]
fn store_search_all_merges_corpora_in_score_order() {
    let tmp = tempfile::tempdir().unwrap();
    let store = IndexStore::open(tmp.path(), Arc::new(ManualClock::at_default_epoch())).unwrap();
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let a = corpus(50, 51).new_tree(&mut runner).unwrap().current();
    let b = corpus(50, 51).new_tree(&mut runner).unwrap().current();
    store.create("a").unwrap();
    store.create("b").unwrap();
    store.index_records("a", a.iter().enumerate().map(|(i, s)| s.to_dndo(i))).unwrap();
    store.index_records("b", b.iter().enumerate().map(|(i, s)| s.to_dndo(i + 1000))).unwrap();
    let merged = store.search_all("account", None, &SearchFilters::default()).unwrap();
    let single: usize = ["a", "b"]
        .iter()
        .map(|n| store.search(n, "account", None, &SearchFilters::default()).unwrap().len())
        .sum();
    assert_eq!(merged.len(), single);
    assert!(merged.windows(2).all(|w| w[0].1.score >= w[1].1.score));
}
