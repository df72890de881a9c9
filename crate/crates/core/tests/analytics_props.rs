mod common;

use common::oracles::*;
use darknet_miner::analytics::{self, AnalyticsError, DEFAULT_PRICE_EDGES};
use darknet_miner::dndo::{Dndo, ProductClass};
use proptest::prelude::*;

fn docs(specs: &[DocSpec]) -> Vec<Dndo> {
    specs.iter().enumerate().map(|(i, s)| s.to_dndo(i)).collect()
}

fn class_strategy() -> impl Strategy<Value = Option<ProductClass>> {
    prop_oneof![Just(None), Just(Some(ProductClass::Digital)), Just(Some(ProductClass::Physical))]
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

fn edges_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop_oneof![
        Just(DEFAULT_PRICE_EDGES.to_vec()),
        proptest::collection::btree_set(0u32..3000, 2..8)
            .prop_map(|s| s.into_iter().map(|c| c as f64 / 2.0).collect()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn class_split_matches(specs in corpus(0, 120)) {
        let got = analytics::product_class_split(&docs(&specs));
        let (dig, phy, unk) = split_oracle(&specs);
        if specs.is_empty() || dig + phy == 0 {
            prop_assert!(matches!(got, Err(AnalyticsError::EmptyCorpus(_))));
        } else {
            let got = got.unwrap();
            prop_assert_eq!(got.unknown, unk);
            prop_assert_eq!(got.shares[0].numerator, dig);
            prop_assert_eq!(got.shares[1].numerator, phy);
            prop_assert!(close(got.shares[0].percent, percent(dig, dig + phy)));
            prop_assert!(close(got.shares[0].percent + got.shares[1].percent, 100.0));
        }
    }

    #[test]
    fn top_sellers_matches(specs in corpus(0, 120), n in 0usize..8, class in class_strategy()) {
        let got = analytics::top_sellers(&docs(&specs), n, class);
        prop_assert_eq!(got.rows, top_sellers_oracle(&specs, n, class));
    }

    #[test]
    fn heatmap_matches(specs in corpus(0, 120), top_k in 1usize..7) {
        let got = analytics::category_origin_heatmap(&docs(&specs), top_k);
        match heatmap_oracle(&specs, top_k) {
            None => prop_assert!(matches!(got, Err(AnalyticsError::EmptyCorpus(_)))),
            Some(want) => {
                let got = got.unwrap();
                prop_assert_eq!(got.row_labels, want.rows);
                prop_assert_eq!(got.col_labels, want.cols);
                prop_assert_eq!(got.cells, want.cells);
            }
        }
    }

    #[test]
    fn price_histogram_matches(specs in corpus(0, 120), class in class_strategy(), edges in edges_strategy()) {
        let got = analytics::price_histogram(&docs(&specs), class, &edges).unwrap();
        let want = price_oracle(&specs, class, &edges);
        prop_assert_eq!(got.buckets.iter().map(|b| b.count).collect::<Vec<_>>(), want.buckets);
        prop_assert_eq!(
            (got.underflow, got.overflow, got.unparsed, got.other_currency),
            (want.underflow, want.overflow, want.unparsed, want.other_currency)
        );
    }

    #[test]
    fn payment_share_matches(specs in corpus(1, 120)) {
        let got = analytics::payment_share(&docs(&specs)).unwrap();
        let want = payment_oracle(&specs);
        prop_assert_eq!(got.shares.len(), want.len());
        for (g, (label, n)) in got.shares.iter().zip(&want) {
            prop_assert_eq!(&g.subject, label);
            prop_assert_eq!(g.numerator, *n);
            prop_assert!(close(g.percent, percent(*n, specs.len() as u64)));
        }
    }

    #[test]
    fn quantity_distribution_matches(specs in corpus(0, 120), n in 0usize..8) {
        let got = analytics::quantity_distribution(&docs(&specs), n);
        prop_assert_eq!(got.rows, quantity_oracle(&specs, n));
    }

    #[test]
    fn origin_range_matches(specs in corpus(0, 120), country in proptest::sample::select(vec!["Canada", "Germany", "Narnia"])) {
        let got = analytics::origin_attribution_range(&docs(&specs), country).unwrap();
        let (exact, ww, total, lo, hi) = origin_range_oracle(&specs, country);
        prop_assert_eq!((got.exact, got.worldwide, got.total), (exact, ww, total));
        prop_assert!(close(got.min_percent, lo) && close(got.max_percent, hi));
        prop_assert!(got.min_percent <= got.max_percent);
    }
}

#[test]
fn reference_seller_ranking_is_reproduced() {
    let counts = [("PMS", 123u64), ("TheShop", 258), ("GoldApple", 362), ("DrunkDragon", 1114), ("OnePiece", 268)];
    let specs: Vec<DocSpec> = counts
        .iter()
        .flat_map(|(seller, n)| {
            (0..*n).map(move |_| DocSpec {
                title: vec!["card"],
                seller: Some(seller),
                class: ProductClass::Digital,
                category: None,
                origin: None,
                payment: None,
                price: PriceSpec::Unparsed("None"),
                quantity: None,
                notes: None,
                flagged: None,
            })
        })
        .collect();
    let got = analytics::top_sellers(&docs(&specs), 5, None);
    let want: Vec<(String, u64)> = [("DrunkDragon", 1114), ("GoldApple", 362), ("OnePiece", 268), ("TheShop", 258), ("PMS", 123)]
        .iter()
        .map(|(s, n)| (s.to_string(), *n))
        .collect();
    assert_eq!(got.rows, want);
}

#[test]
fn bad_edges_are_rejected() {
    for edges in [vec![], vec![5.0], vec![5.0, 1.0], vec![1.0, 1.0], vec![-1.0, 2.0], vec![0.0, f64::NAN]] {
        assert!(matches!(
            analytics::price_histogram(&[], None, &edges),
            Err(AnalyticsError::BadEdges(_))
        ));
    }
}
