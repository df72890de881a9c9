//! Brute-force reference implementations and random corpus generators.
//!
//! The oracles work from [`DocSpec`] values (what the generator put into a
//! record), never from the index or the analytics module.

use std::collections::BTreeSet;

use darknet_miner::dndo::{parse_timestamp, Dndo, PriceValue, ProductClass, QuantityValue};
use darknet_miner::index::{CorpusIndex, Mutation};
use proptest::prelude::*;
use rust_stemmers::{Algorithm, Stemmer};

pub const SELLERS: [&str; 6] = ["NightOwl", "GoldApple", "OnePiece", "TheShop", "PMS", "Grey Harbor"];
pub const CATEGORIES: [&str; 5] = ["Accounts", "Tutorials", "Gift Cards", "Jewelry", "Apparel"];
pub const ORIGINS: [&str; 5] = ["Worldwide", "Canada", "Germany", "United States", "Netherlands"];
pub const PAYMENTS: [&str; 3] = ["Escrow", "Direct", "Multisig"];
pub const CURRENCIES: [&str; 3] = ["USD", "EUR", "GBP"];
pub const QUANTITIES: [&str; 6] = ["1", " 10 ", "unlimited", "5 left", "Unlimited", "100"];
pub const UNPARSED_PRICES: [&str; 3] = ["free", "ask seller", "None"];

/// Time stamped on generated analyst comments.
pub const NOTE_STAMP: &str = "2020-07-04 09:00:00";

pub const VOCAB: [&str; 30] = [
    "account", "accounts", "card", "cards", "guide", "guides", "shop", "shops", "key", "keys", "ring", "rings",
    "jacket", "jackets", "netflix", "premium", "fresh", "tutorial", "tutorials", "bank", "banks", "login",
    "logins", "watch", "watches", "box", "boxes", "cheap", "verified", "gift",
];

/// Singular/plural pairs that must find each other.
pub const NUMBER_PAIRS: [(&str, &str); 24] = [
    ("account", "Accounts"),
    ("card", "Cards"),
    ("guide", "Guides"),
    ("shop", "Shops"),
    ("key", "Keys"),
    ("ring", "Rings"),
    ("jacket", "Jackets"),
    ("tutorial", "Tutorials"),
    ("bank", "Banks"),
    ("login", "Logins"),
    ("watch", "Watches"),
    ("box", "Boxes"),
    ("vendor", "Vendors"),
    ("seller", "Sellers"),
    ("pill", "Pills"),
    ("gram", "Grams"),
    ("service", "Services"),
    ("document", "Documents"),
    ("license", "Licenses"),
    ("passport", "Passports"),
    ("voucher", "Vouchers"),
    ("subscription", "Subscriptions"),
    ("wallet", "Wallets"),
    ("phone", "Phones"),
];

#[derive(Debug, Clone, PartialEq)]
pub enum PriceSpec {
    Parsed { cents: u64, currency: &'static str },
    Unparsed(&'static str),
}

impl PriceSpec {
    fn raw(&self) -> String {
        match self {
            PriceSpec::Parsed { cents, currency } => format!("{}.{:02} {currency}", cents / 100, cents % 100),
            PriceSpec::Unparsed(raw) => raw.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocSpec {
    pub title: Vec<&'static str>,
    pub seller: Option<&'static str>,
    pub class: ProductClass,
    pub category: Option<&'static str>,
    pub origin: Option<&'static str>,
    pub payment: Option<&'static str>,
    pub price: PriceSpec,
    pub quantity: Option<&'static str>,
    pub notes: Option<Vec<&'static str>>,
    pub flagged: Option<bool>,
}

impl DocSpec {
    pub fn title_text(&self) -> String {
        self.title.join(" ")
    }

    pub fn to_dndo(&self, i: usize) -> Dndo {
        let mut d = Dndo::empty(parse_timestamp("2020-07-03 16:56:42").unwrap());
        d.url = Some(format!("http://oracle.onion/listing/{i:06}"));
        d.title = Some(self.title_text());
        d.seller = self.seller.map(str::to_string);
        d.product_class = self.class;
        d.category = self.category.map(str::to_string);
        d.origin_country = self.origin.map(str::to_string);
        d.payment = self.payment.map(str::to_string);
        d.price = PriceValue::parse(&self.price.raw());
        d.quantity = match self.quantity {
            Some(q) => QuantityValue::parse(q),
            None => QuantityValue::missing(),
        };
        d
    }

    /// Notes text as the index stores it after one comment.
    pub fn stored_notes(&self) -> Option<String> {
        self.notes.as_ref().map(|w| format!("[{NOTE_STAMP}] {}", w.join(" ")))
    }
}

/// Indexes every spec, then applies its flag and comment as annotations.
pub fn load(idx: &mut CorpusIndex, specs: &[DocSpec]) -> Vec<String> {
    let at = parse_timestamp(NOTE_STAMP).unwrap();
    let ids: Vec<String> = specs.iter().enumerate().map(|(i, s)| idx.index_record(s.to_dndo(i))).collect();
    for (s, id) in specs.iter().zip(&ids) {
        if let Some(value) = s.flagged {
            idx.annotate(id, Mutation::Flag { value: Some(value) }, at).unwrap();
        }
        if let Some(words) = &s.notes {
            idx.annotate(id, Mutation::Comment { text: words.join(" ") }, at).unwrap();
        }
    }
    ids
}

fn opt<T: Clone + std::fmt::Debug + 'static>(s: impl Strategy<Value = T> + 'static) -> BoxedStrategy<Option<T>> {
    prop_oneof![1 => Just(None), 6 => s.prop_map(Some)].boxed()
}

fn pick<const N: usize>(items: [&'static str; N]) -> impl Strategy<Value = &'static str> + Clone {
    proptest::sample::select(items.to_vec())
}

pub fn price_spec() -> impl Strategy<Value = PriceSpec> {
    prop_oneof![
        8 => (0u64..200_000, pick(CURRENCIES)).prop_map(|(cents, currency)| PriceSpec::Parsed { cents, currency }),
        1 => pick(UNPARSED_PRICES).prop_map(PriceSpec::Unparsed),
    ]
}

pub fn doc_spec() -> impl Strategy<Value = DocSpec> {
    let class = prop_oneof![
        4 => Just(ProductClass::Digital),
        3 => Just(ProductClass::Physical),
        1 => Just(ProductClass::Unknown),
    ];
    (
        proptest::collection::vec(pick(VOCAB), 1..6),
        opt(pick(SELLERS)),
        class,
        opt(pick(CATEGORIES)),
        opt(pick(ORIGINS)),
        opt(pick(PAYMENTS)),
        price_spec(),
        opt(pick(QUANTITIES)),
        prop_oneof![5 => Just(None), 1 => proptest::collection::vec(pick(VOCAB), 1..4).prop_map(Some)],
        prop_oneof![Just(None), Just(Some(true)), Just(Some(false))],
    )
        .prop_map(
            |(title, seller, class, category, origin, payment, price, quantity, notes, flagged)| DocSpec {
                title,
                seller,
                class,
                category,
                origin,
                payment,
                price,
                quantity,
                notes,
                flagged,
            },
        )
}

pub fn corpus(min: usize, max: usize) -> impl Strategy<Value = Vec<DocSpec>> {
    proptest::collection::vec(doc_spec(), min..max)
}

/// A query of one to three words; sometimes includes a word absent from
/// every corpus.
pub fn query() -> impl Strategy<Value = String> {
    let word = prop_oneof![12 => pick(VOCAB), 1 => Just("zebra"), 1 => pick(SELLERS), 1 => pick(CATEGORIES)];
    proptest::collection::vec(word, 1..4).prop_map(|w| w.join(" "))
}

// ---------------------------------------------------------------- search

pub fn oracle_tokens(text: &str) -> Vec<String> {
    let stemmer = Stemmer::create(Algorithm::English);
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| stemmer.stem(&w.to_lowercase()).into_owned())
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleFilters {
    pub class: Option<ProductClass>,
    pub flagged: Option<bool>,
    pub seller: Option<&'static str>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleHit {
    pub doc_id: String,
    pub score: f64,
    pub matched_fields: Vec<&'static str>,
}

/// Linear scan: every query term must occur in the searched fields; score
/// is the summed term frequency over the searched fields' token count.
pub fn search_oracle(
    specs: &[DocSpec],
    doc_ids: &[String],
    query: &str,
    field: Option<&str>,
    filters: &OracleFilters,
) -> Vec<OracleHit> {
    let terms: BTreeSet<String> = oracle_tokens(query).into_iter().collect();
    let mut hits = Vec::new();
    for (spec, id) in specs.iter().zip(doc_ids) {
        if filters.class.is_some_and(|c| c != spec.class)
            || filters.flagged.is_some_and(|f| spec.flagged.unwrap_or(false) != f)
            || filters.seller.is_some_and(|s| spec.seller != Some(s))
        {
            continue;
        }
        let notes = spec.stored_notes();
        let title = spec.title_text();
        let fields: Vec<(&'static str, Vec<String>)> = [
            ("title", Some(title.as_str())),
            ("seller", spec.seller),
            ("category", spec.category),
            ("notes", notes.as_deref()),
        ]
        .into_iter()
        .filter(|(name, _)| field.map_or(true, |f| f == *name))
        .map(|(name, text)| (name, text.map(oracle_tokens).unwrap_or_default()))
        .collect();
        let mut tf = 0usize;
        let mut all = true;
        for t in &terms {
            let n: usize = fields.iter().map(|(_, toks)| toks.iter().filter(|x| *x == t).count()).sum();
            if n == 0 {
                all = false;
                break;
            }
            tf += n;
        }
        if !all {
            continue;
        }
        let len: usize = fields.iter().map(|(_, toks)| toks.len()).sum();
        let matched_fields = fields
            .iter()
            .filter(|(_, toks)| toks.iter().any(|x| terms.contains(x)))
            .map(|(name, _)| *name)
            .collect();
        hits.push(OracleHit {
            doc_id: id.clone(),
            score: tf as f64 / len as f64,
            matched_fields,
        });
    }
    hits.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap().then_with(|| a.doc_id.cmp(&b.doc_id)));
    hits
}

// ------------------------------------------------------------- analytics

/// Counts per label, ordered by count descending then label, built by
/// repeated full scans.
pub fn naive_rank(labels: &[String]) -> Vec<(String, u64)> {
    let mut distinct: Vec<String> = Vec::new();
    for l in labels {
        if !distinct.contains(l) {
            distinct.push(l.clone());
        }
    }
    let mut rows: Vec<(String, u64)> = distinct
        .into_iter()
        .map(|l| {
            let n = labels.iter().filter(|x| **x == l).count() as u64;
            (l, n)
        })
        .collect();
    // Insertion sort on (count desc, label asc).
    for i in 1..rows.len() {
        let mut j = i;
        while j > 0 && {
            let (a, b) = (&rows[j - 1], &rows[j]);
            a.1 < b.1 || (a.1 == b.1 && a.0 > b.0)
        } {
            rows.swap(j - 1, j);
            j -= 1;
        }
    }
    rows
}

pub fn percent(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 * 100.0 / den as f64
    }
}

/// (digital, physical, unknown).
pub fn split_oracle(specs: &[DocSpec]) -> (u64, u64, u64) {
    let mut out = (0, 0, 0);
    for s in specs {
        match s.class {
            ProductClass::Digital => out.0 += 1,
            ProductClass::Physical => out.1 += 1,
            _ => out.2 += 1,
        }
    }
    out
}

pub fn top_sellers_oracle(specs: &[DocSpec], n: usize, class: Option<ProductClass>) -> Vec<(String, u64)> {
    let labels: Vec<String> = specs
        .iter()
        .filter(|s| class.map_or(true, |c| s.class == c))
        .filter_map(|s| s.seller.map(str::to_string))
        .collect();
    naive_rank(&labels).into_iter().take(n).collect()
}

pub struct HeatmapOracle {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub cells: Vec<Vec<u64>>,
}

pub fn heatmap_oracle(specs: &[DocSpec], top_k: usize) -> Option<HeatmapOracle> {
    let cats: Vec<String> = specs.iter().filter_map(|s| s.category.map(str::to_string)).collect();
    if cats.is_empty() {
        return None;
    }
    let rows: Vec<String> = naive_rank(&cats).into_iter().take(top_k).map(|(c, _)| c).collect();
    let origins: Vec<String> = specs
        .iter()
        .filter(|s| s.category.is_some_and(|c| rows.iter().any(|r| r == c)))
        .filter_map(|s| s.origin.map(str::to_string))
        .collect();
    let cols: Vec<String> = naive_rank(&origins).into_iter().map(|(o, _)| o).collect();
    let cells = rows
        .iter()
        .map(|r| {
            cols.iter()
                .map(|c| {
                    specs
                        .iter()
                        .filter(|s| s.category == Some(r.as_str()) && s.origin == Some(c.as_str()))
                        .count() as u64
                })
                .collect()
        })
        .collect();
    Some(HeatmapOracle { rows, cols, cells })
}

#[derive(Debug, PartialEq)]
pub struct PriceOracle {
    pub buckets: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
    pub unparsed: u64,
    pub other_currency: u64,
}

pub fn price_oracle(specs: &[DocSpec], class: Option<ProductClass>, edges_usd: &[f64]) -> PriceOracle {
    let edges: Vec<u64> = edges_usd.iter().map(|e| (e * 100.0).round() as u64).collect();
    let mut out = PriceOracle {
        buckets: vec![0; edges.len() - 1],
        underflow: 0,
        overflow: 0,
        unparsed: 0,
        other_currency: 0,
    };
    for s in specs.iter().filter(|s| class.map_or(true, |c| s.class == c)) {
        match &s.price {
            PriceSpec::Unparsed(_) => out.unparsed += 1,
            PriceSpec::Parsed { currency, .. } if *currency != "USD" => out.other_currency += 1,
            PriceSpec::Parsed { cents, .. } => {
                if *cents < edges[0] {
                    out.underflow += 1;
                } else if *cents >= edges[edges.len() - 1] {
                    out.overflow += 1;
                } else {
                    let i = (0..edges.len() - 1)
                        .find(|&i| edges[i] <= *cents && *cents < edges[i + 1])
                        .unwrap();
                    out.buckets[i] += 1;
                }
            }
        }
    }
    out
}

pub fn payment_oracle(specs: &[DocSpec]) -> Vec<(String, u64)> {
    let labels: Vec<String> = specs.iter().map(|s| s.payment.unwrap_or("None").to_string()).collect();
    naive_rank(&labels)
}

pub fn quantity_oracle(specs: &[DocSpec], n: usize) -> Vec<(String, u64)> {
    let labels: Vec<String> = specs.iter().map(|s| s.quantity.unwrap_or("None").trim().to_string()).collect();
    naive_rank(&labels).into_iter().take(n).collect()
}

/// (exact, worldwide, total, min_percent, max_percent).
pub fn origin_range_oracle(specs: &[DocSpec], country: &str) -> (u64, u64, u64, f64, f64) {
    let exact = specs.iter().filter(|s| s.origin == Some(country)).count() as u64;
    let ww = specs.iter().filter(|s| s.origin == Some("Worldwide")).count() as u64;
    let total = specs.len() as u64;
    (exact, ww, total, percent(exact, total), percent(exact + ww, total))
}
