//! Deterministic synthetic marketplace with configurable scraping defenses.
//!
//! A [`SimMarket`] is generated from a seed and a [`SimConfig`]. It holds every
//! page the site serves, the exact DNDOs the pipeline should recover, and the
//! URL sets (listings, dead links, images) used to audit a crawl.
//! [`SimServer`] serves the market over loopback HTTP as a forward proxy for
//! its onion-style host.

mod render;
mod server;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dndo::{serialize_dndo, Dndo, PriceValue, ProductClass, QuantityValue, FILE_SUFFIX};
use crate::harvester::RateMode;

pub use render::{sim_profile_toml, CHALLENGE_SIGNATURE, LISTING_MARKER, PAGE_MARKER};
pub use server::{
    LogEntry, RequestKind, RequestLog, RequestOutcome, SimServer, ADMIN_SESSION_PATH,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("bad simulator config: {0}")]
    BadConfig(String),
    #[error("cannot bind {addr}: {source}")]
    BindFailure {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("export i/o on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum UrlScheme {
    /// Zero-padded counters, padded to the minimum listing URL length.
    Sequential,
    #[default]
    RandomHex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DefenseConfig {
    pub rate_limit_mode: RateMode,
    pub limit_rps: f64,
    /// Listing page serves before the CAPTCHA gate closes. The gate
    /// revokes every session token issued before it fires.
    pub captcha_after_requests: Option<u64>,
    pub session_required: bool,
    /// `Retry-After` seconds sent with 429 responses.
    pub retry_after_secs: Option<u64>,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        DefenseConfig {
            rate_limit_mode: RateMode::None,
            limit_rps: 2.0,
            captcha_after_requests: None,
            session_required: false,
            retry_after_secs: Some(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub name: String,
    pub class: ProductClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    pub market_id: String,
    pub listing_count: usize,
    pub seller_weights: Vec<(String, u32)>,
    pub categories: Vec<CategorySpec>,
    pub origin_pool: Vec<(String, u32)>,
    pub payment_pool: Vec<(String, u32)>,
    /// Fraction of digital listings priced below 10 USD.
    pub cheap_digital_fraction: f64,
    pub defense: DefenseConfig,
    pub url_scheme: UrlScheme,
    pub listing_url_len: (usize, usize),
    pub listings_per_page: usize,
    /// Listing links on category pages that lead to 404s.
    pub dead_links: usize,
}

fn weighted(pairs: &[(&str, u32)]) -> Vec<(String, u32)> {
    pairs.iter().map(|(n, w)| (n.to_string(), *w)).collect()
}

impl Default for SimConfig {
    fn default() -> Self {
        let cat = |name: &str, class| CategorySpec {
            name: name.to_string(),
            class,
        };
        SimConfig {
            seed: 7,
            market_id: "simmarket".into(),
            listing_count: 500,
            seller_weights: weighted(&[
                ("NightOwl", 40),
                ("CrimsonFox", 14),
                ("SilverKey", 10),
                ("GreyHarbor", 8),
                ("QuietMoth", 7),
                ("NorthPeak", 6),
                ("PaperTiger", 5),
                ("BlueCanary", 4),
                ("IronLotus", 3),
                ("EmberLane", 3),
            ]),
            categories: vec![
                cat("Tutorials", ProductClass::Digital),
                cat("Accounts", ProductClass::Digital),
                cat("Software", ProductClass::Digital),
                cat("Gift Cards", ProductClass::Digital),
                cat("Guides", ProductClass::Digital),
                cat("Electronics", ProductClass::Physical),
                cat("Jewelry", ProductClass::Physical),
                cat("Apparel", ProductClass::Physical),
            ],
            origin_pool: weighted(&[
                ("Worldwide", 55),
                ("United States", 12),
                ("Germany", 9),
                ("Netherlands", 8),
                ("United Kingdom", 7),
                ("Canada", 5),
                ("Australia", 4),
            ]),
            payment_pool: weighted(&[("Escrow", 1)]),
            cheap_digital_fraction: 0.7,
            defense: DefenseConfig::default(),
            url_scheme: UrlScheme::RandomHex,
            listing_url_len: (114, 120),
            listings_per_page: 25,
            dead_links: 5,
        }
    }
}

/// Characters of an onion host label.
pub const ONION_LABEL_LEN: usize = 56;
const LISTING_PREFIX: &str = "/listing/";

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| SimError::BadConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("sim config serializes")
    }

    fn base_listing_len(&self) -> usize {
        "http://".len() + ONION_LABEL_LEN + ".onion".len() + LISTING_PREFIX.len()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::BadConfig(m));
        if self.listing_count == 0 {
            return bad("listing_count must be at least 1".into());
        }
        if self.market_id.is_empty() || !self.market_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return bad(format!("market_id `{}` must be [A-Za-z0-9_-]+", self.market_id));
        }
        for (label, pool) in [
            ("seller_weights", &self.seller_weights),
            ("origin_pool", &self.origin_pool),
            ("payment_pool", &self.payment_pool),
        ] {
            if pool.is_empty() {
                return bad(format!("{label} is empty"));
            }
            if let Some((name, _)) = pool.iter().find(|(n, w)| *w == 0 || n.trim().is_empty() || n.trim() != n) {
                return bad(format!("{label}: entry `{name}` needs a trimmed name and positive weight"));
            }
        }
        if self.categories.is_empty() {
            return bad("categories is empty".into());
        }
        if self.categories.iter().any(|c| c.class == ProductClass::Unknown || c.name.trim().is_empty()) {
            return bad("categories need a name and a Digital or Physical class".into());
        }
        if !(0.0..=1.0).contains(&self.cheap_digital_fraction) {
            return bad("cheap_digital_fraction must be within [0,1]".into());
        }
        let (lo, hi) = self.listing_url_len;
        let base = self.base_listing_len();
        if lo > hi || lo < base + 8 {
            return bad(format!(
                "listing_url_len ({lo},{hi}) must satisfy {} <= min <= max",
                base + 8
            ));
        }
        if self.listings_per_page == 0 {
            return bad("listings_per_page must be at least 1".into());
        }
        if self.defense.rate_limit_mode != RateMode::None
            && !(self.defense.limit_rps > 0.0 && self.defense.limit_rps.is_finite())
        {
            return bad("limit_rps must be positive when rate limiting is on".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PageKind {
    Index,
    Nav,
    Category,
    Listing,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimPage {
    pub kind: PageKind,
    pub body: String,
}

/// One generated listing: the expected DNDO plus how it is rendered.
#[derive(Debug, Clone)]
pub(crate) struct ListingSpec {
    pub doc: Dndo,
    pub category_slug: String,
    pub display: render::ListingDisplay,
}

pub struct SimMarket {
    config: SimConfig,
    host: String,
    pages: BTreeMap<String, SimPage>,
    ground_truth: Vec<Dndo>,
    listing_urls: Vec<String>,
    dead_urls: Vec<String>,
    image_urls: BTreeSet<String>,
    generated_at: NaiveDateTime,
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &'a [(String, u32)]) -> &'a str {
    let dist = WeightedIndex::new(pool.iter().map(|(_, w)| *w)).expect("weights validated");
    &pool[dist.sample(rng)].0
}

const HEX: &[u8] = b"0123456789abcdef";
const BASE32: &[u8] = b"abcdefghijklmnopqrstuvwxyz234567";

fn random_chars(rng: &mut ChaCha8Rng, alphabet: &[u8], n: usize) -> String {
    (0..n).map(|_| alphabet[rng.gen_range(0..alphabet.len())] as char).collect()
}

pub fn slugify(name: &str) -> String {
    name.to_ascii_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("-")
}

fn money(cents: u64) -> String {
    format!("{}.{:02}", cents / 100, cents % 100)
}

const DIGITAL_NOUNS: &[&str] = &[
    "Account", "Accounts", "Guide", "Tutorial", "Method", "License", "Keys", "Bundle", "Toolkit", "Course",
];
const DIGITAL_SUBJECTS: &[&str] = &[
    "Netflix", "Spotify", "VPN", "Streaming", "Cloud Storage", "Photo Editor", "Antivirus", "Gaming",
    "Music", "Crypto Wallet",
];
const PHYSICAL_NOUNS: &[&str] = &[
    "Watch", "Watches", "Headphones", "Sneakers", "Jacket", "Ring", "Phone", "Charger", "Bracelet", "Handbag",
];
const QUALIFIERS: &[&str] = &[
    "Premium", "Lifetime", "Fresh", "Verified", "Replica", "Genuine", "Bulk", "Cheap", "Private", "Fast",
];

impl SimMarket {
    pub fn generate(config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let host = format!("{}.onion", random_chars(&mut rng, BASE32, ONION_LABEL_LEN));
        let generated_at = NaiveDate::from_ymd_opt(2020, 7, 3)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();

        let mut used_urls = BTreeSet::new();
        let mut new_listing_url = |rng: &mut ChaCha8Rng, n: usize| -> String {
            let (lo, hi) = config.listing_url_len;
            let base = config.base_listing_len();
            loop {
                let id = match config.url_scheme {
                    UrlScheme::RandomHex => {
                        let len = rng.gen_range(lo..=hi) - base;
                        random_chars(rng, HEX, len)
                    }
                    UrlScheme::Sequential => format!("{:0width$}", n, width = lo - base),
                };
                let url = format!("http://{host}{LISTING_PREFIX}{id}");
                if used_urls.insert(url.clone()) {
                    return url;
                }
            }
        };

        let mut listings = Vec::with_capacity(config.listing_count);
        for n in 0..config.listing_count {
            let url = new_listing_url(&mut rng, n);
            listings.push(gen_listing(&config, &mut rng, url, generated_at));
        }
        let dead_urls: Vec<String> = (0..config.dead_links)
            .map(|i| new_listing_url(&mut rng, config.listing_count + i))
            .collect();

        let mut pages = BTreeMap::new();
        let mut image_urls = BTreeSet::new();
        let site = render::Site::new(&config, &host);

        let mut by_category: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
        for l in &listings {
            let title = l.doc.title.clone().unwrap_or_default();
            by_category
                .entry(l.category_slug.clone())
                .or_default()
                .push((l.doc.url.clone().unwrap(), title));
        }
        for (i, dead) in dead_urls.iter().enumerate() {
            let slug = slugify(&config.categories[i % config.categories.len()].name);
            by_category
                .entry(slug)
                .or_default()
                .push((dead.clone(), format!("Discontinued item {}", i + 1)));
        }

        let (body, imgs) = site.index_page();
        image_urls.extend(imgs);
        pages.insert("/".to_string(), SimPage { kind: PageKind::Index, body });
        for (path, body, imgs) in site.nav_pages() {
            image_urls.extend(imgs);
            pages.insert(path, SimPage { kind: PageKind::Nav, body });
        }
        for cat in &config.categories {
            let slug = slugify(&cat.name);
            let entries = by_category.remove(&slug).unwrap_or_default();
            for (path, body, imgs) in site.category_pages(&cat.name, &entries) {
                image_urls.extend(imgs);
                pages.insert(path, SimPage { kind: PageKind::Category, body });
            }
        }
        for l in &listings {
            let (body, imgs) = site.listing_page(l);
            image_urls.extend(imgs);
            let path = l.doc.url.as_deref().unwrap()[format!("http://{host}").len()..].to_string();
            pages.insert(path, SimPage { kind: PageKind::Listing, body });
        }

        let listing_urls = listings.iter().map(|l| l.doc.url.clone().unwrap()).collect();
        let ground_truth = listings.into_iter().map(|l| l.doc).collect();
        Ok(SimMarket {
            config,
            host,
            pages,
            ground_truth,
            listing_urls,
            dead_urls,
            image_urls,
            generated_at,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn market_id(&self) -> &str {
        &self.config.market_id
    }

    /// The market's onion-style host name.
    pub fn host(&self) -> &str {
        &self.host
    }

    pub fn seed_url(&self) -> String {
        format!("http://{}/", self.host)
    }

    pub fn page(&self, path_and_query: &str) -> Option<&SimPage> {
        self.pages.get(path_and_query)
    }

    pub fn pages(&self) -> &BTreeMap<String, SimPage> {
        &self.pages
    }

    /// Expected DNDOs, one per live listing, in generation order.
    /// `dateCollected` is the generation epoch; compare scraped fields only.
    pub fn ground_truth(&self) -> &[Dndo] {
        &self.ground_truth
    }

    pub fn listing_urls(&self) -> &[String] {
        &self.listing_urls
    }

    pub fn dead_urls(&self) -> &[String] {
        &self.dead_urls
    }

    /// Every URL used as an image source anywhere on the site.
    pub fn image_urls(&self) -> &BTreeSet<String> {
        &self.image_urls
    }

    /// Absolute URLs of every page, sorted.
    pub fn sitemap(&self) -> Vec<String> {
        self.pages.keys().map(|p| format!("http://{}{p}", self.host)).collect()
    }

    /// Digest over every served page; equal digests mean identical sites.
    pub fn site_digest(&self) -> String {
        let mut h = Sha256::new();
        for (path, page) in &self.pages {
            h.update(path.as_bytes());
            h.update([0]);
            h.update(page.body.as_bytes());
            h.update([0]);
        }
        hex::encode(h.finalize())
    }

    pub fn generated_at(&self) -> NaiveDateTime {
        self.generated_at
    }

    /// Writes ground-truth DNDO files, `sitemap.txt` and the sim profile.
    pub fn export_ground_truth(&self, dir: &Path) -> Result<(), SimError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| SimError::Io { path, source }
        };
        let truth = dir.join("ground_truth");
        fs::create_dir_all(&truth).map_err(io(&truth))?;
        for d in &self.ground_truth {
            let path = truth.join(format!("{}{FILE_SUFFIX}", d.doc_id()));
            fs::write(&path, serialize_dndo(d)).map_err(io(&path))?;
        }
        let sitemap = dir.join("sitemap.txt");
        let mut f = fs::File::create(&sitemap).map_err(io(&sitemap))?;
        for url in self.sitemap() {
            writeln!(f, "{url}").map_err(io(&sitemap))?;
        }
        let profile = dir.join("profile.toml");
        fs::write(&profile, sim_profile_toml(self.market_id())).map_err(io(&profile))?;
        Ok(())
    }
}

fn gen_listing(cfg: &SimConfig, rng: &mut ChaCha8Rng, url: String, generated_at: NaiveDateTime) -> ListingSpec {
    let cat = &cfg.categories[rng.gen_range(0..cfg.categories.len())];
    let digital = cat.class == ProductClass::Digital;
    let seller = pick(rng, &cfg.seller_weights).to_string();
    let origin = pick(rng, &cfg.origin_pool).to_string();
    let payment = pick(rng, &cfg.payment_pool).to_string();

    let title = if digital {
        format!(
            "{} {} {}",
            QUALIFIERS[rng.gen_range(0..QUALIFIERS.len())],
            DIGITAL_SUBJECTS[rng.gen_range(0..DIGITAL_SUBJECTS.len())],
            DIGITAL_NOUNS[rng.gen_range(0..DIGITAL_NOUNS.len())]
        )
    } else {
        format!(
            "{} {}",
            QUALIFIERS[rng.gen_range(0..QUALIFIERS.len())],
            PHYSICAL_NOUNS[rng.gen_range(0..PHYSICAL_NOUNS.len())]
        )
    };
    let title = if rng.gen_bool(0.3) {
        format!("{title} x{}", rng.gen_range(2..50))
    } else {
        title
    };

    let cents: u64 = if digital && rng.gen_bool(cfg.cheap_digital_fraction) {
        rng.gen_range(50..1000)
    } else if digital {
        rng.gen_range(1000..25_000)
    } else {
        rng.gen_range(500..90_000)
    };
    let currency = if rng.gen_bool(0.05) { "EUR" } else { "USD" };
    let price_raw = format!("{} {currency}", money(cents));

    let quantity_raw = if digital {
        match rng.gen_range(0..10) {
            0..=4 => "Unlimited".to_string(),
            5..=7 => "999.00".to_string(),
            _ => rng.gen_range(1..200).to_string(),
        }
    } else {
        rng.gen_range(1..100).to_string()
    };

    let shipping = if digital || rng.gen_bool(0.8) {
        "Worldwide".to_string()
    } else if origin == "Worldwide" {
        "Europe".to_string()
    } else {
        origin.clone()
    };

    let created = generated_at - TimeDelta::days(rng.gen_range(1..180));
    let expire = match rng.gen_range(0..20) {
        0..=2 => None,
        3..=12 => Some("Never".to_string()),
        _ => Some((generated_at + TimeDelta::days(rng.gen_range(30..365))).format("%Y-%m-%d").to_string()),
    };
    let views = rng.gen_range(0..20_000u64);
    let purchases = (!rng.gen_bool(0.1)).then(|| rng.gen_range(0..views.max(1).min(800)));

    let mut doc = Dndo::empty(generated_at);
    doc.title = Some(title);
    doc.seller = Some(seller);
    doc.category = Some(cat.name.clone());
    doc.creation_date = Some(created.format("%Y-%m-%d").to_string());
    doc.url = Some(url);
    doc.views = Some(views);
    doc.purchases = purchases;
    doc.expire = expire;
    doc.product_class = cat.class;
    doc.origin_country = Some(origin);
    doc.shipping_destinations = Some(shipping);
    doc.quantity = QuantityValue::parse(&quantity_raw);
    doc.payment = Some(payment);
    doc.price = PriceValue::parse(&price_raw);

    let display = render::ListingDisplay::draw(rng, &doc);
    ListingSpec {
        doc,
        category_slug: slugify(&cat.name),
        display,
    }
}

/// Scraped fields of a DNDO as serialized JSON, for field-identical
/// comparisons that ignore collection time and analyst state.
pub fn scraped_fingerprint(d: &Dndo) -> serde_json::Value {
    let full = crate::dndo::to_json_value(d);
    let keys = crate::dndo::scraped_keys();
    let map = full
        .as_object()
        .expect("dndo serializes to an object")
        .iter()
        .filter(|(k, _)| keys.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    serde_json::Value::Object(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extractor::{parse_listing, MarketProfile};
    use crate::frontier::{extract_links, filter_listing_urls, LinkFilterPolicy};

    fn small() -> SimConfig {
        SimConfig {
            listing_count: 60,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = SimMarket::generate(small()).unwrap();
        let b = SimMarket::generate(small()).unwrap();
        assert_eq!(a.site_digest(), b.site_digest());
        assert_eq!(a.host(), b.host());
        let c = SimMarket::generate(SimConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(a.site_digest(), c.site_digest());
    }

    #[test]
    fn counts_and_url_lengths() {
        let m = SimMarket::generate(small()).unwrap();
        assert_eq!(m.ground_truth().len(), 60);
        assert_eq!(m.pages().values().filter(|p| p.kind == PageKind::Listing).count(), 60);
        assert_eq!(m.sitemap().len(), m.pages().len());
        assert_eq!(m.host().len(), ONION_LABEL_LEN + 6);
        for url in m.listing_urls().iter().chain(m.dead_urls()) {
            assert!((114..=120).contains(&url.len()), "{url}");
        }
        for (path, page) in m.pages() {
            if page.kind != PageKind::Listing {
                let url = format!("http://{}{path}", m.host());
                assert!(!(114..=120).contains(&url.len()), "{url}");
            }
        }
        let seq = SimMarket::generate(SimConfig { url_scheme: UrlScheme::Sequential, ..small() }).unwrap();
        assert!(seq.listing_urls().iter().all(|u| u.len() == 114));
    }

    #[test]
    fn listing_pages_parse_to_ground_truth() {
        let m = SimMarket::generate(small()).unwrap();
        let profile = MarketProfile::from_toml_str(&sim_profile_toml(m.market_id())).unwrap();
        for truth in m.ground_truth() {
            let url = truth.url.as_deref().unwrap();
            let path = &url[format!("http://{}", m.host()).len()..];
            let html = &m.page(path).unwrap().body;
            assert!(html.len() >= profile.min_body_bytes);
            let d = parse_listing(html, &profile, url, m.generated_at()).unwrap();
            assert_eq!(scraped_fingerprint(&d), scraped_fingerprint(truth));
        }
    }

    #[test]
    fn genuine_pages_carry_the_page_marker() {
        let m = SimMarket::generate(small()).unwrap();
        let profile = MarketProfile::from_toml_str(&sim_profile_toml(m.market_id())).unwrap();
        for page in m.pages().values() {
            assert!(profile.page_marker.is_match(&page.body));
            assert!(!profile.challenge_signature.is_match(&page.body));
            assert!(page.body.len() >= profile.min_body_bytes);
            assert_eq!(profile.listing_marker.is_match(&page.body), page.kind == PageKind::Listing);
        }
    }

    #[test]
    fn crawlable_links_exclude_images_and_off_scope() {
        let m = SimMarket::generate(small()).unwrap();
        let policy = LinkFilterPolicy::new(m.host());
        let mut listing_links = BTreeSet::new();
        for (path, page) in m.pages() {
            let base = format!("http://{}{path}", m.host());
            let links = extract_links(&page.body, &base, &policy);
            for l in &links {
                assert!(!m.image_urls().contains(l), "image link {l} on {path}");
                assert!(l.starts_with(&format!("http://{}/", m.host())));
            }
            listing_links.extend(filter_listing_urls(&links, &policy));
        }
        let expected: BTreeSet<String> = m.listing_urls().iter().chain(m.dead_urls()).cloned().collect();
        assert_eq!(listing_links, expected);
        assert!(!m.image_urls().is_empty());
    }

    #[test]
    fn skewed_seller_tops_ground_truth() {
        let cfg = SimConfig {
            seller_weights: weighted(&[("Whale", 50), ("a", 1), ("b", 1)]),
            ..small()
        };
        let m = SimMarket::generate(cfg).unwrap();
        let top = crate::analytics::top_sellers(m.ground_truth(), 1, None);
        assert_eq!(top.rows[0].0, "Whale");
    }

    #[test]
    fn config_validation_and_toml() {
        assert!(SimConfig { listing_count: 0, ..small() }.validate().is_err());
        assert!(SimConfig { listing_url_len: (80, 90), ..small() }.validate().is_err());
        let mut c = small();
        c.defense.rate_limit_mode = RateMode::Http429;
        c.defense.limit_rps = 0.0;
        assert!(c.validate().is_err());
        let text = small().to_toml();
        assert_eq!(SimConfig::from_toml_str(&text).unwrap(), small());
        let partial = SimConfig::from_toml_str("seed = 3\nlisting_count = 10\n").unwrap();
        assert_eq!(partial.seed, 3);
        assert_eq!(partial.listing_url_len, (114, 120));
    }
}
