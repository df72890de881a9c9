//! Turns harvested listing HTML into DNDOs using per-market profiles.

mod inbox;
mod profile;

use chrono::NaiveDateTime;
use scraper::{ElementRef, Html};
use thiserror::Error;

pub use inbox::{
    inbox_is_drained, process_inbox, IndexSink, InboxStats, MultiSink, OutboxSink, Sink, SinkError,
};
pub use profile::{
    ExtractionRule, MarketProfile, PostNormalize, ProfileConfig, RuleConfig, DEFAULT_MIN_BODY_BYTES,
};

use crate::dndo::{Dndo, PriceValue, ProductClass, QuantityValue};

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("page does not carry the listing marker")]
    NotAListing,
    #[error("profile error: {0}")]
    ProfileError(String),
    #[error("sink unavailable: {0}")]
    SinkUnavailable(String),
    #[error("inbox i/o on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub fn normalize_price(raw: &str) -> PriceValue {
    PriceValue::parse(raw)
}

pub fn normalize_quantity(raw: &str) -> QuantityValue {
    QuantityValue::parse(raw)
}

/// Collapses whitespace and unifies spellings of "Worldwide".
pub fn normalize_country(raw: &str) -> String {
    let collapsed = collapse_ws(raw);
    match collapsed.to_ascii_lowercase().as_str() {
        "worldwide" | "world wide" | "world-wide" | "ww" | "global" => "Worldwide".to_string(),
        _ => collapsed,
    }
}

fn normalize_count(raw: &str) -> Option<u64> {
    let digits: String = raw.chars().filter(|c| *c != ',').collect();
    let digits = digits.trim();
    let first = digits.split_whitespace().next()?;
    first.parse().ok()
}

fn collapse_ws(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn element_text(el: ElementRef<'_>) -> String {
    collapse_ws(&el.text().collect::<String>())
}

fn apply_rule(rule: &ExtractionRule, doc: &Html, raw_html: &str) -> Option<String> {
    let source = match &rule.selector {
        Some(sel) => {
            let el = doc.select(sel).next()?;
            match &rule.attribute {
                Some(attr) => el.value().attr(attr)?.trim().to_string(),
                None => element_text(el),
            }
        }
        None => raw_html.to_string(),
    };
    let value = match &rule.pattern {
        Some(re) => collapse_ws(re.captures(&source)?.get(1)?.as_str()),
        None => source,
    };
    let value = match rule.post_normalize {
        PostNormalize::Country => normalize_country(&value),
        _ => value,
    };
    (!value.is_empty()).then_some(value)
}

/// Applies every field rule of `profile` to one listing page.
///
/// `url` is the page's source URL (from the harvest manifest); a profile
/// rule for `url` overrides it. Fields with no match are left missing.
pub fn parse_listing(
    html: &str,
    profile: &MarketProfile,
    url: &str,
    collected_at: NaiveDateTime,
) -> Result<Dndo, ExtractError> {
    if !profile.listing_marker.is_match(html) {
        return Err(ExtractError::NotAListing);
    }
    let doc = Html::parse_document(html);
    let mut d = Dndo::empty(collected_at);
    d.url = crate::dndo::scraped_text(url);
    for rule in &profile.field_rules {
        let Some(value) = apply_rule(rule, &doc, html) else {
            continue;
        };
        assign(&mut d, &rule.field, value, profile);
    }
    Ok(d)
}

fn assign(d: &mut Dndo, field: &str, value: String, profile: &MarketProfile) {
    let text = crate::dndo::scraped_text(&value);
    match field {
        "title" => d.title = text,
        "seller" => d.seller = text,
        "category" => {
            d.category = text.map(|c| profile.category_map.get(&c).cloned().unwrap_or(c));
        }
        "creationDate" => d.creation_date = text,
        "url" => {
            if text.is_some() {
                d.url = text;
            }
        }
        "views" => d.views = normalize_count(&value),
        "purchases" => d.purchases = normalize_count(&value),
        "expire" => d.expire = text,
        "productClass" => d.product_class = ProductClass::from_raw(&value),
        "originCountry" => d.origin_country = text,
        "shippingDestinations" => d.shipping_destinations = text,
        "quantity" => d.quantity = normalize_quantity(&value),
        "payment" => d.payment = text,
        "price" => d.price = normalize_price(&value),
        // Field names are validated when the profile is compiled.
        other => unreachable!("unvalidated field `{other}`"),
    }
}
