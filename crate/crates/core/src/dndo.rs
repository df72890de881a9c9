//! The Darknet Data Object (DNDO): one marketplace listing in canonical form.
//!
//! Scraped fields that were not found in the source page are written as the
//! literal string `"None"`; analyst fields that were never set are written as
//! JSON `null`. Keys are always emitted in the same fixed order, followed by
//! any extension keys in lexicographic order.

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Wire format for every timestamp stored in a DNDO (UTC, no zone suffix).
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// Sentinel written for scraped values that were absent in the source page.
pub const MISSING: &str = "None";

/// File suffix for serialized objects in outbox and corpus directories.
pub const FILE_SUFFIX: &str = ".dndo.json";

/// Canonical key order of a serialized DNDO.
pub const KEY_ORDER: [&str; 20] = [
    "title",
    "seller",
    "category",
    "creationDate",
    "url",
    "views",
    "purchases",
    "expire",
    "productClass",
    "originCountry",
    "shippingDestinations",
    "quantity",
    "payment",
    "price",
    "analyst_hasViewed",
    "analyst_viewDate",
    "analyst_flagged",
    "analyst_notes",
    "analyst_closedDate",
    "analyst_dateCollected",
];

/// Keys filled by extraction (everything before the analyst fields).
pub fn scraped_keys() -> &'static [&'static str] {
    &KEY_ORDER[..14]
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DndoError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("schema violation at `{key}`: {reason}")]
    SchemaViolation { key: String, reason: String },
}

impl DndoError {
    fn schema(key: &str, reason: impl Into<String>) -> Self {
        DndoError::SchemaViolation {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("both averages are zero")]
    BothZero,
    #[error("size list is empty")]
    EmptyList,
    #[error("size must be finite and non-negative, got {0}")]
    InvalidSize(f64),
}

pub fn format_timestamp(ts: &NaiveDateTime) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

pub fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(raw, TIMESTAMP_FORMAT).ok()
}

/// Maps the missing sentinel (and blank text) to `None`.
pub fn scraped_text(raw: impl AsRef<str>) -> Option<String> {
    let raw = raw.as_ref();
    if raw.trim().is_empty() || raw == MISSING {
        None
    } else {
        Some(raw.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProductClass {
    Digital,
    Physical,
    Unknown,
}

impl ProductClass {
    /// Case-insensitive; anything other than digital/physical is `Unknown`.
    pub fn from_raw(raw: &str) -> Self {
        match raw.trim().to_ascii_lowercase().as_str() {
            "digital" => ProductClass::Digital,
            "physical" => ProductClass::Physical,
            _ => ProductClass::Unknown,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ProductClass::Digital => "Digital",
            ProductClass::Physical => "Physical",
            ProductClass::Unknown => "Unknown",
        }
    }

    fn wire(&self) -> &'static str {
        match self {
            ProductClass::Unknown => MISSING,
            other => other.as_str(),
        }
    }
}

impl fmt::Display for ProductClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Currencies normalized to integer minor units (all have two decimals).
const TWO_DECIMAL_CURRENCIES: &[&str] = &[
    "AUD", "BRL", "CAD", "CHF", "CNY", "CZK", "DKK", "EUR", "GBP", "HKD", "INR", "MXN", "NOK",
    "NZD", "PLN", "RUB", "SEK", "SGD", "THB", "TRY", "USD", "ZAR",
];

/// A listing price. Only `PriceValue::parse` constructs one, so the numeric
/// part is always derived from `raw`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PriceValue {
    amount_minor_units: Option<u64>,
    currency: Option<String>,
    raw: String,
}

impl PriceValue {
    /// Accepts `"<decimal> <CODE>"` and `"<CODE> <decimal>"`. Anything else
    /// keeps the raw text with no amount.
    pub fn parse(raw: &str) -> Self {
        let parsed = parse_price_parts(raw);
        PriceValue {
            amount_minor_units: parsed.as_ref().map(|(amount, _)| *amount),
            currency: parsed.map(|(_, code)| code),
            raw: raw.to_string(),
        }
    }

    pub fn missing() -> Self {
        Self::parse(MISSING)
    }

    pub fn amount_minor_units(&self) -> Option<u64> {
        self.amount_minor_units
    }

    pub fn currency(&self) -> Option<&str> {
        self.currency.as_deref()
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    /// Amount in major units, when parsed.
    pub fn amount(&self) -> Option<f64> {
        self.amount_minor_units.map(|m| m as f64 / 100.0)
    }

    pub fn is_missing(&self) -> bool {
        scraped_text(&self.raw).is_none()
    }
}

fn parse_price_parts(raw: &str) -> Option<(u64, String)> {
    let mut parts = raw.split_whitespace();
    let first = parts.next()?;
    let second = parts.next()?;
    if parts.next().is_some() {
        return None;
    }
    let (number, code) = if is_currency_code(second) {
        (first, second)
    } else if is_currency_code(first) {
        (second, first)
    } else {
        return None;
    };
    let code = code.to_ascii_uppercase();
    if !TWO_DECIMAL_CURRENCIES.contains(&code.as_str()) {
        return None;
    }
    Some((decimal_to_minor_units(number)?, code))
}

fn is_currency_code(token: &str) -> bool {
    token.len() == 3 && token.chars().all(|c| c.is_ascii_alphabetic())
}

/// `round(value * 100)` computed on the decimal text, half away from zero.
/// Accepts thousands separators in the integer part.
pub(crate) fn decimal_to_minor_units(text: &str) -> Option<u64> {
    let (int_part, frac_part) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text, ""),
    };
    let int_digits: String = int_part.chars().filter(|c| *c != ',').collect();
    if int_digits.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_digits.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return None;
    }
    if int_part.contains(',') && !valid_grouping(int_part) {
        return None;
    }
    let whole: u64 = if int_digits.is_empty() {
        0
    } else {
        int_digits.parse().ok()?
    };
    let mut frac = frac_part.bytes().map(|b| (b - b'0') as u64);
    let tenths = frac.next().unwrap_or(0);
    let hundredths = frac.next().unwrap_or(0);
    let round_up = frac.next().map(|d| d >= 5).unwrap_or(false);
    whole
        .checked_mul(100)?
        .checked_add(tenths * 10 + hundredths + u64::from(round_up))
}

fn valid_grouping(int_part: &str) -> bool {
    let groups: Vec<&str> = int_part.split(',').collect();
    !groups[0].is_empty()
        && groups[0].len() <= 3
        && groups[1..].iter().all(|g| g.len() == 3)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuantityKind {
    Limited,
    Unlimited,
    Unknown,
}

/// Stock quantity as listed. Constructed only through `QuantityValue::parse`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantityValue {
    kind: QuantityKind,
    amount: Option<f64>,
    raw: String,
}

impl QuantityValue {
    pub fn parse(raw: &str) -> Self {
        let trimmed = raw.trim();
        let (kind, amount) = if trimmed.eq_ignore_ascii_case("unlimited") {
            (QuantityKind::Unlimited, None)
        } else {
            match parse_non_negative_decimal(trimmed) {
                Some(v) => (QuantityKind::Limited, Some(v)),
                None => (QuantityKind::Unknown, None),
            }
        };
        QuantityValue {
            kind,
            amount,
            raw: raw.to_string(),
        }
    }

    pub fn missing() -> Self {
        Self::parse(MISSING)
    }

    pub fn kind(&self) -> QuantityKind {
        self.kind
    }

    pub fn amount(&self) -> Option<f64> {
        self.amount
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }
}

fn parse_non_negative_decimal(text: &str) -> Option<f64> {
    let digits: String = text.chars().filter(|c| *c != ',').collect();
    if digits.is_empty()
        || digits.starts_with('.')
        || digits.ends_with('.')
        || !digits.chars().all(|c| c.is_ascii_digit() || c == '.')
        || digits.matches('.').count() > 1
    {
        return None;
    }
    digits.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Analyst triage state. Every field is `None` until an analyst acts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnalystFields {
    pub has_viewed: Option<bool>,
    pub view_date: Option<NaiveDateTime>,
    pub flagged: Option<bool>,
    pub notes: Option<String>,
    pub closed_date: Option<NaiveDateTime>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dndo {
    pub title: Option<String>,
    pub seller: Option<String>,
    pub category: Option<String>,
    pub creation_date: Option<String>,
    pub url: Option<String>,
    pub views: Option<u64>,
    pub purchases: Option<u64>,
    pub expire: Option<String>,
    pub product_class: ProductClass,
    pub origin_country: Option<String>,
    pub shipping_destinations: Option<String>,
    pub quantity: QuantityValue,
    pub payment: Option<String>,
    pub price: PriceValue,
    pub analyst: AnalystFields,
    pub date_collected: NaiveDateTime,
    /// Keys outside the fixed set, kept verbatim.
    pub extensions: BTreeMap<String, Value>,
}

impl Dndo {
    /// An object with every scraped field missing.
    pub fn empty(date_collected: NaiveDateTime) -> Self {
        Dndo {
            title: None,
            seller: None,
            category: None,
            creation_date: None,
            url: None,
            views: None,
            purchases: None,
            expire: None,
            product_class: ProductClass::Unknown,
            origin_country: None,
            shipping_destinations: None,
            quantity: QuantityValue::missing(),
            payment: None,
            price: PriceValue::missing(),
            analyst: AnalystFields::default(),
            date_collected,
            extensions: BTreeMap::new(),
        }
    }

    /// Stable identifier derived from the listing URL. Objects without a URL
    /// fall back to a hash of their scraped fields.
    pub fn doc_id(&self) -> String {
        match &self.url {
            Some(url) => doc_id_for_url(url),
            None => {
                let mut probe = self.clone();
                probe.analyst = AnalystFields::default();
                probe.extensions.clear();
                let digest = Sha256::digest(serialize_dndo(&probe).as_bytes());
                hex::encode(&digest[..16])
            }
        }
    }

    /// Checks the invariants `serialize_dndo` relies on for a lossless
    /// round trip.
    pub fn validate(&self) -> Result<(), DndoError> {
        let texts = [
            ("title", &self.title),
            ("seller", &self.seller),
            ("category", &self.category),
            ("creationDate", &self.creation_date),
            ("url", &self.url),
            ("expire", &self.expire),
            ("originCountry", &self.origin_country),
            ("shippingDestinations", &self.shipping_destinations),
            ("payment", &self.payment),
        ];
        for (key, value) in texts {
            if let Some(v) = value {
                if scraped_text(v).is_none() {
                    return Err(DndoError::schema(key, "present value is blank or the missing sentinel"));
                }
            }
        }
        if let Some(notes) = &self.analyst.notes {
            if notes.is_empty() {
                return Err(DndoError::schema("analyst_notes", "empty notes must be null"));
            }
        }
        for key in self.extensions.keys() {
            if KEY_ORDER.contains(&key.as_str()) {
                return Err(DndoError::schema(key, "extension shadows a fixed key"));
            }
        }
        Ok(())
    }
}

pub fn doc_id_for_url(url: &str) -> String {
    let digest = Sha256::digest(url.as_bytes());
    hex::encode(&digest[..16])
}

fn text_value(v: &Option<String>) -> Value {
    Value::String(v.clone().unwrap_or_else(|| MISSING.to_string()))
}

fn count_value(v: &Option<u64>) -> Value {
    Value::String(v.map(|n| n.to_string()).unwrap_or_else(|| MISSING.to_string()))
}

fn opt_ts_value(v: &Option<NaiveDateTime>) -> Value {
    v.as_ref()
        .map(|t| Value::String(format_timestamp(t)))
        .unwrap_or(Value::Null)
}

/// Builds the ordered JSON object for a DNDO.
pub fn to_json_value(d: &Dndo) -> Value {
    let mut m = Map::new();
    m.insert("title".into(), text_value(&d.title));
    m.insert("seller".into(), text_value(&d.seller));
    m.insert("category".into(), text_value(&d.category));
    m.insert("creationDate".into(), text_value(&d.creation_date));
    m.insert("url".into(), text_value(&d.url));
    m.insert("views".into(), count_value(&d.views));
    m.insert("purchases".into(), count_value(&d.purchases));
    m.insert("expire".into(), text_value(&d.expire));
    m.insert("productClass".into(), Value::String(d.product_class.wire().into()));
    m.insert("originCountry".into(), text_value(&d.origin_country));
    m.insert("shippingDestinations".into(), text_value(&d.shipping_destinations));
    m.insert("quantity".into(), Value::String(d.quantity.raw().into()));
    m.insert("payment".into(), text_value(&d.payment));
    m.insert("price".into(), Value::String(d.price.raw().into()));
    m.insert("analyst_hasViewed".into(), d.analyst.has_viewed.map(Value::Bool).unwrap_or(Value::Null));
    m.insert("analyst_viewDate".into(), opt_ts_value(&d.analyst.view_date));
    m.insert("analyst_flagged".into(), d.analyst.flagged.map(Value::Bool).unwrap_or(Value::Null));
    m.insert(
        "analyst_notes".into(),
        d.analyst.notes.clone().map(Value::String).unwrap_or(Value::Null),
    );
    m.insert("analyst_closedDate".into(), opt_ts_value(&d.analyst.closed_date));
    m.insert(
        "analyst_dateCollected".into(),
        Value::String(format_timestamp(&d.date_collected)),
    );
    for (k, v) in &d.extensions {
        m.insert(k.clone(), v.clone());
    }
    Value::Object(m)
}

/// Pretty-printed, two-space indented, fixed key order. Equal inputs always
/// produce identical bytes.
pub fn serialize_dndo(d: &Dndo) -> String {
    serde_json::to_string_pretty(&to_json_value(d)).expect("DNDO values are always serializable")
}

pub fn parse_dndo(serialized: &str) -> Result<Dndo, DndoError> {
    let value: Value = serde_json::from_str(serialized)
        .map_err(|e| DndoError::MalformedDocument(e.to_string()))?;
    from_json_value(value)
}

pub fn from_json_value(value: Value) -> Result<Dndo, DndoError> {
    let Value::Object(mut obj) = value else {
        return Err(DndoError::MalformedDocument("top level is not an object".into()));
    };
    let mut take = |key: &str| -> Result<Value, DndoError> {
        obj.remove(key)
            .ok_or_else(|| DndoError::schema(key, "required key missing"))
    };

    let title = take_text(&mut take, "title")?;
    let seller = take_text(&mut take, "seller")?;
    let category = take_text(&mut take, "category")?;
    let creation_date = take_text(&mut take, "creationDate")?;
    let url = take_text(&mut take, "url")?;
    let views = take_count(&mut take, "views")?;
    let purchases = take_count(&mut take, "purchases")?;
    let expire = take_text(&mut take, "expire")?;
    let product_class = match take_text(&mut take, "productClass")? {
        Some(raw) => ProductClass::from_raw(&raw),
        None => ProductClass::Unknown,
    };
    let origin_country = take_text(&mut take, "originCountry")?;
    let shipping_destinations = take_text(&mut take, "shippingDestinations")?;
    let quantity = QuantityValue::parse(&raw_text(&mut take, "quantity")?);
    let payment = take_text(&mut take, "payment")?;
    let price = PriceValue::parse(&raw_text(&mut take, "price")?);

    let has_viewed = take_opt_bool(&mut take, "analyst_hasViewed")?;
    let view_date = take_opt_ts(&mut take, "analyst_viewDate")?;
    let flagged = take_opt_bool(&mut take, "analyst_flagged")?;
    let notes = match take("analyst_notes")? {
        Value::Null => None,
        Value::String(s) if s.is_empty() => None,
        Value::String(s) => Some(s),
        _ => return Err(DndoError::schema("analyst_notes", "expected string or null")),
    };
    let closed_date = take_opt_ts(&mut take, "analyst_closedDate")?;
    let date_collected = match take("analyst_dateCollected")? {
        Value::String(s) => parse_timestamp(&s).ok_or_else(|| {
            DndoError::schema("analyst_dateCollected", format!("bad timestamp `{s}`"))
        })?,
        _ => return Err(DndoError::schema("analyst_dateCollected", "expected timestamp string")),
    };

    let extensions: BTreeMap<String, Value> = obj.into_iter().collect();

    Ok(Dndo {
        title,
        seller,
        category,
        creation_date,
        url,
        views,
        purchases,
        expire,
        product_class,
        origin_country,
        shipping_destinations,
        quantity,
        payment,
        price,
        analyst: AnalystFields {
            has_viewed,
            view_date,
            flagged,
            notes,
            closed_date,
        },
        date_collected,
        extensions,
    })
}

fn raw_text(
    take: &mut impl FnMut(&str) -> Result<Value, DndoError>,
    key: &str,
) -> Result<String, DndoError> {
    match take(key)? {
        Value::String(s) => Ok(s),
        Value::Null => Ok(MISSING.to_string()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(DndoError::schema(key, "expected string")),
    }
}

fn take_text(
    take: &mut impl FnMut(&str) -> Result<Value, DndoError>,
    key: &str,
) -> Result<Option<String>, DndoError> {
    raw_text(take, key).map(scraped_text)
}

fn take_count(
    take: &mut impl FnMut(&str) -> Result<Value, DndoError>,
    key: &str,
) -> Result<Option<u64>, DndoError> {
    match take(key)? {
        Value::Number(n) => n
            .as_u64()
            .map(Some)
            .ok_or_else(|| DndoError::schema(key, "count must be a non-negative integer")),
        Value::Null => Ok(None),
        Value::String(s) => match scraped_text(&s) {
            None => Ok(None),
            Some(t) => t
                .trim()
                .parse::<u64>()
                .map(Some)
                .map_err(|_| DndoError::schema(key, format!("bad count `{t}`"))),
        },
        _ => Err(DndoError::schema(key, "expected count")),
    }
}

fn take_opt_bool(
    take: &mut impl FnMut(&str) -> Result<Value, DndoError>,
    key: &str,
) -> Result<Option<bool>, DndoError> {
    match take(key)? {
        Value::Null => Ok(None),
        Value::Bool(b) => Ok(Some(b)),
        _ => Err(DndoError::schema(key, "expected boolean or null")),
    }
}

fn take_opt_ts(
    take: &mut impl FnMut(&str) -> Result<Value, DndoError>,
    key: &str,
) -> Result<Option<NaiveDateTime>, DndoError> {
    match take(key)? {
        Value::Null => Ok(None),
        Value::String(s) => parse_timestamp(&s)
            .map(Some)
            .ok_or_else(|| DndoError::schema(key, format!("bad timestamp `{s}`"))),
        _ => Err(DndoError::schema(key, "expected timestamp or null")),
    }
}

/// Average HTML size against average DNDO size for one corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub html_avg_bytes: f64,
    pub dndo_avg_bytes: f64,
    pub reduction_percent: f64,
}

impl ReductionReport {
    pub fn from_averages(html_avg_bytes: f64, dndo_avg_bytes: f64) -> Result<Self, MetricError> {
        Ok(ReductionReport {
            html_avg_bytes,
            dndo_avg_bytes,
            reduction_percent: size_reduction_percent(html_avg_bytes, dndo_avg_bytes)?,
        })
    }
}

/// Symmetric percent difference: `100 * |v1 - v2| / ((v1 + v2) / 2)`.
///
/// This is not a plain reduction ratio and can exceed 100.
pub fn size_reduction_percent(v1: f64, v2: f64) -> Result<f64, MetricError> {
    for v in [v1, v2] {
        if !v.is_finite() || v < 0.0 {
            return Err(MetricError::InvalidSize(v));
        }
    }
    if v1 == 0.0 && v2 == 0.0 {
        return Err(MetricError::BothZero);
    }
    Ok(100.0 * (v1 - v2).abs() / ((v1 + v2) / 2.0))
}

pub fn mean_file_size(sizes: &[f64]) -> Result<f64, MetricError> {
    if sizes.is_empty() {
        return Err(MetricError::EmptyList);
    }
    if let Some(bad) = sizes.iter().find(|s| !s.is_finite() || **s < 0.0) {
        return Err(MetricError::InvalidSize(*bad));
    }
    Ok(sizes.iter().sum::<f64>() / sizes.len() as f64)
}
