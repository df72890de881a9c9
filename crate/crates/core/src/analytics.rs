//! Aggregate views over a corpus of DNDOs.
//!
//! Every aggregate is a pure function of the records passed in. Ties in any
//! ranking break by label ascending.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dndo::{Dndo, ProductClass, MISSING};

pub const WORLDWIDE: &str = "Worldwide";
/// Price bucket edges in whole US dollars.
pub const DEFAULT_PRICE_EDGES: [f64; 8] = [0.0, 1.0, 5.0, 10.0, 50.0, 100.0, 500.0, 1000.0];
pub const HISTOGRAM_CURRENCY: &str = "USD";

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("no records with {0}")]
    EmptyCorpus(String),
    #[error("bucket edges must be finite, non-negative and strictly increasing: {0}")]
    BadEdges(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("no aggregate `{0}`")]
    UnknownAggregate(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareReport {
    pub subject: String,
    pub numerator: u64,
    pub denominator: u64,
    pub percent: f64,
}

impl ShareReport {
    /// `percent` is 0 when the denominator is 0.
    pub fn new(subject: impl Into<String>, numerator: u64, denominator: u64) -> Self {
        let percent = if denominator == 0 {
            0.0
        } else {
            100.0 * numerator as f64 / denominator as f64
        };
        ShareReport {
            subject: subject.into(),
            numerator,
            denominator,
            percent,
        }
    }
}

/// Rows of strings with a header, rendered as tab-separated text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = self.columns.join("\t");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| c.replace(['\t', '\n'], " ")).collect();
            out.push_str(&cells.join("\t"));
            out.push('\n');
        }
        out
    }
}

/// Common export surface for aggregate results.
pub trait Aggregate: Serialize {
    fn table(&self) -> Table;

    fn to_tsv(&self) -> String {
        self.table().to_tsv()
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("aggregate serializes")
    }
}

fn pct(p: f64) -> String {
    format!("{p:.2}")
}

fn shares_table(shares: &[ShareReport]) -> Table {
    let mut t = Table::new(&["label", "count", "total", "percent"]);
    for s in shares {
        t.rows.push(vec![
            s.subject.clone(),
            s.numerator.to_string(),
            s.denominator.to_string(),
            pct(s.percent),
        ]);
    }
    t
}

/// Names accepted by [`run_aggregate`].
pub const AGGREGATE_NAMES: [&str; 8] = [
    "split",
    "top-sellers",
    "seller-share",
    "heatmap",
    "prices",
    "payments",
    "quantities",
    "origin-range",
];

/// Optional knobs for [`run_aggregate`]; unset values take the defaults
/// (n = 5, top_k = 5, default price edges, country = Canada).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AggregateParams {
    pub n: Option<usize>,
    pub class: Option<ProductClass>,
    pub top_k: Option<usize>,
    pub edges: Option<Vec<f64>>,
    pub country: Option<String>,
    pub seller: Option<String>,
}

/// An aggregate rendered both ways.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateOutput {
    pub table: Table,
    pub json: serde_json::Value,
}

fn output<A: Aggregate>(a: A) -> AggregateOutput {
    AggregateOutput {
        table: a.table(),
        json: a.to_json(),
    }
}

/// Computes an aggregate by name.
pub fn run_aggregate(docs: &[Dndo], name: &str, p: &AggregateParams) -> Result<AggregateOutput, AnalyticsError> {
    let n = p.n.unwrap_or(5);
    Ok(match name {
        "split" => output(product_class_split(docs)?),
        "top-sellers" => output(top_sellers(docs, n, p.class)),
        "seller-share" => {
            let seller = p
                .seller
                .as_deref()
                .ok_or_else(|| AnalyticsError::InvalidArgument("seller-share needs a seller".into()))?;
            output(seller_share(docs, seller, p.class))
        }
        "heatmap" => output(category_origin_heatmap(docs, p.top_k.unwrap_or(5))?),
        "prices" => {
            let edges = p.edges.clone().unwrap_or_else(|| DEFAULT_PRICE_EDGES.to_vec());
            output(price_histogram(docs, p.class, &edges)?)
        }
        "payments" => output(payment_share(docs)?),
        "quantities" => output(quantity_distribution(docs, n)),
        "origin-range" => output(origin_attribution_range(docs, p.country.as_deref().unwrap_or("Canada"))?),
        other => return Err(AnalyticsError::UnknownAggregate(other.to_string())),
    })
}

/// Sorts (label, count) pairs by count descending, then label ascending.
pub fn rank_counts<I: IntoIterator<Item = (String, u64)>>(counts: I) -> Vec<(String, u64)> {
    let mut v: Vec<(String, u64)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

fn count_by<'a, F>(docs: &'a [Dndo], key: F) -> HashMap<String, u64>
where
    F: Fn(&'a Dndo) -> Option<String>,
{
    let mut m = HashMap::new();
    for d in docs {
        if let Some(k) = key(d) {
            *m.entry(k).or_insert(0) += 1;
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSplit {
    /// Digital then Physical, over records with a known class.
    pub shares: Vec<ShareReport>,
    pub unknown: u64,
}

impl Aggregate for ClassSplit {
    fn table(&self) -> Table {
        let mut t = shares_table(&self.shares);
        t.rows.push(vec![
            ProductClass::Unknown.as_str().to_string(),
            self.unknown.to_string(),
            String::new(),
            String::new(),
        ]);
        t
    }
}

pub fn product_class_split(docs: &[Dndo]) -> Result<ClassSplit, AnalyticsError> {
    if docs.is_empty() {
        return Err(AnalyticsError::EmptyCorpus("any records".into()));
    }
    let digital = docs.iter().filter(|d| d.product_class == ProductClass::Digital).count() as u64;
    let physical = docs.iter().filter(|d| d.product_class == ProductClass::Physical).count() as u64;
    let known = digital + physical;
    if known == 0 {
        return Err(AnalyticsError::EmptyCorpus("a known product class".into()));
    }
    Ok(ClassSplit {
        shares: vec![
            ShareReport::new(ProductClass::Digital.as_str(), digital, known),
            ShareReport::new(ProductClass::Physical.as_str(), physical, known),
        ],
        unknown: docs.len() as u64 - known,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedCounts {
    pub rows: Vec<(String, u64)>,
}

impl Aggregate for RankedCounts {
    fn table(&self) -> Table {
        let mut t = Table::new(&["label", "count"]);
        for (label, count) in &self.rows {
            t.rows.push(vec![label.clone(), count.to_string()]);
        }
        t
    }
}

fn class_ok(d: &Dndo, class: Option<ProductClass>) -> bool {
    class.map_or(true, |c| d.product_class == c)
}

/// Sellers ranked by post count, optionally within one product class.
/// Records without a seller are skipped.
pub fn top_sellers(docs: &[Dndo], n: usize, class: Option<ProductClass>) -> RankedCounts {
    let counts = count_by(docs, |d| {
        class_ok(d, class).then(|| d.seller.clone()).flatten()
    });
    let mut rows = rank_counts(counts);
    rows.truncate(n);
    RankedCounts { rows }
}

/// Share of `seller`'s posts among posts of `class` (or all posts).
pub fn seller_share(docs: &[Dndo], seller: &str, class: Option<ProductClass>) -> ShareReport {
    let pool: Vec<&Dndo> = docs.iter().filter(|d| class_ok(d, class)).collect();
    let mine = pool.iter().filter(|d| d.seller.as_deref() == Some(seller)).count();
    ShareReport::new(seller, mine as u64, pool.len() as u64)
}

impl Aggregate for ShareReport {
    fn table(&self) -> Table {
        shares_table(std::slice::from_ref(self))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatmapMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// `cells[row][col]`.
    pub cells: Vec<Vec<u64>>,
}

impl HeatmapMatrix {
    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }
}

impl Aggregate for HeatmapMatrix {
    fn table(&self) -> Table {
        let mut cols = vec!["category"];
        cols.extend(self.col_labels.iter().map(String::as_str));
        let mut t = Table::new(&cols);
        for (label, row) in self.row_labels.iter().zip(&self.cells) {
            let mut cells = vec![label.clone()];
            cells.extend(row.iter().map(u64::to_string));
            t.rows.push(cells);
        }
        t
    }
}

/// Post counts for the `top_k` categories against every origin seen among
/// them. Rows and columns are ordered by total count, then label.
pub fn category_origin_heatmap(docs: &[Dndo], top_k: usize) -> Result<HeatmapMatrix, AnalyticsError> {
    if top_k == 0 {
        return Err(AnalyticsError::InvalidArgument("top_k must be at least 1".into()));
    }
    let by_category = count_by(docs, |d| d.category.clone());
    if by_category.is_empty() {
        return Err(AnalyticsError::EmptyCorpus("a category".into()));
    }
    let mut ranked = rank_counts(by_category);
    ranked.truncate(top_k);
    let row_labels: Vec<String> = ranked.into_iter().map(|(c, _)| c).collect();
    let row_of: HashMap<&str, usize> = row_labels.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();

    let mut pairs: HashMap<(usize, &str), u64> = HashMap::new();
    let mut col_totals: HashMap<String, u64> = HashMap::new();
    for d in docs {
        let (Some(cat), Some(origin)) = (&d.category, &d.origin_country) else { continue };
        let Some(&row) = row_of.get(cat.as_str()) else { continue };
        *pairs.entry((row, origin.as_str())).or_insert(0) += 1;
        *col_totals.entry(origin.clone()).or_insert(0) += 1;
    }
    let col_labels: Vec<String> = rank_counts(col_totals).into_iter().map(|(c, _)| c).collect();
    let cells = (0..row_labels.len())
        .map(|r| {
            col_labels
                .iter()
                .map(|c| pairs.get(&(r, c.as_str())).copied().unwrap_or(0))
                .collect()
        })
        .collect();
    Ok(HeatmapMatrix {
        row_labels,
        col_labels,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceBucket {
    pub low: f64,
    pub high: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceHistogram {
    pub currency: String,
    /// `[low, high)` per consecutive pair of edges.
    pub buckets: Vec<PriceBucket>,
    /// Parsed prices at or above the last edge.
    pub overflow: u64,
    /// Parsed prices below the first edge.
    pub underflow: u64,
    /// Records whose price did not parse to an amount.
    pub unparsed: u64,
    /// Parsed prices in another currency (no conversion is attempted).
    pub other_currency: u64,
}

impl Aggregate for PriceHistogram {
    fn table(&self) -> Table {
        let mut t = Table::new(&["bucket", "count"]);
        for b in &self.buckets {
            t.rows.push(vec![format!("[{}, {})", b.low, b.high), b.count.to_string()]);
        }
        for (label, n) in [
            ("underflow", self.underflow),
            ("overflow", self.overflow),
            ("unparsed", self.unparsed),
            ("other_currency", self.other_currency),
        ] {
            t.rows.push(vec![label.to_string(), n.to_string()]);
        }
        t
    }
}

fn edge_to_minor(e: f64) -> Option<u64> {
    (e.is_finite() && e >= 0.0 && e * 100.0 <= u64::MAX as f64).then(|| (e * 100.0).round() as u64)
}

pub fn price_histogram(
    docs: &[Dndo],
    class: Option<ProductClass>,
    edges: &[f64],
) -> Result<PriceHistogram, AnalyticsError> {
    let minor: Option<Vec<u64>> = edges.iter().map(|e| edge_to_minor(*e)).collect();
    let minor = match minor {
        Some(m) if m.len() >= 2 && m.windows(2).all(|w| w[0] < w[1]) => m,
        _ => return Err(AnalyticsError::BadEdges(format!("{edges:?}"))),
    };
    let mut hist = PriceHistogram {
        currency: HISTOGRAM_CURRENCY.to_string(),
        buckets: edges
            .windows(2)
            .map(|w| PriceBucket {
                low: w[0],
                high: w[1],
                count: 0,
            })
            .collect(),
        overflow: 0,
        underflow: 0,
        unparsed: 0,
        other_currency: 0,
    };
    for d in docs.iter().filter(|d| class_ok(d, class)) {
        let Some(amount) = d.price.amount_minor_units() else {
            hist.unparsed += 1;
            continue;
        };
        if d.price.currency() != Some(HISTOGRAM_CURRENCY) {
            hist.other_currency += 1;
            continue;
        }
        if amount < minor[0] {
            hist.underflow += 1;
        } else if amount >= minor[minor.len() - 1] {
            hist.overflow += 1;
        } else {
            let i = minor.partition_point(|e| *e <= amount) - 1;
            hist.buckets[i].count += 1;
        }
    }
    Ok(hist)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareList {
    pub shares: Vec<ShareReport>,
}

impl Aggregate for ShareList {
    fn table(&self) -> Table {
        shares_table(&self.shares)
    }
}

/// Share per distinct payment value; a missing value counts as "None".
pub fn payment_share(docs: &[Dndo]) -> Result<ShareList, AnalyticsError> {
    if docs.is_empty() {
        return Err(AnalyticsError::EmptyCorpus("any records".into()));
    }
    let counts = count_by(docs, |d| Some(d.payment.clone().unwrap_or_else(|| MISSING.to_string())));
    let total = docs.len() as u64;
    Ok(ShareList {
        shares: rank_counts(counts)
            .into_iter()
            .map(|(label, n)| ShareReport::new(label, n, total))
            .collect(),
    })
}

/// Most frequent raw quantity strings.
pub fn quantity_distribution(docs: &[Dndo], n: usize) -> RankedCounts {
    let counts = count_by(docs, |d| Some(d.quantity.raw().trim().to_string()));
    let mut rows = rank_counts(counts);
    rows.truncate(n);
    RankedCounts { rows }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRange {
    pub country: String,
    pub exact: u64,
    pub worldwide: u64,
    pub total: u64,
    pub min_percent: f64,
    pub max_percent: f64,
}

impl Aggregate for AttributionRange {
    fn table(&self) -> Table {
        let mut t = Table::new(&["country", "exact", "worldwide", "total", "min_percent", "max_percent"]);
        t.rows.push(vec![
            self.country.clone(),
            self.exact.to_string(),
            self.worldwide.to_string(),
            self.total.to_string(),
            pct(self.min_percent),
            pct(self.max_percent),
        ]);
        t
    }
}

/// Bounds on the share of posts that may originate in `country`, given
/// that "Worldwide" posts could hide any origin.
pub fn origin_attribution_range(docs: &[Dndo], country: &str) -> Result<AttributionRange, AnalyticsError> {
    if country.trim().is_empty() || country.eq_ignore_ascii_case(WORLDWIDE) {
        return Err(AnalyticsError::InvalidArgument(format!(
            "`{country}` is not a concrete country"
        )));
    }
    let exact = docs.iter().filter(|d| d.origin_country.as_deref() == Some(country)).count() as u64;
    let worldwide = docs
        .iter()
        .filter(|d| d.origin_country.as_deref() == Some(WORLDWIDE))
        .count() as u64;
    let total = docs.len() as u64;
    Ok(AttributionRange {
        country: country.to_string(),
        exact,
        worldwide,
        total,
        min_percent: ShareReport::new("", exact, total).percent,
        max_percent: ShareReport::new("", exact + worldwide, total).percent,
    })
}

/// Distinct values in a text field, for UI pickers.
pub fn distinct_values(docs: &[Dndo], field: impl Fn(&Dndo) -> Option<&str>) -> BTreeMap<String, u64> {
    let mut m = BTreeMap::new();
    for d in docs {
        if let Some(v) = field(d) {
            *m.entry(v.to_string()).or_insert(0) += 1;
        }
    }
    m
}
