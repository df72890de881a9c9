//! REST service over an [`IndexStore`] for the analyst interface.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

use crate::analytics::{self, AggregateParams, AnalyticsError};
use crate::bgserver::BackgroundServer;
use crate::dndo::{to_json_value, Dndo, ProductClass};
use crate::index::{IndexError, IndexStore, Mutation, SearchField, SearchFilters};

pub const DEFAULT_PAGE_SIZE: usize = 25;
pub const MAX_PAGE_SIZE: usize = 500;
pub const ANALYTICS_TTL: Duration = Duration::from_secs(5);
pub const TOTAL_COUNT_HEADER: &str = "x-total-count";
/// Request bodies above this are refused before parsing.
const BODY_LIMIT: usize = 8 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    NotFound,
    BadRequest,
    Conflict,
    TooLarge,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
        }
    }

    fn bad(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message)
    }

    pub fn status(&self) -> StatusCode {
        match self.code {
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::Conflict => StatusCode::CONFLICT,
            ErrorCode::TooLarge => StatusCode::PAYLOAD_TOO_LARGE,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(json!({ "error": self }))).into_response()
    }
}

impl From<IndexError> for ApiError {
    fn from(e: IndexError) -> Self {
        let code = match &e {
            IndexError::UnknownDoc(_) | IndexError::UnknownIndex(_) => ErrorCode::NotFound,
            IndexError::IndexExists(_) => ErrorCode::Conflict,
            IndexError::CommentTooLarge { .. } => ErrorCode::TooLarge,
            IndexError::EmptyQuery
            | IndexError::InvalidName(_)
            | IndexError::InvalidDocument(_)
            | IndexError::EmptyComment => ErrorCode::BadRequest,
            IndexError::CorruptSnapshot(_) | IndexError::Io { .. } => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        match e {
            AnalyticsError::UnknownAggregate(_) => ApiError::new(ErrorCode::NotFound, e.to_string()),
            _ => ApiError::bad(e.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::new(ErrorCode::TooLarge, e.body_text())
        } else {
            ApiError::bad(e.body_text())
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct AppState {
    store: Arc<IndexStore>,
    cache: Mutex<HashMap<String, (Instant, Response<String>)>>,
}

#[derive(Clone, Debug, Serialize)]
struct RecordView {
    doc_id: String,
    record: Value,
}

fn view(doc_id: &str, d: &Dndo) -> RecordView {
    RecordView {
        doc_id: doc_id.to_string(),
        record: to_json_value(d),
    }
}

fn parse_class(raw: &str) -> ApiResult<ProductClass> {
    match raw.to_ascii_lowercase().as_str() {
        "digital" => Ok(ProductClass::Digital),
        "physical" => Ok(ProductClass::Physical),
        "unknown" | "none" => Ok(ProductClass::Unknown),
        _ => Err(ApiError::bad(format!("unknown product class `{raw}`"))),
    }
}

fn paging(page: Option<usize>, size: Option<usize>) -> ApiResult<(usize, usize)> {
    let page = page.unwrap_or(1);
    let size = size.unwrap_or(DEFAULT_PAGE_SIZE);
    if page == 0 {
        return Err(ApiError::bad("page starts at 1"));
    }
    if size == 0 || size > MAX_PAGE_SIZE {
        return Err(ApiError::bad(format!("size must be within 1..={MAX_PAGE_SIZE}")));
    }
    Ok((page, size))
}

fn with_total(total: usize, body: Value) -> Response {
    let mut resp = Json(body).into_response();
    resp.headers_mut()
        .insert(TOTAL_COUNT_HEADER, HeaderValue::from(total as u64));
    resp
}

async fn list_indexes(State(s): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    let mut out = Vec::new();
    for name in s.store.list_indexes() {
        let records = s.store.read(&name, |c| c.len())?;
        out.push(json!({ "name": name, "records": records }));
    }
    Ok(Json(json!({ "indexes": out })))
}

#[derive(Deserialize)]
struct CreateIndex {
    name: String,
}

async fn create_index(
    State(s): State<Arc<AppState>>,
    body: Result<Json<CreateIndex>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let Json(body) = body?;
    s.store.create(&body.name)?;
    Ok((StatusCode::CREATED, Json(json!({ "name": body.name, "records": 0 }))))
}

async fn delete_index(State(s): State<Arc<AppState>>, Path(name): Path<String>) -> ApiResult<StatusCode> {
    s.store.delete(&name)?;
    s.cache.lock().clear();
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
struct RecordsQuery {
    index: Option<String>,
    page: Option<usize>,
    size: Option<usize>,
}

fn require_index(index: Option<String>) -> ApiResult<String> {
    index.ok_or_else(|| ApiError::bad("missing `index` parameter"))
}

async fn list_records(State(s): State<Arc<AppState>>, Query(q): Query<RecordsQuery>) -> ApiResult<Response> {
    let index = require_index(q.index)?;
    let (page, size) = paging(q.page, q.size)?;
    let (total, records) = s.store.read(&index, |c| {
        let records: Vec<RecordView> = c
            .docs()
            .skip((page - 1) * size)
            .take(size)
            .map(|(id, d)| view(id, d))
            .collect();
        (c.len(), records)
    })?;
    Ok(with_total(
        total,
        json!({ "index": index, "page": page, "size": size, "total": total, "records": records }),
    ))
}

#[derive(Deserialize)]
struct IndexParam {
    index: Option<String>,
}

async fn get_record(
    State(s): State<Arc<AppState>>,
    Path(doc_id): Path<String>,
    Query(q): Query<IndexParam>,
) -> ApiResult<Json<RecordView>> {
    let index = require_index(q.index)?;
    let d = s.store.get(&index, &doc_id)?;
    Ok(Json(view(&doc_id, &d)))
}

#[derive(Deserialize)]
struct SearchQuery {
    index: Option<String>,
    q: Option<String>,
    field: Option<String>,
    class: Option<String>,
    flagged: Option<bool>,
    viewed: Option<bool>,
    origin: Option<String>,
    seller: Option<String>,
    page: Option<usize>,
    size: Option<usize>,
}

async fn search(State(s): State<Arc<AppState>>, Query(q): Query<SearchQuery>) -> ApiResult<Response> {
    let text = q.q.unwrap_or_default();
    let field = match q.field.as_deref() {
        None | Some("") | Some("all") => None,
        Some(f) => Some(SearchField::parse(f).ok_or_else(|| ApiError::bad(format!("unknown field `{f}`")))?),
    };
    let filters = SearchFilters {
        product_class: q.class.as_deref().filter(|c| !c.is_empty()).map(parse_class).transpose()?,
        flagged: q.flagged,
        viewed: q.viewed,
        origin_country: q.origin,
        seller: q.seller,
        ..Default::default()
    };
    let (page, size) = paging(q.page, q.size)?;
    let hits: Vec<(String, crate::index::SearchHit)> = match &q.index {
        Some(index) => s
            .store
            .search(index, &text, field, &filters)?
            .into_iter()
            .map(|h| (index.clone(), h))
            .collect(),
        None => s.store.search_all(&text, field, &filters)?,
    };
    let total = hits.len();
    let mut out = Vec::new();
    for (index, hit) in hits.into_iter().skip((page - 1) * size).take(size) {
        let d = s.store.get(&index, &hit.doc_id)?;
        out.push(json!({
            "index": index,
            "doc_id": hit.doc_id,
            "score": hit.score,
            "matched_fields": hit.matched_fields,
            "record": to_json_value(&d),
        }));
    }
    Ok(with_total(
        total,
        json!({ "query": text, "page": page, "size": size, "total": total, "hits": out }),
    ))
}

#[derive(Deserialize)]
struct ViewedBody {
    index: String,
}

#[derive(Deserialize)]
struct FlagBody {
    index: String,
    #[serde(default)]
    value: Option<bool>,
}

#[derive(Deserialize)]
struct CommentBody {
    index: String,
    text: String,
}

fn mutate(s: &AppState, index: &str, doc_id: &str, m: Mutation) -> ApiResult<Json<RecordView>> {
    let d = s.store.annotate(index, doc_id, m)?;
    s.cache.lock().clear();
    Ok(Json(view(doc_id, &d)))
}

async fn post_viewed(
    State(s): State<Arc<AppState>>,
    Path(doc_id): Path<String>,
    body: Result<Json<ViewedBody>, JsonRejection>,
) -> ApiResult<Json<RecordView>> {
    let Json(b) = body?;
    mutate(&s, &b.index, &doc_id, Mutation::Viewed)
}

async fn post_flag(
    State(s): State<Arc<AppState>>,
    Path(doc_id): Path<String>,
    body: Result<Json<FlagBody>, JsonRejection>,
) -> ApiResult<Json<RecordView>> {
    let Json(b) = body?;
    mutate(&s, &b.index, &doc_id, Mutation::Flag { value: b.value })
}

async fn post_comment(
    State(s): State<Arc<AppState>>,
    Path(doc_id): Path<String>,
    body: Result<Json<CommentBody>, JsonRejection>,
) -> ApiResult<Json<RecordView>> {
    let Json(b) = body?;
    mutate(&s, &b.index, &doc_id, Mutation::Comment { text: b.text })
}

#[derive(Deserialize, Default)]
struct AnalyticsQuery {
    index: Option<String>,
    n: Option<usize>,
    class: Option<String>,
    top_k: Option<usize>,
    edges: Option<String>,
    country: Option<String>,
    seller: Option<String>,
    format: Option<String>,
}

fn compute_aggregate(docs: &[Dndo], name: &str, q: &AnalyticsQuery) -> ApiResult<Response<String>> {
    let edges = match &q.edges {
        Some(raw) => Some(
            raw.split(',')
                .map(|e| e.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| ApiError::bad(format!("edges: {e}")))?,
        ),
        None => None,
    };
    let params = AggregateParams {
        n: q.n,
        class: q.class.as_deref().filter(|c| !c.is_empty()).map(parse_class).transpose()?,
        top_k: q.top_k,
        edges,
        country: q.country.clone(),
        seller: q.seller.clone(),
    };
    let out = analytics::run_aggregate(docs, name, &params)?;
    let (body, ctype) = if q.format.as_deref() == Some("tsv") {
        (out.table.to_tsv(), "text/tab-separated-values")
    } else {
        (out.json.to_string(), "application/json")
    };
    Ok(Response::builder()
        .header(header::CONTENT_TYPE, ctype)
        .body(body)
        .unwrap())
}

async fn analytics_endpoint(
    State(s): State<Arc<AppState>>,
    Path(name): Path<String>,
    Query(q): Query<AnalyticsQuery>,
    raw: axum::extract::RawQuery,
) -> ApiResult<Response<String>> {
    let index = require_index(q.index.clone())?;
    let key = format!("{name}?{}", raw.0.unwrap_or_default());
    if let Some((at, resp)) = s.cache.lock().get(&key) {
        if at.elapsed() < ANALYTICS_TTL {
            let mut copy = Response::new(resp.body().clone());
            *copy.headers_mut() = resp.headers().clone();
            return Ok(copy);
        }
    }
    let docs: Vec<Dndo> = s.store.read(&index, |c| c.docs().map(|(_, d)| d.clone()).collect())?;
    let resp = compute_aggregate(&docs, &name, &q)?;
    let mut copy = Response::new(resp.body().clone());
    *copy.headers_mut() = resp.headers().clone();
    s.cache.lock().insert(key, (Instant::now(), copy));
    Ok(resp)
}

async fn not_found() -> ApiError {
    ApiError::new(ErrorCode::NotFound, "no such endpoint")
}

pub fn router(store: Arc<IndexStore>) -> Router {
    let state = Arc::new(AppState {
        store,
        cache: Mutex::new(HashMap::new()),
    });
    Router::new()
        .route("/indexes", get(list_indexes).post(create_index))
        .route("/indexes/:name", axum::routing::delete(delete_index))
        .route("/records", get(list_records))
        .route("/records/:doc_id", get(get_record))
        .route("/records/:doc_id/viewed", post(post_viewed))
        .route("/records/:doc_id/flag", post(post_flag))
        .route("/records/:doc_id/comments", post(post_comment))
        .route("/search", get(search))
        .route("/analytics/:name", get(analytics_endpoint))
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Running API service.
pub struct ApiServer {
    server: BackgroundServer,
}

impl ApiServer {
    pub fn start(store: Arc<IndexStore>, bind: &str) -> std::io::Result<Self> {
        Ok(ApiServer {
            server: BackgroundServer::start(router(store), bind, "api")?,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.server.addr()
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr())
    }

    pub fn shutdown(mut self) {
        self.server.stop();
    }

    pub fn wait(mut self) {
        self.server.wait();
    }
}
