//! C ABI over the embedded index store and analytics.
//!
//! Every function returns a [`DnmStatus`]. On failure a message is kept in
//! thread-local storage and can be read with [`dnm_last_error`]. Strings
//! handed out through `out_json` parameters are owned by the caller and
//! must be released with [`dnm_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use darknet_miner::analytics::{run_aggregate, AggregateParams, AnalyticsError};
use darknet_miner::clock;
use darknet_miner::dndo::{from_json_value, to_json_value, Dndo, ProductClass};
use darknet_miner::index::{IndexError, IndexStore, Mutation, SearchField, SearchFilters};
use serde_json::{json, Value};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DnmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    NotFound = 4,
    Conflict = 5,
    TooLarge = 6,
    Io = 7,
    Corrupt = 8,
    Panic = 9,
}

/// Opaque handle to an index store directory.
pub struct DnmStore {
    store: IndexStore,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: DnmStatus,
    message: String,
}

impl Failure {
    fn new(status: DnmStatus, message: impl Into<String>) -> Self {
        Failure {
            status,
            message: message.into(),
        }
    }
}

impl From<IndexError> for Failure {
    fn from(e: IndexError) -> Self {
        let status = match &e {
            IndexError::UnknownDoc(_) | IndexError::UnknownIndex(_) => DnmStatus::NotFound,
            IndexError::IndexExists(_) => DnmStatus::Conflict,
            IndexError::CommentTooLarge { .. } => DnmStatus::TooLarge,
            IndexError::CorruptSnapshot(_) => DnmStatus::Corrupt,
            IndexError::Io { .. } => DnmStatus::Io,
            _ => DnmStatus::InvalidArgument,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<AnalyticsError> for Failure {
    fn from(e: AnalyticsError) -> Self {
        let status = match e {
            AnalyticsError::UnknownAggregate(_) => DnmStatus::NotFound,
            _ => DnmStatus::InvalidArgument,
        };
        Failure::new(status, e.to_string())
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DnmStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DnmStatus::Ok,
        Ok(Err(failure)) => {
            set_last_error(&failure.message);
            failure.status
        }
        Err(_) => {
            set_last_error("internal panic");
            DnmStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn required_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(DnmStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(DnmStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn optional_str<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        required_str(p, what).map(Some)
    }
}

/// # Safety
/// `handle` must be null or a pointer from [`dnm_store_open`].
unsafe fn store_ref<'a>(handle: *const DnmStore) -> Result<&'a IndexStore, Failure> {
    handle
        .as_ref()
        .map(|h| &h.store)
        .ok_or_else(|| Failure::new(DnmStatus::NullArgument, "store handle is null"))
}

/// # Safety
/// `out` must be null or valid for one pointer write.
unsafe fn write_json(out: *mut *mut c_char, value: &Value) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(DnmStatus::NullArgument, "out_json is null"));
    }
    let text = CString::new(value.to_string())
        .map_err(|_| Failure::new(DnmStatus::InvalidArgument, "output contains NUL"))?;
    *out = text.into_raw();
    Ok(())
}

fn parse_json(text: &str, what: &str) -> Result<Value, Failure> {
    serde_json::from_str(text).map_err(|e| Failure::new(DnmStatus::InvalidArgument, format!("{what}: {e}")))
}

fn record_json(doc_id: &str, d: &Dndo) -> Value {
    json!({ "doc_id": doc_id, "record": to_json_value(d) })
}

/// Opens (creating if needed) the store rooted at `data_dir`.
///
/// # Safety
/// `data_dir` must be a NUL-terminated string and `out` valid for one
/// pointer write.
#[no_mangle]
pub unsafe extern "C" fn dnm_store_open(data_dir: *const c_char, out: *mut *mut DnmStore) -> DnmStatus {
    guard(|| {
        let dir = required_str(data_dir, "data_dir")?;
        if out.is_null() {
            return Err(Failure::new(DnmStatus::NullArgument, "out is null"));
        }
        let store = IndexStore::open(Path::new(dir), clock::system())?;
        *out = Box::into_raw(Box::new(DnmStore { store }));
        Ok(())
    })
}

/// Checkpoints every index and releases the handle. Null is ignored.
///
/// # Safety
/// `handle` must be null or a pointer from [`dnm_store_open`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dnm_store_free(handle: *mut DnmStore) {
    if handle.is_null() {
        return;
    }
    let boxed = Box::from_raw(handle);
    let _ = catch_unwind(AssertUnwindSafe(|| {
        if let Err(e) = boxed.store.checkpoint_all() {
            set_last_error(&e.to_string());
        }
    }));
}

/// # Safety
/// Pointer arguments as documented on [`dnm_store_open`].
#[no_mangle]
pub unsafe extern "C" fn dnm_index_create(handle: *mut DnmStore, name: *const c_char) -> DnmStatus {
    guard(|| {
        let store = store_ref(handle)?;
        store.create(required_str(name, "name")?)?;
        Ok(())
    })
}

/// Writes `{"indexes":[{"name":..,"records":..}]}`.
///
/// # Safety
/// Pointer arguments as documented on [`dnm_store_open`].
#[no_mangle]
pub unsafe extern "C" fn dnm_index_list(handle: *mut DnmStore, out_json: *mut *mut c_char) -> DnmStatus {
    guard(|| {
        let store = store_ref(handle)?;
        let mut list = Vec::new();
        for name in store.list_indexes() {
            let records = store.read(&name, |c| c.len())?;
            list.push(json!({ "name": name, "records": records }));
        }
        write_json(out_json, &json!({ "indexes": list }))
    })
}

/// Indexes one DNDO object or an array of them into `name` (created if
/// missing). `out_count`, when not null, receives the number indexed.
///
/// # Safety
/// Pointer arguments as documented on [`dnm_store_open`]; `out_count` may
/// be null.
#[no_mangle]
pub unsafe extern "C" fn dnm_index_records(
    handle: *mut DnmStore,
    name: *const c_char,
    dndo_json: *const c_char,
    out_count: *mut usize,
) -> DnmStatus {
    guard(|| {
        let store = store_ref(handle)?;
        let name = required_str(name, "name")?;
        let value = parse_json(required_str(dndo_json, "dndo_json")?, "dndo_json")?;
        let items = match value {
            Value::Array(items) => items,
            single => vec![single],
        };
        let docs = items
            .into_iter()
            .map(|v| from_json_value(v).map_err(|e| Failure::new(DnmStatus::InvalidArgument, e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let n = docs.len();
        store.ensure(name)?;
        store.index_records(name, docs)?;
        if !out_count.is_null() {
            *out_count = n;
        }
        Ok(())
    })
}

/// Writes `{"doc_id":..,"record":{..}}`.
///
/// # Safety
/// Pointer arguments as documented on [`dnm_store_open`].
#[no_mangle]
pub unsafe extern "C" fn dnm_get_record(
    handle: *mut DnmStore,
    name: *const c_char,
    doc_id: *const c_char,
    out_json: *mut *mut c_char,
) -> DnmStatus {
    guard(|| {
        let store = store_ref(handle)?;
        let doc_id = required_str(doc_id, "doc_id")?;
        let d = store.get(required_str(name, "name")?, doc_id)?;
        write_json(out_json, &record_json(doc_id, &d))
    })
}

/// Searches one index, or every index when `name` is null. `field` may be
/// null (all fields) or one of title, seller, category, notes.
/// `filters_json` may be null or an object with any of product_class,
/// flagged, viewed, origin_country, seller, payment, currency,
/// price_min_minor, price_max_minor.
///
/// Writes `{"total":..,"hits":[{"index","doc_id","score","matched_fields"}]}`.
///
/// # Safety
/// Pointer arguments as documented on [`dnm_store_open`]; `name`, `field`
/// and `filters_json` may be null.
#[no_mangle]
pub unsafe extern "C" fn dnm_search(
    handle: *mut DnmStore,
    name: *const c_char,
    query: *const c_char,
    field: *const c_char,
    filters_json: *const c_char,
    out_json: *mut *mut c_char,
) -> DnmStatus {
    guard(|| {
        let store = store_ref(handle)?;
        let query = required_str(query, "query")?;
        let field = match optional_str(field, "field")? {
            None => None,
            Some(raw) => Some(
                SearchField::parse(raw)
                    .ok_or_else(|| Failure::new(DnmStatus::InvalidArgument, format!("unknown field `{raw}`")))?,
            ),
        };
        let filters: SearchFilters = match optional_str(filters_json, "filters_json")? {
            None => SearchFilters::default(),
            Some(text) => serde_json::from_str(text)
                .map_err(|e| Failure::new(DnmStatus::InvalidArgument, format!("filters_json: {e}")))?,
        };
        let hits = match optional_str(name, "name")? {
            Some(name) => store
                .search(name, query, field, &filters)?
                .into_iter()
                .map(|h| (name.to_string(), h))
                .collect(),
            None => store.search_all(query, field, &filters)?,
        };
        let hits: Vec<Value> = hits
            .into_iter()
            .map(|(index, h)| {
                json!({
                    "index": index,
                    "doc_id": h.doc_id,
                    "score": h.score,
                    "matched_fields": h.matched_fields,
                })
            })
            .collect();
        write_json(out_json, &json!({ "total": hits.len(), "hits": hits }))
    })
}

/// Applies one analyst mutation given as JSON: `{"kind":"viewed"}`,
/// `{"kind":"flag"}` (toggle), `{"kind":"flag","value":true}`,
/// `{"kind":"comment","text":".."}` or `{"kind":"close"}`. Writes the
/// updated record.
///
/// # Safety
/// Pointer arguments as documented on [`dnm_store_open`].
#[no_mangle]
pub unsafe extern "C" fn dnm_annotate(
    handle: *mut DnmStore,
    name: *const c_char,
    doc_id: *const c_char,
    mutation_json: *const c_char,
    out_json: *mut *mut c_char,
) -> DnmStatus {
    guard(|| {
        let store = store_ref(handle)?;
        let name = required_str(name, "name")?;
        let doc_id = required_str(doc_id, "doc_id")?;
        let mutation: Mutation = serde_json::from_str(required_str(mutation_json, "mutation_json")?)
            .map_err(|e| Failure::new(DnmStatus::InvalidArgument, format!("mutation_json: {e}")))?;
        let d = store.annotate(name, doc_id, mutation)?;
        write_json(out_json, &record_json(doc_id, &d))
    })
}

fn aggregate_params(v: &Value) -> Result<AggregateParams, Failure> {
    let bad = |what: &str| Failure::new(DnmStatus::InvalidArgument, format!("params: bad `{what}`"));
    let usize_of = |key: &str| -> Result<Option<usize>, Failure> {
        match v.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(x) => x.as_u64().map(|n| Some(n as usize)).ok_or_else(|| bad(key)),
        }
    };
    let string_of = |key: &str| -> Result<Option<String>, Failure> {
        match v.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(x) => x.as_str().map(|s| Some(s.to_string())).ok_or_else(|| bad(key)),
        }
    };
    let class = match string_of("class")? {
        None => None,
        Some(c) => match c.to_ascii_lowercase().as_str() {
            "digital" => Some(ProductClass::Digital),
            "physical" => Some(ProductClass::Physical),
            _ => return Err(bad("class")),
        },
    };
    let edges = match v.get("edges") {
        None | Some(Value::Null) => None,
        Some(Value::Array(items)) => Some(
            items
                .iter()
                .map(|e| e.as_f64().ok_or_else(|| bad("edges")))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        Some(_) => return Err(bad("edges")),
    };
    Ok(AggregateParams {
        n: usize_of("n")?,
        class,
        top_k: usize_of("top_k")?,
        edges,
        country: string_of("country")?,
        seller: string_of("seller")?,
    })
}

/// Computes an aggregate (split, top-sellers, seller-share, heatmap,
/// prices, payments, quantities, origin-range) over one index.
/// `params_json` may be null or an object with n, class, top_k, edges,
/// country, seller.
///
/// # Safety
/// Pointer arguments as documented on [`dnm_store_open`]; `params_json`
/// may be null.
#[no_mangle]
pub unsafe extern "C" fn dnm_analytics(
    handle: *mut DnmStore,
    name: *const c_char,
    aggregate: *const c_char,
    params_json: *const c_char,
    out_json: *mut *mut c_char,
) -> DnmStatus {
    guard(|| {
        let store = store_ref(handle)?;
        let name = required_str(name, "name")?;
        let aggregate = required_str(aggregate, "aggregate")?;
        let params = match optional_str(params_json, "params_json")? {
            None => AggregateParams::default(),
            Some(text) => {
                let v = parse_json(text, "params_json")?;
                if !v.is_object() {
                    return Err(Failure::new(DnmStatus::InvalidArgument, "params_json must be an object"));
                }
                aggregate_params(&v)?
            }
        };
        let docs: Vec<Dndo> = store.read(name, |c| c.docs().map(|(_, d)| d.clone()).collect())?;
        let out = run_aggregate(&docs, aggregate, &params)?;
        write_json(out_json, &out.json)
    })
}

/// Writes snapshots for every index and truncates their logs.
///
/// # Safety
/// Pointer arguments as documented on [`dnm_store_open`].
#[no_mangle]
pub unsafe extern "C" fn dnm_checkpoint(handle: *mut DnmStore) -> DnmStatus {
    guard(|| {
        store_ref(handle)?.checkpoint_all()?;
        Ok(())
    })
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn dnm_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned through an `out_json` parameter. Null is
/// ignored.
///
/// # Safety
/// `s` must be null or a pointer produced by this library and not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn dnm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn dnm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
