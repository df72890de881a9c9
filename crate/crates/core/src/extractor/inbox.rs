use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, NaiveDateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{parse_listing, ExtractError, MarketProfile};
use crate::dndo::{serialize_dndo, Dndo, FILE_SUFFIX};
use crate::harvester::{read_manifest, HANDOFF_FILE, MANIFEST_FILE};
use crate::index::IndexStore;

#[derive(Debug, Error)]
#[error("{0}")]
pub struct SinkError(pub String);

/// Destination for extracted documents. The inbox deletes a snapshot only
/// after `accept` returned `Ok` for it.
pub trait Sink {
    /// Cheap readiness probe run before any input is consumed.
    fn check(&self) -> Result<(), SinkError>;
    fn accept(&self, doc: &Dndo, serialized: &str) -> Result<(), SinkError>;
}

/// Writes `<doc_id>.dndo.json` files into a directory.
pub struct OutboxSink {
    dir: PathBuf,
}

impl OutboxSink {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        OutboxSink { dir: dir.into() }
    }

    pub fn path_for(&self, doc: &Dndo) -> PathBuf {
        self.dir.join(format!("{}{FILE_SUFFIX}", doc.doc_id()))
    }
}

impl Sink for OutboxSink {
    fn check(&self) -> Result<(), SinkError> {
        fs::create_dir_all(&self.dir)
            .map_err(|e| SinkError(format!("cannot create {}: {e}", self.dir.display())))?;
        let probe = self.dir.join(".write-probe");
        fs::write(&probe, b"")
            .and_then(|_| fs::remove_file(&probe))
            .map_err(|e| SinkError(format!("{} is not writable: {e}", self.dir.display())))
    }

    fn accept(&self, doc: &Dndo, serialized: &str) -> Result<(), SinkError> {
        let dest = self.path_for(doc);
        let tmp = self.dir.join(format!(".{}.tmp", doc.doc_id()));
        let write = || -> std::io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(serialized.as_bytes())?;
            f.sync_all()?;
            fs::rename(&tmp, &dest)
        };
        write().map_err(|e| SinkError(format!("writing {}: {e}", dest.display())))
    }
}

pub struct IndexSink {
    store: Arc<IndexStore>,
    index: String,
}

impl IndexSink {
    pub fn new(store: Arc<IndexStore>, index: impl Into<String>) -> Self {
        IndexSink {
            store,
            index: index.into(),
        }
    }
}

impl Sink for IndexSink {
    fn check(&self) -> Result<(), SinkError> {
        self.store.ensure(&self.index).map_err(|e| SinkError(e.to_string()))
    }

    fn accept(&self, doc: &Dndo, _serialized: &str) -> Result<(), SinkError> {
        self.store
            .index_record(&self.index, doc.clone())
            .map(|_| ())
            .map_err(|e| SinkError(e.to_string()))
    }
}

/// Fans out to several sinks; a document counts as accepted only if every
/// sink took it.
pub struct MultiSink {
    sinks: Vec<Box<dyn Sink + Send + Sync>>,
}

impl MultiSink {
    pub fn new(sinks: Vec<Box<dyn Sink + Send + Sync>>) -> Self {
        MultiSink { sinks }
    }
}

impl Sink for MultiSink {
    fn check(&self) -> Result<(), SinkError> {
        self.sinks.iter().try_for_each(|s| s.check())
    }

    fn accept(&self, doc: &Dndo, serialized: &str) -> Result<(), SinkError> {
        self.sinks.iter().try_for_each(|s| s.accept(doc, serialized))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InboxStats {
    pub parsed: usize,
    /// Snapshots moved to quarantine.
    pub failed: usize,
    pub deleted: usize,
    /// Parsed documents the sink refused; their HTML is kept.
    pub rejected: usize,
    pub html_avg_bytes: f64,
    pub dndo_avg_bytes: f64,
}

impl InboxStats {
    /// Percentage size reduction from HTML to DNDO, when anything parsed.
    pub fn reduction_percent(&self) -> Option<f64> {
        crate::dndo::size_reduction_percent(self.html_avg_bytes, self.dndo_avg_bytes).ok()
    }
}

struct Candidate {
    path: PathBuf,
    url: Option<String>,
    collected_at: NaiveDateTime,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExtractError + '_ {
    move |source| ExtractError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn candidates(market_dir: &Path) -> Result<Vec<Candidate>, ExtractError> {
    let manifest: HashMap<String, (String, NaiveDateTime)> = read_manifest(market_dir)
        .map_err(|e| ExtractError::ProfileError(e.to_string()))?
        .into_iter()
        .map(|e| (e.file, (e.url, e.fetched_at)))
        .collect();
    let mut out = Vec::new();
    for entry in fs::read_dir(market_dir).map_err(io_err(market_dir))? {
        let entry = entry.map_err(io_err(market_dir))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if !name.ends_with(".html") || name.starts_with('.') {
            continue;
        }
        let path = entry.path();
        let (url, collected_at) = match manifest.get(&name) {
            Some((url, at)) => (Some(url.clone()), *at),
            None => {
                let modified = entry
                    .metadata()
                    .and_then(|m| m.modified())
                    .map_err(io_err(&path))?;
                (None, DateTime::<Utc>::from(modified).naive_utc())
            }
        };
        out.push(Candidate {
            path,
            url,
            collected_at,
        });
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

/// Parses every saved snapshot in one market's inbox directory.
///
/// Each page that parses is handed to `sink` and its HTML deleted once the
/// sink accepts it. Pages that do not parse are moved to
/// `quarantine_root/<market_id>/`. Nothing is touched if the sink fails its
/// readiness check.
pub fn process_inbox(
    market_dir: &Path,
    profile: &MarketProfile,
    sink: &dyn Sink,
    quarantine_root: &Path,
) -> Result<InboxStats, ExtractError> {
    sink.check()
        .map_err(|e| ExtractError::SinkUnavailable(e.0))?;
    let items = candidates(market_dir)?;

    let parsed: Vec<(Candidate, u64, Result<(Dndo, String), ExtractError>)> = items
        .into_par_iter()
        .map(|c| {
            let result = fs::read(&c.path).map_err(io_err(&c.path)).and_then(|bytes| {
                let html = String::from_utf8_lossy(&bytes);
                let url = c.url.as_deref().unwrap_or("");
                let doc = parse_listing(&html, profile, url, c.collected_at)?;
                let json = serialize_dndo(&doc);
                Ok((doc, json))
            });
            let size = fs::metadata(&c.path).map(|m| m.len()).unwrap_or(0);
            (c, size, result)
        })
        .collect();

    let mut stats = InboxStats::default();
    let (mut html_total, mut dndo_total) = (0u64, 0u64);
    let quarantine = quarantine_root.join(&profile.market_id);
    for (c, size, result) in parsed {
        match result {
            Ok((doc, json)) => {
                stats.parsed += 1;
                html_total += size;
                dndo_total += json.len() as u64;
                if let Err(e) = sink.accept(&doc, &json) {
                    tracing::warn!(path = %c.path.display(), "sink rejected document: {e}");
                    stats.rejected += 1;
                    continue;
                }
                fs::remove_file(&c.path).map_err(io_err(&c.path))?;
                stats.deleted += 1;
            }
            Err(ExtractError::Io { path, source }) => return Err(ExtractError::Io { path, source }),
            Err(e) => {
                tracing::warn!(path = %c.path.display(), "quarantined: {e}");
                fs::create_dir_all(&quarantine).map_err(io_err(&quarantine))?;
                let dest = quarantine.join(c.path.file_name().expect("inbox entries are files"));
                fs::rename(&c.path, &dest).map_err(io_err(&dest))?;
                stats.failed += 1;
            }
        }
    }
    if stats.parsed > 0 {
        stats.html_avg_bytes = html_total as f64 / stats.parsed as f64;
        stats.dndo_avg_bytes = dndo_total as f64 / stats.parsed as f64;
    }
    Ok(stats)
}

/// True if the directory holds no snapshots, manifest aside.
pub fn inbox_is_drained(market_dir: &Path) -> bool {
    fs::read_dir(market_dir)
        .map(|rd| {
            rd.flatten().all(|e| {
                let n = e.file_name().to_string_lossy().into_owned();
                n == MANIFEST_FILE || n == HANDOFF_FILE || !n.ends_with(".html")
            })
        })
        .unwrap_or(true)
}
