use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use chrono::NaiveDateTime;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FetchClient, HarvestError, PageCheck};
use crate::dndo::{format_timestamp, parse_timestamp};

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const HANDOFF_FILE: &str = "session_handoff.json";
const MANIFEST_HEADER: &str = "url\tfile\tstatus\tfetched_at";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestCounts {
    pub saved: usize,
    pub captcha_stops: usize,
    pub failures: usize,
    /// URLs already present in the manifest from an earlier run.
    pub already_saved: usize,
    pub silent_blocks: usize,
    pub throttled: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HarvestOptions {
    pub workers: usize,
    /// Page probed before resuming a partially harvested inbox; a challenge
    /// there stops the run before any listing is requested.
    pub session_probe_url: Option<String>,
}

impl Default for HarvestOptions {
    fn default() -> Self {
        HarvestOptions {
            workers: 1,
            session_probe_url: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub url: String,
    pub file: String,
    pub status: u16,
    pub fetched_at: NaiveDateTime,
}

/// Written when a run stops for a human to renew the session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandoffNote {
    pub market_id: String,
    pub reason: String,
    pub blocked_url: String,
    pub saved_total: usize,
    pub remaining: usize,
    pub at: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarvestError + '_ {
    move |source| HarvestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `<sanitized-host>_<path-hash>_<yyyymmddTHHMMSS>.html`
pub fn snapshot_file_name(url: &str, fetched_at: &NaiveDateTime) -> String {
    let (host, rest) = match url::Url::parse(url) {
        Ok(u) => {
            let host = u.host_str().unwrap_or("nohost").to_string();
            let mut rest = u.path().to_string();
            if let Some(q) = u.query() {
                rest.push('?');
                rest.push_str(q);
            }
            (host, rest)
        }
        Err(_) => ("nohost".to_string(), url.to_string()),
    };
    let host: String = host
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect();
    let digest = Sha256::digest(rest.as_bytes());
    format!(
        "{}_{}_{}.html",
        host,
        hex::encode(&digest[..8]),
        fetched_at.format("%Y%m%dT%H%M%S")
    )
}

pub fn read_manifest(market_dir: &Path) -> Result<Vec<ManifestEntry>, HarvestError> {
    let path = market_dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            continue;
        }
        let (Ok(status), Some(fetched_at)) = (cols[2].parse(), parse_timestamp(cols[3])) else {
            continue;
        };
        out.push(ManifestEntry {
            url: cols[0].to_string(),
            file: cols[1].to_string(),
            status,
            fetched_at,
        });
    }
    Ok(out)
}

struct Manifest {
    path: PathBuf,
    file: fs::File,
}

impl Manifest {
    fn open(market_dir: &Path) -> Result<Self, HarvestError> {
        let path = market_dir.join(MANIFEST_FILE);
        let fresh = !path.exists();
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        if fresh {
            writeln!(file, "{MANIFEST_HEADER}").map_err(io_err(&path))?;
        }
        Ok(Manifest { path, file })
    }

    fn append(&mut self, e: &ManifestEntry) -> Result<(), HarvestError> {
        writeln!(
            self.file,
            "{}\t{}\t{}\t{}",
            e.url,
            e.file,
            e.status,
            format_timestamp(&e.fetched_at)
        )
        .and_then(|_| self.file.flush())
        .map_err(io_err(&self.path))
    }
}

fn write_atomic(dir: &Path, name: &str, body: &[u8]) -> Result<(), HarvestError> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let dest = dir.join(name);
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(body).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, &dest).map_err(io_err(&dest))
}

/// Fetches each Active URL not yet in the market's manifest and saves the
/// body under `inbox_root/<market_id>/`.
///
/// A challenge page (or a redirect to login) stops the run: progress stays
/// in the manifest, a handoff note is written, and `captcha_stops` is set.
/// Calling again with a renewed session fetches exactly the missing URLs.
pub fn harvest(
    client: &FetchClient,
    active_links: &[String],
    inbox_root: &Path,
    opts: &HarvestOptions,
) -> Result<HarvestCounts, HarvestError> {
    let market_id = client.profile().market_id.clone();
    let market_dir = inbox_root.join(&market_id);
    fs::create_dir_all(&market_dir).map_err(io_err(&market_dir))?;

    let done: HashSet<String> = read_manifest(&market_dir)?
        .into_iter()
        .map(|e| e.url)
        .collect();
    let mut seen = HashSet::new();
    let pending: Vec<&String> = active_links
        .iter()
        .filter(|u| !done.contains(*u) && seen.insert(u.as_str()))
        .collect();
    let mut counts = HarvestCounts {
        already_saved: active_links.iter().filter(|u| done.contains(*u)).count(),
        ..Default::default()
    };

    let handoff_path = market_dir.join(HANDOFF_FILE);
    let write_handoff = |reason: &str, blocked: &str, saved_total: usize, remaining: usize| {
        let note = HandoffNote {
            market_id: market_id.clone(),
            reason: reason.to_string(),
            blocked_url: blocked.to_string(),
            saved_total,
            remaining,
            at: format_timestamp(&client.clock().now_naive()),
        };
        let body = serde_json::to_vec_pretty(&note).expect("handoff note serializes");
        write_atomic(&market_dir, HANDOFF_FILE, &body)
    };

    if pending.is_empty() {
        return Ok(counts);
    }

    if !done.is_empty() {
        if let Some(probe) = &opts.session_probe_url {
            match client.fetch_page(probe, PageCheck::page(client.profile())) {
                Err(e @ (HarvestError::CaptchaRequired { .. } | HarvestError::SessionExpired { .. })) => {
                    tracing::warn!(market = %market_id, "session probe failed: {e}");
                    counts.captcha_stops = 1;
                    write_handoff(&e.to_string(), probe, done.len(), pending.len())?;
                    return Ok(counts);
                }
                Err(e) => tracing::warn!(market = %market_id, "session probe error: {e}"),
                Ok(_) => {}
            }
        }
    }

    let manifest = Mutex::new(Manifest::open(&market_dir)?);
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let saved = AtomicUsize::new(0);
    let failures = AtomicUsize::new(0);
    let silent = AtomicUsize::new(0);
    let throttled = AtomicUsize::new(0);
    let blocked: Mutex<Option<(String, String)>> = Mutex::new(None);
    let fatal: Mutex<Option<HarvestError>> = Mutex::new(None);

    let worker = || loop {
        if stop.load(Ordering::SeqCst) {
            return;
        }
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(url) = pending.get(i) else { return };
        match client.fetch_page(url, PageCheck::listing(client.profile())) {
            Ok(page) => {
                silent.fetch_add(page.silent_blocks as usize, Ordering::Relaxed);
                throttled.fetch_add(page.throttled as usize, Ordering::Relaxed);
                if page.status != 200 {
                    tracing::warn!(%url, status = page.status, "listing fetch failed");
                    failures.fetch_add(1, Ordering::Relaxed);
                    continue;
                }
                let fetched_at = client.clock().now_naive();
                let name = snapshot_file_name(url, &fetched_at);
                let result = write_atomic(&market_dir, &name, page.body.as_bytes()).and_then(|_| {
                    manifest.lock().append(&ManifestEntry {
                        url: url.to_string(),
                        file: name,
                        status: page.status,
                        fetched_at,
                    })
                });
                match result {
                    Ok(()) => {
                        saved.fetch_add(1, Ordering::Relaxed);
                    }
                    Err(e) => {
                        stop.store(true, Ordering::SeqCst);
                        *fatal.lock() = Some(e);
                    }
                }
            }
            Err(e @ (HarvestError::CaptchaRequired { .. } | HarvestError::SessionExpired { .. })) => {
                stop.store(true, Ordering::SeqCst);
                let mut b = blocked.lock();
                if b.is_none() {
                    *b = Some((e.to_string(), url.to_string()));
                }
            }
            Err(e) => {
                tracing::warn!(%url, "listing fetch failed: {e}");
                failures.fetch_add(1, Ordering::Relaxed);
            }
        }
    };
    std::thread::scope(|s| {
        for _ in 0..opts.workers.max(1) {
            s.spawn(worker);
        }
    });

    if let Some(e) = fatal.into_inner() {
        return Err(e);
    }
    counts.saved = saved.into_inner();
    counts.failures = failures.into_inner();
    counts.silent_blocks = silent.into_inner();
    counts.throttled = throttled.into_inner();
    if let Some((reason, url)) = blocked.into_inner() {
        counts.captcha_stops = 1;
        let saved_total = done.len() + counts.saved;
        let remaining = pending.len().saturating_sub(counts.saved + counts.failures);
        tracing::warn!(market = %market_id, saved_total, remaining, "harvest paused: {reason}");
        write_handoff(&reason, &url, saved_total, remaining)?;
    } else if handoff_path.exists() {
        fs::remove_file(&handoff_path).map_err(io_err(&handoff_path))?;
    }
    Ok(counts)
}
