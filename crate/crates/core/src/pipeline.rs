//! Stage glue: discovery (crawl + liveness probe) and ingest (inbox to
//! index) for one market.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::extractor::{process_inbox, ExtractError, InboxStats, Sink};
use crate::frontier::{
    crawl, probe_liveness, CrawlReport, FetchTransportError, Frontier, LinkFilterPolicy, ProbeCounts,
    ProbeOptions,
};
use crate::harvester::{FetchClient, HarvestError, PageCheck};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub crawl: CrawlReport,
    pub probe: ProbeCounts,
}

/// Scope policy for a market: the seed's host (and port, if any) plus the
/// profile's listing URL length bounds.
pub fn policy_for(seed_url: &str, client: &FetchClient) -> Result<LinkFilterPolicy, HarvestError> {
    let seed = url::Url::parse(seed_url)
        .map_err(|e| HarvestError::Config(format!("seed url `{seed_url}`: {e}")))?;
    let host = seed
        .host_str()
        .ok_or_else(|| HarvestError::Config(format!("seed url `{seed_url}` has no host")))?;
    let scope = match seed.port() {
        Some(port) => format!("{host}:{port}"),
        None => host.to_string(),
    };
    let (lo, hi) = client.profile().url_len_bounds;
    Ok(LinkFilterPolicy::new(scope).with_url_len(lo, hi))
}

/// Crawls navigation pages from `seed_url` through the rate-limited
/// client, then HEAD-probes every discovered listing.
///
/// A challenge page or login redirect aborts discovery; other failures on
/// individual navigation pages are logged and skipped.
pub fn discover(
    client: &FetchClient,
    seed_url: &str,
    max_depth: usize,
    frontier: &Frontier,
    probe: ProbeOptions,
) -> Result<DiscoveryReport, HarvestError> {
    let policy = policy_for(seed_url, client)?;
    let check = PageCheck::page(client.profile());
    let crawl_report = crawl(seed_url, &policy, max_depth, frontier, |url| {
        match client.fetch_page(url, check) {
            Ok(page) if page.status == 200 => Ok(Some(page.body)),
            Ok(page) => {
                tracing::info!(%url, status = page.status, "navigation page skipped");
                Ok(None)
            }
            Err(e @ (HarvestError::CaptchaRequired { .. } | HarvestError::SessionExpired { .. })) => Err(e),
            Err(HarvestError::ImageUrlRefused(_)) => Ok(None),
            Err(e) => {
                tracing::warn!(%url, "navigation page failed: {e}");
                Ok(None)
            }
        }
    })?;
    let probe_counts = probe_liveness(
        frontier,
        |url| client.head(url).map_err(|e| FetchTransportError(e.to_string())),
        probe,
    );
    Ok(DiscoveryReport {
        crawl: crawl_report,
        probe: probe_counts,
    })
}

/// Parses one market's inbox into `sink`.
pub fn ingest(
    inbox_root: &Path,
    profile: &crate::extractor::MarketProfile,
    sink: &dyn Sink,
    quarantine_root: &Path,
) -> Result<InboxStats, ExtractError> {
    let market_dir = inbox_root.join(&profile.market_id);
    if !market_dir.exists() {
        return Ok(InboxStats::default());
    }
    process_inbox(&market_dir, profile, sink, quarantine_root)
}
