//! Shared TOML configuration read by every `dnm` subcommand.
//!
//! Relative paths are resolved against the directory holding the config
//! file.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontier::{ProbeOptions, DEFAULT_CRAWL_DEPTH};
use crate::harvester::{ClientConfig, RatePolicy, DEFAULT_MAX_ATTEMPTS};
use crate::marketsim::SimConfig;

pub const ENDPOINT_FILE: &str = "endpoint.json";
pub const SESSION_TOKEN_FILE: &str = "session.token";
pub const REQUEST_LOG_FILE: &str = "request_log.tsv";
pub const FRONTIER_LOG_FILE: &str = "frontier.log";
pub const DEAD_AUDIT_FILE: &str = "dead_links.audit";
pub const DEFAULT_API_ENDPOINT: &str = "127.0.0.1:8080";
pub const DEFAULT_SIM_ENDPOINT: &str = "127.0.0.1:0";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub work_dir: PathBuf,
    pub inbox: PathBuf,
    pub outbox: PathBuf,
    pub data_dir: PathBuf,
    pub quarantine: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            work_dir: "work".into(),
            inbox: "inbox".into(),
            outbox: "outbox".into(),
            data_dir: "data".into(),
            quarantine: "quarantine".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApiSection {
    pub endpoint: String,
}

impl Default for ApiSection {
    fn default() -> Self {
        ApiSection {
            endpoint: DEFAULT_API_ENDPOINT.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSection {
    pub endpoint: String,
    /// Where `dnm sim` writes the endpoint file, profile, ground truth and
    /// session token.
    pub export_dir: PathBuf,
    #[serde(flatten)]
    pub market: SimConfig,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            endpoint: DEFAULT_SIM_ENDPOINT.into(),
            export_dir: "sim".into(),
            market: SimConfig::default(),
        }
    }
}

/// Written by `dnm sim` once the simulator is listening.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimEndpoint {
    pub market_id: String,
    pub proxy: String,
    pub seed_url: String,
    pub admin_session_url: String,
    pub profile: PathBuf,
    pub session_file: PathBuf,
}

impl SimEndpoint {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketConfig {
    pub id: String,
    pub seed_url: Option<String>,
    pub profile: Option<PathBuf>,
    pub proxy: Option<String>,
    pub session_file: Option<PathBuf>,
    /// Endpoint file of a running simulator; fills any of seed_url, proxy,
    /// profile and session_file left unset.
    pub sim_endpoint: Option<PathBuf>,
    /// Index name; defaults to the market id.
    pub index: Option<String>,
    pub max_depth: usize,
    pub workers: usize,
    pub client_id: Option<String>,
    pub max_attempts: u32,
    pub timeout_ms: u64,
    pub probe_retries: u32,
    pub probe_spacing_ms: u64,
    pub rate: RatePolicy,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            id: String::new(),
            seed_url: None,
            profile: None,
            proxy: None,
            session_file: None,
            sim_endpoint: None,
            index: None,
            max_depth: DEFAULT_CRAWL_DEPTH,
            workers: 1,
            client_id: None,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            timeout_ms: 60_000,
            probe_retries: 2,
            probe_spacing_ms: 1000,
            rate: RatePolicy::default(),
        }
    }
}

/// A market with every location resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedMarket {
    pub id: String,
    pub index: String,
    pub seed_url: String,
    pub profile: PathBuf,
    pub proxy: Option<String>,
    pub session_file: Option<PathBuf>,
    pub max_depth: usize,
    pub workers: usize,
    pub rate: RatePolicy,
    pub client: ClientConfig,
    pub probe: ProbeOptions,
    pub frontier_log: PathBuf,
    pub dead_audit: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub paths: Paths,
    pub api: ApiSection,
    pub sim: SimSection,
    pub markets: Vec<MarketConfig>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl Config {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: base_dir.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Config::from_toml_str(&text, &base).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let mut seen = std::collections::HashSet::new();
        for m in &self.markets {
            if m.id.trim().is_empty() {
                return Err(ConfigError::Invalid("every [[markets]] entry needs an id".into()));
            }
            if !seen.insert(m.id.as_str()) {
                return Err(ConfigError::Invalid(format!("market `{}` is listed twice", m.id)));
            }
            if m.workers == 0 {
                return Err(ConfigError::Invalid(format!("market `{}`: workers must be at least 1", m.id)));
            }
            m.rate
                .validate()
                .map_err(|e| ConfigError::Invalid(format!("market `{}` rate: {e}", m.id)))?;
        }
        self.sim
            .market
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("sim: {e}")))
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    /// Joins relative paths onto the config directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn work_dir(&self) -> PathBuf {
        self.resolve(&self.paths.work_dir)
    }

    pub fn inbox(&self) -> PathBuf {
        self.resolve(&self.paths.inbox)
    }

    pub fn outbox(&self) -> PathBuf {
        self.resolve(&self.paths.outbox)
    }

    pub fn data_dir(&self) -> PathBuf {
        self.resolve(&self.paths.data_dir)
    }

    pub fn quarantine(&self) -> PathBuf {
        self.resolve(&self.paths.quarantine)
    }

    pub fn sim_export_dir(&self) -> PathBuf {
        self.resolve(&self.sim.export_dir)
    }

    /// Picks a market by id, or the only one configured when `id` is None.
    pub fn market(&self, id: Option<&str>) -> Result<&MarketConfig, ConfigError> {
        match id {
            Some(id) => self
                .markets
                .iter()
                .find(|m| m.id == id)
                .ok_or_else(|| ConfigError::Invalid(format!("no market `{id}` in config"))),
            None => match self.markets.as_slice() {
                [only] => Ok(only),
                [] => Err(ConfigError::Invalid("config lists no markets".into())),
                _ => Err(ConfigError::Invalid("several markets configured; pass --market".into())),
            },
        }
    }

    /// Fills defaults from the simulator endpoint file (if configured) and
    /// resolves all paths.
    pub fn resolve_market(&self, id: Option<&str>) -> Result<ResolvedMarket, ConfigError> {
        let m = self.market(id)?;
        let endpoint = match &m.sim_endpoint {
            Some(p) => Some(SimEndpoint::load(&self.resolve(p))?),
            None => None,
        };
        let seed_url = m
            .seed_url
            .clone()
            .or_else(|| endpoint.as_ref().map(|e| e.seed_url.clone()))
            .ok_or_else(|| ConfigError::Invalid(format!("market `{}` has no seed_url", m.id)))?;
        let profile = m
            .profile
            .as_ref()
            .map(|p| self.resolve(p))
            .or_else(|| endpoint.as_ref().map(|e| e.profile.clone()))
            .ok_or_else(|| ConfigError::Invalid(format!("market `{}` has no profile", m.id)))?;
        let proxy = m.proxy.clone().or_else(|| endpoint.as_ref().map(|e| e.proxy.clone()));
        let session_file = m
            .session_file
            .as_ref()
            .map(|p| self.resolve(p))
            .or_else(|| endpoint.as_ref().map(|e| e.session_file.clone()));
        let market_dir = self.work_dir().join(&m.id);
        Ok(ResolvedMarket {
            id: m.id.clone(),
            index: m.index.clone().unwrap_or_else(|| m.id.clone()),
            seed_url,
            profile,
            proxy: proxy.clone(),
            session_file,
            max_depth: m.max_depth,
            workers: m.workers,
            rate: m.rate.clone(),
            client: ClientConfig {
                proxy,
                max_attempts: m.max_attempts,
                timeout_ms: m.timeout_ms,
                client_id: m.client_id.clone(),
            },
            probe: ProbeOptions {
                retry_budget: m.probe_retries,
                retry_spacing: Duration::from_millis(m.probe_spacing_ms),
                workers: m.workers,
            },
            frontier_log: market_dir.join(FRONTIER_LOG_FILE),
            dead_audit: market_dir.join(DEAD_AUDIT_FILE),
        })
    }
}
