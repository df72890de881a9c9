use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use darknet_miner::analytics::{run_aggregate, AggregateParams};
use darknet_miner::api::ApiServer;
use darknet_miner::clock::{self, SharedClock};
use darknet_miner::config::{
    Config, ConfigError, ResolvedMarket, SimEndpoint, ENDPOINT_FILE, REQUEST_LOG_FILE, SESSION_TOKEN_FILE,
};
use darknet_miner::dndo::{parse_dndo, ProductClass, FILE_SUFFIX};
use darknet_miner::extractor::{MarketProfile, OutboxSink};
use darknet_miner::frontier::Frontier;
use darknet_miner::harvester::{harvest, FetchClient, HarvestOptions, RateLimiter, Session, HANDOFF_FILE};
use darknet_miner::index::IndexStore;
use darknet_miner::marketsim::{SimMarket, SimServer};
use darknet_miner::pipeline::{discover, ingest};

const DEFAULT_CONFIG: &str = "dnm.toml";

/// Marketplace mining pipeline.
#[derive(Parser, Debug)]
#[command(name = "dnm", version)]
struct Cli {
    /// Shared configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Market id from the config (needed when several are configured).
    #[arg(long, global = true)]
    market: Option<String>,
    /// Simulator seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    inbox: Option<PathBuf>,
    #[arg(long, global = true)]
    outbox: Option<PathBuf>,
    #[arg(long = "data-dir", global = true)]
    data_dir: Option<PathBuf>,
    /// Bind address for `sim` and `serve`.
    #[arg(long, global = true)]
    endpoint: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a simulated market and serve it until interrupted.
    Sim {
        /// Override the number of listings.
        #[arg(long)]
        listings: Option<usize>,
    },
    /// Crawl navigation pages and probe discovered listings.
    Crawl,
    /// Fetch every active listing not yet in the inbox.
    Harvest,
    /// Extract inbox snapshots into DNDO files in the outbox.
    Parse,
    /// Load outbox DNDO files into the market's index.
    Index,
    /// Print an aggregate over an index.
    Analyze(AnalyzeArgs),
    /// Serve the REST API until interrupted.
    Serve,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum AggregateName {
    Split,
    TopSellers,
    SellerShare,
    Heatmap,
    Prices,
    Payments,
    Quantities,
    OriginRange,
}

impl AggregateName {
    fn as_str(self) -> &'static str {
        match self {
            AggregateName::Split => "split",
            AggregateName::TopSellers => "top-sellers",
            AggregateName::SellerShare => "seller-share",
            AggregateName::Heatmap => "heatmap",
            AggregateName::Prices => "prices",
            AggregateName::Payments => "payments",
            AggregateName::Quantities => "quantities",
            AggregateName::OriginRange => "origin-range",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ClassArg {
    Digital,
    Physical,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    aggregate: AggregateName,
    /// Number of rows for ranked aggregates.
    #[arg(short = 'n')]
    n: Option<usize>,
    /// Index name; defaults to the market's index.
    #[arg(long)]
    index: Option<String>,
    #[arg(long, value_enum)]
    class: Option<ClassArg>,
    #[arg(long = "top-k")]
    top_k: Option<usize>,
    /// Comma-separated price bucket edges in USD.
    #[arg(long, value_delimiter = ',')]
    edges: Option<Vec<f64>>,
    #[arg(long)]
    country: Option<String>,
    #[arg(long)]
    seller: Option<String>,
    /// Print JSON instead of tab-separated text.
    #[arg(long)]
    json: bool,
}

enum CliError {
    Usage(String),
    Operational(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Operational(e)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Invalid(msg) => CliError::Usage(msg),
            other => CliError::Operational(other.into()),
        }
    }
}

type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("DNM_LOG").unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\nRun `dnm --help` for usage.");
            ExitCode::from(2)
        }
        Err(CliError::Operational(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn absolute(p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir().map(|d| d.join(p)).unwrap_or_else(|_| p.to_path_buf())
    }
}

fn load_config(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None if Path::new(DEFAULT_CONFIG).exists() => Config::load(Path::new(DEFAULT_CONFIG))?,
        None => Config::from_toml_str("", &absolute(Path::new(".")))?,
    };
    if let Some(p) = &cli.inbox {
        cfg.paths.inbox = absolute(p);
    }
    if let Some(p) = &cli.outbox {
        cfg.paths.outbox = absolute(p);
    }
    if let Some(p) = &cli.data_dir {
        cfg.paths.data_dir = absolute(p);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult {
    let cfg = load_config(&cli)?;
    let market = cli.market.as_deref();
    match &cli.command {
        Command::Sim { listings } => cmd_sim(&cfg, cli.seed, *listings, cli.endpoint.as_deref()),
        Command::Crawl => cmd_crawl(&cfg.resolve_market(market)?),
        Command::Harvest => cmd_harvest(&cfg, &cfg.resolve_market(market)?),
        Command::Parse => cmd_parse(&cfg, &cfg.resolve_market(market)?),
        Command::Index => cmd_index(&cfg, &cfg.resolve_market(market)?),
        Command::Analyze(args) => {
            let index = match &args.index {
                Some(i) => i.clone(),
                None => cfg.resolve_market(market)?.index,
            };
            cmd_analyze(&cfg, &index, args)
        }
        Command::Serve => cmd_serve(&cfg, cli.endpoint.as_deref()),
    }
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
}

/// Blocks until SIGINT or SIGTERM.
fn wait_for_shutdown() -> anyhow::Result<()> {
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    rt.block_on(async {
        #[cfg(unix)]
        {
            let mut term = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate())?;
            tokio::select! {
                r = tokio::signal::ctrl_c() => r,
                _ = term.recv() => Ok(()),
            }
        }
        #[cfg(not(unix))]
        {
            tokio::signal::ctrl_c().await
        }
    })?;
    Ok(())
}

fn cmd_sim(cfg: &Config, seed: Option<u64>, listings: Option<usize>, endpoint: Option<&str>) -> CliResult {
    let mut sim = cfg.sim.market.clone();
    if let Some(seed) = seed {
        sim.seed = seed;
    }
    if let Some(n) = listings {
        sim.listing_count = n;
    }
    sim.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let market = Arc::new(SimMarket::generate(sim).context("generating market")?);
    let export = cfg.sim_export_dir();
    std::fs::create_dir_all(&export).with_context(|| format!("creating {}", export.display()))?;
    let export = export.canonicalize().context("resolving export dir")?;
    market.export_ground_truth(&export).context("exporting ground truth")?;

    let bind = endpoint.unwrap_or(&cfg.sim.endpoint);
    let server = SimServer::start(market.clone(), bind, clock::system()).context("starting simulator")?;
    let session_file = export.join(SESSION_TOKEN_FILE);
    std::fs::write(&session_file, format!("{}\n", server.issue_token())).context("writing session token")?;
    let info = SimEndpoint {
        market_id: market.market_id().to_string(),
        proxy: server.proxy_url(),
        seed_url: market.seed_url(),
        admin_session_url: server.admin_session_url(),
        profile: export.join("profile.toml"),
        session_file,
    };
    let tmp = export.join(format!(".{ENDPOINT_FILE}.tmp"));
    std::fs::write(&tmp, serde_json::to_string_pretty(&info).expect("endpoint serializes"))
        .and_then(|_| std::fs::rename(&tmp, export.join(ENDPOINT_FILE)))
        .context("writing endpoint file")?;
    print_json(&info);

    let waited = wait_for_shutdown();
    let log = server.log().to_tsv();
    server.shutdown();
    std::fs::write(export.join(REQUEST_LOG_FILE), log).context("writing request log")?;
    waited?;
    Ok(())
}

fn client_for(m: &ResolvedMarket, clock: SharedClock) -> anyhow::Result<FetchClient> {
    let profile = Arc::new(MarketProfile::load(&m.profile)?);
    let jitter_seed = m.id.bytes().fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
    let limiter = Arc::new(RateLimiter::new(m.rate.clone(), clock.clone(), jitter_seed));
    let client = FetchClient::new(m.client.clone(), profile, limiter, clock.clone())?;
    if let Some(path) = m.session_file.as_ref().filter(|p| p.exists()) {
        client.set_session(Some(Session::from_token_file(&m.id, path, clock.now_naive())?));
    }
    Ok(client)
}

fn open_frontier(m: &ResolvedMarket, clock: SharedClock) -> anyhow::Result<Frontier> {
    Ok(Frontier::open(&m.frontier_log, &m.dead_audit, clock)?)
}

fn cmd_crawl(m: &ResolvedMarket) -> CliResult {
    let clock = clock::system();
    let client = client_for(m, clock.clone())?;
    let frontier = open_frontier(m, clock)?;
    let report = discover(&client, &m.seed_url, m.max_depth, &frontier, m.probe)
        .map_err(|e| anyhow!(e).context("discovery stopped"))?;
    print_json(&serde_json::json!({
        "market": m.id,
        "report": report,
        "active": frontier.active().len(),
        "queued": frontier.queued().len(),
        "dead": frontier.dead_audit().len(),
    }));
    Ok(())
}

fn cmd_harvest(cfg: &Config, m: &ResolvedMarket) -> CliResult {
    let clock = clock::system();
    let client = client_for(m, clock.clone())?;
    let frontier = open_frontier(m, clock)?;
    let active = frontier.active();
    if active.is_empty() {
        return Err(anyhow!("no active listings for `{}`; run `dnm crawl` first", m.id).into());
    }
    let inbox = cfg.inbox();
    let opts = HarvestOptions {
        workers: m.workers,
        session_probe_url: Some(m.seed_url.clone()),
    };
    let counts = harvest(&client, &active, &inbox, &opts).map_err(anyhow::Error::from)?;
    print_json(&serde_json::json!({ "market": m.id, "counts": counts }));
    if counts.captcha_stops > 0 {
        let note = inbox.join(&m.id).join(HANDOFF_FILE);
        return Err(anyhow!(
            "stopped at a challenge page; solve it, write the new token to the session file and rerun (see {})",
            note.display()
        )
        .into());
    }
    Ok(())
}

fn cmd_parse(cfg: &Config, m: &ResolvedMarket) -> CliResult {
    let profile = MarketProfile::load(&m.profile).map_err(anyhow::Error::from)?;
    let sink = OutboxSink::new(cfg.outbox());
    let stats = ingest(&cfg.inbox(), &profile, &sink, &cfg.quarantine()).map_err(anyhow::Error::from)?;
    print_json(&serde_json::json!({
        "market": m.id,
        "stats": stats,
        "reduction_percent": stats.reduction_percent(),
    }));
    Ok(())
}

fn cmd_index(cfg: &Config, m: &ResolvedMarket) -> CliResult {
    let outbox = cfg.outbox();
    let mut docs = Vec::new();
    if outbox.exists() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&outbox)
            .with_context(|| format!("reading {}", outbox.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(FILE_SUFFIX))
            .collect();
        paths.sort();
        for p in paths {
            let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            docs.push(parse_dndo(&text).with_context(|| format!("parsing {}", p.display()))?);
        }
    }
    let store = IndexStore::open(cfg.data_dir(), clock::system()).map_err(anyhow::Error::from)?;
    store.ensure(&m.index).map_err(anyhow::Error::from)?;
    let n = docs.len();
    store.index_records(&m.index, docs).map_err(anyhow::Error::from)?;
    let total = store.read(&m.index, |c| c.len()).map_err(anyhow::Error::from)?;
    print_json(&serde_json::json!({ "index": m.index, "indexed": n, "total": total }));
    Ok(())
}

fn cmd_analyze(cfg: &Config, index: &str, args: &AnalyzeArgs) -> CliResult {
    let store = IndexStore::open(cfg.data_dir(), clock::system()).map_err(anyhow::Error::from)?;
    let docs = store
        .read(index, |c| c.docs().map(|(_, d)| d.clone()).collect::<Vec<_>>())
        .map_err(anyhow::Error::from)?;
    let params = AggregateParams {
        n: args.n,
        class: args.class.map(|c| match c {
            ClassArg::Digital => ProductClass::Digital,
            ClassArg::Physical => ProductClass::Physical,
        }),
        top_k: args.top_k,
        edges: args.edges.clone(),
        country: args.country.clone(),
        seller: args.seller.clone(),
    };
    let out = run_aggregate(&docs, args.aggregate.as_str(), &params).map_err(anyhow::Error::from)?;
    if args.json {
        print_json(&out.json);
    } else {
        print!("{}", out.table.to_tsv());
    }
    Ok(())
}

fn cmd_serve(cfg: &Config, endpoint: Option<&str>) -> CliResult {
    let store = Arc::new(IndexStore::open(cfg.data_dir(), clock::system()).map_err(anyhow::Error::from)?);
    let bind = endpoint.unwrap_or(&cfg.api.endpoint);
    let server = ApiServer::start(store.clone(), bind).with_context(|| format!("binding {bind}"))?;
    println!("{}", server.base_url());
    let waited = wait_for_shutdown();
    server.shutdown();
    store.checkpoint_all().map_err(anyhow::Error::from)?;
    waited?;
    Ok(())
}
