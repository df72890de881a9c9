#![allow(dead_code)]

pub mod oracles;
pub mod scenarios;

use std::sync::Arc;

use darknet_miner::clock::{Clock, ManualClock, SharedClock};
use darknet_miner::extractor::MarketProfile;
use darknet_miner::harvester::{ClientConfig, FetchClient, RateLimiter, RatePolicy, Session, SessionSource};
use darknet_miner::marketsim::{sim_profile_toml, SimConfig, SimMarket, SimServer};

/// A simulator and a client sharing one virtual clock.
pub struct Harness {
    pub clock: Arc<ManualClock>,
    pub server: SimServer,
    pub client: FetchClient,
    pub profile: Arc<MarketProfile>,
}

impl Harness {
    pub fn new(cfg: SimConfig, policy: RatePolicy) -> Self {
        let clock = Arc::new(ManualClock::at_default_epoch());
        let shared: SharedClock = clock.clone();
        let market = Arc::new(SimMarket::generate(cfg).expect("valid sim config"));
        let profile = Arc::new(MarketProfile::from_toml_str(&sim_profile_toml(market.market_id())).unwrap());
        let server = SimServer::start(market, "127.0.0.1:0", shared.clone()).expect("sim binds");
        let limiter = Arc::new(RateLimiter::new(policy, shared.clone(), 11));
        let config = ClientConfig {
            proxy: Some(server.proxy_url()),
            ..Default::default()
        };
        let client = FetchClient::new(config, profile.clone(), limiter, shared).unwrap();
        Harness {
            clock,
            server,
            client,
            profile,
        }
    }

    pub fn shared_clock(&self) -> SharedClock {
        self.clock.clone()
    }

    /// Stands in for the human CAPTCHA solve.
    pub fn renew_session(&self) {
        let token = self.server.issue_token();
        let session = Session::new(
            self.server.market().market_id(),
            token,
            self.clock.now_naive(),
            SessionSource::HumanHandoff,
        )
        .unwrap();
        self.client.set_session(Some(session));
    }
}

pub fn fast_policy(base_delay_ms: u64) -> RatePolicy {
    RatePolicy::new(base_delay_ms)
}
