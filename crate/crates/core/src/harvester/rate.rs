use std::time::Duration;

use chrono::{DateTime, TimeDelta, Utc};
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clock::SharedClock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RateMode {
    /// Throttling is announced with status 429.
    Http429,
    /// Throttling returns 200 with placeholder content.
    Silent,
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RatePolicy {
    pub base_delay_ms: u64,
    pub backoff_multiplier: f64,
    pub max_delay_ms: u64,
    pub jitter_fraction: f64,
    pub mode_hint: RateMode,
    /// Delay currently applied between requests; always within
    /// `[base_delay_ms, max_delay_ms]`.
    pub current_delay_ms: f64,
    /// Number of consecutive clean observations required before the delay
    /// decays by one step.
    pub window: usize,
}

impl Default for RatePolicy {
    fn default() -> Self {
        RatePolicy {
            base_delay_ms: 600,
            backoff_multiplier: 1.5,
            max_delay_ms: 30_000,
            jitter_fraction: 0.1,
            mode_hint: RateMode::None,
            current_delay_ms: 600.0,
            window: 32,
        }
    }
}

impl RatePolicy {
    pub fn new(base_delay_ms: u64) -> Self {
        RatePolicy {
            base_delay_ms,
            current_delay_ms: base_delay_ms as f64,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.base_delay_ms > self.max_delay_ms {
            return Err(format!(
                "base_delay_ms {} exceeds max_delay_ms {}",
                self.base_delay_ms, self.max_delay_ms
            ));
        }
        if !(self.backoff_multiplier > 1.0) || !self.backoff_multiplier.is_finite() {
            return Err(format!("backoff_multiplier must be > 1, got {}", self.backoff_multiplier));
        }
        if !(0.0..1.0).contains(&self.jitter_fraction) {
            return Err(format!("jitter_fraction must be in [0,1), got {}", self.jitter_fraction));
        }
        if self.window == 0 {
            return Err("window must be at least 1".into());
        }
        Ok(())
    }

    fn clamp(&self, delay: f64) -> f64 {
        delay.clamp(self.base_delay_ms as f64, self.max_delay_ms as f64)
    }

    pub fn current_delay(&self) -> Duration {
        Duration::from_secs_f64(self.current_delay_ms / 1000.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub status: u16,
    pub latency: Duration,
    /// A 200 response recognized as a silent throttle page.
    pub silent_block: bool,
}

impl Observation {
    pub fn ok(status: u16) -> Self {
        Observation {
            status,
            latency: Duration::ZERO,
            silent_block: false,
        }
    }

    /// Request never got an HTTP answer (status recorded as 0).
    pub fn transport_failure() -> Self {
        Observation::ok(0)
    }

    /// 429, a silent throttle page, or a transport failure.
    pub fn throttled(&self) -> bool {
        self.status == 429 || self.status == 0 || self.silent_block
    }
}

/// One adjustment step. Any throttle signal in `observations` multiplies the
/// delay by the backoff multiplier; a full window of clean observations
/// divides it by one step. The result is clamped to `[base, max]`.
pub fn tune_rate(policy: &RatePolicy, observations: &[Observation]) -> RatePolicy {
    let mut next = policy.clone();
    if observations.iter().any(Observation::throttled) {
        next.current_delay_ms = policy.clamp(policy.current_delay_ms * policy.backoff_multiplier);
    } else if !observations.is_empty() && observations.len() >= policy.window {
        next.current_delay_ms = policy.clamp(policy.current_delay_ms / policy.backoff_multiplier);
    } else {
        next.current_delay_ms = policy.clamp(policy.current_delay_ms);
    }
    next
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LimiterStats {
    pub requests: u64,
    pub throttled: u64,
}

struct LimiterState {
    policy: RatePolicy,
    window: Vec<Observation>,
    last_request: Option<DateTime<Utc>>,
    not_before: Option<DateTime<Utc>>,
    rng: ChaCha8Rng,
    stats: LimiterStats,
}

/// Market-wide request spacing shared by every fetch worker.
pub struct RateLimiter {
    state: Mutex<LimiterState>,
    clock: SharedClock,
}

impl RateLimiter {
    pub fn new(mut policy: RatePolicy, clock: SharedClock, jitter_seed: u64) -> Self {
        policy.current_delay_ms = policy.clamp(policy.current_delay_ms);
        RateLimiter {
            state: Mutex::new(LimiterState {
                policy,
                window: Vec::new(),
                last_request: None,
                not_before: None,
                rng: ChaCha8Rng::seed_from_u64(jitter_seed),
                stats: LimiterStats::default(),
            }),
            clock,
        }
    }

    /// Blocks until the next request slot. Slots are handed out one at a
    /// time, so concurrent workers never beat the shared spacing. Jitter
    /// only lengthens the gap: spacing is `current * (1 + jitter * u)` with
    /// `u` in `[0, 1)`.
    pub fn acquire(&self) -> DateTime<Utc> {
        let mut st = self.state.lock();
        let jitter = st.policy.jitter_fraction;
        let factor = if jitter > 0.0 {
            1.0 + jitter * st.rng.gen_range(0.0..1.0)
        } else {
            1.0
        };
        let spacing_ms = st.policy.current_delay_ms * factor;
        let mut target = match st.last_request {
            Some(last) => last + TimeDelta::microseconds((spacing_ms * 1000.0).round() as i64),
            None => self.clock.now(),
        };
        if let Some(nb) = st.not_before.take() {
            target = target.max(nb);
        }
        self.clock.sleep_until(target);
        let now = self.clock.now();
        st.last_request = Some(now);
        st.stats.requests += 1;
        now
    }

    /// Honors a server-provided `Retry-After`.
    pub fn defer(&self, wait: Duration) {
        let until = self.clock.now() + TimeDelta::from_std(wait).unwrap_or(TimeDelta::MAX);
        let mut st = self.state.lock();
        st.not_before = Some(st.not_before.map_or(until, |nb| nb.max(until)));
    }

    pub fn observe(&self, obs: Observation) {
        let mut st = self.state.lock();
        if obs.throttled() {
            st.stats.throttled += 1;
            st.policy = tune_rate(&st.policy, &[obs]);
            st.window.clear();
            return;
        }
        st.window.push(obs);
        if st.window.len() >= st.policy.window {
            let window = std::mem::take(&mut st.window);
            st.policy = tune_rate(&st.policy, &window);
        }
    }

    pub fn policy(&self) -> RatePolicy {
        self.state.lock().policy.clone()
    }

    pub fn stats(&self) -> LimiterStats {
        self.state.lock().stats
    }
}
