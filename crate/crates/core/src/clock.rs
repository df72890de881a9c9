//! Wall-clock abstraction shared by the rate limiter, the frontier and the
//! simulator. `SystemClock` is used in production; `ManualClock` is a virtual
//! clock whose `sleep` advances time instantly, so politeness delays of many
//! minutes can be exercised in milliseconds while keeping every timing
//! decision identical.

use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeDelta, Utc};
use parking_lot::Mutex;

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
    fn sleep(&self, duration: Duration);

    fn now_naive(&self) -> NaiveDateTime {
        self.now().naive_utc()
    }

    fn sleep_until(&self, deadline: DateTime<Utc>) {
        let now = self.now();
        if deadline > now {
            if let Ok(d) = (deadline - now).to_std() {
                self.sleep(d);
            }
        }
    }
}

pub type SharedClock = Arc<dyn Clock>;

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }

    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Virtual time. `sleep` returns immediately after moving the clock forward.
#[derive(Debug)]
pub struct ManualClock {
    now: Mutex<DateTime<Utc>>,
}

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        ManualClock {
            now: Mutex::new(start),
        }
    }

    /// Starts at 2020-07-03 00:00:00 UTC.
    pub fn at_default_epoch() -> Self {
        let start = NaiveDate::from_ymd_opt(2020, 7, 3)
            .and_then(|d| d.and_hms_opt(0, 0, 0))
            .expect("valid date")
            .and_utc();
        Self::new(start)
    }

    pub fn advance(&self, duration: Duration) {
        let delta = TimeDelta::from_std(duration).unwrap_or(TimeDelta::MAX);
        let mut now = self.now.lock();
        *now += delta;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.now.lock()
    }

    fn sleep(&self, duration: Duration) {
        self.advance(duration);
    }

    fn sleep_until(&self, deadline: DateTime<Utc>) {
        let mut now = self.now.lock();
        if deadline > *now {
            *now = deadline;
        }
    }
}

pub fn system() -> SharedClock {
    Arc::new(SystemClock)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manual_clock_advances_on_sleep() {
        let clock = ManualClock::at_default_epoch();
        let t0 = clock.now();
        clock.sleep(Duration::from_millis(1500));
        assert_eq!((clock.now() - t0).num_milliseconds(), 1500);
        clock.sleep_until(t0);
        assert_eq!((clock.now() - t0).num_milliseconds(), 1500);
    }
}
