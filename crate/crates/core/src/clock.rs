//! Time source abstraction.
//!
//! Every component that waits or stamps events takes a [`Clock`], so the
//! whole engine can run on virtual time in tests.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

/// Milliseconds since the Unix epoch (or since an arbitrary origin on a
/// virtual clock).
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn from_secs(secs: u64) -> Self {
        Timestamp(secs * 1000)
    }

    pub fn as_millis(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn saturating_add(self, d: Duration) -> Self {
        Timestamp(self.0.saturating_add(d.as_millis() as u64))
    }

    pub fn add_secs(self, secs: u64) -> Self {
        Timestamp(self.0.saturating_add(secs.saturating_mul(1000)))
    }

    /// Elapsed time from `earlier` to `self`, zero if `earlier` is later.
    pub fn since(self, earlier: Timestamp) -> Duration {
        Duration::from_millis(self.0.saturating_sub(earlier.0))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03}", self.0 / 1000, self.0 % 1000)
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
    /// Block for `d`. A virtual clock advances itself instead.
    fn sleep(&self, d: Duration);
    fn is_virtual(&self) -> bool {
        false
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        let since = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or_default();
        Timestamp(since.as_millis() as u64)
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

/// Manually driven clock. Time only moves through [`VirtualClock::advance`],
/// [`VirtualClock::advance_to`] or [`Clock::sleep`], and never backwards.
#[derive(Debug, Default)]
pub struct VirtualClock {
    millis: AtomicU64,
}

impl VirtualClock {
    pub fn new(start: Timestamp) -> Self {
        VirtualClock {
            millis: AtomicU64::new(start.0),
        }
    }

    pub fn advance(&self, d: Duration) {
        self.millis
            .fetch_add(d.as_millis() as u64, Ordering::SeqCst);
    }

    pub fn advance_to(&self, t: Timestamp) {
        self.millis.fetch_max(t.0, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Timestamp {
        Timestamp(self.millis.load(Ordering::SeqCst))
    }

    fn sleep(&self, d: Duration) {
        self.advance(d)
    }

    fn is_virtual(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_clock_never_goes_back() {
        let c = VirtualClock::new(Timestamp(5_000));
        c.advance_to(Timestamp(1_000));
        assert_eq!(c.now(), Timestamp(5_000));
        c.sleep(Duration::from_millis(250));
        assert_eq!(c.now(), Timestamp(5_250));
        c.advance_to(Timestamp(9_000));
        assert_eq!(c.now(), Timestamp(9_000));
    }

    #[test]
    fn timestamp_display() {
        assert_eq!(Timestamp(12_034).to_string(), "12.034");
    }
}
