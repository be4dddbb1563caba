//! Time sources. Every operation that reads time takes a `&dyn Clock` so the
//! simulator and tests can drive a manual clock while servers use the OS one.

use std::sync::atomic::{AtomicI64, Ordering};

/// A source of "now", in microseconds since the Unix epoch.
pub trait Clock: Send + Sync {
    fn now_us(&self) -> i64;

    /// Millisecond view of the same instant, used by the metrics path.
    fn now_ms(&self) -> i64 {
        self.now_us().div_euclid(1000)
    }
}

/// Manually advanced clock for simulation and tests.
#[derive(Debug, Default)]
pub struct ManualClock {
    us: AtomicI64,
}

impl ManualClock {
    pub fn new(start_us: i64) -> Self {
        Self {
            us: AtomicI64::new(start_us),
        }
    }

    pub fn set_us(&self, us: i64) {
        self.us.store(us, Ordering::SeqCst);
    }

    pub fn advance_us(&self, delta: i64) {
        self.us.fetch_add(delta, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_us(&self) -> i64 {
        self.us.load(Ordering::SeqCst)
    }
}

/// Wall clock backed by the operating system.
#[cfg(not(target_arch = "wasm32"))]
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

#[cfg(not(target_arch = "wasm32"))]
impl Clock for SystemClock {
    fn now_us(&self) -> i64 {
        use std::time::{SystemTime, UNIX_EPOCH};
        match SystemTime::now().duration_since(UNIX_EPOCH) {
            Ok(d) => d.as_micros() as i64,
            Err(e) => -(e.duration().as_micros() as i64),
        }
    }
}
