use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

/// Monotonic seconds since session start.
pub trait Clock: Send + Sync {
    fn now(&self) -> f64;
}

/// Manually advanced clock for replay and tests. Clones share the time.
#[derive(Debug, Clone, Default)]
pub struct SimClock(Arc<AtomicU64>);

impl SimClock {
    pub fn new() -> Self {
        Self::default()
    }

    /// Moves time forward; earlier times are ignored.
    pub fn set(&self, t: f64) {
        if t > self.now() {
            self.0.store(t.to_bits(), Ordering::SeqCst);
        }
    }
}

impl Clock for SimClock {
    fn now(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::SeqCst))
    }
}

#[derive(Debug, Clone)]
pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        WallClock(Instant::now())
    }
}

impl Clock for WallClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sim_clock_is_monotonic_and_shared() {
        let c = SimClock::new();
        let d = c.clone();
        c.set(5.0);
        c.set(3.0);
        assert_eq!(d.now(), 5.0);
    }
}
