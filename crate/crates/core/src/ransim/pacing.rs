//! Wall-clock pacing for live runs.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::engine::Pacer;
use crate::model::SimTime;

/// Maps sim time onto wall time: `time_scale` sim milliseconds elapse per
/// wall millisecond. Setting the stop flag ends the run at the next event.
#[derive(Debug)]
pub struct WallClock {
    start: Instant,
    time_scale: f64,
    stop: Arc<AtomicBool>,
}

impl WallClock {
    pub fn new(time_scale: f64, stop: Arc<AtomicBool>) -> Self {
        assert!(time_scale > 0.0 && time_scale.is_finite(), "time scale must be positive");
        WallClock { start: Instant::now(), time_scale, stop }
    }
}

const POLL: Duration = Duration::from_millis(50);

impl Pacer for WallClock {
    fn wait_until(&mut self, t: SimTime) -> bool {
        let target = self.start + Duration::from_secs_f64(t.as_ms() as f64 / self.time_scale / 1000.0);
        loop {
            if self.stop.load(Ordering::Relaxed) {
                return false;
            }
            let now = Instant::now();
            if now >= target {
                return true;
            }
            std::thread::sleep((target - now).min(POLL));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_wait_and_stop() {
        let stop = Arc::new(AtomicBool::new(false));
        let mut clock = WallClock::new(100.0, stop.clone());
        let t0 = Instant::now();
        assert!(clock.wait_until(SimTime(1000)));
        let waited = t0.elapsed();
        assert!(waited >= Duration::from_millis(9), "{waited:?}");
        stop.store(true, Ordering::Relaxed);
        assert!(!clock.wait_until(SimTime(2000)));
    }
}
