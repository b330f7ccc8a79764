use serde::Serialize;

use super::dataset::NetworkDataset;

/// Simulation clock driven by wall-clock nanoseconds.
///
/// Sim time is kept as an anchor value plus integer wall nanoseconds elapsed
/// at the current rate, so splitting an advance into pieces gives the same
/// result bit for bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlaybackClock {
    anchor_sim_s: f64,
    elapsed_ns: u64,
    rate: f64,
    last_wall_ns: Option<u64>,
}

impl Default for PlaybackClock {
    fn default() -> Self {
        Self::new()
    }
}

impl PlaybackClock {
    pub fn new() -> Self {
        Self {
            anchor_sim_s: 0.0,
            elapsed_ns: 0,
            rate: 1.0,
            last_wall_ns: None,
        }
    }

    pub fn sim_time(&self) -> f64 {
        self.anchor_sim_s + self.rate * self.elapsed_ns as f64 / 1e9
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn is_paused(&self) -> bool {
        self.rate == 0.0
    }

    pub fn advance(&mut self, wall_dt_ns: u64) {
        self.elapsed_ns = self.elapsed_ns.saturating_add(wall_dt_ns);
    }

    /// Advances by the wall time since the previous call; the first call only
    /// records the reference point.
    pub fn advance_to(&mut self, wall_ns: u64) {
        if let Some(last) = self.last_wall_ns {
            self.advance(wall_ns.saturating_sub(last));
        }
        self.last_wall_ns = Some(self.last_wall_ns.map_or(wall_ns, |l| l.max(wall_ns)));
    }

    /// Negative or non-finite rates are ignored and return false.
    pub fn set_rate(&mut self, rate: f64) -> bool {
        if !(rate.is_finite() && rate >= 0.0) {
            return false;
        }
        self.rebase(self.sim_time());
        self.rate = rate;
        true
    }

    pub fn seek(&mut self, sim_time_s: f64) -> bool {
        if !(sim_time_s.is_finite() && sim_time_s >= 0.0) {
            return false;
        }
        self.rebase(sim_time_s);
        true
    }

    fn rebase(&mut self, sim: f64) {
        self.anchor_sim_s = sim;
        self.elapsed_ns = 0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpikeWindow {
    pub t0: f64,
    pub t1: f64,
    /// Index range into the dataset's spike columns.
    pub first: usize,
    pub end: usize,
}

/// Hands out consecutive spike windows that tile sim time between seeks.
#[derive(Debug, Clone, Default)]
pub struct SpikePacer {
    emitted_until: Option<f64>,
}

impl SpikePacer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Window from where the last one ended up to `sim_now`. Empty while
    /// paused; after a seek (sim time moved backwards) it restarts at `sim_now`.
    pub fn next_window(&mut self, dataset: &NetworkDataset, sim_now: f64) -> SpikeWindow {
        let t0 = match self.emitted_until {
            Some(t) if t <= sim_now => t,
            _ => sim_now,
        };
        self.emitted_until = Some(sim_now);
        let r = dataset.spike_range(t0, sim_now);
        SpikeWindow {
            t0,
            t1: sim_now,
            first: r.start,
            end: r.end,
        }
    }

    /// Restart tiling at `sim_time`, e.g. after an explicit seek forward.
    pub fn reset(&mut self, sim_time: f64) {
        self.emitted_until = Some(sim_time);
    }
}
