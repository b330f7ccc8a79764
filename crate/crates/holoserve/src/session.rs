use std::collections::VecDeque;
use std::sync::Arc;

use holodeck_core::lod::{BudgetController, CameraState, ControllerConfig, DrawList, DrawListBuilder, FrameBudget, Placement};
use holodeck_core::neurocube::{NeuronInfo, PlaybackClock, SpikePacer, SpikeWindow, DEFAULT_TAU_S};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::state::DatasetEntry;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClockSnapshot {
    pub sim_time: f64,
    pub rate: f64,
    pub paused: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaybackRequest {
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default)]
    pub seek: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PickHit {
    pub id: u32,
    pub distance: f64,
    pub sim_time: f64,
    pub info: NeuronInfo,
}

/// Spike window as sent to viewers: `spikes` holds `[time, neuron]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpikeMessage {
    pub t0: f64,
    pub t1: f64,
    pub spikes: Vec<(f64, u32)>,
}

#[derive(Debug)]
pub struct SessionState {
    pub clock: PlaybackClock,
    pub budget: FrameBudget,
    pub controller: BudgetController,
    pub camera: Option<CameraState>,
    pub telemetry: VecDeque<u64>,
    telemetry_capacity: usize,
    pacer: SpikePacer,
    /// Bumped on every camera or budget change, so draw lists know when
    /// they are stale.
    revision: u64,
    pub streaming: bool,
    pub last_seen_ns: u64,
}

#[derive(Default)]
struct DrawState {
    builder: DrawListBuilder,
    built_at_ns: Option<u64>,
    revision: u64,
    last: Option<Arc<DrawList>>,
}

/// One viewer session. Control-plane state sits behind one lock; the draw
/// list builder has its own so slow builds never hold up playback calls.
pub struct Session {
    pub id: String,
    pub dataset: Arc<DatasetEntry>,
    state: Mutex<SessionState>,
    draw: Mutex<DrawState>,
}

impl Session {
    pub fn new(
        id: String,
        dataset: Arc<DatasetEntry>,
        budget: FrameBudget,
        controller: ControllerConfig,
        telemetry_capacity: usize,
        now_ns: u64,
    ) -> Self {
        let mut clock = PlaybackClock::new();
        clock.advance_to(now_ns);
        let mut pacer = SpikePacer::new();
        pacer.reset(0.0);
        Self {
            id,
            dataset,
            state: Mutex::new(SessionState {
                clock,
                budget,
                controller: BudgetController::new(controller),
                camera: None,
                telemetry: VecDeque::with_capacity(telemetry_capacity),
                telemetry_capacity,
                pacer,
                revision: 0,
                streaming: false,
                last_seen_ns: now_ns,
            }),
            draw: Mutex::new(DrawState::default()),
        }
    }

    fn with<R>(&self, now_ns: u64, f: impl FnOnce(&mut SessionState) -> R) -> R {
        let mut s = self.state.lock();
        s.clock.advance_to(now_ns);
        s.last_seen_ns = s.last_seen_ns.max(now_ns);
        f(&mut s)
    }

    pub fn clock(&self, now_ns: u64) -> ClockSnapshot {
        self.with(now_ns, |s| snapshot(&s.clock))
    }

    /// Applies a rate change and/or seek. Both are validated before either
    /// takes effect; a seek restarts spike-window tiling at the new time.
    pub fn playback(&self, now_ns: u64, req: PlaybackRequest) -> Result<ClockSnapshot, String> {
        if let Some(r) = req.rate {
            if !(r.is_finite() && r >= 0.0) {
                return Err("rate: must be a finite number >= 0".into());
            }
        }
        if let Some(t) = req.seek {
            if !(t.is_finite() && t >= 0.0) {
                return Err("seek: must be a finite time >= 0".into());
            }
        }
        Ok(self.with(now_ns, |s| {
            if let Some(r) = req.rate {
                s.clock.set_rate(r);
            }
            if let Some(t) = req.seek {
                s.clock.seek(t);
                s.pacer.reset(t);
            }
            snapshot(&s.clock)
        }))
    }

    /// Feeds frame times to the budget controller in order and returns the
    /// resulting budget.
    pub fn telemetry(&self, now_ns: u64, frame_ns: &[u64]) -> FrameBudget {
        self.with(now_ns, |s| {
            for &f in frame_ns {
                if s.telemetry.len() == s.telemetry_capacity {
                    s.telemetry.pop_front();
                }
                s.telemetry.push_back(f);
                let next = s.controller.update(&s.budget, f);
                if next != s.budget {
                    s.budget = next;
                    s.revision += 1;
                }
            }
            s.budget
        })
    }

    pub fn set_camera(&self, now_ns: u64, camera: CameraState) {
        self.with(now_ns, |s| {
            s.camera = Some(camera);
            s.revision += 1;
        })
    }

    pub fn budget(&self, now_ns: u64) -> FrameBudget {
        self.with(now_ns, |s| s.budget)
    }

    /// The next spike window: from where the previous one ended to now.
    pub fn spike_window(&self, now_ns: u64) -> SpikeMessage {
        let w = self.with(now_ns, |s| {
            let t = s.clock.sim_time();
            s.pacer.next_window(&self.dataset.dataset, t)
        });
        window_message(&self.dataset, w)
    }

    pub fn pick(&self, now_ns: u64, point: [f64; 3], max_radius: f64) -> Option<PickHit> {
        let t = self.with(now_ns, |s| s.clock.sim_time());
        let (id, distance) = self.dataset.index.nearest_neuron(point, max_radius)?;
        let info = self.dataset.dataset.neuron_info(id, t, DEFAULT_TAU_S).ok()?;
        Some(PickHit {
            id,
            distance,
            sim_time: t,
            info,
        })
    }

    /// Marks a stream as attached; false when one already is.
    pub fn attach_stream(&self, now_ns: u64) -> bool {
        self.with(now_ns, |s| !std::mem::replace(&mut s.streaming, true))
    }

    pub fn detach_stream(&self, now_ns: u64) {
        self.with(now_ns, |s| s.streaming = false)
    }

    /// Idle sessions (no stream attached) expire `grace_ns` after their last
    /// use.
    pub fn expired(&self, now_ns: u64, grace_ns: u64) -> bool {
        let s = self.state.lock();
        !s.streaming && now_ns.saturating_sub(s.last_seen_ns) > grace_ns
    }

    pub fn telemetry_samples(&self) -> Vec<u64> {
        self.state.lock().telemetry.iter().copied().collect()
    }

    /// Draw list for the current camera and budget. A fresh list is built at
    /// most once per `interval_ns`; in between, the last one is returned.
    /// `None` until a camera has been set. This call may take milliseconds on
    /// big datasets, so async callers should run it on a blocking thread.
    pub fn draw_list(&self, now_ns: u64, placement: &Placement, interval_ns: u64) -> Option<(Arc<DrawList>, bool)> {
        let (camera, budget, revision) = self.with(now_ns, |s| (s.camera, s.budget, s.revision));
        let camera = camera?;
        let mut d = self.draw.lock();
        let due = d.built_at_ns.is_none_or(|t| now_ns.saturating_sub(t) >= interval_ns);
        if let Some(last) = &d.last {
            if d.revision == revision || !due {
                return Some((last.clone(), false));
            }
        }
        let DrawState { builder, .. } = &mut *d;
        let list = Arc::new(builder.build(&self.dataset.dataset, &self.dataset.index, &camera, placement, &budget));
        d.built_at_ns = Some(now_ns);
        d.revision = revision;
        d.last = Some(list.clone());
        Some((list, true))
    }

    /// Whether the camera or budget changed since the last built list.
    pub fn draw_stale(&self) -> bool {
        let (has_camera, revision) = {
            let s = self.state.lock();
            (s.camera.is_some(), s.revision)
        };
        let d = self.draw.lock();
        has_camera && (d.last.is_none() || d.revision != revision)
    }
}

fn snapshot(c: &PlaybackClock) -> ClockSnapshot {
    ClockSnapshot {
        sim_time: c.sim_time(),
        rate: c.rate(),
        paused: c.is_paused(),
    }
}

pub fn window_message(entry: &DatasetEntry, w: SpikeWindow) -> SpikeMessage {
    let d = &entry.dataset;
    let times = &d.spike_times()[w.first..w.end];
    let ids = &d.spike_neurons()[w.first..w.end];
    SpikeMessage {
        t0: w.t0,
        t1: w.t1,
        spikes: times.iter().copied().zip(ids.iter().copied()).collect(),
    }
}
