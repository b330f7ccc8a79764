use std::net::UdpSocket;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use crate::mocapsim::Recording;
use crate::tracking::{track_frame, TrackResult, TrackerConfig};

use super::clock::{monotonic_ns, ClockOffset};
use super::latency::{measure_latency, LatencyReport, StageStamps, DEFAULT_BUDGET_NS};
use super::mailbox::Mailbox;
use super::transport::{spawn_subscriber, Broadcaster};
use super::wire::{BodyPose, PoseFrame, STATUS_LOST, STATUS_TRACKED};
use super::PosecastError;

/// Converts tracker output into wire records.
pub fn pose_frame(frame_id: u32, t_capture_ns: u64, results: &[TrackResult]) -> PoseFrame {
    PoseFrame {
        frame_id,
        t_capture_ns,
        t_send_ns: 0,
        bodies: results
            .iter()
            .map(|r| {
                let t = r.pose.translation;
                let q = r.pose.wxyz();
                BodyPose {
                    body_id: r.body_id,
                    status: if r.is_tracked() { STATUS_TRACKED } else { STATUS_LOST },
                    position: [t.x as f32, t.y as f32, t.z as f32],
                    orientation: q.map(|v| v as f32),
                    residual: r.residual_rms as f32,
                }
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReplayConfig {
    /// Pace frames at the recording's rate; otherwise send back to back.
    pub realtime: bool,
    pub tracker: TrackerConfig,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            realtime: true,
            tracker: TrackerConfig::default(),
        }
    }
}

/// Publisher-side stamps of one sent frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SentFrame {
    pub frame_id: u32,
    pub capture_ns: u64,
    pub encode_ns: u64,
    pub send_ns: u64,
}

/// Tracks every recorded frame and broadcasts the poses.
///
/// The capture stamp is the frame's scheduled time, so scheduling slip counts
/// against latency. Stops early when `stop` is raised.
pub fn replay_recording<F>(
    recording: &Recording,
    broadcaster: &mut Broadcaster,
    cfg: &ReplayConfig,
    stop: &AtomicBool,
    mut on_sent: F,
) -> Result<usize, PosecastError>
where
    F: FnMut(SentFrame),
{
    let constellations = &recording.header.constellations;
    let first_ts = recording.frames.first().map_or(0, |f| f.cloud.timestamp_ns);
    let start = monotonic_ns() + 1_000_000;
    let mut previous: Option<Vec<TrackResult>> = None;
    let mut sent = 0;
    for rec in &recording.frames {
        if stop.load(Ordering::Relaxed) {
            break;
        }
        let scheduled = start + (rec.cloud.timestamp_ns - first_ts);
        let capture_ns = if cfg.realtime {
            let now = monotonic_ns();
            if scheduled > now {
                std::thread::sleep(Duration::from_nanos(scheduled - now));
            }
            scheduled
        } else {
            monotonic_ns()
        };
        let results = track_frame(&rec.cloud, constellations, previous.as_deref(), &cfg.tracker);
        let encode_ns = monotonic_ns();
        let mut frame = pose_frame(rec.cloud.frame_id as u32, capture_ns, &results);
        let send_ns = broadcaster.send(&mut frame)?;
        previous = Some(results);
        sent += 1;
        on_sent(SentFrame {
            frame_id: frame.frame_id,
            capture_ns,
            encode_ns,
            send_ns,
        });
        if !cfg.realtime {
            std::thread::yield_now();
        }
    }
    Ok(sent)
}

#[derive(Debug, Clone, Default)]
pub struct LoopbackConfig {
    pub replay: ReplayConfig,
    pub budget_ns: Option<u64>,
    /// Extra time the consumer spends before stamping a frame as consumed.
    pub consume_delay: Option<Duration>,
}

#[derive(Debug, Clone)]
pub struct LoopbackOutcome {
    pub report: LatencyReport,
    pub frames_sent: usize,
    /// Frames the subscriber accepted into its mailbox.
    pub frames_observed: u64,
    pub frames_consumed: usize,
    pub stale_discarded: u64,
    pub decode_errors: u64,
    /// Frame ids seen by the consumer, in order.
    pub consumed_ids: Vec<u32>,
}

impl LoopbackOutcome {
    pub fn observed_fraction(&self) -> f64 {
        if self.frames_sent == 0 {
            return 0.0;
        }
        self.frames_observed as f64 / self.frames_sent as f64
    }
}

/// Replays `recording` to a subscriber and a consumer in this process over
/// UDP loopback and reports capture-to-consume latency.
pub fn run_loopback(recording: &Recording, cfg: &LoopbackConfig) -> Result<LoopbackOutcome, PosecastError> {
    let mailbox = Arc::new(Mailbox::new());
    let subscriber = spawn_subscriber(UdpSocket::bind("127.0.0.1:0")?, mailbox.clone())?;
    let mut broadcaster = Broadcaster::bind("127.0.0.1:0", vec![subscriber.local_addr()])?;

    let done = Arc::new(AtomicBool::new(false));
    let consumer = {
        let mailbox = mailbox.clone();
        let done = done.clone();
        let delay = cfg.consume_delay;
        std::thread::Builder::new()
            .name("posecast-consumer".into())
            .spawn(move || {
                let mut seen: Vec<(u32, u64, u64)> = Vec::new();
                let mut last = None;
                loop {
                    match mailbox.wait_newer(last, Duration::from_millis(20)) {
                        Some(d) => {
                            if let Some(extra) = delay {
                                std::thread::sleep(extra);
                            }
                            let consume = monotonic_ns();
                            last = Some(d.frame.frame_id);
                            seen.push((d.frame.frame_id, d.received_ns, consume));
                        }
                        None if done.load(Ordering::Relaxed) => break,
                        None => {}
                    }
                }
                seen
            })?
    };

    let never = AtomicBool::new(false);
    let mut sent: Vec<SentFrame> = Vec::with_capacity(recording.frames.len());
    let replayed = replay_recording(recording, &mut broadcaster, &cfg.replay, &never, |s| sent.push(s));
    // Let in-flight datagrams land before shutting the consumer down.
    std::thread::sleep(Duration::from_millis(100));
    done.store(true, Ordering::Relaxed);
    let consumed = consumer.join().expect("consumer thread panicked");
    subscriber.stop();
    let frames_sent = replayed?;

    sent.sort_by_key(|s| s.frame_id);
    let stamps: Vec<StageStamps> = consumed
        .iter()
        .filter_map(|&(id, receive_ns, consume_ns)| {
            let i = sent.binary_search_by_key(&id, |s| s.frame_id).ok()?;
            let s = sent[i];
            Some(StageStamps {
                frame_id: id,
                capture_ns: s.capture_ns,
                encode_ns: s.encode_ns,
                send_ns: s.send_ns,
                receive_ns,
                consume_ns,
            })
        })
        .collect();
    let report = measure_latency(&stamps, ClockOffset::ZERO, cfg.budget_ns.unwrap_or(DEFAULT_BUDGET_NS))?;
    let counters = mailbox.counters();
    Ok(LoopbackOutcome {
        report,
        frames_sent,
        frames_observed: counters.accepted,
        frames_consumed: consumed.len(),
        stale_discarded: counters.stale_discarded,
        decode_errors: counters.decode_errors,
        consumed_ids: consumed.iter().map(|c| c.0).collect(),
    })
}
