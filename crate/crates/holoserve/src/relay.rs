use std::collections::VecDeque;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use holodeck_core::posecast::{
    encode_pose_frame, estimate_clock_offset, measure_latency, monotonic_ns, spawn_subscriber, udp_sync_exchange,
    ClockOffset, LatencyReport, Mailbox, StageStamps, Worker, MIN_SYNC_SAMPLES,
};
use parking_lot::Mutex;
use tokio::sync::watch;

use crate::ServeError;

/// Stamps kept for the latency report: about 45 s at 180 Hz.
const STAMP_CAPACITY: usize = 8192;

/// Encoded pose frame as it goes out to viewers.
pub type FrameBytes = Arc<Vec<u8>>;

/// Receives pose frames over UDP and republishes the newest one to viewer
/// streams. Viewers only ever see the latest frame; one that falls behind
/// skips frames instead of queueing them.
pub struct PoseRelay {
    pub local_addr: SocketAddr,
    pub mailbox: Arc<Mailbox>,
    frames: watch::Receiver<Option<FrameBytes>>,
    stamps: Arc<Mutex<VecDeque<StageStamps>>>,
    offset: ClockOffset,
    budget_ns: u64,
    stop: Arc<AtomicBool>,
    pump: Option<JoinHandle<()>>,
    _subscriber: Worker,
}

impl PoseRelay {
    pub fn start(port: u16, time_server: Option<SocketAddr>, budget_ns: u64) -> Result<Self, ServeError> {
        let socket = UdpSocket::bind(("0.0.0.0", port)).map_err(|e| ServeError::Load(format!("pose port {port}: {e}")))?;
        let local_addr = socket.local_addr()?;
        let offset = match time_server {
            Some(server) => sync_offset(server)?,
            None => ClockOffset::ZERO,
        };
        let mailbox = Arc::new(Mailbox::new());
        let subscriber = spawn_subscriber(socket, mailbox.clone()).map_err(|e| ServeError::Load(e.to_string()))?;
        let (tx, frames) = watch::channel(None);
        let stamps = Arc::new(Mutex::new(VecDeque::with_capacity(STAMP_CAPACITY)));
        let stop = Arc::new(AtomicBool::new(false));
        let pump = {
            let (mailbox, stamps, stop) = (mailbox.clone(), stamps.clone(), stop.clone());
            std::thread::Builder::new().name("pose-relay".into()).spawn(move || {
                let mut last = None;
                while !stop.load(Ordering::Relaxed) {
                    let Some(d) = mailbox.wait_newer(last, Duration::from_millis(50)) else {
                        continue;
                    };
                    last = Some(d.frame.frame_id);
                    let Ok(bytes) = encode_pose_frame(&d.frame) else {
                        continue;
                    };
                    tx.send_replace(Some(Arc::new(bytes)));
                    // Handing the frame to the viewer streams is this hop's
                    // consume point.
                    let consume_ns = monotonic_ns();
                    let mut s = stamps.lock();
                    if s.len() == STAMP_CAPACITY {
                        s.pop_front();
                    }
                    s.push_back(StageStamps {
                        frame_id: d.frame.frame_id,
                        capture_ns: d.frame.t_capture_ns,
                        // The wire carries no encode stamp.
                        encode_ns: d.frame.t_send_ns,
                        send_ns: d.frame.t_send_ns,
                        receive_ns: d.received_ns,
                        consume_ns,
                    });
                }
            })?
        };
        Ok(Self {
            local_addr,
            mailbox,
            frames,
            stamps,
            offset,
            budget_ns,
            stop,
            pump: Some(pump),
            _subscriber: subscriber,
        })
    }

    pub fn subscribe(&self) -> watch::Receiver<Option<FrameBytes>> {
        self.frames.clone()
    }

    /// Latency over the most recent relayed frames; `None` before the first.
    pub fn report(&self) -> Option<LatencyReport> {
        let stamps: Vec<StageStamps> = self.stamps.lock().iter().copied().collect();
        measure_latency(&stamps, self.offset, self.budget_ns).ok()
    }
}

impl Drop for PoseRelay {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.pump.take() {
            let _ = h.join();
        }
    }
}

fn sync_offset(server: SocketAddr) -> Result<ClockOffset, ServeError> {
    let socket = UdpSocket::bind(("0.0.0.0", 0))?;
    estimate_clock_offset(|| udp_sync_exchange(&socket, server, Duration::from_millis(200)), MIN_SYNC_SAMPLES * 4)
        .map_err(|e| ServeError::Load(format!("clock sync with {server}: {e}")))
}
