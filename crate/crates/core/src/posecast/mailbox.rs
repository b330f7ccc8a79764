use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use arc_swap::ArcSwapOption;
use parking_lot::{Condvar, Mutex};

use super::wire::{BodyPose, PoseFrame};

/// A frame as it landed in the mailbox.
#[derive(Debug, Clone)]
pub struct Delivered {
    pub frame: PoseFrame,
    pub received_ns: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MailboxCounters {
    pub accepted: u64,
    pub stale_discarded: u64,
    pub decode_errors: u64,
}

/// Latest-value slot: readers always see the newest frame accepted so far.
///
/// Frames whose id is not greater than the current one are dropped. Reads are
/// lock-free snapshots; writers serialize among themselves only.
#[derive(Debug, Default)]
pub struct Mailbox {
    latest: ArcSwapOption<Delivered>,
    write: Mutex<()>,
    generation: Mutex<u64>,
    changed: Condvar,
    accepted: AtomicU64,
    stale: AtomicU64,
    decode_errors: AtomicU64,
}

impl Mailbox {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false when the frame was discarded as stale.
    pub fn offer(&self, frame: PoseFrame, received_ns: u64) -> bool {
        {
            let _w = self.write.lock();
            if let Some(cur) = self.latest.load().as_ref() {
                if frame.frame_id <= cur.frame.frame_id {
                    self.stale.fetch_add(1, Ordering::Relaxed);
                    return false;
                }
            }
            self.latest.store(Some(Arc::new(Delivered { frame, received_ns })));
            self.accepted.fetch_add(1, Ordering::Relaxed);
        }
        *self.generation.lock() += 1;
        self.changed.notify_all();
        true
    }

    pub(crate) fn note_decode_error(&self) {
        self.decode_errors.fetch_add(1, Ordering::Relaxed);
    }

    /// `None` until the first frame arrives.
    pub fn latest(&self) -> Option<Arc<Delivered>> {
        self.latest.load_full()
    }

    /// Newest known pose of one body, with the id of the frame carrying it.
    pub fn body(&self, body_id: u16) -> Option<(u32, BodyPose)> {
        let d = self.latest()?;
        d.frame.body(body_id).map(|b| (d.frame.frame_id, *b))
    }

    /// Blocks until a frame newer than `after` is present or the timeout passes.
    pub fn wait_newer(&self, after: Option<u32>, timeout: Duration) -> Option<Arc<Delivered>> {
        let deadline = Instant::now() + timeout;
        let newer = |d: &Option<Arc<Delivered>>| match (d, after) {
            (Some(d), Some(a)) => d.frame.frame_id > a,
            (Some(_), None) => true,
            (None, _) => false,
        };
        let mut gen = self.generation.lock();
        loop {
            let cur = self.latest();
            if newer(&cur) {
                return cur;
            }
            if self.changed.wait_until(&mut gen, deadline).timed_out() {
                let cur = self.latest();
                return if newer(&cur) { cur } else { None };
            }
        }
    }

    /// Nanoseconds since the newest frame was received.
    pub fn staleness_ns(&self, now_ns: u64) -> Option<u64> {
        self.latest().map(|d| now_ns.saturating_sub(d.received_ns))
    }

    pub fn counters(&self) -> MailboxCounters {
        MailboxCounters {
            accepted: self.accepted.load(Ordering::Relaxed),
            stale_discarded: self.stale.load(Ordering::Relaxed),
            decode_errors: self.decode_errors.load(Ordering::Relaxed),
        }
    }
}
