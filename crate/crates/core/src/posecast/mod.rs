//! Pose broadcast over UDP with latest-value subscribers and staged latency
//! measurement.

mod clock;
mod latency;
mod mailbox;
mod replay;
mod transport;
pub mod wire;

use thiserror::Error;

pub use clock::{estimate_clock_offset, monotonic_ns, ClockOffset, SyncSample, MIN_SYNC_SAMPLES};
pub use latency::{measure_latency, nearest_rank, LatencyReport, Percentiles, StageStamps, DEFAULT_BUDGET_NS};
pub use mailbox::{Delivered, Mailbox, MailboxCounters};
pub use replay::{pose_frame, replay_recording, run_loopback, LoopbackConfig, LoopbackOutcome, ReplayConfig, SentFrame};
pub use transport::{
    spawn_subscriber, spawn_time_server, udp_sync_exchange, BroadcastStats, Broadcaster, Worker, DEFAULT_PORT,
};
pub use wire::{decode_message, decode_pose_frame, encode_pose_frame, BodyPose, Message, PoseFrame, WireError};

#[derive(Debug, Error)]
pub enum PosecastError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("no frames to measure")]
    EmptyStream,
    #[error("clock sync needs {needed} samples, got {got}")]
    NotEnoughSamples { needed: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
