use serde::Serialize;

use super::clock::ClockOffset;
use super::PosecastError;

pub const DEFAULT_BUDGET_NS: u64 = 20_000_000;

/// Timestamps of one frame through the pipeline.
///
/// Capture, encode and send are on the publisher clock; receive and consume
/// are on the subscriber clock and get shifted by the clock offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StageStamps {
    pub frame_id: u32,
    pub capture_ns: u64,
    pub encode_ns: u64,
    pub send_ns: u64,
    pub receive_ns: u64,
    pub consume_ns: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Percentiles {
    pub p50: u64,
    pub p90: u64,
    pub p99: u64,
    pub max: u64,
}

impl Percentiles {
    /// Nearest-rank percentiles; sorts `samples` in place.
    pub fn from_samples(samples: &mut [u64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        samples.sort_unstable();
        Self {
            p50: nearest_rank(samples, 50),
            p90: nearest_rank(samples, 90),
            p99: nearest_rank(samples, 99),
            max: samples[samples.len() - 1],
        }
    }
}

/// Smallest sample with at least `pct` percent of samples at or below it.
pub fn nearest_rank(sorted: &[u64], pct: u32) -> u64 {
    let n = sorted.len();
    let rank = (pct as usize * n).div_ceil(100).max(1);
    sorted[rank - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub frames: usize,
    pub budget_ns: u64,
    pub capture_to_encode: Percentiles,
    pub encode_to_send: Percentiles,
    pub send_to_receive: Percentiles,
    pub receive_to_consume: Percentiles,
    pub end_to_end: Percentiles,
    /// Deltas that came out negative after offset correction and were clamped to 0.
    pub clamped_deltas: usize,
    pub clock_offset: ClockOffset,
    pub pass: bool,
}

pub fn measure_latency(
    stamps: &[StageStamps],
    offset: ClockOffset,
    budget_ns: u64,
) -> Result<LatencyReport, PosecastError> {
    if stamps.is_empty() {
        return Err(PosecastError::EmptyStream);
    }
    let mut clamped = 0usize;
    let mut delta = |a: i128, b: i128| -> u64 {
        let d = b - a;
        if d < 0 {
            clamped += 1;
            0
        } else {
            d.min(u64::MAX as i128) as u64
        }
    };
    let n = stamps.len();
    let mut cols: [Vec<u64>; 5] = std::array::from_fn(|_| Vec::with_capacity(n));
    for s in stamps {
        let capture = s.capture_ns as i128;
        let encode = s.encode_ns as i128;
        let send = s.send_ns as i128;
        let receive = offset.to_server(s.receive_ns);
        let consume = offset.to_server(s.consume_ns);
        cols[0].push(delta(capture, encode));
        cols[1].push(delta(encode, send));
        cols[2].push(delta(send, receive));
        cols[3].push(delta(receive, consume));
        cols[4].push(delta(capture, consume));
    }
    let [c0, c1, c2, c3, c4] = &mut cols;
    let end_to_end = Percentiles::from_samples(c4);
    Ok(LatencyReport {
        frames: n,
        budget_ns,
        capture_to_encode: Percentiles::from_samples(c0),
        encode_to_send: Percentiles::from_samples(c1),
        send_to_receive: Percentiles::from_samples(c2),
        receive_to_consume: Percentiles::from_samples(c3),
        end_to_end,
        clamped_deltas: clamped,
        clock_offset: offset,
        pass: end_to_end.p99 <= budget_ns,
    })
}
