use std::sync::OnceLock;
use std::time::Instant;

use serde::Serialize;

use super::PosecastError;

/// Nanoseconds on this process's monotonic clock.
pub fn monotonic_ns() -> u64 {
    static EPOCH: OnceLock<Instant> = OnceLock::new();
    EPOCH.get_or_init(Instant::now).elapsed().as_nanos() as u64
}

pub const MIN_SYNC_SAMPLES: usize = 8;

/// One request/response exchange, client stamps on the client clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncSample {
    pub t_request: u64,
    pub t_server: u64,
    pub t_response: u64,
}

impl SyncSample {
    fn offset(&self) -> i128 {
        self.t_server as i128 - (self.t_request as i128 + self.t_response as i128) / 2
    }

    fn round_trip(&self) -> u64 {
        self.t_response.saturating_sub(self.t_request)
    }
}

/// `server_time = client_time + offset_ns`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ClockOffset {
    pub offset_ns: i64,
    pub round_trip_ns: u64,
    pub sample_count: usize,
}

impl ClockOffset {
    pub const ZERO: ClockOffset = ClockOffset {
        offset_ns: 0,
        round_trip_ns: 0,
        sample_count: 0,
    };

    /// Median midpoint offset; asymmetric paths bias it by half the asymmetry.
    pub fn from_samples(samples: &[SyncSample]) -> Result<Self, PosecastError> {
        if samples.len() < MIN_SYNC_SAMPLES {
            return Err(PosecastError::NotEnoughSamples {
                needed: MIN_SYNC_SAMPLES,
                got: samples.len(),
            });
        }
        let mut offsets: Vec<i128> = samples.iter().map(SyncSample::offset).collect();
        offsets.sort_unstable();
        let n = offsets.len();
        let median = if n % 2 == 1 {
            offsets[n / 2]
        } else {
            (offsets[n / 2 - 1] + offsets[n / 2]) / 2
        };
        Ok(Self {
            offset_ns: median as i64,
            round_trip_ns: samples.iter().map(SyncSample::round_trip).min().unwrap_or(0),
            sample_count: n,
        })
    }

    pub fn to_server(&self, client_ns: u64) -> i128 {
        client_ns as i128 + self.offset_ns as i128
    }
}

/// Runs `exchange` until `samples` exchanges succeed (or 4× as many attempts fail).
pub fn estimate_clock_offset<F>(mut exchange: F, samples: usize) -> Result<ClockOffset, PosecastError>
where
    F: FnMut() -> Option<SyncSample>,
{
    let wanted = samples.max(MIN_SYNC_SAMPLES);
    let mut got = Vec::with_capacity(wanted);
    for _ in 0..wanted * 4 {
        if let Some(s) = exchange() {
            got.push(s);
            if got.len() == wanted {
                break;
            }
        }
    }
    ClockOffset::from_samples(&got)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Channel with fixed one-way delays and a server clock running `offset` ahead.
    fn channel(offset: i64, up: u64, down: u64) -> impl FnMut() -> Option<SyncSample> {
        let mut now = 1_000_000_000u64;
        move || {
            let t_request = now;
            let t_server = (t_request as i64 + up as i64 + offset) as u64;
            let t_response = t_request + up + down;
            now += 10_000_000;
            Some(SyncSample {
                t_request,
                t_server,
                t_response,
            })
        }
    }

    #[test]
    fn symmetric_channel_recovers_offset() {
        let c = estimate_clock_offset(channel(5_000_000, 400_000, 400_000), 16).unwrap();
        assert!((c.offset_ns - 5_000_000).abs() < 100_000);
        assert_eq!(c.round_trip_ns, 800_000);
        assert_eq!(c.sample_count, 16);
    }

    #[test]
    fn zero_channel_gives_zero() {
        let c = estimate_clock_offset(channel(0, 0, 0), 8).unwrap();
        assert_eq!(c.offset_ns, 0);
        assert_eq!(c.round_trip_ns, 0);
    }

    #[test]
    fn asymmetric_channel_bias_is_half_the_asymmetry() {
        let c = estimate_clock_offset(channel(0, 2_000_000, 8_000_000), 8).unwrap();
        assert_eq!(c.offset_ns, -3_000_000);
    }

    #[test]
    fn too_few_samples() {
        let mut n = 0;
        let r = estimate_clock_offset(
            || {
                n += 1;
                (n <= 3).then_some(SyncSample {
                    t_request: 0,
                    t_server: 0,
                    t_response: 0,
                })
            },
            8,
        );
        assert!(matches!(r, Err(PosecastError::NotEnoughSamples { needed: 8, got: 3 })));
    }

    #[test]
    fn monotonic() {
        let a = monotonic_ns();
        let b = monotonic_ns();
        assert!(b >= a);
    }
}
