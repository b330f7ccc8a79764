//! Synthetic marker-cloud recordings with ground truth, standing in for the
//! optical capture suite.

mod recording;
mod trajectory;

use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::tracking::{BodyId, Constellation, MarkerCloud, Pose};

pub use recording::{read_recording, write_recording, write_recording_to, RECORDING_MAGIC, RECORDING_VERSION};
pub use trajectory::{PathKind, TrajectorySpec, Waypoint};

#[derive(Debug, Error)]
pub enum MocapError {
    #[error("body {body_id} leaves the capture volume at frame {frame}")]
    VolumeExceeded { frame: u64, body_id: BodyId },
    #[error("invalid trajectory: {0}")]
    InvalidSpec(String),
    #[error("not a recording file")]
    BadMagic,
    #[error("unsupported recording version {0}")]
    UnsupportedVersion(u16),
    #[error("recording file is truncated")]
    TruncatedFile,
    #[error("malformed recording: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordingHeader {
    pub version: u16,
    pub sample_rate_hz: f64,
    /// Full marker templates, so a recording can be replayed on its own.
    pub constellations: Vec<Constellation>,
}

impl RecordingHeader {
    pub fn body_ids(&self) -> Vec<BodyId> {
        self.constellations.iter().map(|c| c.body_id()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordedFrame {
    pub cloud: MarkerCloud,
    pub truth: Vec<(BodyId, Pose)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub header: RecordingHeader,
    pub frames: Vec<RecordedFrame>,
}

impl Recording {
    pub fn frame_period_ns(&self) -> f64 {
        1e9 / self.header.sample_rate_hz
    }
}

/// Nanosecond timestamp of frame `index` at `rate_hz`, rounded to the nearest ns.
pub fn frame_timestamp_ns(index: u64, rate_hz: f64) -> u64 {
    (index as f64 * 1e9 / rate_hz).round() as u64
}

/// Generates a recording: per frame, each body's ground-truth pose applied to
/// its markers, plus i.i.d. Gaussian noise, minus independently occluded
/// markers, in shuffled order.
///
/// With several bodies each one follows the same path shifted so they do not
/// collide: a phase offset on the circle, or 0.5 m along x otherwise.
pub fn simulate(spec: &TrajectorySpec, constellations: &[Constellation]) -> Result<Recording, MocapError> {
    spec.validate()?;
    let mut bodies: Vec<&Constellation> = constellations.iter().collect();
    bodies.sort_by_key(|c| c.body_id());
    let frame_count = (spec.duration_s * spec.sample_rate_hz).floor() as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let noise = (spec.noise_sigma_m > 0.0)
        .then(|| Normal::new(0.0, spec.noise_sigma_m).expect("sigma validated"));

    let mut frames = Vec::with_capacity(frame_count as usize);
    for frame in 0..frame_count {
        let t = frame as f64 / spec.sample_rate_hz;
        let mut points = Vec::new();
        let mut truth = Vec::with_capacity(bodies.len());
        for (k, c) in bodies.iter().enumerate() {
            let phase = k as f64 / bodies.len() as f64;
            let pose = spec.pose_at(t, k, phase * TAU);
            for marker in c.local_points() {
                let world = pose.transform_point(marker);
                if !spec.volume.contains(&world) {
                    return Err(MocapError::VolumeExceeded {
                        frame,
                        body_id: c.body_id(),
                    });
                }
                let hidden = rng.gen_bool(spec.occlusion_prob);
                let jitter = match &noise {
                    Some(n) => Vector3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng)),
                    None => Vector3::zeros(),
                };
                if !hidden {
                    points.push(world + jitter);
                }
            }
            truth.push((c.body_id(), pose));
        }
        points.shuffle(&mut rng);
        frames.push(RecordedFrame {
            cloud: MarkerCloud::new(frame, frame_timestamp_ns(frame, spec.sample_rate_hz), points),
            truth,
        });
    }
    Ok(Recording {
        header: RecordingHeader {
            version: RECORDING_VERSION,
            sample_rate_hz: spec.sample_rate_hz,
            constellations: bodies.into_iter().cloned().collect(),
        },
        frames,
    })
}
