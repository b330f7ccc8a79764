//! Spiking network data: neurons, signed connections, spike trains, spatial
//! picking and a pausable playback clock.

mod dataset;
mod index;
mod io;
mod playback;
mod synth;

use thiserror::Error;

pub use dataset::{Adjacency, ConnectionRef, Extent, NetworkDataset, NeuronInfo, NeuronKind, DEFAULT_TAU_S};
pub use index::SpatialIndex;
pub use io::{load_dataset, save_dataset, Manifest};
pub use playback::{PlaybackClock, SpikePacer, SpikeWindow};
pub use synth::{synth_network, SynthSpec};

pub type NeuronId = u32;

/// Row errors carry the 1-based line in the source file, counting the header
/// as line 1. Datasets built in memory report rows the same way.
#[derive(Debug, Error)]
pub enum NeuroError {
    #[error("{file}:{line}: {reason}")]
    MalformedRow { file: String, line: u64, reason: String },
    #[error("{file}:{line}: neuron {id} does not exist")]
    DanglingId { file: String, line: u64, id: NeuronId },
    #[error("{file}:{line}: neuron id {id} appears twice")]
    DuplicateNeuronId { file: String, line: u64, id: NeuronId },
    #[error("neuron ids must be dense from 0; {0} is missing")]
    MissingNeuronId(NeuronId),
    #[error("{file}:{line}: neuron {id} connects to itself")]
    SelfConnection { file: String, line: u64, id: NeuronId },
    #[error("unknown neuron {0}")]
    UnknownId(NeuronId),
    #[error("invalid synthesis parameters: {0}")]
    InvalidSpec(String),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
