use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::dataset::{NetworkDataset, NeuronKind};
use super::NeuroError;

/// Parameters for a synthetic network in a cube of side `cube_mm` centered on
/// the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_neurons: usize,
    pub n_connections: usize,
    pub spike_rate_hz: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub cube_mm: f64,
    /// Per-axis standard deviation of a connection's target offset, in grid cells.
    pub reach_cells: f64,
    pub inhibitory_fraction: f64,
    pub input_fraction: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_neurons: 10_000,
            n_connections: 100_000,
            spike_rate_hz: 1.0,
            duration_s: 10.0,
            seed: 0,
            cube_mm: 150.0,
            reach_cells: 1.5,
            inhibitory_fraction: 0.2,
            input_fraction: 0.01,
        }
    }
}

/// Builds a deterministic random network.
///
/// Neuron ids follow a coarse grid in x-major cell order, so spatially close
/// neurons get close ids. Each connection targets a random neuron in the cell
/// under a Gaussian offset from its source, which makes connection probability
/// fall off with distance. Connections come out in dataset order: by source,
/// then by descending |weight|.
pub fn synth_network(spec: &SynthSpec) -> Result<NetworkDataset, NeuroError> {
    let n = spec.n_neurons;
    if n > u32::MAX as usize - 1 {
        return Err(NeuroError::InvalidSpec("too many neurons".into()));
    }
    if spec.n_connections > 0 && n < 2 {
        return Err(NeuroError::InvalidSpec("connections need at least two neurons".into()));
    }
    if !(spec.cube_mm > 0.0 && spec.reach_cells > 0.0 && spec.duration_s >= 0.0 && spec.spike_rate_hz >= 0.0) {
        return Err(NeuroError::InvalidSpec("sizes, duration and rate must be positive".into()));
    }
    for f in [spec.inhibitory_fraction, spec.input_fraction] {
        if !(0.0..=1.0).contains(&f) {
            return Err(NeuroError::InvalidSpec("fractions must lie in [0, 1]".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let half = spec.cube_mm / 2.0;

    // About four neurons per synthesis cell.
    let g = ((n as f64 / 4.0).cbrt().ceil() as usize).max(1);
    let cell = spec.cube_mm / g as f64;
    let cell_of = |p: [f32; 3]| -> usize {
        let c = |v: f32| (((v as f64 + half) / cell) as usize).min(g - 1);
        (c(p[0]) * g + c(p[1])) * g + c(p[2])
    };
    let raw: Vec<[f32; 3]> = (0..n)
        .map(|_| [0; 3].map(|_| rng.gen_range(-half..half) as f32))
        .collect();
    let mut cell_start = vec![0u32; g * g * g + 1];
    for p in &raw {
        cell_start[cell_of(*p) + 1] += 1;
    }
    for c in 0..g * g * g {
        cell_start[c + 1] += cell_start[c];
    }
    let mut positions = vec![[0.0f32; 3]; n];
    {
        let mut cursor = cell_start[..g * g * g].to_vec();
        for p in raw {
            let c = cell_of(p);
            positions[cursor[c] as usize] = p;
            cursor[c] += 1;
        }
    }
    let kinds: Vec<NeuronKind> = (0..n)
        .map(|_| {
            if rng.gen_bool(spec.input_fraction) {
                NeuronKind::Input
            } else {
                NeuronKind::Regular
            }
        })
        .collect();

    let m = spec.n_connections;
    let mut pre = Vec::with_capacity(m);
    let mut post = Vec::with_capacity(m);
    let mut weight = Vec::with_capacity(m);
    if m > 0 {
        let offset = Normal::new(0.0, spec.reach_cells * cell).expect("positive sigma");
        let base = m / n;
        let extra = m % n;
        for src in 0..n {
            let count = base + usize::from(src < extra);
            let p = positions[src];
            let first = pre.len();
            for _ in 0..count {
                let dst = pick_target(&mut rng, &offset, p, src, n, |q| {
                    let c = cell_of(q);
                    cell_start[c]..cell_start[c + 1]
                });
                let magnitude = rng.gen_range(0.05f32..=1.0);
                let sign = if rng.gen_bool(spec.inhibitory_fraction) { -1.0 } else { 1.0 };
                pre.push(src as u32);
                post.push(dst);
                weight.push(sign * magnitude);
            }
            sort_by_magnitude(&mut post[first..], &mut weight[first..]);
        }
    }

    let mut spikes: Vec<(f64, u32)> = Vec::new();
    let mean = spec.spike_rate_hz * spec.duration_s * n as f64;
    if mean > 0.0 && n > 0 {
        let total = Poisson::new(mean).expect("positive mean").sample(&mut rng) as usize;
        spikes.reserve_exact(total);
        for _ in 0..total {
            let t = rng.gen_range(0.0..spec.duration_s);
            spikes.push((t, rng.gen_range(0..n as u32)));
        }
        spikes.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }
    let (spike_time, spike_neuron): (Vec<f64>, Vec<u32>) = spikes.into_iter().unzip();

    Ok(NetworkDataset::assemble(
        &format!("synth-{}-{}", n, spec.seed),
        "mm",
        positions,
        kinds,
        pre,
        post,
        weight,
        spike_time,
        spike_neuron,
        Vec::new(),
    ))
}

/// Reorders one source's connections by descending |weight|, stable.
fn sort_by_magnitude(post: &mut [u32], weight: &mut [f32]) {
    let mut pairs: Vec<(u32, f32)> = post.iter().copied().zip(weight.iter().copied()).collect();
    pairs.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
    for (i, (p, w)) in pairs.into_iter().enumerate() {
        post[i] = p;
        weight[i] = w;
    }
}

fn pick_target(
    rng: &mut ChaCha8Rng,
    offset: &Normal<f64>,
    p: [f32; 3],
    src: usize,
    n: usize,
    cell_range: impl Fn([f32; 3]) -> std::ops::Range<u32>,
) -> u32 {
    for _ in 0..8 {
        let q = p.map(|v| (v as f64 + offset.sample(rng)) as f32);
        let r = cell_range(q);
        if r.is_empty() || (r.len() == 1 && r.start as usize == src) {
            continue;
        }
        let dst = rng.gen_range(r);
        if dst as usize != src {
            return dst;
        }
    }
    // Sparse neighbourhood: any other neuron.
    let dst = rng.gen_range(0..n as u32 - 1);
    if dst as usize >= src {
        dst + 1
    } else {
        dst
    }
}
