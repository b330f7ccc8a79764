use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{NeuroError, NeuronId};

/// Decay constant of the displayed membrane potential proxy, in seconds.
pub const DEFAULT_TAU_S: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeuronKind {
    Input,
    Regular,
}

/// Axis-aligned bounds of the neuron positions, in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Extent {
    pub fn of(points: &[[f32; 3]]) -> Self {
        if points.is_empty() {
            return Self {
                min: [0.0; 3],
                max: [0.0; 3],
            };
        }
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for p in points {
            for k in 0..3 {
                min[k] = min[k].min(p[k] as f64);
                max[k] = max[k].max(p[k] as f64);
            }
        }
        Self { min, max }
    }

    pub fn size(&self) -> [f64; 3] {
        [0, 1, 2].map(|k| self.max[k] - self.min[k])
    }

    pub fn diagonal(&self) -> f64 {
        let s = self.size();
        (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt()
    }
}

/// Connection ids grouped by endpoint. Connections are stored sorted by
/// presynaptic neuron, so outgoing lists are plain id ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    out_offsets: Vec<u32>,
    in_offsets: Vec<u32>,
    in_conns: Vec<u32>,
}

impl Adjacency {
    /// `pre` must be sorted ascending.
    pub fn build(n_neurons: usize, pre: &[u32], post: &[u32]) -> Self {
        debug_assert!(pre.windows(2).all(|w| w[0] <= w[1]));
        let mut out_offsets = vec![0u32; n_neurons + 1];
        let mut in_offsets = vec![0u32; n_neurons + 1];
        for (&a, &b) in pre.iter().zip(post) {
            out_offsets[a as usize + 1] += 1;
            in_offsets[b as usize + 1] += 1;
        }
        for i in 0..n_neurons {
            out_offsets[i + 1] += out_offsets[i];
            in_offsets[i + 1] += in_offsets[i];
        }
        let mut cursor = in_offsets[..n_neurons].to_vec();
        let mut in_conns = vec![0u32; post.len()];
        for (c, &b) in post.iter().enumerate() {
            let slot = &mut cursor[b as usize];
            in_conns[*slot as usize] = c as u32;
            *slot += 1;
        }
        Self {
            out_offsets,
            in_offsets,
            in_conns,
        }
    }

    /// Presynaptic neuron of connection `c`.
    pub fn source_of(&self, c: u32) -> NeuronId {
        (self.out_offsets.partition_point(|&o| o <= c) - 1) as NeuronId
    }

    pub fn outgoing(&self, id: NeuronId) -> Range<u32> {
        self.out_offsets[id as usize]..self.out_offsets[id as usize + 1]
    }

    pub fn incoming(&self, id: NeuronId) -> &[u32] {
        let i = id as usize;
        &self.in_conns[self.in_offsets[i] as usize..self.in_offsets[i + 1] as usize]
    }
}

/// Row-level connection checks; the error's file and line are placeholders.
pub(crate) fn check_connection(n: usize, pre: u32, post: u32, weight: f32) -> Result<(), NeuroError> {
    for id in [pre, post] {
        if id as usize >= n {
            return Err(NeuroError::DanglingId {
                file: String::new(),
                line: 0,
                id,
            });
        }
    }
    if pre == post {
        return Err(NeuroError::SelfConnection {
            file: String::new(),
            line: 0,
            id: pre,
        });
    }
    if !weight.is_finite() || weight == 0.0 {
        return Err(NeuroError::MalformedRow {
            file: String::new(),
            line: 0,
            reason: format!("weight must be finite and nonzero, got {weight}"),
        });
    }
    Ok(())
}

pub(crate) fn check_spike(n: usize, time: f64, neuron: u32) -> Result<(), NeuroError> {
    if neuron as usize >= n {
        return Err(NeuroError::DanglingId {
            file: String::new(),
            line: 0,
            id: neuron,
        });
    }
    if !time.is_finite() || time < 0.0 {
        return Err(NeuroError::MalformedRow {
            file: String::new(),
            line: 0,
            reason: format!("spike time must be finite and >= 0, got {time}"),
        });
    }
    Ok(())
}

pub(crate) fn at_line(e: NeuroError, file: &str, line: u64) -> NeuroError {
    let file = file.to_string();
    match e {
        NeuroError::DanglingId { id, .. } => NeuroError::DanglingId { file, line, id },
        NeuroError::SelfConnection { id, .. } => NeuroError::SelfConnection { file, line, id },
        NeuroError::MalformedRow { reason, .. } => NeuroError::MalformedRow { file, line, reason },
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConnectionRef {
    pub id: u32,
    pub pre: NeuronId,
    pub post: NeuronId,
    pub weight: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeuronInfo {
    pub id: NeuronId,
    pub kind: NeuronKind,
    pub position: [f32; 3],
    pub potential: f64,
    pub incoming: Vec<ConnectionRef>,
    pub outgoing: Vec<ConnectionRef>,
}

/// Immutable network, stored column-wise.
///
/// Positions are millimeters. Connection ids are indices into the stored
/// connection order: by presynaptic neuron, then by descending |weight|, then
/// file order.
/// Spikes are sorted by (time, neuron).
#[derive(Debug, Clone)]
pub struct NetworkDataset {
    pub name: String,
    pub units: String,
    positions: Vec<[f32; 3]>,
    kinds: Vec<NeuronKind>,
    // Connections are sorted by presynaptic id, so the adjacency's outgoing
    // offsets stand in for a pre column.
    post: Vec<u32>,
    weight: Vec<f32>,
    spike_time: Vec<f64>,
    spike_neuron: Vec<u32>,
    spike_offsets: Vec<u32>,
    spike_by_neuron: Vec<u32>,
    adjacency: Adjacency,
    extent: Extent,
    max_abs_weight: f32,
    warnings: Vec<String>,
}

impl NetworkDataset {
    pub fn empty(name: &str) -> Self {
        Self::from_parts(name, "mm", Vec::new(), Vec::new(), Vec::new(), Vec::new()).expect("empty is valid")
    }

    /// Validates and indexes raw columns. Row errors use `line = index + 2`,
    /// matching a CSV file with one header row.
    pub fn from_parts(
        name: &str,
        units: &str,
        positions: Vec<[f32; 3]>,
        kinds: Vec<NeuronKind>,
        connections: Vec<(u32, u32, f32)>,
        spikes: Vec<(f64, u32)>,
    ) -> Result<Self, NeuroError> {
        assert_eq!(positions.len(), kinds.len(), "one kind per neuron");
        let n = positions.len();
        let line = |i: usize| i as u64 + 2;
        if let Some(i) = positions.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(NeuroError::MalformedRow {
                file: "neurons".into(),
                line: line(i),
                reason: "non-finite position".into(),
            });
        }
        for (i, &(a, b, w)) in connections.iter().enumerate() {
            check_connection(n, a, b, w).map_err(|e| at_line(e, "connections", line(i)))?;
        }
        for (i, &(t, id)) in spikes.iter().enumerate() {
            check_spike(n, t, id).map_err(|e| at_line(e, "spikes", line(i)))?;
        }

        let mut warnings = Vec::new();
        let mut connections = connections;
        let conn_order = |a: &(u32, u32, f32), b: &(u32, u32, f32)| a.0.cmp(&b.0).then(b.2.abs().total_cmp(&a.2.abs()));
        if !connections.windows(2).all(|w| conn_order(&w[0], &w[1]).is_le()) {
            connections.sort_by(conn_order);
        }
        let mut spikes = spikes;
        let ordered = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if !spikes.windows(2).all(|w| ordered(&w[0], &w[1]).is_le()) {
            warnings.push(format!("spikes were not time-sorted; sorted {} events", spikes.len()));
            spikes.sort_by(ordered);
        }

        let mut pre = Vec::with_capacity(connections.len());
        let mut post = Vec::with_capacity(connections.len());
        let mut weight = Vec::with_capacity(connections.len());
        for (a, b, w) in connections {
            pre.push(a);
            post.push(b);
            weight.push(w);
        }
        let (spike_time, spike_neuron): (Vec<f64>, Vec<u32>) = spikes.into_iter().unzip();
        Ok(Self::assemble(
            name, units, positions, kinds, pre, post, weight, spike_time, spike_neuron, warnings,
        ))
    }

    /// Columns already validated and sorted.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        name: &str,
        units: &str,
        positions: Vec<[f32; 3]>,
        kinds: Vec<NeuronKind>,
        pre: Vec<u32>,
        post: Vec<u32>,
        weight: Vec<f32>,
        spike_time: Vec<f64>,
        spike_neuron: Vec<u32>,
        warnings: Vec<String>,
    ) -> Self {
        let n = positions.len();
        let adjacency = Adjacency::build(n, &pre, &post);
        let mut spike_offsets = vec![0u32; n + 1];
        for &id in &spike_neuron {
            spike_offsets[id as usize + 1] += 1;
        }
        for i in 0..n {
            spike_offsets[i + 1] += spike_offsets[i];
        }
        let mut cursor = spike_offsets[..n].to_vec();
        let mut spike_by_neuron = vec![0u32; spike_neuron.len()];
        for (s, &id) in spike_neuron.iter().enumerate() {
            spike_by_neuron[cursor[id as usize] as usize] = s as u32;
            cursor[id as usize] += 1;
        }
        let max_abs_weight = weight.iter().fold(0.0f32, |m, w| m.max(w.abs()));
        Self {
            name: name.to_string(),
            units: units.to_string(),
            extent: Extent::of(&positions),
            positions,
            kinds,
            post,
            weight,
            spike_time,
            spike_neuron,
            spike_offsets,
            spike_by_neuron,
            adjacency,
            max_abs_weight,
            warnings,
        }
    }

    pub fn neuron_count(&self) -> usize {
        self.positions.len()
    }

    pub fn connection_count(&self) -> usize {
        self.post.len()
    }

    pub fn spike_count(&self) -> usize {
        self.spike_time.len()
    }

    pub fn positions(&self) -> &[[f32; 3]] {
        &self.positions
    }

    pub fn kinds(&self) -> &[NeuronKind] {
        &self.kinds
    }

    pub fn kind(&self, id: NeuronId) -> Option<NeuronKind> {
        self.kinds.get(id as usize).copied()
    }

    pub fn connection(&self, id: u32) -> ConnectionRef {
        let c = id as usize;
        ConnectionRef {
            id,
            pre: self.adjacency.source_of(id),
            post: self.post[c],
            weight: self.weight[c],
        }
    }

    /// Presynaptic ids in connection order.
    pub fn connection_pre(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.neuron_count() as u32).flat_map(|i| std::iter::repeat_n(i, self.adjacency.outgoing(i).len()))
    }

    pub fn connection_post(&self) -> &[u32] {
        &self.post
    }

    pub fn connection_weight(&self) -> &[f32] {
        &self.weight
    }

    pub fn spike_times(&self) -> &[f64] {
        &self.spike_time
    }

    pub fn spike_neurons(&self) -> &[u32] {
        &self.spike_neuron
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    /// Recomputes adjacency from the connection columns.
    pub fn rebuild_adjacency(&self) -> Adjacency {
        let pre: Vec<u32> = self.connection_pre().collect();
        Adjacency::build(self.neuron_count(), &pre, &self.post)
    }

    pub fn extent(&self) -> Extent {
        self.extent
    }

    pub fn max_abs_weight(&self) -> f32 {
        self.max_abs_weight
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Index range of spikes with `t0 <= time < t1`.
    pub fn spike_range(&self, t0: f64, t1: f64) -> Range<usize> {
        let lo = self.spike_time.partition_point(|&t| t < t0);
        let hi = self.spike_time.partition_point(|&t| t < t1).max(lo);
        lo..hi
    }

    /// Spikes with `t0 <= time < t1` as parallel (times, neurons) slices.
    pub fn spikes_in(&self, t0: f64, t1: f64) -> (&[f64], &[u32]) {
        let r = self.spike_range(t0, t1);
        (&self.spike_time[r.clone()], &self.spike_neuron[r])
    }

    /// Spike times of one neuron, ascending.
    pub fn neuron_spike_times(&self, id: NeuronId) -> impl Iterator<Item = f64> + '_ {
        let i = id as usize;
        self.spike_by_neuron[self.spike_offsets[i] as usize..self.spike_offsets[i + 1] as usize]
            .iter()
            .map(|&s| self.spike_time[s as usize])
    }

    /// Sum of exp(-(t - t_spike)/tau) over spikes at or before `t`, clamped to [0, 1].
    pub fn potential(&self, id: NeuronId, t: f64, tau: f64) -> f64 {
        let v: f64 = self
            .neuron_spike_times(id)
            .take_while(|&ts| ts <= t)
            .map(|ts| (-(t - ts) / tau).exp())
            .sum();
        v.clamp(0.0, 1.0)
    }

    pub fn neuron_info(&self, id: NeuronId, t: f64, tau: f64) -> Result<NeuronInfo, NeuroError> {
        let kind = self.kind(id).ok_or(NeuroError::UnknownId(id))?;
        Ok(NeuronInfo {
            id,
            kind,
            position: self.positions[id as usize],
            potential: self.potential(id, t, tau),
            incoming: self.adjacency.incoming(id).iter().map(|&c| self.connection(c)).collect(),
            outgoing: self.adjacency.outgoing(id).map(|c| self.connection(c)).collect(),
        })
    }
}
