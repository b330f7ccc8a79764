use super::dataset::{Extent, NetworkDataset};
use super::NeuronId;

/// Uniform grid over the dataset extent. Each cell lists its neuron ids in
/// ascending order.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    origin: [f64; 3],
    cell: f64,
    dims: [usize; 3],
    cell_start: Vec<u32>,
    ids: Vec<u32>,
    /// Positions in the same order as `ids`, for cache-friendly scans.
    points: Vec<[f32; 3]>,
    /// Largest outgoing |weight| per neuron, same order as `ids`.
    leads: Vec<f32>,
    /// First outgoing connection id per neuron, same order as `ids`.
    firsts: Vec<u32>,
}

impl SpatialIndex {
    /// Cell edge is the extent diagonal over cbrt(n), clamped to at least
    /// 1 mm and at most a quarter of the longest side, then widened if the
    /// grid would have more than about two cells per neuron.
    pub fn build(dataset: &NetworkDataset) -> Self {
        let positions = dataset.positions();
        let n = positions.len();
        let extent = dataset.extent();
        let size = extent.size();
        let longest = size.iter().cloned().fold(0.0, f64::max);
        let mut cell = if n == 0 { 1.0 } else { extent.diagonal() / (n as f64).cbrt() };
        cell = cell.min(longest / 4.0).max(1.0);
        let dims_for = |cell: f64| size.map(|s| ((s / cell).floor() as usize + 1).max(1));
        let mut dims = dims_for(cell);
        while dims.iter().product::<usize>() > 2 * n + 64 {
            cell *= 1.25;
            dims = dims_for(cell);
        }
        let mut index = Self {
            origin: extent.min,
            cell,
            dims,
            cell_start: Vec::new(),
            ids: Vec::new(),
            points: Vec::new(),
            leads: Vec::new(),
            firsts: Vec::new(),
        };
        let cells = dims.iter().product::<usize>();
        let mut cell_start = vec![0u32; cells + 1];
        let cell_ids: Vec<u32> = positions.iter().map(|p| index.cell_of(p.map(f64::from)) as u32).collect();
        for &c in &cell_ids {
            cell_start[c as usize + 1] += 1;
        }
        for c in 0..cells {
            cell_start[c + 1] += cell_start[c];
        }
        let mut cursor = cell_start[..cells].to_vec();
        let mut ids = vec![0u32; n];
        for (id, &c) in cell_ids.iter().enumerate() {
            ids[cursor[c as usize] as usize] = id as u32;
            cursor[c as usize] += 1;
        }
        index.points = ids.iter().map(|&id| positions[id as usize]).collect();
        // Outgoing connections are stored strongest first.
        let weights = dataset.connection_weight();
        let adjacency = dataset.adjacency();
        index.leads = ids
            .iter()
            .map(|&id| {
                let out = adjacency.outgoing(id);
                if out.is_empty() { 0.0 } else { weights[out.start as usize].abs() }
            })
            .collect();
        index.firsts = ids.iter().map(|&id| adjacency.outgoing(id).start).collect();
        index.cell_start = cell_start;
        index.ids = ids;
        index
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn cell_count(&self) -> usize {
        self.cell_start.len() - 1
    }

    fn coord(&self, p: [f64; 3]) -> [usize; 3] {
        [0, 1, 2].map(|k| {
            let c = ((p[k] - self.origin[k]) / self.cell).floor();
            if c <= 0.0 {
                0
            } else {
                (c as usize).min(self.dims[k] - 1)
            }
        })
    }

    fn linear(&self, c: [usize; 3]) -> usize {
        (c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]
    }

    fn cell_of(&self, p: [f64; 3]) -> usize {
        self.linear(self.coord(p))
    }

    pub fn cell_ids(&self, cell: usize) -> &[u32] {
        &self.ids[self.cell_start[cell] as usize..self.cell_start[cell + 1] as usize]
    }

    /// Positions parallel to [`cell_ids`](Self::cell_ids).
    pub fn cell_points(&self, cell: usize) -> &[[f32; 3]] {
        &self.points[self.cell_start[cell] as usize..self.cell_start[cell + 1] as usize]
    }

    /// Largest outgoing |weight| of each neuron in the cell, parallel to
    /// [`cell_ids`](Self::cell_ids); 0 for neurons without outgoing
    /// connections.
    pub fn cell_leads(&self, cell: usize) -> &[f32] {
        &self.leads[self.cell_start[cell] as usize..self.cell_start[cell + 1] as usize]
    }

    /// First outgoing connection id of each neuron in the cell, parallel to
    /// [`cell_ids`](Self::cell_ids).
    pub fn cell_firsts(&self, cell: usize) -> &[u32] {
        &self.firsts[self.cell_start[cell] as usize..self.cell_start[cell + 1] as usize]
    }

    /// Cell bounds, millimeters. The last cell on each axis may extend past
    /// the dataset extent.
    pub fn cell_bounds(&self, cell: usize) -> Extent {
        let z = cell % self.dims[2];
        let y = (cell / self.dims[2]) % self.dims[1];
        let x = cell / (self.dims[1] * self.dims[2]);
        let min = [x, y, z].map(|c| c as f64).map(|c| c * self.cell);
        let min = [0, 1, 2].map(|k| self.origin[k] + min[k]);
        Extent {
            min,
            max: min.map(|v| v + self.cell),
        }
    }

    /// Closest neuron within `max_radius` (inclusive); equal distances go to
    /// the lower id.
    pub fn nearest_neuron(&self, point: [f64; 3], max_radius: f64) -> Option<(NeuronId, f64)> {
        if self.ids.is_empty() || !(max_radius >= 0.0) {
            return None;
        }
        let r2 = max_radius * max_radius;
        let home = self.coord(point);
        // Distances are bounded from the query clamped into the grid box,
        // which is never farther from any indexed point.
        let mut best: Option<(u32, f64)> = None;
        let max_ring = *self.dims.iter().max().unwrap();
        for ring in 0..max_ring {
            let bound = (ring as f64 - 1.0).max(0.0) * self.cell;
            if bound * bound > r2 {
                break;
            }
            if let Some((_, d2)) = best {
                if bound * bound > d2 {
                    break;
                }
            }
            self.visit_ring(home, ring, |cell| {
                for (&id, &p) in self.cell_ids(cell).iter().zip(self.cell_points(cell)) {
                    let d2 = dist2(point, p);
                    if d2 > r2 {
                        continue;
                    }
                    match best {
                        Some((bid, bd)) if d2 > bd || (d2 == bd && id > bid) => {}
                        _ => best = Some((id, d2)),
                    }
                }
            });
        }
        best.map(|(id, d2)| (id, d2.sqrt()))
    }

    fn visit_ring(&self, home: [usize; 3], ring: usize, mut f: impl FnMut(usize)) {
        let r = ring as isize;
        let lo = |k: usize| (home[k] as isize - r).max(0) as usize;
        let hi = |k: usize| ((home[k] as isize + r) as usize).min(self.dims[k] - 1);
        for x in lo(0)..=hi(0) {
            for y in lo(1)..=hi(1) {
                for z in lo(2)..=hi(2) {
                    let cheb = [x, y, z]
                        .iter()
                        .zip(home)
                        .map(|(&c, h)| c.abs_diff(h))
                        .max()
                        .unwrap();
                    if cheb == ring {
                        f(self.linear([x, y, z]));
                    }
                }
            }
        }
    }
}

/// Squared distance with f32 positions widened to f64.
pub fn dist2(p: [f64; 3], q: [f32; 3]) -> f64 {
    let d = [p[0] - q[0] as f64, p[1] - q[1] as f64, p[2] - q[2] as f64];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}
