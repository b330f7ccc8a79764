use serde::Serialize;

use super::frustum::{Frustum, Side};
use super::{CameraState, FrameBudget, Placement};
use crate::neurocube::{Extent, NetworkDataset, SpatialIndex};

/// Number of detail levels above zero. Level `k` draws a neuron when its depth
/// is at most `2·(k/LEVELS)·far`, at tier 0 when at most `(k/LEVELS)·far`, and
/// a connection when both ends are drawn and `|w| >= (1 - k/LEVELS)·max|w|`.
pub const LEVELS: usize = 1024;
const NOT_DRAWN: u16 = u16::MAX;
/// Cells per block edge for the coarse pass.
const BLOCK: usize = 4;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DrawList {
    /// Drawn neuron ids, roughly front to back.
    pub neurons: Vec<u32>,
    /// 0 = sphere impostor, 1 = point; parallel to `neurons`.
    pub tiers: Vec<u8>,
    /// Drawn connection ids.
    pub connections: Vec<u32>,
    pub estimated_cost_ns: f64,
    /// Chosen detail level in `0..=LEVELS`; `None` when nothing fits.
    pub level: Option<u16>,
}

impl DrawList {
    pub fn primitive_count(&self) -> usize {
        self.neurons.len() + self.connections.len()
    }
}

/// `ceil(x)` as a level, for `x = ratio·LEVELS`. Truncation plus a fix-up
/// avoids a libm call on targets without a native rounding instruction.
#[inline]
fn level_of_scaled(x: f64) -> u16 {
    if !(x > 0.0) {
        return 0;
    }
    if x > LEVELS as f64 {
        return NOT_DRAWN;
    }
    let t = x as u32;
    (t + u32::from((t as f64) < x)) as u16
}

#[derive(Debug, Clone, Copy)]
struct Examined {
    id: u32,
    level: u16,
    tier0_level: u16,
    /// Largest outgoing |w|; 0 without outgoing connections.
    lead: f32,
    first: u32,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    min_level: u16,
    side: Side,
    lo: [usize; 3],
    hi: [usize; 3],
}

fn blocks(index: &SpatialIndex, frustum: &Frustum, draw_scale: f64, out: &mut Vec<Block>) {
    out.clear();
    let dims = index.dims();
    let counts = dims.map(|d| d.div_ceil(BLOCK));
    for bx in 0..counts[0] {
        for by in 0..counts[1] {
            for bz in 0..counts[2] {
                let lo = [bx, by, bz].map(|b| b * BLOCK);
                let hi = [0, 1, 2].map(|k| (lo[k] + BLOCK).min(dims[k]) - 1);
                let first = (lo[0] * dims[1] + lo[1]) * dims[2] + lo[2];
                let last = (hi[0] * dims[1] + hi[1]) * dims[2] + hi[2];
                let b = Extent {
                    min: index.cell_bounds(first).min,
                    max: index.cell_bounds(last).max,
                };
                let side = frustum.classify(&b);
                if side == Side::Outside {
                    continue;
                }
                let min_level = level_of_scaled(frustum.min_depth(&b) * draw_scale);
                if min_level == NOT_DRAWN {
                    continue;
                }
                out.push(Block { min_level, side, lo, hi });
            }
        }
    }
    out.sort_by_key(|b| (b.min_level, b.lo));
}

/// Calls `f(id, depth)` for every neuron of `block` inside the frustum.
#[inline]
fn visit_block(index: &SpatialIndex, frustum: &Frustum, block: &Block, mut f: impl FnMut(u32, f64, f32, u32)) {
    let dims = index.dims();
    for x in block.lo[0]..=block.hi[0] {
        for y in block.lo[1]..=block.hi[1] {
            for z in block.lo[2]..=block.hi[2] {
                let cell = (x * dims[1] + y) * dims[2] + z;
                let ids = index.cell_ids(cell);
                if ids.is_empty() {
                    continue;
                }
                let points = index.cell_points(cell);
                let leads = index.cell_leads(cell);
                let firsts = index.cell_firsts(cell);
                let side = match block.side {
                    Side::Inside => Side::Inside,
                    _ => frustum.classify(&index.cell_bounds(cell)),
                };
                match side {
                    Side::Outside => {}
                    Side::Inside => {
                        for (((&id, &p), &w), &c) in ids.iter().zip(points).zip(leads).zip(firsts) {
                            f(id, frustum.depth(p), w, c);
                        }
                    }
                    Side::Straddles => {
                        for (((&id, &p), &w), &c) in ids.iter().zip(points).zip(leads).zip(firsts) {
                            if frustum.contains(p) {
                                f(id, frustum.depth(p), w, c);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Calls `f(id, depth)` for every neuron inside the frustum.
pub(crate) fn visit_visible(index: &SpatialIndex, frustum: &Frustum, mut f: impl FnMut(u32, f64)) {
    let mut list = Vec::new();
    blocks(index, frustum, LEVELS as f64 / (2.0 * frustum.far()), &mut list);
    for b in &list {
        visit_block(index, frustum, b, |id, depth, _, _| f(id, depth));
    }
}

/// Reusable scratch for building draw lists; keep one per viewer.
#[derive(Debug, Default)]
pub struct DrawListBuilder {
    /// Per neuron: drawing level when at or below the neuron cap, else NOT_DRAWN.
    draw_level: Vec<u16>,
    marked: Vec<u32>,
    /// Every examined neuron.
    examined: Vec<Examined>,
    /// Indices into `examined`, grouped by draw level.
    by_level: Vec<u32>,
    level_start: Vec<u32>,
    blocks: Vec<Block>,
    neuron_hist: Vec<u64>,
    edge_hist: Vec<u64>,
    edges: Vec<(u32, u16)>,
    /// Per level: (source, next connection id) waiting for that weight level.
    pending: Vec<Vec<(u32, u32)>>,
    /// Level chosen by the previous build; bounds the next visit.
    last_level: Option<u16>,
}

impl DrawListBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn reset(&mut self, n: usize) {
        if self.draw_level.len() != n {
            self.draw_level.clear();
            self.draw_level.resize(n, NOT_DRAWN);
        } else {
            for &id in &self.marked {
                self.draw_level[id as usize] = NOT_DRAWN;
            }
        }
        self.marked.clear();
        self.examined.clear();
        self.neuron_hist.clear();
        self.neuron_hist.resize(LEVELS + 1, 0);
        self.edge_hist.clear();
        self.edge_hist.resize(LEVELS + 1, 0);
        self.edges.clear();
        self.pending.resize_with(LEVELS + 1, Vec::new);
        for p in &mut self.pending {
            p.clear();
        }
    }

    /// Picks the highest detail level whose estimated cost and primitive count
    /// both fit the budget.
    ///
    /// Blocks of cells are visited front to back until the neurons alone
    /// overflow the budget. Levels are then swept upward, adding each level's
    /// neurons and the connections that become eligible at it, until the
    /// budget overflows. Work therefore tracks the size of the output rather
    /// than of the dataset. Deterministic; an invalid camera or a budget that
    /// fits nothing yields an empty list.
    ///
    /// The previous build's level bounds the visit; if the answer could lie
    /// above the bound the build is redone unbounded, so the result never
    /// depends on earlier calls.
    pub fn build(
        &mut self,
        dataset: &NetworkDataset,
        index: &SpatialIndex,
        camera: &CameraState,
        placement: &Placement,
        budget: &FrameBudget,
    ) -> DrawList {
        let Ok(frustum) = Frustum::new(camera, placement) else {
            return DrawList::default();
        };
        blocks(index, &frustum, LEVELS as f64 / (2.0 * frustum.far()), &mut self.blocks);
        let hinted = self.last_level.map(|k| k as usize + k as usize / 4 + 8).filter(|&b| b < LEVELS);
        let list = hinted
            .and_then(|bound| self.build_within(dataset, index, &frustum, budget, bound))
            .unwrap_or_else(|| {
                self.build_within(dataset, index, &frustum, budget, LEVELS)
                    .expect("unbounded build always completes")
            });
        self.last_level = list.level;
        list
    }

    /// Build considering only levels up to `bound`; `None` when the budget
    /// still fits at `bound`, so the true answer may be higher.
    fn build_within(
        &mut self,
        dataset: &NetworkDataset,
        index: &SpatialIndex,
        frustum: &Frustum,
        budget: &FrameBudget,
        bound: usize,
    ) -> Option<DrawList> {
        self.reset(dataset.neuron_count());
        // Levels per unit of depth for drawing and for tier 0.
        let draw_scale = LEVELS as f64 / (2.0 * frustum.far());
        let tier0_scale = LEVELS as f64 / frustum.far();
        let target = budget.target_frame_ns as f64;
        let fits = |points: u64, lines: u64| {
            points + lines <= budget.primitive_budget && budget.estimate_ns(points, lines) <= target
        };

        // Every neuron at level <= L lives in a block whose min level is <= L,
        // so once those blocks are visited the count through L is final.
        let mut next_block = 0;
        let mut total = 0u64;
        let mut neuron_cap = None;
        for level in 0..=bound {
            while next_block < self.blocks.len() && self.blocks[next_block].min_level as usize <= level {
                let (examined, hist) = (&mut self.examined, &mut self.neuron_hist);
                visit_block(index, frustum, &self.blocks[next_block], |id, depth, lead, first| {
                    let k = level_of_scaled(depth * draw_scale);
                    if k != NOT_DRAWN {
                        hist[k as usize] += 1;
                        examined.push(Examined {
                            id,
                            level: k,
                            tier0_level: level_of_scaled(depth * tier0_scale),
                            lead,
                            first,
                        });
                    }
                });
                next_block += 1;
            }
            total += self.neuron_hist[level];
            if !fits(total, 0) {
                break;
            }
            neuron_cap = Some(level);
        }
        let Some(neuron_cap) = neuron_cap else {
            return Some(DrawList::default());
        };

        // Group examined neurons by level, stable.
        self.level_start.clear();
        self.level_start.resize(neuron_cap + 2, 0);
        for &Examined { id, level: k, .. } in &self.examined {
            if k as usize <= neuron_cap {
                self.draw_level[id as usize] = k;
                self.marked.push(id);
                self.level_start[k as usize + 1] += 1;
            }
        }
        for k in 0..=neuron_cap {
            self.level_start[k + 1] += self.level_start[k];
        }
        self.by_level.clear();
        self.by_level.resize(self.level_start[neuron_cap + 1] as usize, 0);
        {
            let mut cursor = self.level_start[..=neuron_cap].to_vec();
            for (i, &Examined { level: k, .. }) in self.examined.iter().enumerate() {
                if k as usize <= neuron_cap {
                    self.by_level[cursor[k as usize] as usize] = i as u32;
                    cursor[k as usize] += 1;
                }
            }
        }

        let weights = dataset.connection_weight();
        let posts = dataset.connection_post();
        let w_scale = LEVELS as f64 / dataset.max_abs_weight() as f64;
        let adjacency = dataset.adjacency();
        let level_of_weight = |w: f32| level_of_scaled(LEVELS as f64 - w.abs() as f64 * w_scale);

        let mut points = 0u64;
        let mut lines = 0u64;
        let mut chosen = None;
        for level in 0..=neuron_cap {
            let lv = level as u16;
            // Connections become eligible once their source is drawn and
            // their weight level is reached; the sweep scans each source's
            // list (descending |w|) up to the current level and parks the rest.
            let scan = |src: u32, from: u32, edges: &mut Vec<(u32, u16)>, hist: &mut Vec<u64>, pending: &mut Vec<Vec<(u32, u32)>>| {
                let end = adjacency.outgoing(src).end;
                let mut c = from;
                while c < end {
                    let kw = level_of_weight(weights[c as usize]);
                    if kw > lv {
                        if (kw as usize) <= neuron_cap {
                            pending[kw as usize].push((src, c));
                        }
                        return;
                    }
                    let kp = self.draw_level[posts[c as usize] as usize];
                    if kp as usize <= neuron_cap {
                        let k = kp.max(lv);
                        hist[k as usize] += 1;
                        edges.push((c, k));
                    }
                    c += 1;
                }
            };
            if w_scale.is_finite() {
                let (lo, hi) = (self.level_start[level] as usize, self.level_start[level + 1] as usize);
                let group = &self.by_level[lo..hi];
                for &i in group {
                    let Examined { id: src, lead, first, .. } = self.examined[i as usize];
                    if lead == 0.0 {
                        continue;
                    }
                    // Park without touching the connection list when even
                    // the strongest connection is not yet eligible.
                    let kw = level_of_weight(lead);
                    if kw > lv {
                        if (kw as usize) <= neuron_cap {
                            self.pending[kw as usize].push((src, first));
                        }
                        continue;
                    }
                    scan(src, first, &mut self.edges, &mut self.edge_hist, &mut self.pending);
                }
                let waiting = std::mem::take(&mut self.pending[level]);
                for &(src, c) in &waiting {
                    scan(src, c, &mut self.edges, &mut self.edge_hist, &mut self.pending);
                }
                self.pending[level] = waiting;
            }
            points += self.neuron_hist[level];
            lines += self.edge_hist[level];
            if !fits(points, lines) {
                break;
            }
            chosen = Some((level, points, lines));
        }
        let Some((level, points, lines)) = chosen else {
            return Some(DrawList::default());
        };
        if level == bound && bound < LEVELS {
            return None;
        }

        let mut out = DrawList {
            neurons: Vec::with_capacity(points as usize),
            tiers: Vec::with_capacity(points as usize),
            connections: Vec::with_capacity(lines as usize),
            estimated_cost_ns: budget.estimate_ns(points, lines),
            level: Some(level as u16),
        };
        for &Examined {
            id,
            level: k,
            tier0_level: k0,
            ..
        } in &self.examined
        {
            if k as usize <= level {
                out.neurons.push(id);
                out.tiers.push(if k0 as usize <= level { 0 } else { 1 });
            }
        }
        out.connections
            .extend(self.edges.iter().filter(|e| e.1 as usize <= level).map(|e| e.0));
        Some(out)
    }
}

/// One-shot convenience over [`DrawListBuilder`].
pub fn build_draw_list(
    dataset: &NetworkDataset,
    index: &SpatialIndex,
    camera: &CameraState,
    placement: &Placement,
    budget: &FrameBudget,
) -> DrawList {
    DrawListBuilder::new().build(dataset, index, camera, placement, budget)
}
