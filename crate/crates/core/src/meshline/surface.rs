use super::mesh::{dot, sub};

/// Distance queries against a fixed triangle soup, bucketed on a uniform
/// grid.
#[derive(Debug, Clone)]
pub struct SurfaceDistance {
    positions: Vec<[f64; 3]>,
    triangles: Vec<[u32; 3]>,
    origin: [f64; 3],
    cell: f64,
    dims: [usize; 3],
    cell_start: Vec<u32>,
    items: Vec<u32>,
}

impl SurfaceDistance {
    pub fn new(positions: &[[f64; 3]], triangles: &[[u32; 3]]) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for t in triangles {
            for &i in t {
                let p = positions[i as usize];
                for k in 0..3 {
                    lo[k] = lo[k].min(p[k]);
                    hi[k] = hi[k].max(p[k]);
                }
            }
        }
        if triangles.is_empty() {
            lo = [0.0; 3];
            hi = [0.0; 3];
        }
        let side = (0..3).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
        let per_axis = ((triangles.len() as f64 / 2.0).cbrt()).clamp(1.0, 256.0);
        let cell = if side > 0.0 { side / per_axis } else { 1.0 };
        let dims = [0, 1, 2].map(|k| (((hi[k] - lo[k]) / cell).floor() as usize + 1).max(1));
        let mut grid = Self {
            positions: positions.to_vec(),
            triangles: triangles.to_vec(),
            origin: lo,
            cell,
            dims,
            cell_start: Vec::new(),
            items: Vec::new(),
        };
        let cells = dims.iter().product::<usize>();
        let mut counts = vec![0u32; cells + 1];
        grid.for_each_cell_of_all(|cell, _| counts[cell + 1] += 1);
        for c in 0..cells {
            counts[c + 1] += counts[c];
        }
        let mut fill = counts[..cells].to_vec();
        let mut items = vec![0u32; counts[cells] as usize];
        grid.for_each_cell_of_all(|cell, t| {
            items[fill[cell] as usize] = t;
            fill[cell] += 1;
        });
        grid.cell_start = counts;
        grid.items = items;
        grid
    }

    fn coord(&self, x: f64, k: usize) -> usize {
        (((x - self.origin[k]) / self.cell).floor().max(0.0) as usize).min(self.dims[k] - 1)
    }

    fn for_each_cell_of_all(&self, mut f: impl FnMut(usize, u32)) {
        for (t, tri) in self.triangles.iter().enumerate() {
            let p = tri.map(|i| self.positions[i as usize]);
            let lo: [usize; 3] = [0, 1, 2].map(|k| self.coord(p[0][k].min(p[1][k]).min(p[2][k]), k));
            let hi: [usize; 3] = [0, 1, 2].map(|k| self.coord(p[0][k].max(p[1][k]).max(p[2][k]), k));
            for x in lo[0]..=hi[0] {
                for y in lo[1]..=hi[1] {
                    for z in lo[2]..=hi[2] {
                        f((x * self.dims[1] + y) * self.dims[2] + z, t as u32);
                    }
                }
            }
        }
    }

    /// Distance from `p` to the closest point on any triangle; infinite when
    /// there are none.
    pub fn distance(&self, p: [f64; 3]) -> f64 {
        if self.triangles.is_empty() {
            return f64::INFINITY;
        }
        let c = [0, 1, 2].map(|k| self.coord(p[k], k) as i64);
        let max_ring = *self.dims.iter().max().expect("3 dims") as i64;
        let mut best2 = f64::INFINITY;
        for r in 0..=max_ring {
            for x in c[0] - r..=c[0] + r {
                for y in c[1] - r..=c[1] + r {
                    for z in c[2] - r..=c[2] + r {
                        let on_shell = (x - c[0]).abs() == r || (y - c[1]).abs() == r || (z - c[2]).abs() == r;
                        if !on_shell || x < 0 || y < 0 || z < 0 {
                            continue;
                        }
                        let (x, y, z) = (x as usize, y as usize, z as usize);
                        if x >= self.dims[0] || y >= self.dims[1] || z >= self.dims[2] {
                            continue;
                        }
                        let cell = (x * self.dims[1] + y) * self.dims[2] + z;
                        for &t in &self.items[self.cell_start[cell] as usize..self.cell_start[cell + 1] as usize] {
                            let tri = self.triangles[t as usize].map(|i| self.positions[i as usize]);
                            best2 = best2.min(point_triangle_dist2(p, tri));
                        }
                    }
                }
            }
            // Cells beyond ring r are at least r cells from the query cell.
            let reach = r as f64 * self.cell;
            if best2 <= reach * reach {
                break;
            }
        }
        best2.sqrt()
    }
}

/// Squared distance from `p` to triangle `[a, b, c]` (closest-point by
/// Voronoi region).
pub(crate) fn point_triangle_dist2(p: [f64; 3], [a, b, c]: [[f64; 3]; 3]) -> f64 {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    let closest = if d1 <= 0.0 && d2 <= 0.0 {
        a
    } else {
        let bp = sub(p, b);
        let d3 = dot(ab, bp);
        let d4 = dot(ac, bp);
        let cp = sub(p, c);
        let d5 = dot(ab, cp);
        let d6 = dot(ac, cp);
        let vc = d1 * d4 - d3 * d2;
        let vb = d5 * d2 - d1 * d6;
        let va = d3 * d6 - d5 * d4;
        let lerp = |u: [f64; 3], w: [f64; 3], t: f64| [u[0] + w[0] * t, u[1] + w[1] * t, u[2] + w[2] * t];
        if d3 >= 0.0 && d4 <= d3 {
            b
        } else if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
            lerp(a, ab, d1 / (d1 - d3))
        } else if d6 >= 0.0 && d5 <= d6 {
            c
        } else if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
            lerp(a, ac, d2 / (d2 - d6))
        } else if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
            lerp(b, sub(c, b), (d4 - d3) / ((d4 - d3) + (d5 - d6)))
        } else {
            let denom = 1.0 / (va + vb + vc);
            let (v, w) = (vb * denom, vc * denom);
            [a[0] + ab[0] * v + ac[0] * w, a[1] + ab[1] * v + ac[1] * w, a[2] + ab[2] * v + ac[2] * w]
        }
    };
    let d = sub(p, closest);
    dot(d, d)
}
