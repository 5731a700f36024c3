//! Uniform bucket grid over the domain box, used by fronts for nearest-
//! vertex queries and for narrowing intersection candidates.
//!
//! Entries are front node ids. Positions never move once inserted, so the
//! grid only sees insert/remove traffic.

use alloc::vec;
use alloc::vec::Vec;

use crate::geom::{Aabb, Point2};

#[derive(Clone, Debug)]
pub(crate) struct UniformGrid {
    origin: Point2,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

impl UniformGrid {
    /// Grid covering `bounds` with cells of roughly `cell` size.
    pub fn new(bounds: Aabb, cell: f64) -> Self {
        let cell = cell.max(1e-12);
        let w = (bounds.max.x - bounds.min.x).max(cell);
        let h = (bounds.max.y - bounds.min.y).max(cell);
        let nx = ((w / cell).ceil() as usize).clamp(1, 512);
        let ny = ((h / cell).ceil() as usize).clamp(1, 512);
        Self {
            origin: bounds.min,
            cell: (w / nx as f64).max(h / ny as f64).max(cell),
            nx,
            ny,
            buckets: vec![Vec::new(); nx * ny],
        }
    }

    #[inline]
    fn cell_of(&self, p: Point2) -> (usize, usize) {
        let ix = (((p.x - self.origin.x) / self.cell) as isize).clamp(0, self.nx as isize - 1);
        let iy = (((p.y - self.origin.y) / self.cell) as isize).clamp(0, self.ny as isize - 1);
        (ix as usize, iy as usize)
    }

    pub fn insert(&mut self, id: u32, p: Point2) {
        let (ix, iy) = self.cell_of(p);
        self.buckets[iy * self.nx + ix].push(id);
    }

    pub fn remove(&mut self, id: u32, p: Point2) {
        let (ix, iy) = self.cell_of(p);
        let bucket = &mut self.buckets[iy * self.nx + ix];
        if let Some(at) = bucket.iter().position(|&v| v == id) {
            bucket.swap_remove(at);
        }
    }

    /// Visit ids in cells intersecting `bb`.
    pub fn for_each_in_box<F: FnMut(u32)>(&self, bb: Aabb, mut f: F) {
        let (x0, y0) = self.cell_of(bb.min);
        let (x1, y1) = self.cell_of(bb.max);
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                for &id in &self.buckets[iy * self.nx + ix] {
                    f(id);
                }
            }
        }
    }

    /// The `count` nearest entries to `p` (by the caller-supplied position
    /// lookup), skipping ids rejected by `skip`. Expands ring by ring until
    /// the found set provably cannot improve.
    pub fn nearest<P, S>(&self, p: Point2, count: usize, pos: P, skip: S) -> Vec<u32>
    where
        P: Fn(u32) -> Point2,
        S: Fn(u32) -> bool,
    {
        let mut best: Vec<(f64, u32)> = Vec::new();
        let (cx, cy) = self.cell_of(p);
        let max_ring = self.nx.max(self.ny);
        for ring in 0..=max_ring {
            // Cells at Chebyshev distance `ring` from the centre cell.
            let xr = cx as isize;
            let yr = cy as isize;
            let r = ring as isize;
            for iy in (yr - r).max(0)..=(yr + r).min(self.ny as isize - 1) {
                for ix in (xr - r).max(0)..=(xr + r).min(self.nx as isize - 1) {
                    if (iy - yr).abs().max((ix - xr).abs()) != r {
                        continue;
                    }
                    for &id in &self.buckets[iy as usize * self.nx + ix as usize] {
                        if skip(id) {
                            continue;
                        }
                        let d = p.dist2(pos(id));
                        let at = best
                            .iter()
                            .position(|&(bd, _)| d < bd)
                            .unwrap_or(best.len());
                        best.insert(at, (d, id));
                        best.truncate(count);
                    }
                }
            }
            if best.len() >= count {
                // Anything beyond this ring is at least `ring * cell` away.
                let safe = (ring as f64) * self.cell;
                if best[count - 1].0 <= safe * safe {
                    break;
                }
            }
        }
        best.truncate(count);
        best.into_iter().map(|(_, id)| id).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    #[test]
    fn nearest_matches_brute_force() {
        let bb = Aabb {
            min: p(0.0, 0.0),
            max: p(1.0, 1.0),
        };
        let mut g = UniformGrid::new(bb, 0.1);
        // Deterministic pseudo-random scatter.
        let mut pts = Vec::new();
        let mut x = 0.123f64;
        for i in 0..200u32 {
            x = (x * 9301.0 + 49297.0) % 1.0;
            let y = ((x * 233.0) + i as f64 * 0.017) % 1.0;
            let q = p(x.abs(), y.abs());
            pts.push(q);
            g.insert(i, q);
        }
        let query = p(0.42, 0.58);
        let got = g.nearest(query, 3, |id| pts[id as usize], |_| false);
        let mut brute: Vec<(f64, u32)> = (0..200u32)
            .map(|i| (query.dist2(pts[i as usize]), i))
            .collect();
        brute.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let want: Vec<u32> = brute[..3].iter().map(|&(_, i)| i).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn remove_then_query() {
        let bb = Aabb {
            min: p(0.0, 0.0),
            max: p(1.0, 1.0),
        };
        let mut g = UniformGrid::new(bb, 0.25);
        g.insert(1, p(0.1, 0.1));
        g.insert(2, p(0.9, 0.9));
        g.remove(1, p(0.1, 0.1));
        let got = g.nearest(p(0.0, 0.0), 1, |id| if id == 1 { p(0.1, 0.1) } else { p(0.9, 0.9) }, |_| false);
        assert_eq!(got, alloc::vec![2]);
    }
}
