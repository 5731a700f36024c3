//! Boundary seeding: convert raw polyline loops into evenly-parity seed
//! loops whose spacing follows the local curvature, and make seeds on shared
//! curves agree exactly between the two boundaries that share them.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::geom::{
    circumradius, inner_angle, polygon_area, segment_intersect, Aabb, Orientation, Point2,
};

/// Sharp-corner threshold: deviation from straight larger than this keeps an
/// input vertex as a seed.
const CORNER_DEVIATION_DEG: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeedError {
    /// Fewer than 3 distinct vertices, or the loop crosses itself.
    InvalidBoundary,
    /// Shared-curve tags do not line up geometrically.
    ConformalMismatch,
}

impl fmt::Display for SeedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeedError::InvalidBoundary => write!(f, "invalid boundary loop"),
            SeedError::ConformalMismatch => write!(f, "shared curves do not match"),
        }
    }
}

impl core::error::Error for SeedError {}

/// A run of input vertices that must coincide with the same curve on another
/// boundary. The range walks forward from `start` to `end` (wrapping).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SharedTag {
    pub curve_id: u32,
    pub start: usize,
    pub end: usize,
}

/// One closed polyline loop of the input (first vertex not repeated).
#[derive(Clone, Debug, Default)]
pub struct InputLoop {
    pub points: Vec<Point2>,
    pub tags: Vec<SharedTag>,
}

/// A component boundary: one or more closed loops (outer counter-clockwise,
/// holes clockwise).
#[derive(Clone, Debug, Default)]
pub struct Boundary {
    pub loops: Vec<InputLoop>,
}

impl Boundary {
    pub fn single(points: Vec<Point2>) -> Self {
        Boundary {
            loops: vec![InputLoop {
                points,
                tags: Vec::new(),
            }],
        }
    }
}

/// Per-vertex size data for one loop.
#[derive(Clone, Debug, PartialEq)]
pub struct SizeField {
    /// Clamped circumradius through each vertex and its neighbours.
    pub rho: Vec<f64>,
    /// Length of the edge leaving each vertex.
    pub l: Vec<f64>,
    /// Size coefficient; `s = k * rho`.
    pub k: Vec<f64>,
    /// Target seed spacing at each vertex.
    pub s: Vec<f64>,
    pub l_tot: f64,
    pub s_a: f64,
}

fn loop_eps(pts: &[Point2]) -> f64 {
    Aabb::of_points(pts.iter())
        .map(|bb| bb.diagonal())
        .unwrap_or(1.0)
        * 1e-9
}

fn validate_loop(pts: &[Point2]) -> Result<(), SeedError> {
    if pts.len() < 3 {
        return Err(SeedError::InvalidBoundary);
    }
    let n = pts.len();
    for i in 0..n {
        if pts[i] == pts[(i + 1) % n] {
            return Err(SeedError::InvalidBoundary);
        }
    }
    let eps = loop_eps(pts);
    for i in 0..n {
        let (a1, a2) = (pts[i], pts[(i + 1) % n]);
        for j in (i + 1)..n {
            let (b1, b2) = (pts[j], pts[(j + 1) % n]);
            if segment_intersect(a1, a2, b1, b2, eps) {
                return Err(SeedError::InvalidBoundary);
            }
        }
    }
    Ok(())
}

/// Curvature estimate and target spacing for every vertex of `loop_pts`.
///
/// The coefficient is normalized so the expected seed count comes out to
/// `l_tot / s_a`: a loop with uniform curvature and spacing seeds at exactly
/// `s_a`.
pub fn build_size_field(loop_pts: &[Point2], s_a: f64) -> Result<SizeField, SeedError> {
    validate_loop(loop_pts)?;
    let n = loop_pts.len();
    let diag = Aabb::of_points(loop_pts.iter()).unwrap().diagonal();
    let (rho_min, rho_max) = (1e-3 * diag / 2.0, 1e3 * diag / 2.0);

    let mut rho = Vec::with_capacity(n);
    let mut l = Vec::with_capacity(n);
    for i in 0..n {
        let prev = loop_pts[(i + n - 1) % n];
        let cur = loop_pts[i];
        let next = loop_pts[(i + 1) % n];
        let r = circumradius(prev, cur, next, rho_max)
            .map_err(|_| SeedError::InvalidBoundary)?
            .max(rho_min);
        rho.push(r);
        l.push(cur.dist(next));
    }
    let l_tot: f64 = l.iter().sum();
    let weight: f64 = l.iter().zip(rho.iter()).map(|(&li, &ri)| li / ri).sum();
    let k_val = s_a * weight / l_tot;
    let k = vec![k_val; n];
    let s: Vec<f64> = rho.iter().map(|&r| k_val * r).collect();
    Ok(SizeField {
        rho,
        l,
        k,
        s,
        l_tot,
        s_a,
    })
}

/// One breakpoint-delimited stretch of a loop, with its seeds.
#[derive(Clone, Debug)]
struct Run {
    /// Input polyline nodes from start breakpoint to end breakpoint inclusive.
    path: Vec<Point2>,
    /// Target spacing at each path node.
    s_nodes: Vec<f64>,
    mean_rho: f64,
    shared: Option<u32>,
    /// Number of seed intervals along the run.
    n: usize,
    /// Seeds: the start breakpoint plus `n - 1` interior points.
    seeds: Vec<Point2>,
}

impl Run {
    fn integral(&self) -> f64 {
        let mut acc = 0.0;
        for w in 0..self.path.len() - 1 {
            let len = self.path[w].dist(self.path[w + 1]);
            let inv = 0.5 * (1.0 / self.s_nodes[w] + 1.0 / self.s_nodes[w + 1]);
            acc += len * inv;
        }
        acc
    }

    fn march(&mut self) {
        let total = self.integral();
        let n = self.n.max(1);
        let mut seeds = Vec::with_capacity(n);
        seeds.push(self.path[0]);
        let mut edge = 0usize;
        let mut acc = 0.0;
        let mut edge_w = edge_weight(&self.path, &self.s_nodes, 0);
        for j in 1..n {
            let target = total * j as f64 / n as f64;
            while acc + edge_w < target && edge + 2 < self.path.len() {
                acc += edge_w;
                edge += 1;
                edge_w = edge_weight(&self.path, &self.s_nodes, edge);
            }
            let t = if edge_w > 0.0 {
                ((target - acc) / edge_w).clamp(0.0, 1.0)
            } else {
                0.0
            };
            seeds.push(self.path[edge].lerp(self.path[edge + 1], t));
        }
        self.seeds = seeds;
    }
}

fn edge_weight(path: &[Point2], s_nodes: &[f64], e: usize) -> f64 {
    let len = path[e].dist(path[e + 1]);
    len * 0.5 * (1.0 / s_nodes[e] + 1.0 / s_nodes[e + 1])
}

/// Interval count whose realized spacing stays closest to the target.
fn pick_interval_count(integral: f64) -> usize {
    let lo = integral.floor().max(1.0) as usize;
    let hi = integral.ceil().max(1.0) as usize;
    if lo == hi {
        return lo;
    }
    let dev = |n: usize| (integral / n as f64 - 1.0).abs();
    if dev(lo) <= dev(hi) {
        lo
    } else {
        hi
    }
}

/// A seeded loop plus the bookkeeping needed to re-seed shared stretches.
#[derive(Clone, Debug)]
pub struct SeededLoop {
    runs: Vec<Run>,
}

impl SeededLoop {
    /// Seed positions in traversal order.
    pub fn points(&self) -> Vec<Point2> {
        let mut out = Vec::new();
        for r in &self.runs {
            out.extend_from_slice(&r.seeds);
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.runs.iter().map(|r| r.seeds.len()).sum()
    }

    fn fix_parity(&mut self, want_min: usize) -> Result<(), SeedError> {
        loop {
            let count = self.edge_count();
            if count >= want_min && count % 2 == 0 {
                return Ok(());
            }
            // Grow the flattest stretch; shared runs are pinned.
            let candidate = self
                .runs
                .iter_mut()
                .filter(|r| r.shared.is_none())
                .max_by(|a, b| a.mean_rho.partial_cmp(&b.mean_rho).unwrap());
            match candidate {
                Some(run) => {
                    run.n += 1;
                    run.march();
                }
                None => return Err(SeedError::InvalidBoundary),
            }
        }
    }
}

fn is_corner(pts: &[Point2], i: usize) -> bool {
    let n = pts.len();
    let prev = pts[(i + n - 1) % n];
    let next = pts[(i + 1) % n];
    match inner_angle(prev, pts[i], next, Orientation::Ccw) {
        Ok(a) => (a - 180.0).abs() > CORNER_DEVIATION_DEG,
        Err(_) => true,
    }
}

fn tag_members(n: usize, tag: &SharedTag) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = tag.start % n;
    loop {
        out.push(i);
        if i == tag.end % n {
            break;
        }
        i = (i + 1) % n;
        if out.len() > n {
            break;
        }
    }
    out
}

/// Arc-length marching over one loop: sharp corners and shared-curve
/// endpoints stay as seeds, spacing follows the size field, and the total
/// seed count is adjusted to be even.
pub fn resample(input: &InputLoop, field: &SizeField) -> Result<SeededLoop, SeedError> {
    let pts = &input.points;
    let n = pts.len();
    if n < 3 || field.s.len() != n {
        return Err(SeedError::InvalidBoundary);
    }

    let mut breakpoints: Vec<usize> = (0..n).filter(|&i| is_corner(pts, i)).collect();
    for tag in &input.tags {
        for idx in [tag.start % n, tag.end % n] {
            if !breakpoints.contains(&idx) {
                breakpoints.push(idx);
            }
        }
    }
    breakpoints.sort_unstable();
    if breakpoints.is_empty() {
        breakpoints.push(0);
    }

    let shared_at = |i: usize| -> Option<u32> {
        for tag in &input.tags {
            let members = tag_members(n, tag);
            if members.len() >= 2 {
                // Edges i -> i+1 entirely inside the tag range.
                for w in members.windows(2) {
                    if w[0] == i {
                        return Some(tag.curve_id);
                    }
                }
            }
        }
        None
    };

    let m = breakpoints.len();
    let mut runs = Vec::with_capacity(m);
    for r in 0..m {
        let a = breakpoints[r];
        let b = breakpoints[(r + 1) % m];
        let mut path = Vec::new();
        let mut s_nodes = Vec::new();
        let mut rho_acc = 0.0;
        let mut idx = a;
        let mut shared = shared_at(a);
        loop {
            path.push(pts[idx]);
            s_nodes.push(field.s[idx]);
            rho_acc += field.rho[idx];
            if idx == b && path.len() > 1 {
                break;
            }
            if path.len() > 1 && shared != shared_at(idx) {
                shared = None;
            }
            idx = (idx + 1) % n;
            if path.len() > n + 1 {
                return Err(SeedError::InvalidBoundary);
            }
        }
        let mut run = Run {
            mean_rho: rho_acc / path.len() as f64,
            shared,
            path,
            s_nodes,
            n: 0,
            seeds: Vec::new(),
        };
        run.n = pick_interval_count(run.integral());
        run.march();
        runs.push(run);
    }

    let mut seeded = SeededLoop { runs };
    seeded.fix_parity(4)?;
    Ok(seeded)
}

/// A fully seeded boundary, ready for meshing or conformal harmonization.
#[derive(Clone, Debug)]
pub struct SeededBoundary {
    pub source: Boundary,
    pub fields: Vec<SizeField>,
    pub loops: Vec<SeededLoop>,
}

impl SeededBoundary {
    pub fn seed(source: Boundary, s_a: f64) -> Result<Self, SeedError> {
        let mut fields = Vec::with_capacity(source.loops.len());
        let mut loops = Vec::with_capacity(source.loops.len());
        for lp in &source.loops {
            let field = build_size_field(&lp.points, s_a)?;
            loops.push(resample(lp, &field)?);
            fields.push(field);
        }
        Ok(SeededBoundary {
            source,
            fields,
            loops,
        })
    }

    /// Seed loops as plain point lists.
    pub fn loop_points(&self) -> Vec<Vec<Point2>> {
        self.loops.iter().map(|l| l.points()).collect()
    }

    fn find_curve(&self, curve_id: u32) -> Option<(usize, SharedTag)> {
        for (li, lp) in self.source.loops.iter().enumerate() {
            for tag in &lp.tags {
                if tag.curve_id == curve_id {
                    return Some((li, *tag));
                }
            }
        }
        None
    }
}

/// The polyline of a tagged range, walking forward.
fn tag_path(lp: &InputLoop, tag: &SharedTag) -> Vec<Point2> {
    tag_members(lp.points.len(), tag)
        .into_iter()
        .map(|i| lp.points[i])
        .collect()
}

fn paths_equal(a: &[Point2], b: &[Point2], eps: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b.iter()).all(|(p, q)| p.dist(*q) <= eps)
}

/// Re-seed the curve `curve_id`, shared between `b1` and `b2`, using the
/// averaged size coefficient of the two sides. Afterwards the shared seeds
/// are the same points on both boundaries, bit for bit.
pub fn harmonize_conformal(
    b1: &SeededBoundary,
    b2: &SeededBoundary,
    curve_id: u32,
) -> Result<(SeededBoundary, SeededBoundary), SeedError> {
    let (l1, tag1) = b1.find_curve(curve_id).ok_or(SeedError::ConformalMismatch)?;
    let (l2, tag2) = b2.find_curve(curve_id).ok_or(SeedError::ConformalMismatch)?;

    let path1 = tag_path(&b1.source.loops[l1], &tag1);
    let path2 = tag_path(&b2.source.loops[l2], &tag2);
    if path1.len() < 2 || path2.len() < 2 {
        return Err(SeedError::ConformalMismatch);
    }
    let eps = loop_eps(&b1.source.loops[l1].points);
    let mut rev2 = path2.clone();
    rev2.reverse();
    let reversed = if paths_equal(&path1, &path2, eps) {
        false
    } else if paths_equal(&path1, &rev2, eps) {
        true
    } else {
        return Err(SeedError::ConformalMismatch);
    };

    // Canonical direction: lexicographically smaller endpoint first, so the
    // shared marching is computed once, independent of either loop.
    let first = path1[0];
    let last = *path1.last().unwrap();
    let canonical_forward = (first.x, first.y) <= (last.x, last.y);
    let mut canon = path1.clone();
    if !canonical_forward {
        canon.reverse();
    }

    let k1 = b1.fields[l1].k[0];
    let k2 = b2.fields[l2].k[0];
    let k_avg = 0.5 * (k1 + k2);

    // Curvature along the open shared path; endpoints copy their neighbour.
    // Clamps use the host loop's scale so shared and non-shared stretches of
    // a straight edge see the same flat-segment radius.
    let diag = Aabb::of_points(b1.source.loops[l1].points.iter())
        .map(|b| b.diagonal())
        .unwrap();
    let rho_max = 1e3 * diag.max(1e-300) / 2.0;
    let rho_min = 1e-3 * diag / 2.0;
    let m = canon.len();
    let mut rho_c = vec![rho_max; m];
    for i in 1..m - 1 {
        rho_c[i] = circumradius(canon[i - 1], canon[i], canon[i + 1], rho_max)
            .map_err(|_| SeedError::ConformalMismatch)?
            .max(rho_min);
    }
    if m > 2 {
        rho_c[0] = rho_c[1];
        rho_c[m - 1] = rho_c[m - 2];
    }
    let s_c: Vec<f64> = rho_c.iter().map(|&r| k_avg * r).collect();

    // March each corner-delimited stretch of the canonical path. Every
    // segment's seeds exclude the segment end; the curve endpoint closes it.
    let mut cuts = vec![0usize];
    for i in 1..m - 1 {
        let a = inner_angle(canon[i - 1], canon[i], canon[i + 1], Orientation::Ccw)
            .map_err(|_| SeedError::ConformalMismatch)?;
        if (a - 180.0).abs() > CORNER_DEVIATION_DEG {
            cuts.push(i);
        }
    }
    cuts.push(m - 1);
    let mut segs: Vec<Vec<Point2>> = Vec::new();
    for w in cuts.windows(2) {
        let mut run = Run {
            path: canon[w[0]..=w[1]].to_vec(),
            s_nodes: s_c[w[0]..=w[1]].to_vec(),
            mean_rho: 0.0,
            shared: Some(curve_id),
            n: 0,
            seeds: Vec::new(),
        };
        run.n = pick_interval_count(run.integral());
        run.march();
        segs.push(run.seeds);
    }
    let endpoint = *canon.last().unwrap();

    let out1 = apply_shared_seeds(b1, l1, curve_id, &segs, endpoint, !canonical_forward)?;
    let out2 = apply_shared_seeds(
        b2,
        l2,
        curve_id,
        &segs,
        endpoint,
        reversed == canonical_forward,
    )?;
    Ok((out1, out2))
}

/// Overwrite the seeds of every run on `curve_id` with the canonical ones.
///
/// The runs tagged with the curve appear consecutively in traversal order and
/// correspond one-to-one with the canonical corner segments (in reverse when
/// the traversal opposes the canonical direction).
fn apply_shared_seeds(
    b: &SeededBoundary,
    loop_idx: usize,
    curve_id: u32,
    segs: &[Vec<Point2>],
    endpoint: Point2,
    reversed: bool,
) -> Result<SeededBoundary, SeedError> {
    let mut out = b.clone();
    let mut full: Vec<Point2> = segs.iter().flatten().copied().collect();
    full.push(endpoint);
    if reversed {
        full.reverse();
    }

    let seeded = &mut out.loops[loop_idx];
    let shared_runs: Vec<usize> = (0..seeded.runs.len())
        .filter(|&i| seeded.runs[i].shared == Some(curve_id))
        .collect();
    if shared_runs.len() != segs.len() {
        return Err(SeedError::ConformalMismatch);
    }
    let mut cursor = 0usize;
    for (slot, &ri) in shared_runs.iter().enumerate() {
        let seg_idx = if reversed {
            segs.len() - 1 - slot
        } else {
            slot
        };
        let n = segs[seg_idx].len();
        let run = &mut seeded.runs[ri];
        run.seeds = full[cursor..cursor + n].to_vec();
        run.n = n;
        cursor += n;
    }
    seeded.fix_parity(4)?;
    Ok(out)
}

/// Convenience: loop orientation by signed area.
pub fn loop_is_ccw(pts: &[Point2]) -> bool {
    polygon_area(pts) > 0.0
}
