//! Element- and mesh-level quality evaluation: squareness, the extraordinary
//! vertex penalty, the combined episode reward, and the summary report.

use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::geom::{polygon_signed_area2, Point2};
use crate::mesh::{is_extraordinary, QuadMesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardError {
    /// A quad edge has zero length.
    DegenerateQuad,
}

impl fmt::Display for RewardError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RewardError::DegenerateQuad => write!(f, "degenerate quad: zero-length edge"),
        }
    }
}

impl core::error::Error for RewardError {}

/// Interior angles of a simple quad in degrees, reflex corners included.
///
/// Computed from signed exterior turns so a non-convex corner reads as the
/// true interior angle (> 180). Works for either winding.
pub fn quad_angles(corners: &[Point2; 4]) -> [f64; 4] {
    let mut pts = *corners;
    let flipped = polygon_signed_area2(&pts) < 0.0;
    if flipped {
        pts.swap(1, 3);
    }
    let mut out = [0.0f64; 4];
    for i in 0..4 {
        let prev = pts[(i + 3) % 4];
        let cur = pts[i];
        let next = pts[(i + 1) % 4];
        let vin = cur.sub(prev);
        let vout = next.sub(cur);
        let turn = vin.cross(vout).atan2(vin.dot(vout));
        out[i] = 180.0 - turn.to_degrees();
    }
    if flipped {
        out.swap(1, 3);
    }
    out
}

/// Edge lengths (corner i to corner i+1).
pub fn quad_edge_lengths(corners: &[Point2; 4]) -> [f64; 4] {
    let mut out = [0.0f64; 4];
    for i in 0..4 {
        out[i] = corners[i].dist(corners[(i + 1) % 4]);
    }
    out
}

/// Per-corner scaled Jacobian: cross product of the unit edge vectors leaving
/// the corner. 1 for a right angle, negative past 180 degrees.
pub fn corner_jacobians(corners: &[Point2; 4]) -> [f64; 4] {
    let mut out = [0.0f64; 4];
    for i in 0..4 {
        let cur = corners[i];
        let next = corners[(i + 1) % 4].sub(cur);
        let prev = corners[(i + 3) % 4].sub(cur);
        let nn = next.norm();
        let np = prev.norm();
        out[i] = if nn > 0.0 && np > 0.0 {
            next.cross(prev) / (nn * np)
        } else {
            0.0
        };
    }
    out
}

/// Minimum corner scaled Jacobian; non-positive values signal inversion.
pub fn scaled_jacobian(corners: &[Point2; 4]) -> f64 {
    corner_jacobians(corners)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Longest over shortest edge.
pub fn aspect_ratio(corners: &[Point2; 4]) -> f64 {
    let l = quad_edge_lengths(corners);
    let max = l.into_iter().fold(0.0f64, f64::max);
    let min = l.into_iter().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Squareness in [0, 1]: 1 exactly for a square, 0 once the largest interior
/// angle reaches 180 degrees. Size-independent.
pub fn squareness(corners: &[Point2; 4]) -> Result<f64, RewardError> {
    let lengths = quad_edge_lengths(corners);
    let lmin = lengths.into_iter().fold(f64::INFINITY, f64::min);
    let lmax = lengths.into_iter().fold(0.0f64, f64::max);
    if lmin <= 0.0 {
        return Err(RewardError::DegenerateQuad);
    }
    let angles = quad_angles(corners);
    let amin = angles.into_iter().fold(f64::INFINITY, f64::min);
    let amax = angles.into_iter().fold(f64::NEG_INFINITY, f64::max);
    let term = (amin / 90.0) * (2.0 - amax / 90.0) * (lmin / lmax);
    if term <= 0.0 {
        return Ok(0.0);
    }
    Ok(term.cbrt().min(1.0))
}

/// Per-element quality bundle.
#[derive(Clone, Copy, Debug)]
pub struct QuadQuality {
    pub angles: [f64; 4],
    pub lengths: [f64; 4],
    pub r_s: f64,
    pub scaled_jacobian: f64,
    pub aspect_ratio: f64,
}

pub fn quad_quality(corners: &[Point2; 4]) -> Result<QuadQuality, RewardError> {
    Ok(QuadQuality {
        angles: quad_angles(corners),
        lengths: quad_edge_lengths(corners),
        r_s: squareness(corners)?,
        scaled_jacobian: scaled_jacobian(corners),
        aspect_ratio: aspect_ratio(corners),
    })
}

/// Extraordinary-vertex penalty factor.
#[inline]
pub fn ep_penalty_factor(n_tot: usize, n_ep: usize, n_cep: usize) -> f64 {
    if n_tot == 0 {
        return 1.0;
    }
    let n = n_tot as f64;
    (1.0 - n_ep as f64 / n) * (1.0 - n_cep as f64 / n)
}

/// Mesh-level reward summary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshReward {
    pub n_tot: usize,
    pub n_ep: usize,
    /// Unordered pairs of extraordinary vertices joined by a mesh edge.
    pub n_cep: usize,
    pub r_ep: f64,
    pub r_fin: f64,
    pub m: usize,
}

/// Count extraordinary vertices and adjacent pairs, and form the penalty.
pub fn ep_penalty(mesh: &QuadMesh) -> MeshReward {
    let statuses = mesh.ep_statuses();
    let n_tot = statuses.len();
    let n_ep = statuses.iter().filter(|&&s| is_extraordinary(s)).count();
    let mut n_cep = 0usize;
    for (&(a, b), _) in mesh.edge_incidence().iter() {
        if is_extraordinary(statuses[a as usize]) && is_extraordinary(statuses[b as usize]) {
            n_cep += 1;
        }
    }
    MeshReward {
        n_tot,
        n_ep,
        n_cep,
        r_ep: ep_penalty_factor(n_tot, n_ep, n_cep),
        r_fin: 0.0,
        m: mesh.quads.len(),
    }
}

/// Sum of the mean and the minimum of the per-quad products `r_s * r_ep`.
pub fn episode_reward(per_quad_r_s: &[f64], r_ep: f64) -> f64 {
    if per_quad_r_s.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    for &rs in per_quad_r_s {
        let v = rs * r_ep;
        sum += v;
        min = min.min(v);
    }
    sum / per_quad_r_s.len() as f64 + min
}

/// Full episode reward for a finished mesh.
pub fn mesh_reward(mesh: &QuadMesh) -> Result<MeshReward, RewardError> {
    let mut summary = ep_penalty(mesh);
    let mut rs = Vec::with_capacity(mesh.quads.len());
    for q in 0..mesh.quads.len() {
        rs.push(squareness(&mesh.quad_points(q))?);
    }
    summary.r_fin = episode_reward(&rs, summary.r_ep);
    Ok(summary)
}

/// The statistics block reported for every generated mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct QualityReport {
    pub vert_count: usize,
    pub elem_count: usize,
    pub aspect_best: f64,
    pub aspect_worst: f64,
    pub n_ep: usize,
    pub n_cep: usize,
    pub angle_min: f64,
    pub angle_max: f64,
    pub jacobian_worst: f64,
    pub jacobian_best: f64,
    /// Filled in by callers that can measure time.
    pub wall_time_s: Option<f64>,
}

pub fn quality_report(mesh: &QuadMesh) -> QualityReport {
    let ep = ep_penalty(mesh);
    let mut aspect_best = f64::INFINITY;
    let mut aspect_worst = 0.0f64;
    let mut angle_min = f64::INFINITY;
    let mut angle_max = f64::NEG_INFINITY;
    let mut jac_worst = f64::INFINITY;
    let mut jac_best = f64::NEG_INFINITY;
    for q in 0..mesh.quads.len() {
        let pts = mesh.quad_points(q);
        let a = aspect_ratio(&pts);
        aspect_best = aspect_best.min(a);
        aspect_worst = aspect_worst.max(a);
        for ang in quad_angles(&pts) {
            angle_min = angle_min.min(ang);
            angle_max = angle_max.max(ang);
        }
        let j = scaled_jacobian(&pts);
        jac_worst = jac_worst.min(j);
        jac_best = jac_best.max(j);
    }
    QualityReport {
        vert_count: mesh.vertices.len(),
        elem_count: mesh.quads.len(),
        aspect_best,
        aspect_worst,
        n_ep: ep.n_ep,
        n_cep: ep.n_cep,
        angle_min,
        angle_max,
        jacobian_worst: jac_worst,
        jacobian_best: jac_best,
        wall_time_s: None,
    }
}
