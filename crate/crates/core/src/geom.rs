//! 2D geometric primitives.
//!
//! All angle conventions follow one rule: loops are traversed with the
//! unmeshed region on their left (outer loops counter-clockwise, holes
//! clockwise), and inner angles are measured through the unmeshed side.

use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

/// A point in the plane. Coordinates are finite; constructors reject NaN/Inf.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    /// Panics on non-finite coordinates; meshing never manufactures them and
    /// file parsers validate before calling in.
    pub fn new(x: f64, y: f64) -> Self {
        assert!(x.is_finite() && y.is_finite(), "non-finite coordinate");
        Self { x, y }
    }

    #[inline]
    pub fn sub(self, o: Point2) -> Vec2 {
        Vec2 {
            x: self.x - o.x,
            y: self.y - o.y,
        }
    }

    #[inline]
    pub fn add(self, v: Vec2) -> Point2 {
        Point2 {
            x: self.x + v.x,
            y: self.y + v.y,
        }
    }

    #[inline]
    pub fn dist(self, o: Point2) -> f64 {
        self.sub(o).norm()
    }

    #[inline]
    pub fn dist2(self, o: Point2) -> f64 {
        let d = self.sub(o);
        d.x * d.x + d.y * d.y
    }

    #[inline]
    pub fn mid(self, o: Point2) -> Point2 {
        Point2 {
            x: 0.5 * (self.x + o.x),
            y: 0.5 * (self.y + o.y),
        }
    }

    /// Point at parameter `t` along the segment `self -> o`.
    #[inline]
    pub fn lerp(self, o: Point2, t: f64) -> Point2 {
        Point2 {
            x: self.x + t * (o.x - self.x),
            y: self.y + t * (o.y - self.y),
        }
    }
}

/// A displacement in the plane.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    #[inline]
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn scale(self, s: f64) -> Vec2 {
        Vec2 {
            x: self.x * s,
            y: self.y * s,
        }
    }

    /// Unit vector; returns `None` for (near-)zero input.
    pub fn unit(self) -> Option<Vec2> {
        let n = self.norm();
        if n > 0.0 {
            Some(self.scale(1.0 / n))
        } else {
            None
        }
    }

    /// Direction at `angle` radians from the +x axis.
    #[inline]
    pub fn from_angle(angle: f64) -> Vec2 {
        Vec2 {
            x: angle.cos(),
            y: angle.sin(),
        }
    }
}

/// Which rotational sense carries the right-hand ray onto the left-hand ray
/// through the unmeshed region.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    Ccw,
    Cw,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeomError {
    /// Two of the supplied points coincide.
    DegenerateInput,
}

impl fmt::Display for GeomError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeomError::DegenerateInput => write!(f, "degenerate input: coincident points"),
        }
    }
}

impl core::error::Error for GeomError {}

/// Similarity transform mapping a reference edge onto the unit interval:
/// the origin vertex goes to (0,0) and the vertex defining `theta`/`d` goes
/// to (1,0). Applied as translate(-origin), scale(1/d), rotate(-theta).
#[derive(Clone, Copy, Debug)]
pub struct NormalizationFrame {
    pub origin: Point2,
    /// Angle of the reference edge against the +x axis, in (-pi, pi].
    pub theta: f64,
    /// Length of the reference edge, > 0.
    pub d: f64,
}

impl NormalizationFrame {
    /// Frame whose reference edge runs from `origin` to `tip`.
    pub fn from_edge(origin: Point2, tip: Point2) -> Result<Self, GeomError> {
        let v = tip.sub(origin);
        let d = v.norm();
        if d <= 0.0 {
            return Err(GeomError::DegenerateInput);
        }
        let mut theta = v.y.atan2(v.x);
        if theta <= -core::f64::consts::PI {
            theta = core::f64::consts::PI;
        }
        Ok(Self { origin, theta, d })
    }

    #[inline]
    pub fn apply(&self, p: Point2) -> Point2 {
        let tx = (p.x - self.origin.x) / self.d;
        let ty = (p.y - self.origin.y) / self.d;
        let (s, c) = self.theta.sin_cos();
        Point2 {
            x: c * tx + s * ty,
            y: -s * tx + c * ty,
        }
    }

    /// Inverse of [`apply`](Self::apply): local frame coordinates back to
    /// domain coordinates.
    #[inline]
    pub fn unapply(&self, p: Point2) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        let rx = c * p.x - s * p.y;
        let ry = s * p.x + c * p.y;
        Point2 {
            x: rx * self.d + self.origin.x,
            y: ry * self.d + self.origin.y,
        }
    }
}

/// Transform `points` into the local frame.
pub fn normalize_state(points: &[Point2], frame: &NormalizationFrame) -> alloc::vec::Vec<Point2> {
    points.iter().map(|&p| frame.apply(p)).collect()
}

/// Do the open segments (a1,a2) and (b1,b2) properly intersect or overlap
/// within `eps`? Segments that only share an endpoint do not count.
pub fn segment_intersect(a1: Point2, a2: Point2, b1: Point2, b2: Point2, eps: f64) -> bool {
    // Shared endpoints never count as an intersection, but the remainder of
    // the segments still might (collinear overlap).
    let shares = |p: Point2, q: Point2| p == q;
    let shared_ab = (shares(a1, b1) as u8) + (shares(a1, b2) as u8) + (shares(a2, b1) as u8)
        + (shares(a2, b2) as u8);

    let d1 = b2.sub(b1).cross(a1.sub(b1));
    let d2 = b2.sub(b1).cross(a2.sub(b1));
    let d3 = a2.sub(a1).cross(b1.sub(a1));
    let d4 = a2.sub(a1).cross(b2.sub(a1));

    // Proper crossing: each segment straddles the other's supporting line.
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }

    if shared_ab > 0 {
        // With a shared endpoint the only remaining way to intersect is a
        // collinear overlap of positive length.
        if d1.abs() <= eps && d2.abs() <= eps && d3.abs() <= eps && d4.abs() <= eps {
            return collinear_overlap_len(a1, a2, b1, b2) > eps;
        }
        return false;
    }

    // Near-degenerate contact: an endpoint of one segment lying within eps of
    // the interior of the other.
    if point_near_open_segment(a1, b1, b2, eps)
        || point_near_open_segment(a2, b1, b2, eps)
        || point_near_open_segment(b1, a1, a2, eps)
        || point_near_open_segment(b2, a1, a2, eps)
    {
        return true;
    }

    false
}

fn collinear_overlap_len(a1: Point2, a2: Point2, b1: Point2, b2: Point2) -> f64 {
    let dir = a2.sub(a1);
    let n = dir.norm();
    if n == 0.0 {
        return 0.0;
    }
    let u = dir.scale(1.0 / n);
    let ta1 = 0.0;
    let ta2 = n;
    let tb1 = b1.sub(a1).dot(u);
    let tb2 = b2.sub(a1).dot(u);
    let (alo, ahi) = (ta1.min(ta2), ta1.max(ta2));
    let (blo, bhi) = (tb1.min(tb2), tb1.max(tb2));
    (ahi.min(bhi) - alo.max(blo)).max(0.0)
}

fn point_near_open_segment(p: Point2, s1: Point2, s2: Point2, eps: f64) -> bool {
    let d = s2.sub(s1);
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return false;
    }
    let t = p.sub(s1).dot(d) / len2;
    if t <= 0.0 || t >= 1.0 {
        return false;
    }
    let foot = s1.add(d.scale(t));
    p.dist(foot) <= eps
}

/// Distance from `p` to the infinite line through `a` and `b`, by the
/// cross-product formula. Used to rank partition candidates.
pub fn dist_point_line(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b.sub(a);
    let n = ab.norm();
    if n == 0.0 {
        return p.dist(a);
    }
    ab.cross(p.sub(a)).abs() / n
}

/// Distance from `p` to the closed segment `a`-`b`.
pub fn dist_point_segment(p: Point2, a: Point2, b: Point2) -> f64 {
    let d = b.sub(a);
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (p.sub(a).dot(d) / len2).clamp(0.0, 1.0);
    p.dist(a.add(d.scale(t)))
}

/// Radius of the circle through three points. Collinear triples (infinite
/// radius) clamp to `rho_max`.
pub fn circumradius(
    p_prev: Point2,
    p: Point2,
    p_next: Point2,
    rho_max: f64,
) -> Result<f64, GeomError> {
    if p_prev == p || p == p_next || p_prev == p_next {
        return Err(GeomError::DegenerateInput);
    }
    let a = p.dist(p_next);
    let b = p_prev.dist(p_next);
    let c = p_prev.dist(p);
    let cross = p.sub(p_prev).cross(p_next.sub(p_prev));
    // R = abc / (2 * area); area = |cross| / 2.
    let denom = 2.0 * cross.abs();
    let scale = a.max(b).max(c);
    if denom <= 1e-14 * scale * scale {
        return Ok(rho_max);
    }
    Ok((a * b * c / denom).min(rho_max))
}

/// Counter-clockwise angle from ray `v_from` to ray `v_to`, in [0, 2pi).
#[inline]
pub fn ccw_angle(v_from: Vec2, v_to: Vec2) -> f64 {
    let a = v_from.cross(v_to).atan2(v_from.dot(v_to));
    if a < 0.0 {
        a + 2.0 * core::f64::consts::PI
    } else {
        a
    }
}

/// Inner angle at `p` measured through the unmeshed region, in degrees
/// [0, 360). `p_right` is the successor along the loop and `p_left` the
/// predecessor; for `Orientation::Ccw` the unmeshed side is reached by
/// rotating counter-clockwise from the right ray to the left ray.
pub fn inner_angle(
    p_left: Point2,
    p: Point2,
    p_right: Point2,
    interior_side: Orientation,
) -> Result<f64, GeomError> {
    let to_right = p_right.sub(p);
    let to_left = p_left.sub(p);
    if to_right.norm() == 0.0 || to_left.norm() == 0.0 {
        return Err(GeomError::DegenerateInput);
    }
    let ccw = ccw_angle(to_right, to_left);
    let rad = match interior_side {
        Orientation::Ccw => ccw,
        Orientation::Cw => {
            let full = 2.0 * core::f64::consts::PI;
            if ccw == 0.0 {
                0.0
            } else {
                full - ccw
            }
        }
    };
    Ok(rad.to_degrees())
}

/// Twice the signed area of the polygon (positive for counter-clockwise).
pub fn polygon_signed_area2(pts: &[Point2]) -> f64 {
    let n = pts.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        acc += a.x * b.y - a.y * b.x;
    }
    acc
}

/// Signed area of the polygon.
pub fn polygon_area(pts: &[Point2]) -> f64 {
    0.5 * polygon_signed_area2(pts)
}

/// Winding number of `pts` (closed loop) around `p`.
pub fn winding_number(pts: &[Point2], p: Point2) -> i32 {
    let n = pts.len();
    let mut w = 0i32;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        if a.y <= p.y {
            if b.y > p.y && b.sub(a).cross(p.sub(a)) > 0.0 {
                w += 1;
            }
        } else if b.y <= p.y && b.sub(a).cross(p.sub(a)) < 0.0 {
            w -= 1;
        }
    }
    w
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug)]
pub struct Aabb {
    pub min: Point2,
    pub max: Point2,
}

impl Aabb {
    pub fn of_points<'a, I: IntoIterator<Item = &'a Point2>>(pts: I) -> Option<Aabb> {
        let mut it = pts.into_iter();
        let first = *it.next()?;
        let mut bb = Aabb {
            min: first,
            max: first,
        };
        for p in it {
            bb.min.x = bb.min.x.min(p.x);
            bb.min.y = bb.min.y.min(p.y);
            bb.max.x = bb.max.x.max(p.x);
            bb.max.y = bb.max.y.max(p.y);
        }
        Some(bb)
    }

    #[inline]
    pub fn diagonal(&self) -> f64 {
        self.max.dist(self.min)
    }

    pub fn inflate(&self, r: f64) -> Aabb {
        Aabb {
            min: Point2 {
                x: self.min.x - r,
                y: self.min.y - r,
            },
            max: Point2 {
                x: self.max.x + r,
                y: self.max.y + r,
            },
        }
    }

    #[inline]
    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    #[test]
    fn segment_intersect_crossing_diagonals() {
        assert!(segment_intersect(
            p(0.0, 0.0),
            p(1.0, 1.0),
            p(0.0, 1.0),
            p(1.0, 0.0),
            1e-9
        ));
    }

    #[test]
    fn segment_intersect_shared_endpoint_only() {
        assert!(!segment_intersect(
            p(0.0, 0.0),
            p(1.0, 0.0),
            p(1.0, 0.0),
            p(2.0, 0.0),
            1e-9
        ));
    }

    #[test]
    fn segment_intersect_perpendicular_cross() {
        // Solving the 2x2 parametric system by hand: (0,0)+t(2,0) meets
        // (1,-1)+s(0,2) at t=1/2, s=1/2, both interior.
        assert!(segment_intersect(
            p(0.0, 0.0),
            p(2.0, 0.0),
            p(1.0, -1.0),
            p(1.0, 1.0),
            1e-9
        ));
    }

    #[test]
    fn segment_intersect_t_touch_counts() {
        assert!(segment_intersect(
            p(0.0, 0.0),
            p(2.0, 0.0),
            p(1.0, 0.0),
            p(1.0, 1.0),
            1e-9
        ));
    }

    #[test]
    fn segment_intersect_collinear_overlap_from_shared_endpoint() {
        assert!(segment_intersect(
            p(0.0, 0.0),
            p(2.0, 0.0),
            p(0.0, 0.0),
            p(1.0, 0.0),
            1e-9
        ));
    }

    #[test]
    fn segment_intersect_disjoint() {
        assert!(!segment_intersect(
            p(0.0, 0.0),
            p(1.0, 0.0),
            p(0.0, 1.0),
            p(1.0, 1.0),
            1e-9
        ));
    }

    #[test]
    fn segment_intersect_symmetric_in_pairs() {
        let cases = [
            (p(0.0, 0.0), p(1.0, 1.0), p(0.0, 1.0), p(1.0, 0.0)),
            (p(0.0, 0.0), p(1.0, 0.0), p(1.0, 0.0), p(2.0, 0.0)),
            (p(0.2, 0.3), p(0.9, 0.1), p(0.5, -1.0), p(0.5, 2.0)),
        ];
        for (a1, a2, b1, b2) in cases {
            assert_eq!(
                segment_intersect(a1, a2, b1, b2, 1e-9),
                segment_intersect(b1, b2, a1, a2, 1e-9)
            );
        }
    }

    #[test]
    fn circumradius_equilateral() {
        // Side-1 equilateral triangle has circumradius 1/sqrt(3).
        let r = circumradius(
            p(0.0, 0.0),
            p(1.0, 0.0),
            p(0.5, 3f64.sqrt() / 2.0),
            1e9,
        )
        .unwrap();
        assert_relative_eq!(r, 1.0 / 3f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn circumradius_right_triangle_half_hypotenuse() {
        let r = circumradius(p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), 1e9).unwrap();
        assert_relative_eq!(r, 2f64.sqrt() / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn circumradius_collinear_clamps() {
        let r = circumradius(p(0.0, 0.0), p(1.0, 0.0), p(2.0, 0.0), 123.0).unwrap();
        assert_eq!(r, 123.0);
    }

    #[test]
    fn circumradius_coincident_is_error() {
        assert_eq!(
            circumradius(p(0.0, 0.0), p(0.0, 0.0), p(1.0, 0.0), 1e9),
            Err(GeomError::DegenerateInput)
        );
    }

    #[test]
    fn circumradius_permutation_invariant() {
        let pts = [p(0.1, 0.2), p(0.9, -0.3), p(0.4, 0.8)];
        let mut rs = alloc::vec::Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    if i != j && j != k && i != k {
                        rs.push(circumradius(pts[i], pts[j], pts[k], 1e9).unwrap());
                    }
                }
            }
        }
        for r in &rs {
            assert_relative_eq!(*r, rs[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn inner_angle_square_corner() {
        // CCW square, corner at origin: successor (1,0), predecessor (0,1).
        let a = inner_angle(p(0.0, 1.0), p(0.0, 0.0), p(1.0, 0.0), Orientation::Ccw).unwrap();
        assert_relative_eq!(a, 90.0, epsilon = 1e-12);
    }

    #[test]
    fn inner_angle_straight() {
        let a = inner_angle(p(-1.0, 0.0), p(0.0, 0.0), p(1.0, 0.0), Orientation::Ccw).unwrap();
        assert_relative_eq!(a, 180.0, epsilon = 1e-12);
    }

    #[test]
    fn inner_angle_reflex_notch() {
        // L-shaped front walked CCW around the unmeshed side: at the notch
        // corner the successor points along -x and the predecessor along +y,
        // so the unmeshed wedge spans 270 degrees.
        let a = inner_angle(p(0.0, 1.0), p(0.0, 0.0), p(-1.0, 0.0), Orientation::Ccw).unwrap();
        assert_relative_eq!(a, 270.0, epsilon = 1e-12);
    }

    #[test]
    fn inner_angle_sides_sum_to_full_turn() {
        let (l, pt, r) = (p(0.3, 0.9), p(0.1, -0.2), p(-0.8, 0.4));
        let a = inner_angle(l, pt, r, Orientation::Ccw).unwrap();
        let b = inner_angle(l, pt, r, Orientation::Cw).unwrap();
        assert_relative_eq!(a + b, 360.0, epsilon = 1e-9);
    }

    #[test]
    fn normalize_horizontal_frame() {
        // Reference edge (2,3)->(4,3): theta = 0, d = 2.
        let f = NormalizationFrame::from_edge(p(2.0, 3.0), p(4.0, 3.0)).unwrap();
        let q = f.apply(p(2.0, 4.0));
        assert_relative_eq!(q.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(q.y, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn normalize_origin_maps_to_zero() {
        let f = NormalizationFrame::from_edge(p(-1.5, 2.0), p(0.5, -1.0)).unwrap();
        let q = f.apply(p(-1.5, 2.0));
        assert_relative_eq!(q.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(q.y, 0.0, epsilon = 1e-12);
        let tip = f.apply(p(0.5, -1.0));
        assert_relative_eq!(tip.x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(tip.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn normalize_vertical_frame() {
        // Reference edge (0,0)->(0,2): theta = 90 deg, d = 2. Query (-1,0)
        // translates/scales to (-0.5,0), then rotating by -90 deg gives
        // (0, 0.5).
        let f = NormalizationFrame::from_edge(p(0.0, 0.0), p(0.0, 2.0)).unwrap();
        let q = f.apply(p(-1.0, 0.0));
        assert_relative_eq!(q.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(q.y, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn normalize_unapply_roundtrip() {
        let f = NormalizationFrame::from_edge(p(0.3, -0.7), p(1.1, 0.9)).unwrap();
        let q = p(0.42, 0.137);
        let back = f.unapply(f.apply(q));
        assert_relative_eq!(back.x, q.x, epsilon = 1e-12);
        assert_relative_eq!(back.y, q.y, epsilon = 1e-12);
    }

    #[test]
    fn normalize_similarity_invariant() {
        // Rotating/translating/scaling the whole input together with the
        // frame leaves normalized coordinates unchanged.
        let pts = [p(0.2, 0.4), p(1.3, -0.2), p(-0.5, 0.8)];
        let f = NormalizationFrame::from_edge(p(0.0, 0.0), p(1.0, 0.5)).unwrap();
        let base = normalize_state(&pts, &f);

        let ang = 0.7f64;
        let (s, c) = ang.sin_cos();
        let scale = 3.2;
        let shift = Vec2::new(-4.0, 2.5);
        let xf = |q: Point2| -> Point2 {
            Point2::new(
                scale * (c * q.x - s * q.y) + shift.x,
                scale * (s * q.x + c * q.y) + shift.y,
            )
        };
        let pts2: alloc::vec::Vec<Point2> = pts.iter().map(|&q| xf(q)).collect();
        let f2 = NormalizationFrame::from_edge(xf(p(0.0, 0.0)), xf(p(1.0, 0.5))).unwrap();
        let moved = normalize_state(&pts2, &f2);
        for (a, b) in base.iter().zip(moved.iter()) {
            assert_relative_eq!(a.x, b.x, epsilon = 1e-9);
            assert_relative_eq!(a.y, b.y, epsilon = 1e-9);
        }
    }

    #[test]
    fn winding_and_area() {
        let sq = [p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)];
        assert_relative_eq!(polygon_area(&sq), 1.0, epsilon = 1e-12);
        assert_eq!(winding_number(&sq, p(0.5, 0.5)), 1);
        assert_eq!(winding_number(&sq, p(1.5, 0.5)), 0);
    }
}
