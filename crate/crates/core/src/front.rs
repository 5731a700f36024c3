//! The evolving front: a circular doubly-linked vertex loop over the shared
//! vertex store, with local-state extraction, the four updating types, and
//! the even-parity partition that repairs blocked seals.
//!
//! Orientation contract: every front is walked with the unmeshed region on
//! its left. `right` neighbours are successors, `left` neighbours are
//! predecessors, and inner angles open counter-clockwise from the right ray.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::geom::{
    ccw_angle, dist_point_line, segment_intersect, Aabb, NormalizationFrame, Point2, Vec2,
};
use crate::grid::UniformGrid;
use crate::mesh::MeshBuilder;
use crate::reward::corner_jacobians;

/// Reject quads whose worst corner dips to or below this.
pub const MIN_CORNER_JACOBIAN: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrontError {
    /// The update would create an inverted quad or place a vertex outside
    /// the unmeshed region.
    Geometry,
    /// The seal chord crosses the front; the caller must partition instead.
    NeedsPartition,
    /// Neither partition chord yields two even subloops.
    Parity,
    /// No usable partition vertex.
    NoPartition,
}

impl fmt::Display for FrontError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrontError::Geometry => write!(f, "invalid quad geometry"),
            FrontError::NeedsPartition => write!(f, "seal chord blocked; partition required"),
            FrontError::Parity => write!(f, "no even/even partition chord"),
            FrontError::NoPartition => write!(f, "no usable partition vertex"),
        }
    }
}

impl core::error::Error for FrontError {}

/// The four front updates. Numbering follows the classification head:
/// 1 inserts a vertex, 2/3 seal toward the left/right neighbour, 4 inserts
/// two vertices and grows the front.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateKind {
    InsertOne,
    SealLeft,
    SealRight,
    InsertTwo,
}

impl UpdateKind {
    #[inline]
    pub fn type_id(self) -> u8 {
        match self {
            UpdateKind::InsertOne => 1,
            UpdateKind::SealLeft => 2,
            UpdateKind::SealRight => 3,
            UpdateKind::InsertTwo => 4,
        }
    }

    pub fn from_type_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(UpdateKind::InsertOne),
            2 => Some(UpdateKind::SealLeft),
            3 => Some(UpdateKind::SealRight),
            4 => Some(UpdateKind::InsertTwo),
            _ => None,
        }
    }
}

/// New-vertex placement in the local frame: the angle as a fraction of the
/// reference angle and the radius as a fraction of the six-segment length,
/// both in [0, 1].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarPlacement {
    pub theta: f64,
    pub rho: f64,
}

/// A policy action: the updating type plus up to two placements.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateAction {
    pub kind: UpdateKind,
    pub new1: Option<PolarPlacement>,
    pub new2: Option<PolarPlacement>,
}

impl UpdateAction {
    pub fn seal_left() -> Self {
        UpdateAction {
            kind: UpdateKind::SealLeft,
            new1: None,
            new2: None,
        }
    }

    pub fn seal_right() -> Self {
        UpdateAction {
            kind: UpdateKind::SealRight,
            new1: None,
            new2: None,
        }
    }

    pub fn insert_one(p: PolarPlacement) -> Self {
        UpdateAction {
            kind: UpdateKind::InsertOne,
            new1: Some(p),
            new2: None,
        }
    }

    pub fn insert_two(p1: PolarPlacement, p2: PolarPlacement) -> Self {
        UpdateAction {
            kind: UpdateKind::InsertTwo,
            new1: Some(p1),
            new2: Some(p2),
        }
    }

    /// Placements present match the kind.
    pub fn is_well_formed(&self) -> bool {
        match self.kind {
            UpdateKind::InsertOne => self.new1.is_some() && self.new2.is_none(),
            UpdateKind::SealLeft | UpdateKind::SealRight => {
                self.new1.is_none() && self.new2.is_none()
            }
            UpdateKind::InsertTwo => self.new1.is_some() && self.new2.is_some(),
        }
    }
}

/// The normalized neighbourhood around a reference vertex: the reference,
/// four neighbours each way, the three closest other front vertices, and
/// five vertex statuses. Flattens to 29 numbers.
#[derive(Clone, Debug)]
pub struct LocalState {
    pub p0: Point2,
    pub left: [Point2; 4],
    pub right: [Point2; 4],
    pub closest: [Point2; 3],
    /// Statuses of P0, P1r, P2r, P1l, P2l.
    pub ep: [f64; 5],
    pub frame: NormalizationFrame,
}

impl LocalState {
    /// Canonical flattening: p0, left 1-4, right 1-4, closest 1-3, statuses.
    pub fn features(&self) -> [f64; 29] {
        let mut out = [0.0f64; 29];
        let mut w = 0usize;
        let mut push = |v: f64, w: &mut usize| {
            out[*w] = v;
            *w += 1;
        };
        push(self.p0.x, &mut w);
        push(self.p0.y, &mut w);
        for p in &self.left {
            push(p.x, &mut w);
            push(p.y, &mut w);
        }
        for p in &self.right {
            push(p.x, &mut w);
            push(p.y, &mut w);
        }
        for p in &self.closest {
            push(p.x, &mut w);
            push(p.y, &mut w);
        }
        for &e in &self.ep {
            push(e, &mut w);
        }
        out
    }

    /// Inner angle at the reference vertex, radians in [0, 2pi).
    pub fn reference_angle(&self) -> f64 {
        ccw_angle(
            self.right[0].sub(self.p0),
            self.left[0].sub(self.p0),
        )
    }

    /// Total length of the six segments around the reference vertex, in
    /// normalized units.
    pub fn six_segment_len(&self) -> f64 {
        let r = &self.right;
        let l = &self.left;
        r[2].dist(r[1])
            + r[1].dist(r[0])
            + r[0].dist(self.p0)
            + self.p0.dist(l[0])
            + l[0].dist(l[1])
            + l[1].dist(l[2])
    }

    /// Local frame coordinates of a placement.
    pub fn decode_placement(&self, p: PolarPlacement) -> Point2 {
        let ang = p.theta * self.reference_angle();
        let dist = p.rho * self.six_segment_len();
        Point2::new(dist * ang.cos(), dist * ang.sin())
    }

    /// Inverse of [`decode_placement`] for a point in local coordinates.
    pub fn encode_placement(&self, local: Point2) -> PolarPlacement {
        let ang = ccw_angle(Vec2::new(1.0, 0.0), local.sub(Point2::new(0.0, 0.0)));
        let six = self.six_segment_len();
        PolarPlacement {
            theta: ang / self.reference_angle(),
            rho: local.dist(Point2::new(0.0, 0.0)) / six,
        }
    }
}

/// A quad emitted by one update, for tracing and replay.
#[derive(Clone, Debug, PartialEq)]
pub struct AppliedQuad {
    pub quad: [u32; 4],
    pub kind: UpdateKind,
    /// Ids of vertices created by the update, in action order.
    pub created: Vec<u32>,
}

const NIL: u32 = u32::MAX;

#[derive(Clone, Debug)]
struct Node {
    vertex: u32,
    next: u32,
    prev: u32,
    alive: bool,
    angle: f64,
}

/// Node handle inside one front.
pub type NodeId = u32;

/// A closed front loop. Edge count always equals the vertex count.
#[derive(Clone, Debug)]
pub struct Front {
    nodes: Vec<Node>,
    head: u32,
    len: usize,
    grid: UniformGrid,
    bounds: Aabb,
    cell: f64,
    max_edge_len: f64,
    eps: f64,
}

impl Front {
    /// Build a front over an already-seeded loop, adding its vertices to the
    /// builder and registering the polyline edges.
    pub fn from_seed_loop(
        builder: &mut MeshBuilder,
        seeds: &[Point2],
        bounds: Aabb,
        cell: f64,
        eps: f64,
    ) -> Front {
        let ids: Vec<u32> = seeds.iter().map(|&p| builder.add_vertex(p, true)).collect();
        Front::over_vertices(builder, &ids, bounds, cell, eps, true)
    }

    /// Build a front over existing vertex ids (used by partition and tests).
    pub fn over_vertices(
        builder: &mut MeshBuilder,
        ids: &[u32],
        bounds: Aabb,
        cell: f64,
        eps: f64,
        register_polyline: bool,
    ) -> Front {
        let n = ids.len();
        assert!(n >= 3, "front needs at least 3 vertices");
        let mut nodes = Vec::with_capacity(n);
        let mut grid = UniformGrid::new(bounds, cell);
        let mut max_edge = 0.0f64;
        for (i, &v) in ids.iter().enumerate() {
            nodes.push(Node {
                vertex: v,
                next: ((i + 1) % n) as u32,
                prev: ((i + n - 1) % n) as u32,
                alive: true,
                angle: 0.0,
            });
            grid.insert(i as u32, builder.pos(v));
            let w = ids[(i + 1) % n];
            max_edge = max_edge.max(builder.pos(v).dist(builder.pos(w)));
            if register_polyline {
                builder.register_polyline_edge(v, w);
            }
        }
        let mut front = Front {
            nodes,
            head: 0,
            len: n,
            grid,
            bounds,
            cell,
            max_edge_len: max_edge,
            eps,
        };
        for i in 0..n as u32 {
            front.refresh_angle(builder, i);
        }
        front
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn eps(&self) -> f64 {
        self.eps
    }

    #[inline]
    pub fn vertex(&self, n: NodeId) -> u32 {
        self.nodes[n as usize].vertex
    }

    #[inline]
    pub fn next(&self, n: NodeId) -> NodeId {
        self.nodes[n as usize].next
    }

    #[inline]
    pub fn prev(&self, n: NodeId) -> NodeId {
        self.nodes[n as usize].prev
    }

    #[inline]
    pub fn angle(&self, n: NodeId) -> f64 {
        self.nodes[n as usize].angle
    }

    pub fn head(&self) -> NodeId {
        self.head
    }

    /// Live node ids in loop order starting from the head.
    pub fn node_ids(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.len);
        let mut n = self.head;
        loop {
            out.push(n);
            n = self.next(n);
            if n == self.head {
                break;
            }
        }
        out
    }

    /// Loop vertex positions in traversal order.
    pub fn loop_points(&self, builder: &MeshBuilder) -> Vec<Point2> {
        self.node_ids()
            .into_iter()
            .map(|n| builder.pos(self.vertex(n)))
            .collect()
    }

    /// Signed area enclosed by the front.
    pub fn area(&self, builder: &MeshBuilder) -> f64 {
        crate::geom::polygon_area(&self.loop_points(builder))
    }

    fn pos_of(&self, builder: &MeshBuilder, n: NodeId) -> Point2 {
        builder.pos(self.vertex(n))
    }

    fn refresh_angle(&mut self, builder: &MeshBuilder, n: NodeId) {
        let p = self.pos_of(builder, n);
        let r = self.pos_of(builder, self.next(n));
        let l = self.pos_of(builder, self.prev(n));
        self.nodes[n as usize].angle = ccw_angle(r.sub(p), l.sub(p)).to_degrees();
    }

    /// (angle, node) pairs sorted ascending by inner angle, ties by node id.
    pub fn candidates_by_angle(&self) -> Vec<(f64, NodeId)> {
        let mut v: Vec<(f64, NodeId)> = self
            .node_ids()
            .into_iter()
            .map(|n| (self.angle(n), n))
            .collect();
        v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        v
    }

    /// Does the open segment a-b cross any front edge? Edges sharing an
    /// endpoint with the segment do not count unless they overlap it.
    pub fn segment_hits_front(&self, builder: &MeshBuilder, a: Point2, b: Point2) -> bool {
        let bb = Aabb::of_points([a, b].iter())
            .unwrap()
            .inflate(self.max_edge_len + self.eps);
        let mut hit = false;
        self.grid.for_each_in_box(bb, |n| {
            if hit || !self.nodes[n as usize].alive {
                return;
            }
            for (u, v) in [(n, self.next(n)), (self.prev(n), n)] {
                let pu = self.pos_of(builder, u);
                let pv = self.pos_of(builder, v);
                if segment_intersect(a, b, pu, pv, self.eps) {
                    hit = true;
                    return;
                }
            }
        });
        hit
    }

    /// Is `p` strictly inside the loop (winding number one)? Only meaningful
    /// for counter-clockwise loops; multi-loop containment is the driver's
    /// job.
    pub fn contains(&self, builder: &MeshBuilder, p: Point2) -> bool {
        crate::geom::winding_number(&self.loop_points(builder), p) == 1
    }

    fn window(&self, at: NodeId, steps: usize, forward: bool) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(steps);
        let mut n = at;
        for _ in 0..steps {
            n = if forward { self.next(n) } else { self.prev(n) };
            out.push(n);
        }
        out
    }

    /// Gather and normalize the 12-point neighbourhood of `at`.
    ///
    /// Windows wrap on short loops (duplicates allowed). The closest three
    /// are the nearest front vertices outside the 9-vertex window; when the
    /// loop is too short to supply three, the tail entries repeat.
    pub fn extract_state(&self, builder: &MeshBuilder, at: NodeId) -> LocalState {
        let rights = self.window(at, 4, true);
        let lefts = self.window(at, 4, false);
        let p0 = self.pos_of(builder, at);

        let mut skip_set = [NIL; 9];
        skip_set[0] = at;
        for (i, &n) in rights.iter().enumerate() {
            skip_set[1 + i] = n;
        }
        for (i, &n) in lefts.iter().enumerate() {
            skip_set[5 + i] = n;
        }
        let near = self.grid.nearest(
            p0,
            3,
            |n| self.pos_of(builder, n),
            |n| !self.nodes[n as usize].alive || skip_set.contains(&n),
        );
        // Pad by repeating the outermost window vertices; they are still the
        // best stand-ins for "nearby front geometry" on tiny loops.
        let mut closest_nodes: Vec<NodeId> = near;
        let pad = [rights[3], lefts[3], rights[2]];
        let mut pi = 0usize;
        while closest_nodes.len() < 3 {
            closest_nodes.push(pad[pi % 3]);
            pi += 1;
        }

        let frame = NormalizationFrame::from_edge(p0, self.pos_of(builder, rights[0]))
            .expect("consecutive front vertices are distinct");
        let norm = |n: NodeId| frame.apply(self.pos_of(builder, n));

        let ep = [
            builder.ep_status(self.vertex(at)),
            builder.ep_status(self.vertex(rights[0])),
            builder.ep_status(self.vertex(rights[1])),
            builder.ep_status(self.vertex(lefts[0])),
            builder.ep_status(self.vertex(lefts[1])),
        ];

        LocalState {
            p0: frame.apply(p0),
            left: [norm(lefts[0]), norm(lefts[1]), norm(lefts[2]), norm(lefts[3])],
            right: [
                norm(rights[0]),
                norm(rights[1]),
                norm(rights[2]),
                norm(rights[3]),
            ],
            closest: [
                norm(closest_nodes[0]),
                norm(closest_nodes[1]),
                norm(closest_nodes[2]),
            ],
            ep,
            frame,
        }
    }

    /// Frame and scale factors needed to denormalize placements at `at`,
    /// without the nearest-vertex query.
    fn placement_frame(&self, builder: &MeshBuilder, at: NodeId) -> (NormalizationFrame, f64, f64) {
        let rights = self.window(at, 3, true);
        let lefts = self.window(at, 3, false);
        let p0 = self.pos_of(builder, at);
        let frame = NormalizationFrame::from_edge(p0, self.pos_of(builder, rights[0]))
            .expect("consecutive front vertices are distinct");
        let d = |a: NodeId, b: NodeId| self.pos_of(builder, a).dist(self.pos_of(builder, b));
        let six = (d(rights[2], rights[1])
            + d(rights[1], rights[0])
            + d(rights[0], at)
            + d(at, lefts[0])
            + d(lefts[0], lefts[1])
            + d(lefts[1], lefts[2]))
            / frame.d;
        let ref_angle = ccw_angle(
            self.pos_of(builder, rights[0]).sub(p0),
            self.pos_of(builder, lefts[0]).sub(p0),
        );
        (frame, ref_angle, six)
    }

    /// Domain coordinates of a placement at `at`.
    pub fn placement_point(
        &self,
        builder: &MeshBuilder,
        at: NodeId,
        p: PolarPlacement,
    ) -> Point2 {
        let (frame, ref_angle, six) = self.placement_frame(builder, at);
        let ang = p.theta * ref_angle;
        let dist = p.rho * six;
        frame.unapply(Point2::new(dist * ang.cos(), dist * ang.sin()))
    }

    /// Polar encoding of a domain point relative to `at`.
    pub fn encode_point(&self, builder: &MeshBuilder, at: NodeId, p: Point2) -> PolarPlacement {
        let (frame, ref_angle, six) = self.placement_frame(builder, at);
        let local = frame.apply(p);
        let ang = ccw_angle(Vec2::new(1.0, 0.0), local.sub(Point2::new(0.0, 0.0)));
        PolarPlacement {
            theta: ang / ref_angle,
            rho: local.dist(Point2::new(0.0, 0.0)) / six,
        }
    }

    fn quad_valid(&self, pts: &[Point2; 4]) -> bool {
        corner_jacobians(pts)
            .into_iter()
            .all(|j| j > MIN_CORNER_JACOBIAN)
    }

    fn check_new_vertex(
        &self,
        builder: &MeshBuilder,
        v: Point2,
        anchors: &[Point2],
        check_containment: bool,
    ) -> Result<(), FrontError> {
        if check_containment && !self.contains(builder, v) {
            return Err(FrontError::Geometry);
        }
        for &a in anchors {
            if self.segment_hits_front(builder, a, v) {
                return Err(FrontError::Geometry);
            }
        }
        Ok(())
    }

    fn remove_node(&mut self, builder: &MeshBuilder, n: NodeId) {
        let (p, nx) = (self.prev(n), self.next(n));
        self.nodes[p as usize].next = nx;
        self.nodes[nx as usize].prev = p;
        self.grid.remove(n, self.pos_of(builder, n));
        self.nodes[n as usize].alive = false;
        if self.head == n {
            self.head = nx;
        }
        self.len -= 1;
    }

    fn insert_after(&mut self, builder: &MeshBuilder, after: NodeId, vertex: u32) -> NodeId {
        let id = self.nodes.len() as u32;
        let nx = self.next(after);
        self.nodes.push(Node {
            vertex,
            next: nx,
            prev: after,
            alive: true,
            angle: 0.0,
        });
        self.nodes[after as usize].next = id;
        self.nodes[nx as usize].prev = id;
        self.grid.insert(id, builder.pos(vertex));
        self.len += 1;
        id
    }

    fn note_edge(&mut self, builder: &MeshBuilder, a: u32, b: u32) {
        self.max_edge_len = self.max_edge_len.max(builder.pos(a).dist(builder.pos(b)));
    }

    /// Apply one updating action at `at`, appending exactly one quad.
    ///
    /// Checks here cover this front only: seal chords crossing the loop
    /// report [`FrontError::NeedsPartition`]; inverted quads and placements
    /// outside or across the loop report [`FrontError::Geometry`]. Drivers
    /// meshing multi-loop domains must also validate against sibling fronts
    /// before calling in. `check_containment` disables the winding test for
    /// clockwise (hole) loops.
    pub fn apply_update(
        &mut self,
        builder: &mut MeshBuilder,
        at: NodeId,
        action: &UpdateAction,
        check_containment: bool,
    ) -> Result<AppliedQuad, FrontError> {
        if !action.is_well_formed() {
            return Err(FrontError::Geometry);
        }
        match action.kind {
            UpdateKind::SealLeft | UpdateKind::SealRight => {
                if self.len < 6 {
                    return Err(FrontError::Geometry);
                }
            }
            _ => {
                if self.len < 4 {
                    return Err(FrontError::Geometry);
                }
            }
        }

        let r1 = self.next(at);
        let l1 = self.prev(at);
        let p0 = self.pos_of(builder, at);
        let pr1 = self.pos_of(builder, r1);
        let pl1 = self.pos_of(builder, l1);

        match action.kind {
            UpdateKind::InsertOne => {
                let v = self.placement_point(builder, at, action.new1.unwrap());
                let quad_pts = [p0, pr1, v, pl1];
                if !self.quad_valid(&quad_pts) {
                    return Err(FrontError::Geometry);
                }
                self.check_new_vertex(builder, v, &[pr1, pl1], check_containment)?;
                let vid = builder.add_vertex(v, false);
                let quad = [self.vertex(at), self.vertex(r1), vid, self.vertex(l1)];
                builder.push_quad(quad);
                // Replace the reference vertex by the new one in place.
                self.grid.remove(at, p0);
                self.nodes[at as usize].vertex = vid;
                self.grid.insert(at, v);
                self.note_edge(builder, quad[1], vid);
                self.note_edge(builder, vid, quad[3]);
                for n in [self.prev(at), at, self.next(at)] {
                    self.refresh_angle(builder, n);
                }
                Ok(AppliedQuad {
                    quad,
                    kind: action.kind,
                    created: vec![vid],
                })
            }
            UpdateKind::SealLeft => {
                let l2 = self.prev(l1);
                let pl2 = self.pos_of(builder, l2);
                if self.segment_hits_front(builder, pr1, pl2) {
                    return Err(FrontError::NeedsPartition);
                }
                let quad_pts = [pl2, pl1, p0, pr1];
                if !self.quad_valid(&quad_pts) {
                    return Err(FrontError::Geometry);
                }
                let quad = [
                    self.vertex(l2),
                    self.vertex(l1),
                    self.vertex(at),
                    self.vertex(r1),
                ];
                builder.push_quad(quad);
                self.remove_node(builder, at);
                self.remove_node(builder, l1);
                self.note_edge(builder, quad[3], quad[0]);
                for n in [l2, r1] {
                    self.refresh_angle(builder, n);
                }
                Ok(AppliedQuad {
                    quad,
                    kind: action.kind,
                    created: vec![],
                })
            }
            UpdateKind::SealRight => {
                let r2 = self.next(r1);
                let pr2 = self.pos_of(builder, r2);
                if self.segment_hits_front(builder, pl1, pr2) {
                    return Err(FrontError::NeedsPartition);
                }
                let quad_pts = [pl1, p0, pr1, pr2];
                if !self.quad_valid(&quad_pts) {
                    return Err(FrontError::Geometry);
                }
                let quad = [
                    self.vertex(l1),
                    self.vertex(at),
                    self.vertex(r1),
                    self.vertex(r2),
                ];
                builder.push_quad(quad);
                self.remove_node(builder, at);
                self.remove_node(builder, r1);
                self.note_edge(builder, quad[0], quad[3]);
                for n in [l1, r2] {
                    self.refresh_angle(builder, n);
                }
                Ok(AppliedQuad {
                    quad,
                    kind: action.kind,
                    created: vec![],
                })
            }
            UpdateKind::InsertTwo => {
                let v1 = self.placement_point(builder, at, action.new1.unwrap());
                let v2 = self.placement_point(builder, at, action.new2.unwrap());
                let quad_pts = [p0, pr1, v2, v1];
                if !self.quad_valid(&quad_pts) {
                    return Err(FrontError::Geometry);
                }
                self.check_new_vertex(builder, v1, &[p0], check_containment)?;
                self.check_new_vertex(builder, v2, &[pr1], check_containment)?;
                if self.segment_hits_front(builder, v1, v2)
                    || segment_intersect(p0, v1, pr1, v2, self.eps)
                {
                    return Err(FrontError::Geometry);
                }
                let id1 = builder.add_vertex(v1, false);
                let id2 = builder.add_vertex(v2, false);
                let quad = [self.vertex(at), self.vertex(r1), id2, id1];
                builder.push_quad(quad);
                let n1 = self.insert_after(builder, at, id1);
                let n2 = self.insert_after(builder, n1, id2);
                self.note_edge(builder, quad[0], id1);
                self.note_edge(builder, id1, id2);
                self.note_edge(builder, id2, quad[1]);
                for n in [at, n1, n2, r1] {
                    self.refresh_angle(builder, n);
                }
                Ok(AppliedQuad {
                    quad,
                    kind: action.kind,
                    created: vec![id1, id2],
                })
            }
        }
    }

    /// Endpoints of front edges crossed by `chord`, ranked by distance to
    /// the line through `ref_seg` (the reference vertex and the neighbour on
    /// the sealing side). Returns the best vertex per the cross-product
    /// distance; ties resolve to the earliest in loop order from `ref_seg.0`.
    pub fn find_partition_vertex(
        &self,
        builder: &MeshBuilder,
        chord: (Point2, Point2),
        ref_seg: (Point2, Point2),
        exclude: &[NodeId],
    ) -> Option<NodeId> {
        self.partition_candidates(builder, chord, ref_seg, exclude)
            .into_iter()
            .next()
    }

    /// All partition candidates ordered by the distance rule.
    pub fn partition_candidates(
        &self,
        builder: &MeshBuilder,
        chord: (Point2, Point2),
        ref_seg: (Point2, Point2),
        exclude: &[NodeId],
    ) -> Vec<NodeId> {
        let mut out: Vec<(f64, usize, NodeId)> = Vec::new();
        let ids = self.node_ids();
        for (order, &n) in ids.iter().enumerate() {
            if exclude.contains(&n) {
                continue;
            }
            let p = self.pos_of(builder, n);
            let pn = self.pos_of(builder, self.next(n));
            let pp = self.pos_of(builder, self.prev(n));
            let touches = segment_intersect(chord.0, chord.1, p, pn, self.eps)
                || segment_intersect(chord.0, chord.1, pp, p, self.eps);
            if touches {
                let d = dist_point_line(p, ref_seg.0, ref_seg.1);
                out.push((d, order, n));
            }
        }
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        out.into_iter().map(|(_, _, n)| n).collect()
    }

    /// Number of edges walking forward from `a` to `b`.
    fn edges_between(&self, a: NodeId, b: NodeId) -> usize {
        let mut n = a;
        let mut k = 0usize;
        while n != b {
            n = self.next(n);
            k += 1;
        }
        k
    }

    /// Split the loop along `p_i`-`p_j` or `p_alt`-`p_j`, whichever yields
    /// two even subloops. The chord becomes a front edge of both parts.
    ///
    /// `p_alt` is the neighbour of `p_i` on the sealing side. Fails with
    /// [`FrontError::Parity`] if neither chord works (cannot happen on even
    /// loops) and [`FrontError::Geometry`] if the even chord is blocked or a
    /// subloop would drop below four edges.
    pub fn partition(
        &self,
        builder: &mut MeshBuilder,
        p_i: NodeId,
        p_alt: NodeId,
        p_j: NodeId,
    ) -> Result<(Front, Front), FrontError> {
        debug_assert!(self.len % 2 == 0);
        let mut choice = None;
        for anchor in [p_i, p_alt] {
            if anchor == p_j || self.next(p_j) == anchor || self.prev(p_j) == anchor {
                continue;
            }
            let k = self.edges_between(anchor, p_j);
            let n1 = k + 1;
            let n2 = self.len - k + 1;
            if n1 % 2 == 0 && n2 % 2 == 0 {
                if n1 < 4 || n2 < 4 {
                    return Err(FrontError::Geometry);
                }
                choice = Some(anchor);
                break;
            }
        }
        let anchor = match choice {
            Some(a) => a,
            None => return Err(FrontError::Parity),
        };
        let pa = self.pos_of(builder, anchor);
        let pj = self.pos_of(builder, p_j);
        if self.segment_hits_front(builder, pa, pj) {
            return Err(FrontError::Geometry);
        }

        builder.note_created_edge(self.vertex(anchor), self.vertex(p_j));

        // Walk the two arcs; each keeps the chord via loop adjacency.
        let mut arc1 = Vec::new();
        let mut n = anchor;
        loop {
            arc1.push(self.vertex(n));
            if n == p_j {
                break;
            }
            n = self.next(n);
        }
        let mut arc2 = Vec::new();
        let mut n = p_j;
        loop {
            arc2.push(self.vertex(n));
            if n == anchor {
                break;
            }
            n = self.next(n);
        }
        let chord_len = pa.dist(pj);
        let cell = self.cell;
        let bounds = self.bounds;
        let eps = self.eps;
        let max_edge = self.max_edge_len.max(chord_len);
        let mut f1 = Front::over_vertices(builder, &arc1, bounds, cell, eps, false);
        let mut f2 = Front::over_vertices(builder, &arc2, bounds, cell, eps, false);
        f1.max_edge_len = max_edge;
        f2.max_edge_len = max_edge;
        Ok((f1, f2))
    }

    /// Splice `other` into this front through a bridge quad that consumes
    /// one edge of each loop: this front's `at`->`next(at)` edge and
    /// `other`'s `q`->`next(q)` edge. Used when two fronts of the same
    /// domain meet. The quad is `[at, next(at), q, next(q)]` and must be
    /// pre-validated by the caller.
    pub fn merge_with(
        mut self,
        builder: &mut MeshBuilder,
        at: NodeId,
        other: Front,
        q: NodeId,
    ) -> (Front, AppliedQuad) {
        let r1 = self.next(at);
        let oq_next = other.next(q);
        let quad = [
            self.vertex(at),
            self.vertex(r1),
            other.vertex(q),
            other.vertex(oq_next),
        ];
        builder.push_quad(quad);

        // New loop: ... at -> other[next(q)] ... other[q] -> next(at) ...
        let mut ids = Vec::with_capacity(self.len + other.len);
        let mut n = r1;
        loop {
            ids.push(self.vertex(n));
            if n == at {
                break;
            }
            n = self.next(n);
        }
        let mut n = oq_next;
        loop {
            ids.push(other.vertex(n));
            if n == q {
                break;
            }
            n = other.next(n);
        }
        let bounds = self.bounds;
        let cell = self.cell;
        let eps = self.eps;
        let max_edge = self
            .max_edge_len
            .max(other.max_edge_len)
            .max(builder.pos(quad[1]).dist(builder.pos(quad[2])))
            .max(builder.pos(quad[3]).dist(builder.pos(quad[0])));
        let mut merged = Front::over_vertices(builder, &ids, bounds, cell, eps, false);
        merged.max_edge_len = max_edge;
        (
            merged,
            AppliedQuad {
                quad,
                kind: UpdateKind::SealLeft,
                created: vec![],
            },
        )
    }

    /// The four remaining vertex ids once the front is down to a quad,
    /// starting from the lowest vertex id for determinism.
    pub fn terminal_quad(&self, _builder: &MeshBuilder) -> Option<[u32; 4]> {
        if self.len != 4 {
            return None;
        }
        let ids = self.node_ids();
        let mut verts = [0u32; 4];
        let start = (0..4)
            .min_by_key(|&i| self.vertex(ids[i]))
            .unwrap();
        for k in 0..4 {
            verts[k] = self.vertex(ids[(start + k) % 4]);
        }
        Some(verts)
    }

    /// All-pairs simplicity test; O(n^2), for tests and debug assertions.
    pub fn is_simple(&self, builder: &MeshBuilder) -> bool {
        let pts = self.loop_points(builder);
        let n = pts.len();
        for i in 0..n {
            let (a1, a2) = (pts[i], pts[(i + 1) % n]);
            for j in (i + 1)..n {
                let (b1, b2) = (pts[j], pts[(j + 1) % n]);
                if segment_intersect(a1, a2, b1, b2, self.eps) {
                    return false;
                }
            }
        }
        true
    }
}
