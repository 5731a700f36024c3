//! The accumulated quad mesh and its incidence bookkeeping.
//!
//! Vertex valence here counts mesh edges created during meshing; edges of the
//! input boundary polyline never count. That convention makes the vertex
//! status encoding line up for both interior and boundary vertices: an
//! interior vertex is regular at 4 created edges, a boundary vertex is
//! regular with up to two interior edges.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::geom::Point2;

/// Where a mesh came from: input domain, policy that drove the run, episode.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Provenance {
    pub domain_id: u64,
    pub policy_id: String,
    pub episode: u64,
}

/// An all-quad mesh: vertices, counter-clockwise quads, boundary flags.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadMesh {
    pub vertices: Vec<Point2>,
    pub quads: Vec<[u32; 4]>,
    pub on_boundary: Vec<bool>,
    pub provenance: Provenance,
}

/// Vertex status derived from valence: `v - 4` for interior vertices; for
/// boundary vertices `-0.5` below two interior edges, otherwise `v - 2`.
#[inline]
pub fn ep_status(valence: u32, on_boundary: bool) -> f64 {
    if on_boundary {
        if valence < 2 {
            -0.5
        } else {
            valence as f64 - 2.0
        }
    } else {
        valence as f64 - 4.0
    }
}

/// A status away from 0 and -0.5 marks an extraordinary vertex.
#[inline]
pub fn is_extraordinary(status: f64) -> bool {
    status != 0.0 && status != -0.5
}

#[inline]
fn key(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl QuadMesh {
    /// Map undirected edge -> number of incident quads.
    pub fn edge_incidence(&self) -> alloc::collections::BTreeMap<(u32, u32), u32> {
        let mut map = alloc::collections::BTreeMap::new();
        for q in &self.quads {
            for i in 0..4 {
                let e = key(q[i], q[(i + 1) % 4]);
                *map.entry(e).or_insert(0) += 1;
            }
        }
        map
    }

    /// Every edge must bound one quad (mesh boundary) or exactly two.
    pub fn is_conforming(&self) -> bool {
        if self.quads.is_empty() {
            return false;
        }
        for q in &self.quads {
            let mut s = *q;
            s.sort_unstable();
            if s.windows(2).any(|w| w[0] == w[1]) {
                return false;
            }
            if q.iter().any(|&v| v as usize >= self.vertices.len()) {
                return false;
            }
        }
        self.edge_incidence().values().all(|&c| c == 1 || c == 2)
    }

    /// Undirected edges lying on the mesh boundary (incident to one quad).
    pub fn boundary_edges(&self) -> Vec<(u32, u32)> {
        self.edge_incidence()
            .into_iter()
            .filter(|&(_, c)| c == 1)
            .map(|(e, _)| e)
            .collect()
    }

    /// Per-vertex count of interior (non-boundary) mesh edges, the valence
    /// convention used throughout for vertex status.
    pub fn interior_valences(&self) -> Vec<u32> {
        let mut val = vec![0u32; self.vertices.len()];
        for (&(a, b), &c) in self.edge_incidence().iter() {
            if c >= 2 {
                val[a as usize] += 1;
                val[b as usize] += 1;
            }
        }
        val
    }

    /// Vertex statuses recomputed from connectivity alone.
    pub fn ep_statuses(&self) -> Vec<f64> {
        self.interior_valences()
            .iter()
            .zip(self.on_boundary.iter())
            .map(|(&v, &b)| ep_status(v, b))
            .collect()
    }

    pub fn quad_points(&self, q: usize) -> [Point2; 4] {
        let ids = self.quads[q];
        [
            self.vertices[ids[0] as usize],
            self.vertices[ids[1] as usize],
            self.vertices[ids[2] as usize],
            self.vertices[ids[3] as usize],
        ]
    }
}

/// Growable mesh state shared by all fronts of one meshing run.
///
/// Fronts reference vertices by the ids handed out here, so valence updates
/// made while meshing one subfront stay visible to its siblings.
#[derive(Clone, Debug)]
pub struct MeshBuilder {
    pos: Vec<Point2>,
    on_boundary: Vec<bool>,
    valence: Vec<u32>,
    quads: Vec<[u32; 4]>,
    /// Edges created during meshing (valence-bearing).
    created: BTreeSet<(u32, u32)>,
    /// Edges of the seeded input polyline (never valence-bearing).
    polyline: BTreeSet<(u32, u32)>,
}

impl MeshBuilder {
    pub fn new() -> Self {
        Self {
            pos: Vec::new(),
            on_boundary: Vec::new(),
            valence: Vec::new(),
            quads: Vec::new(),
            created: BTreeSet::new(),
            polyline: BTreeSet::new(),
        }
    }

    pub fn add_vertex(&mut self, p: Point2, on_boundary: bool) -> u32 {
        let id = self.pos.len() as u32;
        self.pos.push(p);
        self.on_boundary.push(on_boundary);
        self.valence.push(0);
        id
    }

    #[inline]
    pub fn pos(&self, v: u32) -> Point2 {
        self.pos[v as usize]
    }

    #[inline]
    pub fn on_boundary(&self, v: u32) -> bool {
        self.on_boundary[v as usize]
    }

    #[inline]
    pub fn valence(&self, v: u32) -> u32 {
        self.valence[v as usize]
    }

    #[inline]
    pub fn ep_status(&self, v: u32) -> f64 {
        ep_status(self.valence(v), self.on_boundary(v))
    }

    #[inline]
    pub fn vertex_count(&self) -> usize {
        self.pos.len()
    }

    #[inline]
    pub fn quad_count(&self) -> usize {
        self.quads.len()
    }

    #[inline]
    pub fn quads(&self) -> &[[u32; 4]] {
        &self.quads
    }

    pub fn created_edges(&self) -> &BTreeSet<(u32, u32)> {
        &self.created
    }

    pub fn polyline_edges(&self) -> &BTreeSet<(u32, u32)> {
        &self.polyline
    }

    /// Mark `a`-`b` as an input-boundary edge (called while seeding fronts).
    pub fn register_polyline_edge(&mut self, a: u32, b: u32) {
        self.polyline.insert(key(a, b));
    }

    /// Record a meshing-created edge. Counts toward valence once; polyline
    /// edges and repeats are ignored. Returns whether the edge was new.
    pub fn note_created_edge(&mut self, a: u32, b: u32) -> bool {
        let k = key(a, b);
        if self.polyline.contains(&k) || !self.created.insert(k) {
            return false;
        }
        self.valence[a as usize] += 1;
        self.valence[b as usize] += 1;
        true
    }

    /// Append a counter-clockwise quad, registering its edges.
    pub fn push_quad(&mut self, q: [u32; 4]) {
        for i in 0..4 {
            self.note_created_edge(q[i], q[(i + 1) % 4]);
        }
        self.quads.push(q);
    }

    pub fn quad_points(&self, q: [u32; 4]) -> [Point2; 4] {
        [
            self.pos(q[0]),
            self.pos(q[1]),
            self.pos(q[2]),
            self.pos(q[3]),
        ]
    }

    pub fn finish(self, provenance: Provenance) -> QuadMesh {
        QuadMesh {
            vertices: self.pos,
            quads: self.quads,
            on_boundary: self.on_boundary,
            provenance,
        }
    }
}

impl Default for MeshBuilder {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    /// 2x2 structured grid of unit quads.
    fn grid2x2() -> QuadMesh {
        let mut b = MeshBuilder::new();
        let mut ids = [[0u32; 3]; 3];
        for j in 0..3 {
            for i in 0..3 {
                let on_b = i == 0 || j == 0 || i == 2 || j == 2;
                ids[j][i] = b.add_vertex(p(i as f64, j as f64), on_b);
            }
        }
        for j in 0..2 {
            for i in 0..2 {
                b.push_quad([ids[j][i], ids[j][i + 1], ids[j + 1][i + 1], ids[j + 1][i]]);
            }
        }
        b.finish(Provenance::default())
    }

    #[test]
    fn grid_is_conforming_and_regular() {
        let m = grid2x2();
        assert!(m.is_conforming());
        let statuses = m.ep_statuses();
        // Center vertex: 4 interior edges -> 0. Edge midpoints: 1 interior
        // edge -> -0.5. Corners: 0 interior edges -> -0.5.
        assert!(statuses.iter().all(|&s| !is_extraordinary(s)));
        let center = statuses[4];
        assert_eq!(center, 0.0);
    }

    #[test]
    fn single_quad_all_regular() {
        let mut b = MeshBuilder::new();
        let v: alloc::vec::Vec<u32> = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
            .iter()
            .map(|&(x, y)| b.add_vertex(p(x, y), true))
            .collect();
        b.push_quad([v[0], v[1], v[2], v[3]]);
        let m = b.finish(Provenance::default());
        assert!(m.is_conforming());
        assert_eq!(m.ep_statuses(), alloc::vec![-0.5; 4]);
    }

    #[test]
    fn polyline_edges_do_not_count() {
        let mut b = MeshBuilder::new();
        let a = b.add_vertex(p(0.0, 0.0), true);
        let c = b.add_vertex(p(1.0, 0.0), true);
        b.register_polyline_edge(a, c);
        assert!(!b.note_created_edge(a, c));
        assert_eq!(b.valence(a), 0);
        assert_eq!(b.ep_status(a), -0.5);
    }

    #[test]
    fn created_edge_counts_once() {
        let mut b = MeshBuilder::new();
        let a = b.add_vertex(p(0.0, 0.0), false);
        let c = b.add_vertex(p(1.0, 0.0), false);
        assert!(b.note_created_edge(a, c));
        assert!(!b.note_created_edge(c, a));
        assert_eq!(b.valence(a), 1);
        assert_eq!(b.valence(c), 1);
    }
}
