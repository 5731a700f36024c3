//! Planar unstructured quadrilateral mesh generation with an advancing front
//! driven by pluggable policies.
//!
//! The crate is organised bottom-up:
//!
//! - [`geom`]: 2D primitives (angles, segment intersection, circumradius,
//!   the local normalization transform).
//! - [`seeding`]: curvature-adaptive boundary seeding and conformal
//!   harmonization of shared curves.
//! - [`front`]: the evolving front loop, local state extraction, the four
//!   updating types, and even-parity partitioning.
//! - [`mesh`]: the accumulated quad mesh and its incidence bookkeeping.
//! - [`engine`]: the front-loop driver and boundary-layer insertion.
//! - [`net`]: a small self-contained residual MLP with focal/MSE losses and
//!   SGD backpropagation.
//! - [`policy`]: the decision layer (rule baseline, neural policies,
//!   exploration noise).
//! - [`reward`]: element and mesh quality metrics.
//! - [`train`]: boundary generation, dataset extraction, and the two
//!   learning phases.
//!
//! Everything here is pure computation over owned values; file formats, the
//! CLI, and wall-clock measurement live in the companion crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod engine;
pub mod front;
pub mod geom;
pub mod mesh;
pub mod net;
pub mod policy;
pub mod reward;
pub mod seeding;
pub mod train;

mod grid;

pub use geom::{Orientation, Point2};
pub use mesh::QuadMesh;
