//! One-to-one alignment of vector entities extracted from two historical
//! maps.
//!
//! The pipeline seeds an alignment from matching text labels, fits an affine
//! transform from control points derived from those seeds, and classifies
//! the remaining entities using spatial distances, immediate-nearby-neighbour
//! topology and buffered approximate topological relations. When too few
//! control points exist it falls back to purely topological propagation.

pub mod classify;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod model;
pub mod textalign;
pub mod rubbersheet;
pub mod synth;
pub mod topology;
pub mod workflow;

pub use error::{Error, GeometryError, Result};
pub use model::{
    AlignmentPair, AlignmentResult, Entity, Geometry, GeometryKind, GroundTruth, MapLayer,
    PairScore, Point, Provenance, ScoreMetric, DEFAULT_EPSILON,
};
