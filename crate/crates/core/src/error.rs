use std::path::PathBuf;

use thiserror::Error;

/// Reasons a vertex list cannot form a valid geometry.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("coordinate is not finite")]
    NonFinite,
    #[error("{kind} needs at least {min} distinct vertices, got {got}")]
    TooFewVertices {
        kind: &'static str,
        min: usize,
        got: usize,
    },
    #[error("consecutive vertices {index} and {next} coincide")]
    RepeatedVertex { index: usize, next: usize },
    #[error("polygon ring self-intersects between edges {first} and {second}")]
    SelfIntersection { first: usize, second: usize },
    #[error("polygon ring has zero area")]
    ZeroArea,
    #[error("expected a {expected} geometry, got {got}")]
    WrongKind {
        expected: &'static str,
        got: &'static str,
    },
    #[error("buffer distance must be positive, got {0}")]
    NonPositiveBuffer(f64),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("duplicate entity id \"{0}\"")]
    DuplicateId(String),
    #[error("entity \"{id}\": unsupported geometry type {geometry_type}")]
    UnsupportedGeometry { id: String, geometry_type: String },
    #[error("entity \"{id}\": {source}")]
    DegenerateGeometry {
        id: String,
        #[source]
        source: GeometryError,
    },
    #[error("invalid entity: {0}")]
    InvalidEntity(String),
    #[error("missing column \"{0}\"")]
    MissingColumn(String),
    #[error("one-to-one violation: id \"{id}\" appears more than once on side {side}")]
    OneToOneViolation { side: char, id: String },
    #[error("unknown entity \"{id}\" on side {side}")]
    UnknownEntity { side: char, id: String },
    #[error("pair ({id_a}, {id_b}) joins entities of different geometry kinds")]
    KindMismatch { id_a: String, id_b: String },
    #[error("insufficient control points: {found} found, at least 3 required")]
    InsufficientControlPoints { found: usize },
    #[error("control points are collinear or the fitted transform is singular")]
    DegenerateConfiguration,
    #[error("layers are not co-registered: their extents do not overlap")]
    FramesNotAligned,
    #[error("no cross-layer candidate pairs of the same geometry kind")]
    NoCandidatePairs,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
