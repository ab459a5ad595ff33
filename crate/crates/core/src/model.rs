//! Domain types shared by every stage of the alignment pipeline.
//!
//! All values are immutable after construction and validated on the way in,
//! so downstream code can rely on the invariants without re-checking them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, GeometryError, Result};
use crate::geometry::primitives::{segment_intersection, signed_area, SegmentIntersection};

/// Default tolerance for vertex distinctness and geometric predicates, in map units.
pub const DEFAULT_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Total lexicographic order on (x, y), used for deterministic tie-breaks.
    pub fn lex_cmp(&self, other: &Point) -> std::cmp::Ordering {
        self.x
            .total_cmp(&other.x)
            .then_with(|| self.y.total_cmp(&other.y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryKind {
    Point,
    Polyline,
    Polygon,
}

impl GeometryKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            GeometryKind::Point => "point",
            GeometryKind::Polyline => "polyline",
            GeometryKind::Polygon => "polygon",
        }
    }
}

impl fmt::Display for GeometryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A point, polyline or simple polygon ring in map-local units.
///
/// Polygon rings are stored open (first vertex != last vertex); the closing
/// edge is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    kind: GeometryKind,
    vertices: Vec<Point>,
}

impl Geometry {
    pub fn point(p: Point) -> Result<Self, GeometryError> {
        if !p.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        Ok(Geometry {
            kind: GeometryKind::Point,
            vertices: vec![p],
        })
    }

    pub fn polyline(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        Self::polyline_with_eps(vertices, DEFAULT_EPSILON)
    }

    pub fn polyline_with_eps(vertices: Vec<Point>, eps: f64) -> Result<Self, GeometryError> {
        check_finite(&vertices)?;
        if vertices.len() < 2 {
            return Err(GeometryError::TooFewVertices {
                kind: "polyline",
                min: 2,
                got: vertices.len(),
            });
        }
        for (i, w) in vertices.windows(2).enumerate() {
            if w[0].distance(&w[1]) <= eps {
                return Err(GeometryError::RepeatedVertex {
                    index: i,
                    next: i + 1,
                });
            }
        }
        Ok(Geometry {
            kind: GeometryKind::Polyline,
            vertices,
        })
    }

    /// Builds a polygon from an outer ring. A trailing vertex equal to the
    /// first one (GeoJSON closure) is dropped.
    pub fn polygon(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        Self::polygon_with_eps(vertices, DEFAULT_EPSILON)
    }

    pub fn polygon_with_eps(mut vertices: Vec<Point>, eps: f64) -> Result<Self, GeometryError> {
        check_finite(&vertices)?;
        if vertices.len() >= 2 && vertices[0].distance(&vertices[vertices.len() - 1]) <= eps {
            vertices.pop();
        }
        let n = vertices.len();
        if n < 3 {
            return Err(GeometryError::TooFewVertices {
                kind: "polygon",
                min: 3,
                got: n,
            });
        }
        for i in 0..n {
            let j = (i + 1) % n;
            if vertices[i].distance(&vertices[j]) <= eps {
                return Err(GeometryError::RepeatedVertex { index: i, next: j });
            }
        }
        if signed_area(&vertices).abs() <= eps {
            return Err(GeometryError::ZeroArea);
        }
        check_simple_ring(&vertices, eps)?;
        Ok(Geometry {
            kind: GeometryKind::Polygon,
            vertices,
        })
    }

    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// Edges of the geometry. A point yields one degenerate edge, a polygon
    /// includes its closing edge.
    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let v = &self.vertices;
        let n = v.len();
        let count = match self.kind {
            GeometryKind::Point => 1,
            GeometryKind::Polyline => n - 1,
            GeometryKind::Polygon => n,
        };
        (0..count).map(move |i| (v[i], v[(i + 1) % n]))
    }

    /// Axis-aligned bounding box as (min, max).
    pub fn bbox(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    /// Applies `f` to every vertex without re-validating. Only meant for
    /// non-degenerate affine maps, which preserve every invariant.
    pub(crate) fn map_points(&self, f: impl Fn(Point) -> Point) -> Geometry {
        Geometry {
            kind: self.kind,
            vertices: self.vertices.iter().map(|p| f(*p)).collect(),
        }
    }
}

fn check_finite(vertices: &[Point]) -> Result<(), GeometryError> {
    if vertices.iter().all(Point::is_finite) {
        Ok(())
    } else {
        Err(GeometryError::NonFinite)
    }
}

fn check_simple_ring(v: &[Point], eps: f64) -> Result<(), GeometryError> {
    let n = v.len();
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        for j in (i + 1)..n {
            let (c, d) = (v[j], v[(j + 1) % n]);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            match segment_intersection(a, b, c, d, eps) {
                SegmentIntersection::None => {}
                SegmentIntersection::Overlap(_, _) => {
                    return Err(GeometryError::SelfIntersection {
                        first: i,
                        second: j,
                    })
                }
                SegmentIntersection::Point(p) => {
                    // adjacent edges may only meet at their shared vertex
                    let shared = if j == i + 1 { b } else { a };
                    if !adjacent || p.distance(&shared) > eps {
                        return Err(GeometryError::SelfIntersection {
                            first: i,
                            second: j,
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    id: String,
    name: Option<String>,
    geometry: Geometry,
}

impl Entity {
    pub fn new(id: impl Into<String>, name: Option<String>, geometry: Geometry) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::InvalidEntity("empty id".into()));
        }
        if let Some(n) = &name {
            if n.trim().is_empty() {
                return Err(Error::InvalidEntity(format!("entity \"{id}\": blank name")));
            }
        }
        Ok(Entity { id, name, geometry })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn kind(&self) -> GeometryKind {
        self.geometry.kind
    }

    pub fn without_name(&self) -> Entity {
        Entity {
            name: None,
            ..self.clone()
        }
    }

    pub(crate) fn with_geometry(&self, geometry: Geometry) -> Entity {
        Entity {
            id: self.id.clone(),
            name: self.name.clone(),
            geometry,
        }
    }
}

/// All entities extracted from one map.
#[derive(Debug, Clone, PartialEq)]
pub struct MapLayer {
    map_id: String,
    year: i32,
    georeferenced: bool,
    entities: Vec<Entity>,
    by_id: BTreeMap<String, usize>,
}

impl MapLayer {
    pub fn new(
        map_id: impl Into<String>,
        year: i32,
        georeferenced: bool,
        entities: Vec<Entity>,
    ) -> Result<Self> {
        if year <= 0 {
            return Err(Error::InvalidParameter(format!(
                "map year must be positive, got {year}"
            )));
        }
        let mut by_id = BTreeMap::new();
        for (i, e) in entities.iter().enumerate() {
            if by_id.insert(e.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(e.id.clone()));
            }
        }
        Ok(MapLayer {
            map_id: map_id.into(),
            year,
            georeferenced,
            entities,
            by_id,
        })
    }

    pub fn map_id(&self) -> &str {
        &self.map_id
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn georeferenced(&self) -> bool {
        self.georeferenced
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&Entity> {
        self.index_of(id).map(|i| &self.entities[i])
    }

    /// Bounding box of all vertices, `None` for an empty layer.
    pub fn bbox(&self) -> Option<(Point, Point)> {
        self.entities.iter().map(|e| e.geometry.bbox()).reduce(|a, b| {
            (
                Point::new(a.0.x.min(b.0.x), a.0.y.min(b.0.y)),
                Point::new(a.1.x.max(b.1.x), a.1.y.max(b.1.y)),
            )
        })
    }

    /// New layer with every vertex passed through `f`. Ids, labels, kinds
    /// and vertex counts are preserved.
    pub(crate) fn map_points(&self, f: impl Fn(Point) -> Point) -> MapLayer {
        MapLayer {
            entities: self
                .entities
                .iter()
                .map(|e| e.with_geometry(e.geometry.map_points(&f)))
                .collect(),
            ..self.clone()
        }
    }

    pub fn with_entities(&self, entities: Vec<Entity>) -> Result<MapLayer> {
        MapLayer::new(self.map_id.clone(), self.year, self.georeferenced, entities)
    }

    pub fn with_georeferenced(&self, georeferenced: bool) -> MapLayer {
        MapLayer {
            georeferenced,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Text,
    Topo,
    Dist,
    Approx,
    Refined,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Text => "text",
            Provenance::Topo => "topo",
            Provenance::Dist => "dist",
            Provenance::Approx => "approx",
            Provenance::Refined => "refined",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "text" => Provenance::Text,
            "topo" => Provenance::Topo,
            "dist" => Provenance::Dist,
            "approx" => Provenance::Approx,
            "refined" => Provenance::Refined,
            other => return Err(format!("unknown provenance \"{other}\"")),
        })
    }
}

/// Which measurement a pair's score value holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScoreMetric {
    #[serde(rename = "EDC")]
    Edc,
    #[serde(rename = "EDV")]
    Edv,
    #[serde(rename = "HDV")]
    Hdv,
    #[serde(rename = "EDNP")]
    Ednp,
    #[serde(rename = "inn_jaccard")]
    InnJaccard,
    #[serde(rename = "overlap_ratio")]
    OverlapRatio,
}

impl ScoreMetric {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScoreMetric::Edc => "EDC",
            ScoreMetric::Edv => "EDV",
            ScoreMetric::Hdv => "HDV",
            ScoreMetric::Ednp => "EDNP",
            ScoreMetric::InnJaccard => "inn_jaccard",
            ScoreMetric::OverlapRatio => "overlap_ratio",
        }
    }
}

impl fmt::Display for ScoreMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreMetric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "EDC" => ScoreMetric::Edc,
            "EDV" => ScoreMetric::Edv,
            "HDV" => ScoreMetric::Hdv,
            "EDNP" => ScoreMetric::Ednp,
            "inn_jaccard" => ScoreMetric::InnJaccard,
            "overlap_ratio" => ScoreMetric::OverlapRatio,
            other => return Err(format!("unknown metric \"{other}\"")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore {
    pub metric: ScoreMetric,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentPair {
    pub id_a: String,
    pub id_b: String,
    pub provenance: Provenance,
    pub score: Option<PairScore>,
}

impl AlignmentPair {
    pub fn new(id_a: impl Into<String>, id_b: impl Into<String>, provenance: Provenance) -> Self {
        AlignmentPair {
            id_a: id_a.into(),
            id_b: id_b.into(),
            provenance,
            score: None,
        }
    }

    pub fn with_score(mut self, metric: ScoreMetric, value: f64) -> Self {
        self.score = Some(PairScore { metric, value });
        self
    }
}

/// A one-to-one set of cross-map pairs, ordered by `id_a`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlignmentResult {
    by_a: BTreeMap<String, AlignmentPair>,
    by_b: BTreeMap<String, String>,
}

impl AlignmentResult {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = AlignmentPair>) -> Result<Self> {
        let mut result = AlignmentResult::new();
        for p in pairs {
            result.insert(p)?;
        }
        Ok(result)
    }

    /// Adds a pair, failing if either side is already taken.
    pub fn insert(&mut self, pair: AlignmentPair) -> Result<()> {
        if self.by_a.contains_key(&pair.id_a) {
            return Err(Error::OneToOneViolation {
                side: 'a',
                id: pair.id_a,
            });
        }
        if self.by_b.contains_key(&pair.id_b) {
            return Err(Error::OneToOneViolation {
                side: 'b',
                id: pair.id_b,
            });
        }
        self.by_b.insert(pair.id_b.clone(), pair.id_a.clone());
        self.by_a.insert(pair.id_a.clone(), pair);
        Ok(())
    }

    /// Adds a pair only if both sides are free. Returns whether it was added.
    pub fn try_insert(&mut self, pair: AlignmentPair) -> bool {
        if self.by_a.contains_key(&pair.id_a) || self.by_b.contains_key(&pair.id_b) {
            return false;
        }
        self.by_b.insert(pair.id_b.clone(), pair.id_a.clone());
        self.by_a.insert(pair.id_a.clone(), pair);
        true
    }

    pub fn len(&self) -> usize {
        self.by_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_a.is_empty()
    }

    /// Pairs sorted by (id_a, id_b).
    pub fn pairs(&self) -> impl Iterator<Item = &AlignmentPair> {
        self.by_a.values()
    }

    pub fn partner_of_a(&self, id_a: &str) -> Option<&str> {
        self.by_a.get(id_a).map(|p| p.id_b.as_str())
    }

    pub fn partner_of_b(&self, id_b: &str) -> Option<&str> {
        self.by_b.get(id_b).map(String::as_str)
    }

    pub fn contains(&self, id_a: &str, id_b: &str) -> bool {
        self.partner_of_a(id_a) == Some(id_b)
    }

    pub fn get(&self, id_a: &str) -> Option<&AlignmentPair> {
        self.by_a.get(id_a)
    }

    pub fn id_pairs(&self) -> BTreeSet<(String, String)> {
        self.pairs()
            .map(|p| (p.id_a.clone(), p.id_b.clone()))
            .collect()
    }

    /// Keeps the pairs for which `keep` returns true.
    pub fn filtered(&self, mut keep: impl FnMut(&AlignmentPair) -> bool) -> AlignmentResult {
        let mut out = AlignmentResult::new();
        for p in self.pairs() {
            if keep(p) {
                out.try_insert(p.clone());
            }
        }
        out
    }

    /// Same pairs with sides swapped.
    pub fn swapped(&self) -> AlignmentResult {
        let mut out = AlignmentResult::new();
        for p in self.pairs() {
            out.try_insert(AlignmentPair {
                id_a: p.id_b.clone(),
                id_b: p.id_a.clone(),
                provenance: p.provenance,
                score: p.score,
            });
        }
        out
    }

    /// Checks that every pair references existing entities of equal kind.
    pub fn validate_against(&self, a: &MapLayer, b: &MapLayer) -> Result<()> {
        for p in self.pairs() {
            let ea = a.get(&p.id_a).ok_or_else(|| Error::UnknownEntity {
                side: 'a',
                id: p.id_a.clone(),
            })?;
            let eb = b.get(&p.id_b).ok_or_else(|| Error::UnknownEntity {
                side: 'b',
                id: p.id_b.clone(),
            })?;
            if ea.kind() != eb.kind() {
                return Err(Error::KindMismatch {
                    id_a: p.id_a.clone(),
                    id_b: p.id_b.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Reference pairs used for evaluation; one-to-one on each side.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pairs: BTreeSet<(String, String)>,
}

impl GroundTruth {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut seen_a = BTreeSet::new();
        let mut seen_b = BTreeSet::new();
        let mut set = BTreeSet::new();
        for (a, b) in pairs {
            if !seen_a.insert(a.clone()) {
                return Err(Error::OneToOneViolation { side: 'a', id: a });
            }
            if !seen_b.insert(b.clone()) {
                return Err(Error::OneToOneViolation { side: 'b', id: b });
            }
            set.insert((a, b));
        }
        Ok(GroundTruth { pairs: set })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, id_a: &str, id_b: &str) -> bool {
        self.pairs.contains(&(id_a.to_string(), id_b.to_string()))
    }

    pub fn pairs(&self) -> impl Iterator<Item = &(String, String)> {
        self.pairs.iter()
    }
}
