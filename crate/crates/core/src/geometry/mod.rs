//! Geometric kernel: distances, nearest points, angles, buffers, areas and
//! the open-segment blocking test behind INN computation.
//!
//! Geometries are point sets: a point, the union of a polyline's segments,
//! or the closed region bounded by a polygon ring.

mod buffer;
mod index;
pub mod primitives;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::model::{Geometry, GeometryKind, MapLayer, Point, DEFAULT_EPSILON};
use primitives::{
    closest_on_segment, cross, dot, locate_in_ring, segment_intersection, signed_area, sub,
    Location, SegmentIntersection,
};

pub use buffer::{buffer, intersection_area, Region, QUARTER_CIRCLE_SEGMENTS};
pub use index::SpatialIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DistanceMetric {
    /// Distance between centroids.
    #[serde(rename = "EDC")]
    Edc,
    /// Minimum distance over vertex pairs.
    #[serde(rename = "EDV")]
    Edv,
    /// Discrete Hausdorff distance over the vertex sets.
    #[serde(rename = "HDV")]
    Hdv,
    /// Distance between the nearest points of the two point sets.
    #[serde(rename = "EDNP")]
    Ednp,
}

impl DistanceMetric {
    pub const ALL: [DistanceMetric; 4] = [
        DistanceMetric::Edc,
        DistanceMetric::Edv,
        DistanceMetric::Hdv,
        DistanceMetric::Ednp,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DistanceMetric::Edc => "EDC",
            DistanceMetric::Edv => "EDV",
            DistanceMetric::Hdv => "HDV",
            DistanceMetric::Ednp => "EDNP",
        }
    }

    pub fn score_metric(&self) -> crate::model::ScoreMetric {
        use crate::model::ScoreMetric;
        match self {
            DistanceMetric::Edc => ScoreMetric::Edc,
            DistanceMetric::Edv => ScoreMetric::Edv,
            DistanceMetric::Hdv => ScoreMetric::Hdv,
            DistanceMetric::Ednp => ScoreMetric::Ednp,
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DistanceMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "EDC" => Ok(DistanceMetric::Edc),
            "EDV" => Ok(DistanceMetric::Edv),
            "HDV" => Ok(DistanceMetric::Hdv),
            "EDNP" => Ok(DistanceMetric::Ednp),
            _ => Err(format!("unknown distance metric \"{s}\"")),
        }
    }
}

/// Point centroid, length-weighted centroid of a polyline, or area centroid
/// of a polygon.
pub fn centroid(g: &Geometry) -> Point {
    let v = g.vertices();
    match g.kind() {
        GeometryKind::Point => v[0],
        GeometryKind::Polyline => {
            let (mut sx, mut sy, mut total) = (0.0, 0.0, 0.0);
            for (a, b) in g.segments() {
                let len = a.distance(&b);
                sx += len * (a.x + b.x) / 2.0;
                sy += len * (a.y + b.y) / 2.0;
                total += len;
            }
            Point::new(sx / total, sy / total)
        }
        GeometryKind::Polygon => {
            // relative to the first vertex for conditioning
            let o = v[0];
            let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
            for i in 1..v.len() - 1 {
                let p = sub(v[i], o);
                let q = sub(v[i + 1], o);
                let c = cross(p, q);
                a2 += c;
                cx += (p.x + q.x) * c;
                cy += (p.y + q.y) * c;
            }
            Point::new(o.x + cx / (3.0 * a2), o.y + cy / (3.0 * a2))
        }
    }
}

/// Unsigned shoelace area of a polygon.
pub fn area(p: &Geometry) -> Result<f64, GeometryError> {
    expect_kind(p, GeometryKind::Polygon)?;
    Ok(signed_area(p.vertices()).abs())
}

fn expect_kind(g: &Geometry, kind: GeometryKind) -> Result<(), GeometryError> {
    if g.kind() == kind {
        Ok(())
    } else {
        Err(GeometryError::WrongKind {
            expected: kind.as_str(),
            got: g.kind().as_str(),
        })
    }
}

pub fn distance(metric: DistanceMetric, a: &Geometry, b: &Geometry) -> f64 {
    match metric {
        DistanceMetric::Edc => centroid(a).distance(&centroid(b)),
        DistanceMetric::Edv => {
            let mut best = f64::INFINITY;
            for p in a.vertices() {
                for q in b.vertices() {
                    best = best.min(p.distance(q));
                }
            }
            best
        }
        DistanceMetric::Hdv => directed_hausdorff(a.vertices(), b.vertices())
            .max(directed_hausdorff(b.vertices(), a.vertices())),
        DistanceMetric::Ednp => {
            let (p, q) = nearest_points(a, b);
            p.distance(&q)
        }
    }
}

fn directed_hausdorff(from: &[Point], to: &[Point]) -> f64 {
    from.iter()
        .map(|p| to.iter().map(|q| p.distance(q)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Whether the two point sets share at least one point.
pub fn intersects(a: &Geometry, b: &Geometry) -> bool {
    let eps = DEFAULT_EPSILON;
    if !bbox_overlap(a.bbox(), b.bbox(), eps) {
        return false;
    }
    for (p, q) in a.segments() {
        for (r, s) in b.segments() {
            if segment_intersection(p, q, r, s, eps) != SegmentIntersection::None {
                return true;
            }
        }
    }
    contains_vertex(a, b) || contains_vertex(b, a)
}

/// Does polygon `outer` contain the first vertex of `inner`? Only meaningful
/// once boundary crossings are ruled out.
fn contains_vertex(outer: &Geometry, inner: &Geometry) -> bool {
    outer.kind() == GeometryKind::Polygon
        && locate_in_ring(inner.vertices()[0], outer.vertices(), DEFAULT_EPSILON) != Location::Outside
}

fn bbox_overlap(a: (Point, Point), b: (Point, Point), pad: f64) -> bool {
    a.0.x <= b.1.x + pad && b.0.x <= a.1.x + pad && a.0.y <= b.1.y + pad && b.0.y <= a.1.y + pad
}

fn lex_pair_cmp(a: &(Point, Point), b: &(Point, Point)) -> Ordering {
    a.0.lex_cmp(&b.0).then_with(|| a.1.lex_cmp(&b.1))
}

/// Nearest points of `a` and `b`.
///
/// When the geometries intersect both points are the lexicographically
/// smallest point of the intersection. Otherwise the closest pair is
/// returned, ties broken by the lexicographically smallest pair.
pub fn nearest_points(a: &Geometry, b: &Geometry) -> (Point, Point) {
    let eps = DEFAULT_EPSILON;
    let mut shared: Option<Point> = None;
    let mut keep_min = |c: Point| {
        if shared.is_none_or(|s| c.lex_cmp(&s) == Ordering::Less) {
            shared = Some(c);
        }
    };
    for (p, q) in a.segments() {
        for (r, s) in b.segments() {
            match segment_intersection(p, q, r, s, eps) {
                SegmentIntersection::None => {}
                SegmentIntersection::Point(x) => keep_min(x),
                SegmentIntersection::Overlap(x, y) => {
                    keep_min(x);
                    keep_min(y);
                }
            }
        }
    }
    for (outer, inner) in [(a, b), (b, a)] {
        if outer.kind() == GeometryKind::Polygon {
            for v in inner.vertices() {
                if locate_in_ring(*v, outer.vertices(), eps) != Location::Outside {
                    keep_min(*v);
                }
            }
        }
    }
    if let Some(x) = shared {
        return (x, x);
    }

    let mut best: Option<(f64, (Point, Point))> = None;
    let mut consider = |d: f64, pair: (Point, Point)| match best {
        None => best = Some((d, pair)),
        Some((bd, bp)) => {
            if d < bd - eps || ((d - bd).abs() <= eps && lex_pair_cmp(&pair, &bp) == Ordering::Less) {
                best = Some((d.min(bd), pair));
            }
        }
    };
    for (p, q) in a.segments() {
        for (r, s) in b.segments() {
            for v in [p, q] {
                let (c, _) = closest_on_segment(r, s, v);
                consider(v.distance(&c), (v, c));
            }
            for v in [r, s] {
                let (c, _) = closest_on_segment(p, q, v);
                consider(v.distance(&c), (c, v));
            }
        }
    }
    best.expect("geometries have at least one vertex").1
}

/// Acute angle in degrees between the dominant directions of two polylines.
///
/// The dominant direction is the first principal axis of the centred
/// vertices, or the first-to-last chord when there are only two vertices or
/// the axes are degenerate.
pub fn principal_angle(a: &Geometry, b: &Geometry) -> Result<f64, GeometryError> {
    expect_kind(a, GeometryKind::Polyline)?;
    expect_kind(b, GeometryKind::Polyline)?;
    let da = dominant_direction(a.vertices());
    let db = dominant_direction(b.vertices());
    let mut diff = (da - db).abs() % 180.0;
    if diff > 90.0 {
        diff = 180.0 - diff;
    }
    Ok(diff)
}

/// Direction of a vertex set in degrees, in [0, 180).
fn dominant_direction(v: &[Point]) -> f64 {
    let chord = || {
        let (a, b) = (v[0], v[v.len() - 1]);
        (b.y - a.y).atan2(b.x - a.x).to_degrees()
    };
    let angle = if v.len() <= 2 {
        chord()
    } else {
        let n = v.len() as f64;
        let mx = v.iter().map(|p| p.x).sum::<f64>() / n;
        let my = v.iter().map(|p| p.y).sum::<f64>() / n;
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for p in v {
            let (dx, dy) = (p.x - mx, p.y - my);
            sxx += dx * dx;
            syy += dy * dy;
            sxy += dx * dy;
        }
        let trace = sxx + syy;
        let gap = ((sxx - syy).powi(2) + 4.0 * sxy * sxy).sqrt();
        if trace <= 0.0 || gap <= 1e-9 * trace {
            chord()
        } else {
            (0.5 * (2.0 * sxy).atan2(sxx - syy)).to_degrees()
        }
    };
    angle.rem_euclid(180.0)
}

/// True iff the open segment `pq` meets the point set of `g`.
pub(crate) fn open_segment_hits(p: Point, q: Point, g: &Geometry) -> bool {
    let eps = DEFAULT_EPSILON;
    let len = p.distance(&q);
    if len <= eps {
        return false;
    }
    let (glo, ghi) = g.bbox();
    let seg_box = (
        Point::new(p.x.min(q.x), p.y.min(q.y)),
        Point::new(p.x.max(q.x), p.y.max(q.y)),
    );
    if !bbox_overlap(seg_box, (glo, ghi), eps) {
        return false;
    }
    let dir = sub(q, p);
    let param = |x: Point| dot(sub(x, p), dir) / (len * len);
    let interior = |t: f64| t * len > eps && (1.0 - t) * len > eps;
    for (r, s) in g.segments() {
        match segment_intersection(p, q, r, s, eps) {
            SegmentIntersection::None => {}
            SegmentIntersection::Point(x) => {
                if interior(param(x)) {
                    return true;
                }
            }
            SegmentIntersection::Overlap(x, y) => {
                let (t0, t1) = (param(x), param(y));
                // any overlap of positive length reaches the open interior
                if interior(t0) || interior(t1) || (t0.min(t1) <= 0.0 && t0.max(t1) >= 1.0) {
                    return true;
                }
            }
        }
    }
    // no boundary contact inside the open segment: it lies wholly inside or outside
    g.kind() == GeometryKind::Polygon
        && locate_in_ring(
            Point::new((p.x + q.x) / 2.0, (p.y + q.y) / 2.0),
            g.vertices(),
            eps,
        ) == Location::Inside
}

/// True iff the open segment `pq` meets any entity of `layer` other than
/// the two named in `exclude`. A zero-length segment is never blocked.
///
/// This is a linear scan; [`SpatialIndex::segment_blocked`] gives the same
/// answer with an index.
pub fn segment_blocked(p: Point, q: Point, layer: &MapLayer, exclude: (&str, &str)) -> bool {
    layer
        .entities()
        .iter()
        .filter(|e| e.id() != exclude.0 && e.id() != exclude.1)
        .any(|e| open_segment_hits(p, q, e.geometry()))
}
