use geo::{unary_union, Area, BooleanOps, Coord, LineString, MultiPolygon, Polygon};

use crate::error::GeometryError;
use crate::model::{Geometry, GeometryKind, Point};

use super::primitives::{cross, signed_area, sub};

/// Segments used per quarter circle for round caps and joins.
pub const QUARTER_CIRCLE_SEGMENTS: usize = 8;

/// A planar region produced by buffering; may in principle hold several
/// parts (e.g. a closed-loop polyline buffers to a ring with a hole).
#[derive(Debug, Clone)]
pub struct Region(MultiPolygon<f64>);

impl Region {
    pub fn area(&self) -> f64 {
        self.0.unsigned_area()
    }

    pub fn intersection_area(&self, other: &Region) -> f64 {
        self.0.intersection(&other.0).unsigned_area()
    }

    /// Outer ring vertices of every part, for inspection and tests.
    pub fn exteriors(&self) -> Vec<Vec<Point>> {
        self.0
            .iter()
            .map(|p| {
                let ring = &p.exterior().0;
                ring[..ring.len().saturating_sub(1)]
                    .iter()
                    .map(|c| Point::new(c.x, c.y))
                    .collect()
            })
            .collect()
    }
}

fn circle(center: Point, d: f64) -> Vec<Point> {
    let n = 4 * QUARTER_CIRCLE_SEGMENTS;
    (0..n)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / n as f64;
            Point::new(center.x + d * t.cos(), center.y + d * t.sin())
        })
        .collect()
}

/// Counter-clockwise convex hull (monotone chain).
fn convex_hull(mut pts: Vec<Point>) -> Vec<Point> {
    pts.sort_by(|a, b| a.lex_cmp(b));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2
            && cross(sub(lower[lower.len() - 1], lower[lower.len() - 2]), sub(p, lower[lower.len() - 2])) <= 0.0
        {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2
            && cross(sub(upper[upper.len() - 1], upper[upper.len() - 2]), sub(p, upper[upper.len() - 2])) <= 0.0
        {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn to_geo(ring: &[Point]) -> Polygon<f64> {
    let mut coords: Vec<Coord<f64>> = ring.iter().map(|p| Coord { x: p.x, y: p.y }).collect();
    coords.push(coords[0]);
    Polygon::new(LineString::new(coords), vec![])
}

fn ccw(mut ring: Vec<Point>) -> Vec<Point> {
    if signed_area(&ring) < 0.0 {
        ring.reverse();
    }
    ring
}

fn capsule(a: Point, b: Point, d: f64) -> Polygon<f64> {
    let mut pts = circle(a, d);
    pts.extend(circle(b, d));
    to_geo(&convex_hull(pts))
}

/// Region within distance `d` of `g`, with round caps and joins.
pub fn buffer(g: &Geometry, d: f64) -> Result<Region, GeometryError> {
    if !d.is_finite() || d <= 0.0 {
        return Err(GeometryError::NonPositiveBuffer(d));
    }
    let region = match g.kind() {
        GeometryKind::Point => MultiPolygon::new(vec![to_geo(&circle(g.vertices()[0], d))]),
        GeometryKind::Polyline | GeometryKind::Polygon => {
            let mut parts: Vec<Polygon<f64>> = g.segments().map(|(a, b)| capsule(a, b, d)).collect();
            if g.kind() == GeometryKind::Polygon {
                parts.push(to_geo(&ccw(g.vertices().to_vec())));
            }
            unary_union(parts.iter())
        }
    };
    Ok(Region(region))
}

/// Area shared by two polygons.
pub fn intersection_area(p: &Geometry, q: &Geometry) -> Result<f64, GeometryError> {
    for g in [p, q] {
        if g.kind() != GeometryKind::Polygon {
            return Err(GeometryError::WrongKind {
                expected: "polygon",
                got: g.kind().as_str(),
            });
        }
    }
    let a = to_geo(&ccw(p.vertices().to_vec()));
    let b = to_geo(&ccw(q.vertices().to_vec()));
    Ok(a.intersection(&b).unsigned_area())
}
