//! Segment-level predicates used by the higher-level geometry operations.

use crate::model::Point;

pub(crate) fn sub(a: Point, b: Point) -> Point {
    Point::new(a.x - b.x, a.y - b.y)
}

pub(crate) fn cross(a: Point, b: Point) -> f64 {
    a.x * b.y - a.y * b.x
}

pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a.x * b.x + a.y * b.y
}

fn lerp(a: Point, b: Point, t: f64) -> Point {
    Point::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t)
}

/// Signed shoelace area; positive for counter-clockwise rings.
pub fn signed_area(ring: &[Point]) -> f64 {
    if ring.len() < 3 {
        return 0.0;
    }
    let o = ring[0];
    let mut acc = 0.0;
    for i in 1..ring.len() - 1 {
        acc += cross(sub(ring[i], o), sub(ring[i + 1], o));
    }
    acc / 2.0
}

/// Closest point to `p` on segment `ab` and its parameter in [0, 1].
pub fn closest_on_segment(a: Point, b: Point, p: Point) -> (Point, f64) {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    if len2 == 0.0 {
        return (a, 0.0);
    }
    let t = (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0);
    (lerp(a, b, t), t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentIntersection {
    None,
    Point(Point),
    /// Collinear overlap between the two given endpoints.
    Overlap(Point, Point),
}

/// Intersection of closed segments `ab` and `cd` with tolerance `eps`.
/// Degenerate (zero-length) segments are treated as points.
pub fn segment_intersection(a: Point, b: Point, c: Point, d: Point, eps: f64) -> SegmentIntersection {
    let r = sub(b, a);
    let s = sub(d, c);
    let rl = r.x.hypot(r.y);
    let sl = s.x.hypot(s.y);

    if rl <= eps && sl <= eps {
        return if a.distance(&c) <= eps {
            SegmentIntersection::Point(a)
        } else {
            SegmentIntersection::None
        };
    }
    if rl <= eps {
        let (q, _) = closest_on_segment(c, d, a);
        return if q.distance(&a) <= eps {
            SegmentIntersection::Point(a)
        } else {
            SegmentIntersection::None
        };
    }
    if sl <= eps {
        let (q, _) = closest_on_segment(a, b, c);
        return if q.distance(&c) <= eps {
            SegmentIntersection::Point(c)
        } else {
            SegmentIntersection::None
        };
    }

    let denom = cross(r, s);
    let ca = sub(c, a);
    if denom.abs() <= 1e-12 * rl * sl {
        // parallel
        if cross(ca, r).abs() / rl > eps {
            return SegmentIntersection::None;
        }
        let t0 = dot(ca, r) / (rl * rl);
        let t1 = dot(sub(d, a), r) / (rl * rl);
        let lo = t0.min(t1).max(0.0);
        let hi = t0.max(t1).min(1.0);
        let tol = eps / rl;
        if lo > hi + tol {
            return SegmentIntersection::None;
        }
        if (hi - lo) * rl <= eps {
            return SegmentIntersection::Point(lerp(a, b, lo.min(hi).clamp(0.0, 1.0)));
        }
        return SegmentIntersection::Overlap(lerp(a, b, lo), lerp(a, b, hi));
    }

    let t = cross(ca, s) / denom;
    let u = cross(ca, r) / denom;
    let tt = eps / rl;
    let tu = eps / sl;
    if t < -tt || t > 1.0 + tt || u < -tu || u > 1.0 + tu {
        // endpoint near-misses within eps still count as touching
        let close = [
            (a, closest_on_segment(c, d, a).0),
            (b, closest_on_segment(c, d, b).0),
            (closest_on_segment(a, b, c).0, c),
            (closest_on_segment(a, b, d).0, d),
        ];
        for (p, q) in close {
            if p.distance(&q) <= eps {
                return SegmentIntersection::Point(p);
            }
        }
        return SegmentIntersection::None;
    }
    SegmentIntersection::Point(lerp(a, b, t.clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Inside,
    Boundary,
    Outside,
}

/// Locates `p` relative to a closed polygon ring.
pub fn locate_in_ring(p: Point, ring: &[Point], eps: f64) -> Location {
    let n = ring.len();
    let mut inside = false;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        if closest_on_segment(a, b, p).0.distance(&p) <= eps {
            return Location::Boundary;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    if inside {
        Location::Inside
    } else {
        Location::Outside
    }
}
