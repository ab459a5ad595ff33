//! Rubber sheeting: control points from text-aligned entities, a
//! least-squares affine fit, one outlier-rejection pass and a refit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::primitives::{cross, segment_intersection, sub, SegmentIntersection};
use crate::model::{AlignmentResult, Geometry, GeometryKind, MapLayer, Point, DEFAULT_EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlPointOrigin {
    LineIntersection,
    PointFeature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPointPair {
    pub src: Point,
    pub dst: Point,
    pub origin: ControlPointOrigin,
    /// Map A ids followed by map B ids.
    pub source_entities: Vec<String>,
    pub accepted: bool,
}

/// (x, y) ↦ (a·x + b·y + c, d·x + e·y + f)
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl AffineTransform {
    pub const IDENTITY: AffineTransform = AffineTransform {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 0.0,
        e: 1.0,
        f: 0.0,
    };

    pub fn new(a: f64, b: f64, c: f64, d: f64, e: f64, f: f64) -> Result<Self> {
        let t = AffineTransform { a, b, c, d, e, f };
        if !t.determinant().is_finite() || t.determinant().abs() <= DEFAULT_EPSILON {
            return Err(Error::DegenerateConfiguration);
        }
        Ok(t)
    }

    /// Rotation by `degrees`, uniform `scale`, then translation.
    pub fn similarity(degrees: f64, scale: f64, tx: f64, ty: f64) -> Result<Self> {
        let (s, c) = degrees.to_radians().sin_cos();
        Self::new(scale * c, -scale * s, tx, scale * s, scale * c, ty)
    }

    pub fn determinant(&self) -> f64 {
        self.a * self.e - self.b * self.d
    }

    pub fn apply(&self, p: Point) -> Point {
        Point::new(
            self.a * p.x + self.b * p.y + self.c,
            self.d * p.x + self.e * p.y + self.f,
        )
    }

    /// Largest absolute coefficient difference from `other`.
    pub fn max_abs_diff(&self, other: &AffineTransform) -> f64 {
        [
            self.a - other.a,
            self.b - other.b,
            self.c - other.c,
            self.d - other.d,
            self.e - other.e,
            self.f - other.f,
        ]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn apply_to_layer(&self, layer: &MapLayer) -> MapLayer {
        layer.map_points(|p| self.apply(p))
    }
}

/// The single crossing point of two polylines, if they share exactly one.
fn single_crossing(g: &Geometry, h: &Geometry) -> Option<Point> {
    let mut found: Option<Point> = None;
    for (p, q) in g.segments() {
        for (r, s) in h.segments() {
            match segment_intersection(p, q, r, s, DEFAULT_EPSILON) {
                SegmentIntersection::None => {}
                SegmentIntersection::Overlap(..) => return None,
                SegmentIntersection::Point(x) => match found {
                    None => found = Some(x),
                    // the same crossing seen from adjacent segments
                    Some(y) if y.distance(&x) <= DEFAULT_EPSILON => {}
                    Some(_) => return None,
                },
            }
        }
    }
    found
}

/// Control points implied by a text seed: crossings of seed-aligned roads
/// that cross exactly once on both maps, plus seed-aligned point features.
pub fn extract_control_points(seed: &AlignmentResult, a: &MapLayer, b: &MapLayer) -> Vec<ControlPointPair> {
    let mut lines = Vec::new();
    let mut out = Vec::new();
    for pair in seed.pairs() {
        let (Some(ea), Some(eb)) = (a.get(&pair.id_a), b.get(&pair.id_b)) else {
            continue;
        };
        match (ea.kind(), eb.kind()) {
            (GeometryKind::Polyline, GeometryKind::Polyline) => lines.push((ea, eb)),
            (GeometryKind::Point, GeometryKind::Point) => out.push(ControlPointPair {
                src: ea.geometry().vertices()[0],
                dst: eb.geometry().vertices()[0],
                origin: ControlPointOrigin::PointFeature,
                source_entities: vec![ea.id().to_string(), eb.id().to_string()],
                accepted: true,
            }),
            _ => {}
        }
    }
    for (i, (l1a, l1b)) in lines.iter().enumerate() {
        for (l2a, l2b) in &lines[i + 1..] {
            let Some(src) = single_crossing(l1a.geometry(), l2a.geometry()) else {
                continue;
            };
            let Some(dst) = single_crossing(l1b.geometry(), l2b.geometry()) else {
                continue;
            };
            out.push(ControlPointPair {
                src,
                dst,
                origin: ControlPointOrigin::LineIntersection,
                source_entities: [l1a.id(), l2a.id(), l1b.id(), l2b.id()].map(str::to_string).to_vec(),
                accepted: true,
            });
        }
    }
    out.sort_by(|x, y| x.source_entities.cmp(&y.source_entities).then(x.origin.cmp(&y.origin)));
    out
}

/// Twice the largest triangle area spanned by `p0`, the point farthest from
/// it, and any third point: zero exactly when all points are collinear.
fn spread(pts: &[Point]) -> f64 {
    let p0 = pts[0];
    let far = pts
        .iter()
        .copied()
        .max_by(|u, v| p0.distance(u).total_cmp(&p0.distance(v)))
        .expect("non-empty");
    let axis = sub(far, p0);
    pts.iter().map(|&p| cross(axis, sub(p, p0)).abs()).fold(0.0, f64::max)
}

/// Least-squares affine map taking `src` onto `dst`.
pub fn fit_affine(cps: &[ControlPointPair], accepted_only: bool) -> Result<AffineTransform> {
    let used: Vec<&ControlPointPair> = cps.iter().filter(|c| !accepted_only || c.accepted).collect();
    if used.len() < 3 {
        return Err(Error::InsufficientControlPoints { found: used.len() });
    }
    let src: Vec<Point> = used.iter().map(|c| c.src).collect();
    if spread(&src) / 2.0 <= DEFAULT_EPSILON {
        return Err(Error::DegenerateConfiguration);
    }
    let n = used.len() as f64;
    let mean = |f: &dyn Fn(&ControlPointPair) -> f64| used.iter().map(|c| f(c)).sum::<f64>() / n;
    let (msx, msy) = (mean(&|c| c.src.x), mean(&|c| c.src.y));
    let (mdx, mdy) = (mean(&|c| c.dst.x), mean(&|c| c.dst.y));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    let (mut ux, mut vx, mut uy, mut vy) = (0.0, 0.0, 0.0, 0.0);
    for c in &used {
        let (x, y) = (c.src.x - msx, c.src.y - msy);
        let (u, v) = (c.dst.x - mdx, c.dst.y - mdy);
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        ux += x * u;
        uy += y * u;
        vx += x * v;
        vy += y * v;
    }
    let det = sxx * syy - sxy * sxy;
    if det.is_nan() || det <= 0.0 {
        return Err(Error::DegenerateConfiguration);
    }
    let a = (ux * syy - uy * sxy) / det;
    let b = (uy * sxx - ux * sxy) / det;
    let d = (vx * syy - vy * sxy) / det;
    let e = (vy * sxx - vx * sxy) / det;
    let c = mdx - a * msx - b * msy;
    let f = mdy - d * msx - e * msy;
    AffineTransform::new(a, b, c, d, e, f)
}

pub fn residual(t: &AffineTransform, cp: &ControlPointPair) -> f64 {
    t.apply(cp.src).distance(&cp.dst)
}

/// Marks as rejected every pair whose residual under `t` exceeds the mean
/// by more than two population standard deviations.
pub fn filter_control_points(cps: &[ControlPointPair], t: &AffineTransform) -> Vec<ControlPointPair> {
    if cps.is_empty() {
        return Vec::new();
    }
    let res: Vec<f64> = cps.iter().map(|c| residual(t, c)).collect();
    let n = res.len() as f64;
    let mu = res.iter().sum::<f64>() / n;
    let sigma = (res.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / n).sqrt();
    // slack keeps rounding noise on equal residuals from rejecting anything
    let limit = mu + 2.0 * sigma + DEFAULT_EPSILON;
    cps.iter()
        .zip(res)
        .map(|(c, r)| ControlPointPair {
            accepted: r <= limit,
            ..c.clone()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RubberSheetResult {
    /// Fit to every control point, before filtering.
    pub initial_transform: AffineTransform,
    pub transform: AffineTransform,
    pub transformed_a: MapLayer,
    /// Control points with acceptance decided by the filter pass.
    pub control_points: Vec<ControlPointPair>,
}

impl RubberSheetResult {
    pub fn accepted_count(&self) -> usize {
        self.control_points.iter().filter(|c| c.accepted).count()
    }
}

/// Fits map A onto map B's frame from the text seed.
pub fn rubber_sheet(a: &MapLayer, b: &MapLayer, seed: &AlignmentResult) -> Result<RubberSheetResult> {
    let cps = extract_control_points(seed, a, b);
    rubber_sheet_with(a, &cps)
}

/// Rubber sheeting from an explicit control-point list.
pub fn rubber_sheet_with(a: &MapLayer, cps: &[ControlPointPair]) -> Result<RubberSheetResult> {
    let initial = fit_affine(cps, false)?;
    let filtered = filter_control_points(cps, &initial);
    let transform = fit_affine(&filtered, true)?;
    let entities = a
        .entities()
        .par_iter()
        .map(|e| e.with_geometry(e.geometry().map_points(|p| transform.apply(p))))
        .collect();
    let transformed_a = a.with_entities(entities)?;
    Ok(RubberSheetResult {
        initial_transform: initial,
        transform,
        transformed_a,
        control_points: filtered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AlignmentPair, Entity, Provenance};
    use proptest::prelude::*;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }
    fn cp(src: Point, dst: Point) -> ControlPointPair {
        ControlPointPair {
            src,
            dst,
            origin: ControlPointOrigin::PointFeature,
            source_entities: vec![],
            accepted: true,
        }
    }

    #[test]
    fn translation_is_recovered_exactly() {
        let src = [p(0., 0.), p(1., 0.), p(0., 1.)];
        let cps: Vec<_> = src.iter().map(|&s| cp(s, p(s.x + 5., s.y + 7.))).collect();
        let t = fit_affine(&cps, false).unwrap();
        assert!(t.max_abs_diff(&AffineTransform { c: 5., f: 7., ..AffineTransform::IDENTITY }) < 1e-12);
    }

    #[test]
    fn rotation_and_scale_are_recovered() {
        let truth = AffineTransform::similarity(30.0, 2.0, 3.0, -4.0).unwrap();
        let cps: Vec<_> = [p(0., 0.), p(10., 0.), p(0., 10.), p(7., 3.)]
            .iter()
            .map(|&s| cp(s, truth.apply(s)))
            .collect();
        let t = fit_affine(&cps, false).unwrap();
        assert!(t.max_abs_diff(&truth) < 1e-9);
    }

    #[test]
    fn too_few_or_collinear_points_fail() {
        let two = vec![cp(p(0., 0.), p(0., 0.)), cp(p(1., 0.), p(1., 0.))];
        assert!(matches!(fit_affine(&two, false), Err(Error::InsufficientControlPoints { found: 2 })));
        let line: Vec<_> = (0..5).map(|i| cp(p(i as f64, 2. * i as f64), p(0., 0.))).collect();
        assert!(matches!(fit_affine(&line, false), Err(Error::DegenerateConfiguration)));
        let mut three = line[..3].to_vec();
        three.push(cp(p(0., 1.), p(0., 0.)));
        three[3].accepted = false;
        assert!(matches!(fit_affine(&three, true), Err(Error::DegenerateConfiguration)));
    }

    #[test]
    fn filter_examples() {
        let t = AffineTransform::IDENTITY;
        let equal: Vec<_> = (0..5).map(|i| cp(p(i as f64, 0.), p(i as f64 + 1., 0.))).collect();
        assert!(filter_control_points(&equal, &t).iter().all(|c| c.accepted));

        let mut planted: Vec<_> = (0..20).map(|i| cp(p(i as f64, 0.), p(i as f64, 1.))).collect();
        planted.push(cp(p(0., 5.), p(0., 105.)));
        // mu = 120/21, sigma from the residual list {1 x20, 100}
        let mu = 120.0 / 21.0;
        let var = (20.0 * (1.0f64 - mu).powi(2) + (100.0 - mu).powi(2)) / 21.0;
        assert!(100.0 > mu + 2.0 * var.sqrt() && 1.0 < mu + 2.0 * var.sqrt());
        let out = filter_control_points(&planted, &t);
        let rejected: Vec<usize> = out.iter().enumerate().filter(|(_, c)| !c.accepted).map(|(i, _)| i).collect();
        assert_eq!(rejected, vec![20]);

        let single = vec![cp(p(0., 0.), p(3., 3.))];
        assert!(filter_control_points(&single, &t)[0].accepted);
    }

    fn road(id: &str, name: &str, v: &[(f64, f64)]) -> Entity {
        Entity::new(id, Some(name.into()), Geometry::polyline(v.iter().map(|&(x, y)| p(x, y)).collect()).unwrap()).unwrap()
    }

    fn grid_pair(t: &AffineTransform) -> (MapLayer, MapLayer, AlignmentResult) {
        let a_ents = vec![
            road("h1", "A", &[(0., 0.), (30., 1.)]),
            road("h2", "B", &[(0., 20.), (30., 22.)]),
            road("v1", "C", &[(5., -5.), (4., 30.)]),
            road("v2", "D", &[(25., -5.), (27., 30.)]),
            Entity::new("pt", Some("E".into()), Geometry::point(p(12., 9.)).unwrap()).unwrap(),
        ];
        let a = MapLayer::new("a", 1900, false, a_ents).unwrap();
        let b_ents = a
            .entities()
            .iter()
            .map(|e| {
                Entity::new(format!("b_{}", e.id()), e.name().map(str::to_string), e.geometry().map_points(|q| t.apply(q)))
                    .unwrap()
            })
            .collect();
        let b = MapLayer::new("b", 1910, false, b_ents).unwrap();
        let seed = AlignmentResult::from_pairs(
            a.entities().iter().map(|e| AlignmentPair::new(e.id(), format!("b_{}", e.id()), Provenance::Text)),
        )
        .unwrap();
        (a, b, seed)
    }

    #[test]
    fn extraction_counts_crossings_and_points() {
        let t = AffineTransform::similarity(10.0, 1.5, 100.0, 50.0).unwrap();
        let (a, b, seed) = grid_pair(&t);
        let cps = extract_control_points(&seed, &a, &b);
        // four crossings of two horizontals with two verticals, one point, no h-h or v-v crossings
        let lines = cps.iter().filter(|c| c.origin == ControlPointOrigin::LineIntersection).count();
        assert_eq!(lines, 4);
        assert_eq!(cps.len(), 5);
        for c in &cps {
            assert!(t.apply(c.src).distance(&c.dst) < 1e-9);
        }
        let sorted = {
            let mut s = cps.clone();
            s.sort_by(|x, y| x.source_entities.cmp(&y.source_entities));
            s
        };
        assert_eq!(sorted, cps);
    }

    #[test]
    fn multiple_crossings_are_skipped() {
        let zig = Geometry::polyline(vec![p(0., -1.), p(1., 1.), p(2., -1.)]).unwrap();
        let flat = Geometry::polyline(vec![p(-1., 0.), p(3., 0.)]).unwrap();
        assert!(single_crossing(&zig, &flat).is_none());
        let shared_vertex = Geometry::polyline(vec![p(1., -1.), p(1., 0.), p(1., 1.)]).unwrap();
        assert_eq!(single_crossing(&shared_vertex, &flat), Some(p(1., 0.)));
        let along = Geometry::polyline(vec![p(0., 0.), p(2., 0.)]).unwrap();
        assert!(single_crossing(&along, &flat).is_none());
    }

    #[test]
    fn pipeline_maps_a_onto_b() {
        let t = AffineTransform::similarity(-20.0, 0.7, -10.0, 40.0).unwrap();
        let (a, b, seed) = grid_pair(&t);
        let r = rubber_sheet(&a, &b, &seed).unwrap();
        assert_eq!(r.accepted_count(), 5);
        for (ea, eb) in r.transformed_a.entities().iter().zip(b.entities()) {
            assert_eq!(ea.id(), eb.id().trim_start_matches("b_"));
            assert_eq!(ea.name(), eb.name());
            for (u, v) in ea.geometry().vertices().iter().zip(eb.geometry().vertices()) {
                assert!(u.distance(v) < 1e-6);
            }
        }
        // a second pass has nothing left to correct
        let again = rubber_sheet(&r.transformed_a, &b, &seed).unwrap();
        assert!(again.transform.max_abs_diff(&AffineTransform::IDENTITY) < 1e-6);
    }

    #[test]
    fn empty_seed_fails() {
        let (a, b, _) = grid_pair(&AffineTransform::IDENTITY);
        assert!(matches!(
            rubber_sheet(&a, &b, &AlignmentResult::new()),
            Err(Error::InsufficientControlPoints { found: 0 })
        ));
    }

    proptest! {
        #[test]
        fn exact_affine_data_fits_with_zero_residual(
            coeffs in proptest::collection::vec(-3.0f64..3.0, 6),
            pts in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..30),
        ) {
            let Ok(truth) = AffineTransform::new(coeffs[0], coeffs[1], coeffs[2] * 10.0, coeffs[3], coeffs[4], coeffs[5] * 10.0) else {
                return Ok(());
            };
            prop_assume!(truth.determinant().abs() > 0.1);
            let cps: Vec<_> = pts.iter().map(|&(x, y)| cp(p(x, y), truth.apply(p(x, y)))).collect();
            prop_assume!(spread(&cps.iter().map(|c| c.src).collect::<Vec<_>>()) > 1.0);
            let t = fit_affine(&cps, false).unwrap();
            for c in &cps {
                prop_assert!(residual(&t, c) <= 1e-9 * (1.0 + c.dst.x.abs().max(c.dst.y.abs())));
            }
        }

        #[test]
        fn filter_rejects_only_above_limit(res in proptest::collection::vec(0.0f64..50.0, 1..40)) {
            let cps: Vec<_> = res.iter().map(|&r| cp(p(0., 0.), p(r, 0.))).collect();
            let out = filter_control_points(&cps, &AffineTransform::IDENTITY);
            let n = res.len() as f64;
            let mu = res.iter().sum::<f64>() / n;
            let sd = (res.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / n).sqrt();
            for (c, r) in out.iter().zip(&res) {
                if !c.accepted {
                    prop_assert!(*r > mu + 2.0 * sd);
                }
            }
            prop_assert!(out.iter().filter(|c| c.accepted).count() * 2 >= out.len());
        }

        #[test]
        fn transform_preserves_layer_shape(deg in -180.0f64..180.0, s in 0.2f64..5.0) {
            let (a, _, _) = grid_pair(&AffineTransform::IDENTITY);
            let t = AffineTransform::similarity(deg, s, 1.0, 2.0).unwrap();
            let moved = t.apply_to_layer(&a);
            prop_assert_eq!(moved.len(), a.len());
            for (x, y) in moved.entities().iter().zip(a.entities()) {
                prop_assert_eq!(x.id(), y.id());
                prop_assert_eq!(x.name(), y.name());
                prop_assert_eq!(x.kind(), y.kind());
                prop_assert_eq!(x.geometry().vertices().len(), y.geometry().vertices().len());
            }
        }
    }
}
