use rstar::primitives::{GeomWithData, Rectangle};
use rstar::{RTree, AABB};

use crate::model::{Geometry, MapLayer, Point, DEFAULT_EPSILON};

use super::{distance, open_segment_hits, DistanceMetric};

type Entry = GeomWithData<Rectangle<[f64; 2]>, usize>;

/// R-tree over the bounding boxes of a layer's entities.
///
/// Envelope queries return a candidate superset; the exact queries below
/// refine them so results match a brute-force scan of the layer.
pub struct SpatialIndex<'a> {
    layer: &'a MapLayer,
    tree: RTree<Entry>,
}

fn envelope(lo: Point, hi: Point, pad: f64) -> AABB<[f64; 2]> {
    AABB::from_corners([lo.x - pad, lo.y - pad], [hi.x + pad, hi.y + pad])
}

impl<'a> SpatialIndex<'a> {
    pub fn build(layer: &'a MapLayer) -> Self {
        let entries = layer
            .entities()
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let (lo, hi) = e.geometry().bbox();
                GeomWithData::new(Rectangle::from_corners([lo.x, lo.y], [hi.x, hi.y]), i)
            })
            .collect();
        SpatialIndex {
            layer,
            tree: RTree::bulk_load(entries),
        }
    }

    pub fn layer(&self) -> &'a MapLayer {
        self.layer
    }

    /// Indices of entities whose bounding boxes come within `radius` of the
    /// bounding box of `g`, sorted ascending.
    pub fn candidates_within(&self, g: &Geometry, radius: f64) -> Vec<usize> {
        let (lo, hi) = g.bbox();
        let mut out: Vec<usize> = self
            .tree
            .locate_in_envelope_intersecting(envelope(lo, hi, radius + DEFAULT_EPSILON))
            .map(|e| e.data)
            .collect();
        out.sort_unstable();
        out
    }

    /// Ids of entities whose nearest-point distance to `g` is at most `radius`.
    /// Sorted by id.
    pub fn query_within(&self, g: &Geometry, radius: f64) -> Vec<&'a str> {
        let mut ids: Vec<&'a str> = self
            .candidates_within(g, radius)
            .into_iter()
            .map(|i| &self.layer.entities()[i])
            .filter(|e| distance(DistanceMetric::Ednp, g, e.geometry()) <= radius)
            .map(|e| e.id())
            .collect();
        ids.sort_unstable();
        ids
    }

    /// The `k` entities closest to `g` by nearest-point distance, ties broken
    /// by id. Returns every entity when `k` exceeds the layer size.
    pub fn nearest(&self, g: &Geometry, k: usize) -> Vec<&'a str> {
        let n = self.layer.len();
        if k == 0 || n == 0 {
            return Vec::new();
        }
        if k >= n {
            let mut all: Vec<&str> = self.layer.entities().iter().map(|e| e.id()).collect();
            all.sort_unstable();
            return all;
        }
        let (lo, hi) = g.bbox();
        let (llo, lhi) = self.layer.bbox().expect("non-empty layer");
        // any radius this large reaches every entity
        let span = (lhi.x.max(hi.x) - llo.x.min(lo.x)).hypot(lhi.y.max(hi.y) - llo.y.min(lo.y));
        let mut radius = (span / (n as f64).sqrt()).max(DEFAULT_EPSILON * 1e3);
        loop {
            let mut scored: Vec<(f64, &'a str)> = self
                .candidates_within(g, radius)
                .into_iter()
                .map(|i| {
                    let e = &self.layer.entities()[i];
                    (distance(DistanceMetric::Ednp, g, e.geometry()), e.id())
                })
                .filter(|(d, _)| *d <= radius)
                .collect();
            // every entity within `radius` is present, so the k best are exact
            if scored.len() >= k || radius > span {
                scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
                scored.truncate(k);
                return scored.into_iter().map(|(_, id)| id).collect();
            }
            radius *= 2.0;
        }
    }

    /// Indexed equivalent of [`super::segment_blocked`].
    pub fn segment_blocked(&self, p: Point, q: Point, exclude: (usize, usize)) -> bool {
        if p.distance(&q) <= DEFAULT_EPSILON {
            return false;
        }
        let lo = Point::new(p.x.min(q.x), p.y.min(q.y));
        let hi = Point::new(p.x.max(q.x), p.y.max(q.y));
        self.tree
            .locate_in_envelope_intersecting(envelope(lo, hi, DEFAULT_EPSILON))
            .filter(|e| e.data != exclude.0 && e.data != exclude.1)
            .any(|e| open_segment_hits(p, q, self.layer.entities()[e.data].geometry()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Entity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_layer(seed: u64, n: usize) -> MapLayer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ents = Vec::new();
        for i in 0..n {
            let x: f64 = rng.random_range(0.0..100.0);
            let y: f64 = rng.random_range(0.0..100.0);
            let g = if i % 2 == 0 {
                Geometry::point(Point::new(x, y)).unwrap()
            } else {
                let dx: f64 = rng.random_range(-5.0..5.0);
                let dy: f64 = rng.random_range(-5.0..5.0);
                Geometry::polyline(vec![Point::new(x, y), Point::new(x + dx, y + dy + 0.1)]).unwrap()
            };
            ents.push(Entity::new(format!("e{i:03}"), None, g).unwrap());
        }
        MapLayer::new("r", 1900, false, ents).unwrap()
    }

    #[test]
    fn empty_layer_has_no_candidates() {
        let layer = MapLayer::new("e", 1900, false, vec![]).unwrap();
        let idx = SpatialIndex::build(&layer);
        let g = Geometry::point(Point::new(0., 0.)).unwrap();
        assert!(idx.query_within(&g, 1e9).is_empty());
        assert!(idx.nearest(&g, 3).is_empty());
    }

    #[test]
    fn k_equal_to_layer_size_returns_all_ids() {
        let layer = random_layer(1, 20);
        let idx = SpatialIndex::build(&layer);
        let g = Geometry::point(Point::new(50., 50.)).unwrap();
        assert_eq!(idx.nearest(&g, 20).len(), 20);
    }

    #[test]
    fn radius_and_knn_queries_match_brute_force() {
        let layer = random_layer(42, 200);
        let idx = SpatialIndex::build(&layer);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..25 {
            let q = Geometry::point(Point::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0))).unwrap();
            let r: f64 = rng.random_range(1.0..20.0);
            let mut brute: Vec<&str> = layer
                .entities()
                .iter()
                .filter(|e| distance(DistanceMetric::Ednp, &q, e.geometry()) <= r)
                .map(|e| e.id())
                .collect();
            brute.sort_unstable();
            assert_eq!(idx.query_within(&q, r), brute);

            let mut scored: Vec<(f64, &str)> = layer
                .entities()
                .iter()
                .map(|e| (distance(DistanceMetric::Ednp, &q, e.geometry()), e.id()))
                .collect();
            scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
            let k = 7;
            let expected: Vec<&str> = scored[..k].iter().map(|s| s.1).collect();
            assert_eq!(idx.nearest(&q, k), expected);
        }
    }
}
