//! Synthetic map pairs with known ground truth.
//!
//! A base town is a wobbly street grid with city blocks between the roads
//! and numbered landmarks inside some blocks. Map A is the base itself;
//! map B is the base under a similarity transform with vertex jitter,
//! independent label loss and dropped entities.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, GeometryError, Result};
use crate::model::{Entity, Geometry, GeometryKind, GroundTruth, MapLayer, Point};
use crate::rubbersheet::AffineTransform;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    /// Roads in each direction.
    pub roads_per_axis: usize,
    /// Landmark point features.
    pub point_features: usize,
    /// Share of blocks split into two half-blocks.
    pub split_fraction: f64,
    pub spacing: f64,
    pub rotation: f64,
    pub scale: f64,
    pub translation: (f64, f64),
    /// Standard deviation of per-vertex noise, in map B units.
    pub vertex_jitter_sigma: f64,
    pub label_keep_fraction: f64,
    pub entity_drop_fraction: f64,
    /// Give city blocks lot labels as well.
    pub label_blocks: bool,
    pub rng_seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            roads_per_axis: 10,
            point_features: 15,
            split_fraction: 0.15,
            spacing: 100.0,
            rotation: 0.0,
            scale: 1.0,
            translation: (0.0, 0.0),
            vertex_jitter_sigma: 0.0,
            label_keep_fraction: 1.0,
            entity_drop_fraction: 0.0,
            label_blocks: false,
            rng_seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        for (name, v) in [
            ("split_fraction", self.split_fraction),
            ("label_keep_fraction", self.label_keep_fraction),
            ("entity_drop_fraction", self.entity_drop_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad(format!("scale must be positive, got {}", self.scale));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return bad(format!("spacing must be positive, got {}", self.spacing));
        }
        if !(self.vertex_jitter_sigma >= 0.0 && self.vertex_jitter_sigma.is_finite()) {
            return bad(format!("vertex_jitter_sigma must be non-negative, got {}", self.vertex_jitter_sigma));
        }
        if self.roads_per_axis < 2 {
            return bad("roads_per_axis must be at least 2".into());
        }
        if !self.rotation.is_finite() || !self.translation.0.is_finite() || !self.translation.1.is_finite() {
            return bad("rotation and translation must be finite".into());
        }
        Ok(())
    }

    pub fn transform(&self) -> Result<AffineTransform> {
        AffineTransform::similarity(self.rotation, self.scale, self.translation.0, self.translation.1)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub map_a: MapLayer,
    pub map_b: MapLayer,
    pub truth: GroundTruth,
}

const STREET_NAMES: [&str; 40] = [
    "Delaware", "Main", "Niagara", "Elmwood", "Richmond", "Porter", "Hodge", "Ferry", "Bryant", "Utica",
    "Summer", "Barker", "Allen", "Virginia", "Carolina", "Georgia", "Maryland", "Hudson", "Pennsylvania",
    "Connecticut", "Vermont", "Franklin", "Pearl", "Genesee", "Seneca", "Swan", "Eagle", "Clinton", "William",
    "Sycamore", "Walnut", "Spruce", "Jefferson", "Michigan", "Oak", "Washington", "Ellicott", "Chippewa",
    "Tupper", "Mohawk",
];
const LANDMARKS: [&str; 5] = ["Public School", "Engine House", "Police Station", "Church", "Market"];

/// One entity of the base town, with both map labels.
struct BaseEntity {
    geometry: Geometry,
    label_a: Option<String>,
    label_b: Option<String>,
    /// Always labelled and never dropped.
    anchor: bool,
}

fn road_name(i: usize) -> String {
    match STREET_NAMES.get(i) {
        Some(n) => n.to_string(),
        None => format!("{} {}", STREET_NAMES[i % STREET_NAMES.len()], i / STREET_NAMES.len() + 1),
    }
}

/// Straight road `y = c + slope·x` (horizontal) or `x = c + slope·y`.
#[derive(Clone, Copy)]
struct Line {
    c: f64,
    slope: f64,
}

fn crossing(h: Line, v: Line) -> Point {
    let x = (v.c + v.slope * h.c) / (1.0 - v.slope * h.slope);
    Point::new(x, h.c + h.slope * x)
}

fn built(g: std::result::Result<Geometry, GeometryError>) -> Result<Geometry> {
    g.map_err(|e| Error::Invariant(format!("generated geometry is degenerate: {e}")))
}

fn lerp(p: Point, q: Point, t: f64) -> Point {
    Point::new(p.x + (q.x - p.x) * t, p.y + (q.y - p.y) * t)
}

fn shrink(quad: [Point; 4], factor: f64) -> Vec<Point> {
    let cx = quad.iter().map(|p| p.x).sum::<f64>() / 4.0;
    let cy = quad.iter().map(|p| p.y).sum::<f64>() / 4.0;
    quad.iter()
        .map(|p| Point::new(cx + (p.x - cx) * factor, cy + (p.y - cy) * factor))
        .collect()
}

fn base_town(params: &SynthParams, rng: &mut ChaCha8Rng) -> Result<Vec<BaseEntity>> {
    let n = params.roads_per_axis;
    let s = params.spacing;
    let wobble = |rng: &mut ChaCha8Rng| rng.random_range(-0.02..0.02);
    let hs: Vec<Line> = (0..n)
        .map(|k| Line { c: k as f64 * s + rng.random_range(-0.05..0.05) * s, slope: wobble(rng) })
        .collect();
    let vs: Vec<Line> = (0..n)
        .map(|k| Line { c: k as f64 * s + rng.random_range(-0.05..0.05) * s, slope: wobble(rng) })
        .collect();
    let grid: Vec<Vec<Point>> = hs.iter().map(|&h| vs.iter().map(|&v| crossing(h, v)).collect()).collect();

    let keep_labels = params.label_keep_fraction >= 0.3;
    let mut anchors_h: Vec<usize> = (0..n).collect();
    let mut anchors_v: Vec<usize> = (0..n).collect();
    anchors_h.shuffle(rng);
    anchors_v.shuffle(rng);
    anchors_h.truncate(if keep_labels { 2 } else { 0 });
    anchors_v.truncate(if keep_labels { 2 } else { 0 });

    let mut out = Vec::new();
    let overhang = 0.4;
    for (axis, anchors) in [(0, &anchors_h), (1, &anchors_v)] {
        // k indexes rows on one axis and columns on the other
        #[allow(clippy::needless_range_loop)]
        for k in 0..n {
            let row: Vec<Point> = (0..n).map(|j| if axis == 0 { grid[k][j] } else { grid[j][k] }).collect();
            let mut v = vec![lerp(row[0], row[1], -overhang)];
            v.extend(&row);
            v.push(lerp(row[n - 1], row[n - 2], -overhang));
            let name = road_name(axis * n + k);
            let (suffix_a, suffix_b, long_b) = if axis == 0 { ("St.", "ST", "Street") } else { ("Ave.", "AVE", "Avenue") };
            let anchor = anchors.contains(&k);
            // some roads differ by more than case and punctuation
            let label_b = if !anchor && rng.random_range(0.0..1.0) < 0.2 {
                format!("{name} {long_b}")
            } else {
                format!("{} {suffix_b}", name.to_uppercase())
            };
            out.push(BaseEntity {
                geometry: built(Geometry::polyline(v))?,
                label_a: Some(format!("{name} {suffix_a}")),
                label_b: Some(label_b),
                anchor,
            });
        }
    }

    let mut blocks = Vec::new();
    for r in 0..n - 1 {
        for c in 0..n - 1 {
            let quad = [grid[r][c], grid[r][c + 1], grid[r + 1][c + 1], grid[r + 1][c]];
            let q = shrink(quad, 0.72);
            if rng.random_range(0.0..1.0) < params.split_fraction {
                let f: f64 = rng.random_range(0.35..0.65);
                let g = 0.04;
                let (a0, a1) = (lerp(q[0], q[1], f - g), lerp(q[3], q[2], f - g));
                let (b0, b1) = (lerp(q[0], q[1], f + g), lerp(q[3], q[2], f + g));
                blocks.push(vec![q[0], a0, a1, q[3]]);
                blocks.push(vec![b0, q[1], q[2], b1]);
            } else {
                blocks.push(q);
            }
        }
    }
    let mut hosts: Vec<usize> = (0..blocks.len()).collect();
    hosts.shuffle(rng);
    let mut landmarks = Vec::new();
    for (i, &host) in hosts.iter().cycle().take(params.point_features).enumerate() {
        let ring = &blocks[host];
        // a random convex combination of the corners stays inside the block
        let w: Vec<f64> = (0..ring.len()).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = w.iter().sum();
        let x = ring.iter().zip(&w).map(|(p, w)| p.x * w).sum::<f64>() / total;
        let y = ring.iter().zip(&w).map(|(p, w)| p.y * w).sum::<f64>() / total;
        let kind = LANDMARKS[i % LANDMARKS.len()];
        let number = i + 1;
        landmarks.push(BaseEntity {
            geometry: built(Geometry::point(Point::new(x, y)))?,
            label_a: Some(format!("{kind} No. {number}")),
            label_b: Some(format!("{} no {number}", kind.to_lowercase())),
            anchor: false,
        });
    }
    for (i, ring) in blocks.into_iter().enumerate() {
        let lot = params.label_blocks.then(|| format!("Lot {}", i + 1));
        out.push(BaseEntity {
            geometry: built(Geometry::polygon(ring))?,
            label_b: lot.as_ref().map(|l| l.to_uppercase()),
            label_a: lot,
            anchor: false,
        });
    }
    out.extend(landmarks);
    Ok(out)
}

/// Perturbs every vertex, retrying when the noise breaks the geometry.
fn jitter(g: &Geometry, noise: &Normal<f64>, rng: &mut ChaCha8Rng) -> Geometry {
    for _ in 0..20 {
        let v: Vec<Point> = g
            .vertices()
            .iter()
            .map(|p| Point::new(p.x + noise.sample(rng), p.y + noise.sample(rng)))
            .collect();
        let built = match g.kind() {
            GeometryKind::Point => Geometry::point(v[0]),
            GeometryKind::Polyline => Geometry::polyline(v),
            GeometryKind::Polygon => Geometry::polygon(v),
        };
        if let Ok(j) = built {
            return j;
        }
    }
    g.clone()
}

pub fn generate_synthetic(params: &SynthParams) -> Result<SyntheticPair> {
    params.validate()?;
    let t = params.transform()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let base = base_town(params, &mut rng)?;
    let n = base.len();

    let drop_count = (params.entity_drop_fraction * n as f64).round() as usize;
    let mut droppable: Vec<usize> = (0..n).filter(|&i| !base[i].anchor).collect();
    droppable.shuffle(&mut rng);
    droppable.truncate(drop_count);
    if n - droppable.len() < 1 {
        return Err(Error::InvalidParameter("entity_drop_fraction leaves no entity on map B".into()));
    }
    let dropped: std::collections::BTreeSet<usize> = droppable.into_iter().collect();

    let mut b_ids: Vec<usize> = (1..=n).collect();
    b_ids.shuffle(&mut rng);

    let noise = Normal::new(0.0, params.vertex_jitter_sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let keep = |rng: &mut ChaCha8Rng, e: &BaseEntity| e.anchor || rng.random_range(0.0..1.0) < params.label_keep_fraction;

    let mut a_ents = Vec::with_capacity(n);
    let mut b_ents = Vec::with_capacity(n);
    let mut truth = Vec::new();
    for (i, e) in base.iter().enumerate() {
        let id_a = format!("A{}", i + 1);
        let label_a = e.label_a.clone().filter(|_| keep(&mut rng, e));
        a_ents.push(Entity::new(id_a.clone(), label_a, e.geometry.clone())?);

        let label_b = e.label_b.clone().filter(|_| keep(&mut rng, e));
        let moved = e.geometry.map_points(|p| t.apply(p));
        let moved = if params.vertex_jitter_sigma > 0.0 {
            jitter(&moved, &noise, &mut rng)
        } else {
            moved
        };
        if dropped.contains(&i) {
            continue;
        }
        let id_b = format!("B{}", b_ids[i]);
        b_ents.push((b_ids[i], Entity::new(id_b.clone(), label_b, moved)?));
        truth.push((id_a, id_b));
    }
    b_ents.sort_by_key(|(k, _)| *k);

    Ok(SyntheticPair {
        map_a: MapLayer::new("synthetic_a", 1889, false, a_ents)?,
        map_b: MapLayer::new("synthetic_b", 1899, false, b_ents.into_iter().map(|(_, e)| e).collect())?,
        truth: GroundTruth::from_pairs(truth)?,
    })
}

/// Mean bounding-box diagonal of a layer's roads and blocks.
pub fn mean_entity_size(layer: &MapLayer) -> f64 {
    let sizes: Vec<f64> = layer
        .entities()
        .iter()
        .filter(|e| e.kind() != GeometryKind::Point)
        .map(|e| {
            let (lo, hi) = e.geometry().bbox();
            lo.distance(&hi)
        })
        .collect();
    if sizes.is_empty() {
        0.0
    } else {
        sizes.iter().sum::<f64>() / sizes.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::write_layer;
    use crate::rubbersheet::rubber_sheet;
    use crate::textalign::{align_by_labels, TextMethod};
    use proptest::prelude::*;

    #[test]
    fn same_seed_same_bytes() {
        let params = SynthParams { rotation: 12.0, vertex_jitter_sigma: 0.5, entity_drop_fraction: 0.1, label_keep_fraction: 0.5, rng_seed: 5, ..Default::default() };
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = Vec::new();
        for run in 0..2 {
            let pair = generate_synthetic(&params).unwrap();
            let path = dir.path().join(format!("b{run}.geojson"));
            write_layer(&pair.map_b, &path).unwrap();
            bytes.push(std::fs::read(&path).unwrap());
        }
        assert_eq!(bytes[0], bytes[1]);
    }

    #[test]
    fn identity_noise_free_maps_agree_up_to_ids() {
        let pair = generate_synthetic(&SynthParams::default()).unwrap();
        assert_eq!(pair.map_a.len(), pair.map_b.len());
        for (ia, ib) in pair.truth.pairs() {
            let (ea, eb) = (pair.map_a.get(ia).unwrap(), pair.map_b.get(ib).unwrap());
            assert_eq!(ea.geometry(), eb.geometry());
        }
    }

    #[test]
    fn rotated_pair_rubber_sheets_back() {
        let params = SynthParams { rotation: 37.0, scale: 1.8, translation: (500.0, -200.0), label_keep_fraction: 0.4, rng_seed: 3, ..Default::default() };
        let pair = generate_synthetic(&params).unwrap();
        let seed = align_by_labels(&pair.map_a, &pair.map_b, TextMethod::StrCaselessPunc);
        let rs = rubber_sheet(&pair.map_a, &pair.map_b, &seed).unwrap();
        let truth = params.transform().unwrap();
        for c in &rs.control_points {
            assert!(truth.apply(c.src).distance(&rs.transform.apply(c.src)) < 1e-6);
        }
    }

    #[test]
    fn anchors_guarantee_crossing_labels() {
        let params = SynthParams { label_keep_fraction: 0.3, rng_seed: 11, ..Default::default() };
        let pair = generate_synthetic(&params).unwrap();
        let seed = align_by_labels(&pair.map_a, &pair.map_b, TextMethod::StrCaselessPunc);
        let cps = crate::rubbersheet::extract_control_points(&seed, &pair.map_a, &pair.map_b);
        assert!(cps.len() >= 3);
    }

    #[test]
    fn bad_parameters_are_rejected() {
        for p in [
            SynthParams { scale: 0.0, ..Default::default() },
            SynthParams { label_keep_fraction: 1.5, ..Default::default() },
            SynthParams { roads_per_axis: 1, ..Default::default() },
            SynthParams { roads_per_axis: 2, point_features: 0, split_fraction: 0.0, entity_drop_fraction: 1.0, label_keep_fraction: 0.0, ..Default::default() },
        ] {
            assert!(generate_synthetic(&p).is_err());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn truth_is_one_to_one_and_resolvable(seed in any::<u64>(), drop in 0.0f64..0.5, keep in 0.0f64..1.0, sigma in 0.0f64..2.0) {
            let params = SynthParams { roads_per_axis: 5, rng_seed: seed, entity_drop_fraction: drop, label_keep_fraction: keep, vertex_jitter_sigma: sigma, rotation: 20.0, ..Default::default() };
            let pair = generate_synthetic(&params).unwrap();
            prop_assert_eq!(pair.truth.len(), pair.map_b.len());
            for (a, b) in pair.truth.pairs() {
                prop_assert!(pair.map_a.get(a).is_some());
                prop_assert!(pair.map_b.get(b).is_some());
                prop_assert_eq!(pair.map_a.get(a).unwrap().kind(), pair.map_b.get(b).unwrap().kind());
            }
        }
    }
}
