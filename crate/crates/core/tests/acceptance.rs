//! Acceptance suite: one pass/fail line per criterion, non-zero exit if any
//! criterion fails.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use mapalign_core::classify::ClassifierKind;
use mapalign_core::eval::{evaluate, f_score, Scores};
use mapalign_core::geometry::{centroid, distance, nearest_points, segment_blocked, DistanceMetric};
use mapalign_core::io::{export_sameas_triples, write_alignment};
use mapalign_core::rubbersheet::{filter_control_points, fit_affine, AffineTransform, ControlPointOrigin, ControlPointPair};
use mapalign_core::synth::{generate_synthetic, mean_entity_size, SynthParams, SyntheticPair};
use mapalign_core::topology::{compute_inn_sets, inn_jaccard, InnSets};
use mapalign_core::workflow::{run_workflow, Branch, WorkflowConfig};
use mapalign_core::{AlignmentPair, AlignmentResult, Entity, Geometry, MapLayer, Point, Provenance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, ok: String, fail: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(fail)
    }
}

fn p(x: f64, y: f64) -> Point {
    Point::new(x, y)
}

fn formula_consistency() -> Outcome {
    let (pr, rc, f) = (0.8180, 0.9509, 0.8794);
    let computed = f_score(pr, rc);
    let s = Scores::from_counts(2, 3, 4);
    let harmonic = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    check(
        (computed - f).abs() <= 5e-4 && (s.f_score - harmonic).abs() < 1e-15 && (s.f_score - 4.0 / 7.0).abs() < 1e-12,
        format!("2PR/(P+R) = {computed:.4} vs table 0.8794"),
        format!("F mismatch: {computed} vs {f}, counts example {}", s.f_score),
    )
}

fn random_layer(rng: &mut ChaCha8Rng, n: usize) -> MapLayer {
    let mut ents = Vec::new();
    while ents.len() < n {
        let x: f64 = rng.random_range(0.0..100.0);
        let y: f64 = rng.random_range(0.0..100.0);
        let g = match rng.random_range(0..3) {
            0 => Geometry::point(p(x, y)),
            1 => {
                let mut v = vec![p(x, y)];
                for _ in 0..rng.random_range(1..4) {
                    let last = *v.last().unwrap();
                    v.push(p(last.x + rng.random_range(-20.0..20.0), last.y + rng.random_range(-20.0..20.0)));
                }
                Geometry::polyline(v)
            }
            _ => {
                let (w, h): (f64, f64) = (rng.random_range(1.0..10.0), rng.random_range(1.0..10.0));
                Geometry::polygon(vec![p(x, y), p(x + w, y), p(x + w, y + h), p(x, y + h)])
            }
        };
        if let Ok(g) = g {
            ents.push(Entity::new(format!("e{}", ents.len()), None, g).unwrap());
        }
    }
    MapLayer::new("r", 1900, false, ents).unwrap()
}

/// Every ordered pair checked against the unindexed linear scan.
fn brute_force_inns(layer: &MapLayer) -> InnSets {
    let mut out = InnSets::new();
    for a in layer.entities() {
        let set = out.entry(a.id().to_string()).or_default();
        for b in layer.entities() {
            if a.id() == b.id() {
                continue;
            }
            let (pa, pb) = nearest_points(a.geometry(), b.geometry());
            if !segment_blocked(pa, pb, layer, (a.id(), b.id())) {
                set.insert(b.id().to_string());
            }
        }
    }
    out
}

fn inn_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..200 {
        let n = rng.random_range(1..=50);
        let layer = random_layer(&mut rng, n);
        if compute_inn_sets(&layer) != brute_force_inns(&layer) {
            return Err(format!("layer {trial} ({n} entities) differs from brute force"));
        }
    }
    Ok("200 random layers identical to brute force".into())
}

fn jaccard_counting() -> Outcome {
    let set = |ids: &[&str]| ids.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    let aligned = AlignmentResult::from_pairs(
        [("a1", "b1"), ("a2", "b2")].map(|(x, y)| AlignmentPair::new(x, y, Provenance::Text)),
    )
    .unwrap();
    let worked = inn_jaccard(&set(&["a1", "a2", "a3"]), &set(&["b1", "b2", "b3"]), &aligned);
    // two aligned pairs give an intersection of 4 over 6 entities
    if worked != 4.0 / 6.0 {
        return Err(format!("worked example gave {worked}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..1000 {
        let na = rng.random_range(0..10);
        let nb = rng.random_range(0..10);
        let ia: BTreeSet<String> = (0..na).map(|i| format!("a{i}")).collect();
        let ib: BTreeSet<String> = (0..nb).map(|i| format!("b{i}")).collect();
        let mut al = AlignmentResult::new();
        let mut last = inn_jaccard(&ia, &ib, &al);
        for _ in 0..12 {
            let x = format!("a{}", rng.random_range(0..12));
            let y = format!("b{}", rng.random_range(0..12));
            al.try_insert(AlignmentPair::new(x, y, Provenance::Topo));
            let now = inn_jaccard(&ia, &ib, &al);
            if !(0.0..=1.0).contains(&now) || now < last {
                return Err(format!("case {case}: {last} -> {now}"));
            }
            last = now;
        }
    }
    Ok("worked example 4/6 exact; 1000 random cases bounded and monotone".into())
}

fn transform_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let t = AffineTransform::similarity(
            rng.random_range(0.0..360.0),
            rng.random_range(0.5..3.0),
            rng.random_range(-1e3..1e3),
            rng.random_range(-1e3..1e3),
        )
        .unwrap();
        let cps: Vec<ControlPointPair> = (0..8)
            .map(|_| {
                let src = p(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0));
                ControlPointPair {
                    src,
                    dst: t.apply(src),
                    origin: ControlPointOrigin::PointFeature,
                    source_entities: vec![],
                    accepted: true,
                }
            })
            .collect();
        let fitted = fit_affine(&cps, false).map_err(|e| e.to_string())?;
        worst = worst.max(fitted.max_abs_diff(&t));
        for c in &cps {
            worst = worst.max(fitted.apply(c.src).distance(&c.dst));
        }
    }
    check(
        worst <= 1e-6,
        format!("100 random transforms, worst parameter/residual error {worst:.2e}"),
        format!("worst error {worst:.2e} exceeds 1e-6"),
    )
}

fn outlier_filter() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut exact = 0;
    for trial in 0..100 {
        let k = 1 + trial % 3;
        let t = AffineTransform::similarity(rng.random_range(0.0..360.0), rng.random_range(0.5..3.0), 10.0, -20.0).unwrap();
        let inlier_residual = 1.0;
        let mut cps = Vec::new();
        for i in 0..20 + k {
            let src = p(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0));
            let r = if i < 20 { inlier_residual } else { 50.0 * inlier_residual };
            let ang: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let d = t.apply(src);
            cps.push(ControlPointPair {
                src,
                dst: p(d.x + r * ang.cos(), d.y + r * ang.sin()),
                origin: ControlPointOrigin::LineIntersection,
                source_entities: vec![format!("{i}")],
                accepted: true,
            });
        }
        let fit = fit_affine(&cps, false).map_err(|e| e.to_string())?;
        let out = filter_control_points(&cps, &fit);
        let rejected: Vec<usize> = out.iter().enumerate().filter(|(_, c)| !c.accepted).map(|(i, _)| i).collect();
        if rejected == (20..20 + k).collect::<Vec<_>>() {
            exact += 1;
        }
    }
    check(
        exact >= 95,
        format!("exactly the planted outliers rejected in {exact}/100 trials"),
        format!("only {exact}/100 trials rejected exactly the planted outliers"),
    )
}

fn pipeline_f(pair: &SyntheticPair) -> Result<(f64, Branch), String> {
    let out = run_workflow(&pair.map_a, &pair.map_b, &WorkflowConfig::default()).map_err(|e| e.to_string())?;
    Ok((evaluate(&out.result, &pair.truth).overall.f_score, out.trace.branch))
}

fn end_to_end() -> Outcome {
    let base = SynthParams {
        rotation: 37.0,
        scale: 1.8,
        translation: (250.0, -400.0),
        label_keep_fraction: 0.4,
        ..Default::default()
    };
    let clean = generate_synthetic(&base).map_err(|e| e.to_string())?;
    let (f_clean, branch) = pipeline_f(&clean)?;
    if branch != Branch::RubberSheeted || f_clean < 0.99 {
        return Err(format!("noise-free F = {f_clean:.4} on branch {branch:?}"));
    }
    let sigma = 0.01 * mean_entity_size(&clean.map_b);
    let mut total = 0.0;
    let mut worst = 1.0f64;
    for seed in 0..20 {
        let params = SynthParams { vertex_jitter_sigma: sigma, entity_drop_fraction: 0.1, rng_seed: seed, ..base.clone() };
        let pair = generate_synthetic(&params).map_err(|e| e.to_string())?;
        let (f, _) = pipeline_f(&pair)?;
        total += f;
        worst = worst.min(f);
    }
    let mean = total / 20.0;
    check(
        mean >= 0.90,
        format!("noise-free F = {f_clean:.4}; noisy mean F = {mean:.4} over 20 seeds (worst {worst:.4})"),
        format!("noisy mean F = {mean:.4} below 0.90 (noise-free {f_clean:.4})"),
    )
}

/// Road and landmark labels survive on map A only, so at most the two kept
/// landmarks can produce control points; lot labels seed the propagation.
fn topo_fallback() -> Outcome {
    let mut precision = 0.0;
    let mut recall = 0.0;
    let runs = 5;
    for seed in 0..runs {
        let params = SynthParams {
            rotation: 15.0,
            scale: 1.3,
            label_keep_fraction: 0.8,
            label_blocks: true,
            rng_seed: 100 + seed,
            ..Default::default()
        };
        let pair = generate_synthetic(&params).map_err(|e| e.to_string())?;
        let mut kept_landmarks = 0;
        let stripped: Vec<Entity> = pair
            .map_b
            .entities()
            .iter()
            .map(|e| {
                let lot = e.name().is_some_and(|n| n.starts_with("LOT"));
                let keep = lot || (e.kind() == mapalign_core::GeometryKind::Point && e.name().is_some() && kept_landmarks < 2 && {
                    kept_landmarks += 1;
                    true
                });
                if keep { e.clone() } else { e.without_name() }
            })
            .collect();
        let map_b = pair.map_b.with_entities(stripped).map_err(|e| e.to_string())?;
        let config = WorkflowConfig::default();
        let out = run_workflow(&pair.map_a, &map_b, &config).map_err(|e| e.to_string())?;
        if out.trace.branch != Branch::TopoOnly || out.trace.classifier_run != ClassifierKind::Topo {
            return Err(format!("seed {seed}: branch {:?} with {} control points", out.trace.branch, out.trace.control_points));
        }
        if out.trace.control_points > 2 {
            return Err(format!("seed {seed}: {} control points", out.trace.control_points));
        }
        let s = evaluate(&out.result, &pair.truth).overall;
        precision += s.precision;
        recall += s.recall;
    }
    let (precision, recall) = (precision / runs as f64, recall / runs as f64);
    check(
        precision >= 0.95 && recall >= 0.25,
        format!("topo branch taken; mean P = {precision:.4}, R = {recall:.4} over {runs} seeds"),
        format!("topo branch P = {precision:.4}, R = {recall:.4}"),
    )
}

fn random_geometry(rng: &mut ChaCha8Rng) -> Geometry {
    loop {
        let cx: f64 = rng.random_range(-50.0..50.0);
        let cy: f64 = rng.random_range(-50.0..50.0);
        let g = match rng.random_range(0..3) {
            0 => Geometry::point(p(cx, cy)),
            1 => Geometry::polyline(
                (0..rng.random_range(2..6))
                    .map(|_| p(cx + rng.random_range(-20.0..20.0), cy + rng.random_range(-20.0..20.0)))
                    .collect(),
            ),
            _ => {
                // star-shaped ring around the centre is always simple
                let k = rng.random_range(3..8);
                let mut angles: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
                angles.sort_by(f64::total_cmp);
                Geometry::polygon(
                    angles
                        .iter()
                        .map(|a| {
                            let r = rng.random_range(2.0..15.0);
                            p(cx + r * a.cos(), cy + r * a.sin())
                        })
                        .collect(),
                )
            }
        };
        if let Ok(g) = g {
            return g;
        }
    }
}

/// Vertex-set distances computed from scratch.
fn vertex_oracle(a: &Geometry, b: &Geometry) -> (f64, f64) {
    let d = |u: &Point, v: &Point| ((u.x - v.x).powi(2) + (u.y - v.y).powi(2)).sqrt();
    let min_to = |u: &Point, set: &[Point]| set.iter().map(|v| d(u, v)).fold(f64::INFINITY, f64::min);
    let edv = a.vertices().iter().map(|u| min_to(u, b.vertices())).fold(f64::INFINITY, f64::min);
    let directed = |x: &[Point], y: &[Point]| x.iter().map(|u| min_to(u, y)).fold(0.0, f64::max);
    let hdv = directed(a.vertices(), b.vertices()).max(directed(b.vertices(), a.vertices()));
    (edv, hdv)
}

fn metric_axioms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let tol = 1e-9;
    for i in 0..10_000 {
        let (a, b, c) = (random_geometry(&mut rng), random_geometry(&mut rng), random_geometry(&mut rng));
        let m = |k, x: &Geometry, y: &Geometry| distance(k, x, y);
        let (ednp, edv, hdv) = (m(DistanceMetric::Ednp, &a, &b), m(DistanceMetric::Edv, &a, &b), m(DistanceMetric::Hdv, &a, &b));
        if !(ednp <= edv + tol && edv <= hdv + tol) {
            return Err(format!("pair {i}: EDNP {ednp} EDV {edv} HDV {hdv}"));
        }
        let (o_edv, o_hdv) = vertex_oracle(&a, &b);
        if (o_edv - edv).abs() > tol || (o_hdv - hdv).abs() > tol {
            return Err(format!("pair {i}: vertex oracle {o_edv}/{o_hdv} vs {edv}/{hdv}"));
        }
        for k in DistanceMetric::ALL {
            let (ab, ba) = (m(k, &a, &b), m(k, &b, &a));
            if ab < 0.0 || (ab - ba).abs() > tol || m(k, &a, &a) > tol {
                return Err(format!("pair {i}: {k:?} fails non-negativity, symmetry or identity"));
            }
        }
        // only the centroid and Hausdorff distances are true metrics
        for k in [DistanceMetric::Edc, DistanceMetric::Hdv] {
            if m(k, &a, &c) > m(k, &a, &b) + m(k, &b, &c) + tol {
                return Err(format!("triple {i}: {k:?} violates the triangle inequality"));
            }
        }
        let (ca, cb) = (centroid(&a), centroid(&b));
        if (m(DistanceMetric::Edc, &a, &b) - ca.distance(&cb)).abs() > tol {
            return Err(format!("pair {i}: EDC differs from centroid distance"));
        }
    }
    Ok("10000 pairs: EDNP <= EDV <= HDV, vertex oracle agrees, axioms hold".into())
}

fn pipeline_bytes(threads: usize, dir: &std::path::Path) -> Result<Vec<Vec<u8>>, String> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
    pool.install(|| {
        let params = SynthParams {
            rotation: 21.0,
            scale: 1.4,
            vertex_jitter_sigma: 0.8,
            entity_drop_fraction: 0.1,
            label_keep_fraction: 0.5,
            rng_seed: 77,
            ..Default::default()
        };
        let pair = generate_synthetic(&params).map_err(|e| e.to_string())?;
        let mut bytes = Vec::new();
        for kind in [ClassifierKind::DistApprox, ClassifierKind::DistTopoApprox] {
            let config = WorkflowConfig { classifier: kind, ..Default::default() };
            let out = run_workflow(&pair.map_a, &pair.map_b, &config).map_err(|e| e.to_string())?;
            let csv = dir.join(format!("pairs_{threads}.csv"));
            let nt = dir.join(format!("graph_{threads}.nt"));
            write_alignment(&out.result, &csv).map_err(|e| e.to_string())?;
            export_sameas_triples(&out.result, &pair.map_a, &pair.map_b, &nt).map_err(|e| e.to_string())?;
            bytes.push(std::fs::read(&csv).map_err(|e| e.to_string())?);
            bytes.push(std::fs::read(&nt).map_err(|e| e.to_string())?);
            bytes.push(serde_json::to_vec_pretty(&out.trace).map_err(|e| e.to_string())?);
        }
        Ok(bytes)
    })
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let max = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(4).max(4);
    let serial = pipeline_bytes(1, dir.path())?;
    let parallel = pipeline_bytes(max, dir.path())?;
    let again = pipeline_bytes(max, dir.path())?;
    check(
        serial == parallel && parallel == again && !serial[0].is_empty(),
        format!("CSV, N-Triples and trace identical across 1, {max}, {max} threads"),
        "outputs differ between runs".into(),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("formula consistency", formula_consistency),
        ("INN oracle equivalence", inn_oracle),
        ("INN Jaccard counting", jaccard_counting),
        ("transform recovery", transform_recovery),
        ("outlier filter", outlier_filter),
        ("end-to-end synthetic recovery", end_to_end),
        ("insufficient control point fallback", topo_fallback),
        ("distance metric ordering and axioms", metric_axioms),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {}: PASS  {name}: {msg} ({secs:.1}s)", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {msg} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
