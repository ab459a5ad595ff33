//! The seven coordinate- and topology-based classifiers and their building
//! blocks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance, intersects, principal_angle, DistanceMetric, SpatialIndex};
use crate::model::{
    AlignmentPair, AlignmentResult, Entity, Geometry, GeometryKind, MapLayer, Point, Provenance, ScoreMetric,
};
use crate::topology::{compute_inn_sets, inn_jaccard, overlap_ratio, ApproxParams, BufferedLayer, InnSets};

/// Relative tolerance under which two distances count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Topo,
    Dist,
    Approx,
    DistTopo,
    DistApprox,
    ApproxTopo,
    DistTopoApprox,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 7] = [
        ClassifierKind::Topo,
        ClassifierKind::Dist,
        ClassifierKind::Approx,
        ClassifierKind::DistTopo,
        ClassifierKind::DistApprox,
        ClassifierKind::ApproxTopo,
        ClassifierKind::DistTopoApprox,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClassifierKind::Topo => "topo",
            ClassifierKind::Dist => "dist",
            ClassifierKind::Approx => "approx",
            ClassifierKind::DistTopo => "dist_topo",
            ClassifierKind::DistApprox => "dist_approx",
            ClassifierKind::ApproxTopo => "approx_topo",
            ClassifierKind::DistTopoApprox => "dist_topo_approx",
        }
    }

    /// Whether the classifier compares coordinates across the two maps.
    pub fn needs_common_frame(&self) -> bool {
        *self != ClassifierKind::Topo
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ClassifierKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown classifier \"{s}\""))
    }
}

/// Candidate pair by entity index, with the score that ranks it.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    a: usize,
    b: usize,
    score: f64,
}

/// Intersection of the two layers' bounding boxes.
pub fn overlap_region(a: &MapLayer, b: &MapLayer) -> Result<(Point, Point)> {
    let ((alo, ahi), (blo, bhi)) = match (a.bbox(), b.bbox()) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(Error::FramesNotAligned),
    };
    let lo = Point::new(alo.x.max(blo.x), alo.y.max(blo.y));
    let hi = Point::new(ahi.x.min(bhi.x), ahi.y.min(bhi.y));
    if lo.x > hi.x || lo.y > hi.y {
        return Err(Error::FramesNotAligned);
    }
    Ok((lo, hi))
}

/// Indices of entities whose geometry meets the box.
fn entities_in_box(layer: &MapLayer, (lo, hi): (Point, Point)) -> Vec<usize> {
    let rect = Geometry::polygon(vec![lo, Point::new(hi.x, lo.y), hi, Point::new(lo.x, hi.y)]).ok();
    layer
        .entities()
        .iter()
        .enumerate()
        .filter(|(_, e)| {
            let (elo, ehi) = e.geometry().bbox();
            let boxes_meet = elo.x <= hi.x && lo.x <= ehi.x && elo.y <= hi.y && lo.y <= ehi.y;
            boxes_meet && rect.as_ref().is_none_or(|r| intersects(r, e.geometry()))
        })
        .map(|(i, _)| i)
        .collect()
}

fn is_tied(d: f64, best: f64) -> bool {
    d - best <= TIE_TOLERANCE * d.abs().max(best.abs())
}

/// Greedy one-to-one selection. `key` orders candidates best first; ties
/// fall back to the entity ids.
fn greedy(a: &MapLayer, b: &MapLayer, mut cands: Vec<Candidate>, key: impl Fn(&Candidate) -> f64) -> Vec<Candidate> {
    cands.sort_by(|x, y| {
        key(x)
            .total_cmp(&key(y))
            .then_with(|| a.entities()[x.a].id().cmp(a.entities()[y.a].id()))
            .then_with(|| b.entities()[x.b].id().cmp(b.entities()[y.b].id()))
    });
    let mut used_a = BTreeSet::new();
    let mut used_b = BTreeSet::new();
    cands
        .into_iter()
        .filter(|c| {
            if used_a.contains(&c.a) || used_b.contains(&c.b) {
                return false;
            }
            used_a.insert(c.a);
            used_b.insert(c.b);
            true
        })
        .collect()
}

/// Shared state for running classifiers on one pair of co-registered layers.
/// Overlap, buffers and INN sets are computed on first use.
pub struct ClassifierContext<'l> {
    a: &'l MapLayer,
    b: &'l MapLayer,
    metric: DistanceMetric,
    angle_limit: f64,
    approx: ApproxParams,
    overlap: OnceLock<(Vec<usize>, Vec<usize>)>,
    buffer_distance: OnceLock<f64>,
    buffers: OnceLock<(BufferedLayer, BufferedLayer)>,
    inns: OnceLock<(InnSets, InnSets)>,
}

impl<'l> ClassifierContext<'l> {
    pub fn new(a: &'l MapLayer, b: &'l MapLayer, metric: DistanceMetric, angle_limit: f64, approx: ApproxParams) -> Result<Self> {
        if !(angle_limit > 0.0 && angle_limit <= 90.0) {
            return Err(Error::InvalidParameter(format!("angle limit must be in (0, 90], got {angle_limit}")));
        }
        approx.validate()?;
        Ok(ClassifierContext {
            a,
            b,
            metric,
            angle_limit,
            approx,
            overlap: OnceLock::new(),
            buffer_distance: OnceLock::new(),
            buffers: OnceLock::new(),
            inns: OnceLock::new(),
        })
    }

    fn overlap(&self) -> Result<&(Vec<usize>, Vec<usize>)> {
        if let Some(o) = self.overlap.get() {
            return Ok(o);
        }
        let region = overlap_region(self.a, self.b)?;
        Ok(self
            .overlap
            .get_or_init(|| (entities_in_box(self.a, region), entities_in_box(self.b, region))))
    }

    /// Buffer distance for approximate relations: fixed by the parameters
    /// or derived from the layers.
    pub fn buffer_distance(&self) -> Result<f64> {
        if let Some(d) = self.buffer_distance.get() {
            return Ok(*d);
        }
        let d = self.approx.resolve_buffer_distance(self.a, self.b)?;
        Ok(*self.buffer_distance.get_or_init(|| d))
    }

    /// Buffer distance if it has already been computed.
    pub fn buffer_distance_used(&self) -> Option<f64> {
        self.buffer_distance.get().copied()
    }

    fn buffers(&self) -> Result<&(BufferedLayer, BufferedLayer)> {
        if let Some(b) = self.buffers.get() {
            return Ok(b);
        }
        let d = self.buffer_distance()?;
        let built = (BufferedLayer::build(self.a, d)?, BufferedLayer::build(self.b, d)?);
        Ok(self.buffers.get_or_init(|| built))
    }

    pub fn inn_sets(&self) -> &(InnSets, InnSets) {
        self.inns.get_or_init(|| rayon::join(|| compute_inn_sets(self.a), || compute_inn_sets(self.b)))
    }

    fn ratio(&self, ia: usize, ib: usize) -> Result<f64> {
        let (ba, bb) = self.buffers()?;
        Ok(overlap_ratio(ba.region(ia), bb.region(ib)))
    }

    fn entity_a(&self, i: usize) -> &Entity {
        &self.a.entities()[i]
    }
    fn entity_b(&self, i: usize) -> &Entity {
        &self.b.entities()[i]
    }

    fn angle_ok(&self, ea: &Entity, eb: &Entity) -> bool {
        ea.kind() != GeometryKind::Polyline
            || principal_angle(ea.geometry(), eb.geometry()).is_ok_and(|ang| ang <= self.angle_limit)
    }

    /// Per A-entity minimum-distance candidates; every tied candidate is kept.
    fn dist_candidates(&self) -> Result<Vec<Candidate>> {
        let (in_a, in_b) = self.overlap()?;
        let per_a: Vec<Vec<Candidate>> = in_a
            .par_iter()
            .map(|&ia| {
                let ea = self.entity_a(ia);
                let scored: Vec<Candidate> = in_b
                    .iter()
                    .filter(|&&ib| {
                        let eb = self.entity_b(ib);
                        eb.kind() == ea.kind() && self.angle_ok(ea, eb)
                    })
                    .map(|&ib| Candidate {
                        a: ia,
                        b: ib,
                        score: distance(self.metric, ea.geometry(), self.entity_b(ib).geometry()),
                    })
                    .collect();
                let Some(best) = scored.iter().map(|c| c.score).min_by(f64::total_cmp) else {
                    return Vec::new();
                };
                scored.into_iter().filter(|c| is_tied(c.score, best)).collect()
            })
            .collect();
        Ok(per_a.into_iter().flatten().collect())
    }

    /// Same-kind candidates satisfying approximately-within, scored by
    /// overlap ratio.
    fn approx_candidates(&self) -> Result<Vec<Candidate>> {
        let (in_a, in_b) = self.overlap()?;
        let d = self.buffer_distance()?;
        self.buffers()?;
        let index = SpatialIndex::build(self.b);
        let in_b: BTreeSet<usize> = in_b.iter().copied().collect();
        let per_a: Vec<Result<Vec<Candidate>>> = in_a
            .par_iter()
            .map(|&ia| {
                let ea = self.entity_a(ia);
                let mut out = Vec::new();
                for ib in index.candidates_within(ea.geometry(), 2.0 * d) {
                    if !in_b.contains(&ib) || self.entity_b(ib).kind() != ea.kind() {
                        continue;
                    }
                    let r = self.ratio(ia, ib)?;
                    if r >= self.approx.within_ratio_threshold {
                        out.push(Candidate { a: ia, b: ib, score: r });
                    }
                }
                Ok(out)
            })
            .collect();
        Ok(per_a.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect())
    }

    /// Keeps candidates that have a supporting pair among their INNs within
    /// `cands` itself.
    fn topo_supported(&self, cands: Vec<Candidate>) -> Vec<Candidate> {
        let (inn_a, inn_b) = self.inn_sets();
        let present: BTreeSet<(&str, &str)> = cands
            .iter()
            .map(|c| (self.entity_a(c.a).id(), self.entity_b(c.b).id()))
            .collect();
        cands
            .into_iter()
            .filter(|c| has_inn_support(self.entity_a(c.a).id(), self.entity_b(c.b).id(), inn_a, inn_b, &present))
            .collect()
    }

    fn approx_holds(&self, cands: Vec<Candidate>) -> Result<Vec<(Candidate, f64)>> {
        let scored: Vec<Result<Option<(Candidate, f64)>>> = cands
            .into_par_iter()
            .map(|c| {
                let r = self.ratio(c.a, c.b)?;
                Ok((r >= self.approx.within_ratio_threshold).then_some((c, r)))
            })
            .collect();
        Ok(scored.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect())
    }

    fn to_result(&self, chosen: Vec<Candidate>, provenance: Provenance, metric: ScoreMetric) -> AlignmentResult {
        let mut r = AlignmentResult::new();
        for c in chosen {
            let pair = AlignmentPair::new(self.entity_a(c.a).id(), self.entity_b(c.b).id(), provenance)
                .with_score(metric, c.score);
            let inserted = r.try_insert(pair);
            debug_assert!(inserted, "greedy selection is one-to-one");
        }
        r
    }

    /// Nearest candidate per target. With `keep_ties` false a target whose
    /// nearest distance is shared by several candidates stays unmatched; with
    /// it true the tie is left to the greedy id order.
    pub fn align_dist(&self, keep_ties: bool) -> Result<AlignmentResult> {
        let mut cands = self.dist_candidates()?;
        if !keep_ties {
            let mut count: BTreeMap<usize, usize> = BTreeMap::new();
            for c in &cands {
                *count.entry(c.a).or_default() += 1;
            }
            cands.retain(|c| count[&c.a] == 1);
        }
        let chosen = greedy(self.a, self.b, cands, |c| c.score);
        Ok(self.to_result(chosen, Provenance::Dist, self.metric.score_metric()))
    }

    pub fn align_approx(&self) -> Result<AlignmentResult> {
        let chosen = greedy(self.a, self.b, self.approx_candidates()?, |c| -c.score);
        Ok(self.to_result(chosen, Provenance::Approx, ScoreMetric::OverlapRatio))
    }

    pub fn align_topo(&self, seed: &AlignmentResult) -> AlignmentResult {
        let (inn_a, inn_b) = self.inn_sets();
        align_topo_with(self.a, self.b, seed, inn_a, inn_b)
    }

    pub fn run(&self, kind: ClassifierKind, seed: &AlignmentResult) -> Result<AlignmentResult> {
        let dist_metric = self.metric.score_metric();
        let out = match kind {
            ClassifierKind::Topo => self.align_topo(seed),
            ClassifierKind::Dist => self.align_dist(false)?,
            ClassifierKind::Approx => self.align_approx()?,
            ClassifierKind::DistTopo => {
                let kept = self.topo_supported(self.dist_candidates()?);
                self.to_result(greedy(self.a, self.b, kept, |c| c.score), Provenance::Refined, dist_metric)
            }
            ClassifierKind::DistApprox => {
                let kept = self.approx_holds(self.dist_candidates()?)?;
                self.resolve_by_distance_then_ratio(kept)
            }
            ClassifierKind::ApproxTopo => {
                let approx = greedy(self.a, self.b, self.approx_candidates()?, |c| -c.score);
                let kept = self.topo_supported(approx);
                self.to_result(kept, Provenance::Refined, ScoreMetric::OverlapRatio)
            }
            ClassifierKind::DistTopoApprox => {
                let kept = self.approx_holds(self.dist_candidates()?)?;
                let ratios: BTreeMap<(usize, usize), f64> = kept.iter().map(|(c, r)| ((c.a, c.b), *r)).collect();
                let topo = self.topo_supported(kept.into_iter().map(|(c, _)| c).collect());
                let kept = topo.into_iter().map(|c| (c, ratios[&(c.a, c.b)])).collect();
                self.resolve_by_distance_then_ratio(kept)
            }
        };
        Ok(out)
    }

    /// One-to-one choice among distance candidates: nearest first, equal
    /// distances settled by the larger overlap ratio.
    fn resolve_by_distance_then_ratio(&self, mut kept: Vec<(Candidate, f64)>) -> AlignmentResult {
        kept.sort_by(|(x, rx), (y, ry)| {
            x.score
                .total_cmp(&y.score)
                .then(ry.total_cmp(rx))
                .then_with(|| self.entity_a(x.a).id().cmp(self.entity_a(y.a).id()))
                .then_with(|| self.entity_b(x.b).id().cmp(self.entity_b(y.b).id()))
        });
        // ranks are already final, so greedy only needs a stable key
        let order: Vec<Candidate> = kept.into_iter().map(|(c, _)| c).collect();
        let rank: BTreeMap<(usize, usize), usize> = order.iter().enumerate().map(|(i, c)| ((c.a, c.b), i)).collect();
        let chosen = greedy(self.a, self.b, order, |c| rank[&(c.a, c.b)] as f64);
        self.to_result(chosen, Provenance::Refined, self.metric.score_metric())
    }
}

fn has_inn_support(
    id_a: &str,
    id_b: &str,
    inn_a: &InnSets,
    inn_b: &InnSets,
    present: &BTreeSet<(&str, &str)>,
) -> bool {
    let (Some(na), Some(nb)) = (inn_a.get(id_a), inn_b.get(id_b)) else {
        return false;
    };
    na.iter().any(|x| nb.iter().any(|y| present.contains(&(x.as_str(), y.as_str()))))
}

/// Removes every pair without an aligned pair among its INNs. The check
/// always looks at the full input, not at the pairs surviving so far.
pub fn refine_topo(pairs: &AlignmentResult, inns_a: &InnSets, inns_b: &InnSets) -> AlignmentResult {
    let present: BTreeSet<(&str, &str)> = pairs.pairs().map(|p| (p.id_a.as_str(), p.id_b.as_str())).collect();
    pairs.filtered(|p| has_inn_support(&p.id_a, &p.id_b, inns_a, inns_b, &present))
}

/// Keeps pairs whose entities are approximately within each other at the
/// given buffer distance.
pub fn refine_approx(
    pairs: &AlignmentResult,
    a: &MapLayer,
    b: &MapLayer,
    buffer_distance: f64,
    threshold: f64,
) -> Result<AlignmentResult> {
    let verdicts: Vec<Result<bool>> = pairs
        .pairs()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|p| {
            let ea = a.get(&p.id_a).ok_or_else(|| Error::UnknownEntity { side: 'a', id: p.id_a.clone() })?;
            let eb = b.get(&p.id_b).ok_or_else(|| Error::UnknownEntity { side: 'b', id: p.id_b.clone() })?;
            Ok(crate::topology::approximately_within(ea, eb, buffer_distance, threshold)?.holds)
        })
        .collect();
    let keep: Vec<bool> = verdicts.into_iter().collect::<Result<_>>()?;
    let mut it = keep.into_iter();
    Ok(pairs.filtered(|_| it.next().unwrap_or(false)))
}

/// Topological propagation from a seed.
///
/// Each round collects unaligned same-kind pairs whose INN sets match
/// completely under the current alignment. An entity appearing in more than
/// one such pair is ambiguous and waits; the rest are committed. Stops when
/// a round commits nothing.
pub fn align_topo_with(
    a: &MapLayer,
    b: &MapLayer,
    seed: &AlignmentResult,
    inns_a: &InnSets,
    inns_b: &InnSets,
) -> AlignmentResult {
    let mut aligned = seed.clone();
    loop {
        let found: Vec<(&str, &str)> = a
            .entities()
            .par_iter()
            .filter(|e| aligned.partner_of_a(e.id()).is_none())
            .flat_map_iter(|ea| {
                let na = &inns_a[ea.id()];
                // all of INN(i) must be aligned, so j is an INN of the first member's partner
                let pivot = na
                    .iter()
                    .next()
                    .and_then(|x| aligned.partner_of_a(x))
                    .and_then(|y| inns_b.get(y));
                pivot
                    .into_iter()
                    .flatten()
                    .filter(|j| aligned.partner_of_b(j).is_none())
                    .filter_map(|j| b.get(j))
                    .filter(|eb| eb.kind() == ea.kind())
                    .filter(|eb| inn_jaccard(na, &inns_b[eb.id()], &aligned) == 1.0)
                    .map(move |eb| (ea.id(), eb.id()))
                    .collect::<Vec<_>>()
            })
            .collect();
        let mut uses: BTreeMap<(char, &str), usize> = BTreeMap::new();
        for (x, y) in &found {
            *uses.entry(('a', x)).or_default() += 1;
            *uses.entry(('b', y)).or_default() += 1;
        }
        let mut committed = 0;
        for (x, y) in found {
            if uses[&('a', x)] == 1 && uses[&('b', y)] == 1 {
                let pair = AlignmentPair::new(x, y, Provenance::Topo).with_score(ScoreMetric::InnJaccard, 1.0);
                if aligned.try_insert(pair) {
                    committed += 1;
                }
            }
        }
        if committed == 0 {
            return aligned;
        }
    }
}

/// Runs one classifier on co-registered layers with default context.
pub fn run_classifier(
    kind: ClassifierKind,
    a: &MapLayer,
    b: &MapLayer,
    seed: &AlignmentResult,
    metric: DistanceMetric,
    angle_limit: f64,
    approx: ApproxParams,
) -> Result<AlignmentResult> {
    ClassifierContext::new(a, b, metric, angle_limit, approx)?.run(kind, seed)
}
