//! Immediate-nearby-neighbour (INN) sets, their Jaccard score across maps,
//! and the buffered "approximately within" relation.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{buffer, distance, nearest_points, DistanceMetric, Region, SpatialIndex};
use crate::model::{AlignmentResult, Entity, MapLayer, DEFAULT_EPSILON};

/// INN set of every entity in one layer, keyed by entity id.
pub type InnSets = BTreeMap<String, BTreeSet<String>>;

/// Every entity pair whose nearest-point segment is not crossed by a third
/// entity is a pair of mutual INNs.
pub fn compute_inn_sets(layer: &MapLayer) -> InnSets {
    inn_sets_impl(layer, None)
}

/// Like [`compute_inn_sets`] but only considers pairs whose nearest-point
/// distance is at most `max_distance`. This changes the result whenever an
/// unblocked pair lies farther apart than the cap.
pub fn compute_inn_sets_capped(layer: &MapLayer, max_distance: f64) -> InnSets {
    inn_sets_impl(layer, Some(max_distance))
}

fn inn_sets_impl(layer: &MapLayer, cap: Option<f64>) -> InnSets {
    let index = SpatialIndex::build(layer);
    let ents = layer.entities();
    let n = ents.len();
    let edges: Vec<(usize, usize)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let partners: Vec<usize> = match cap {
                None => (i + 1..n).collect(),
                Some(r) => index
                    .candidates_within(ents[i].geometry(), r)
                    .into_iter()
                    .filter(|&j| j > i)
                    .collect(),
            };
            let index = &index;
            partners.into_iter().filter_map(move |j| {
                let (gi, gj) = (ents[i].geometry(), ents[j].geometry());
                let (pi, pj) = nearest_points(gi, gj);
                if let Some(r) = cap {
                    if pi.distance(&pj) > r {
                        return None;
                    }
                }
                (!index.segment_blocked(pi, pj, (i, j))).then_some((i, j))
            })
        })
        .collect();
    let mut sets: InnSets = ents
        .iter()
        .map(|e| (e.id().to_string(), BTreeSet::new()))
        .collect();
    for (i, j) in edges {
        let (a, b) = (ents[i].id(), ents[j].id());
        sets.get_mut(a).expect("known id").insert(b.to_string());
        sets.get_mut(b).expect("known id").insert(a.to_string());
    }
    sets
}

/// Jaccard-style agreement of two INN sets from different maps.
///
/// Each aligned pair (x, y) with x in `inn_a` and y in `inn_b` counts once
/// on each side, so the score is 2m / (|inn_a| + |inn_b|). Two empty sets
/// score 0.
pub fn inn_jaccard(inn_a: &BTreeSet<String>, inn_b: &BTreeSet<String>, aligned: &AlignmentResult) -> f64 {
    let total = inn_a.len() + inn_b.len();
    if total == 0 {
        return 0.0;
    }
    let m = inn_a
        .iter()
        .filter(|x| aligned.partner_of_a(x).is_some_and(|y| inn_b.contains(y)))
        .count();
    2.0 * m as f64 / total as f64
}

/// Which cross-layer pairs feed the buffer-distance quantile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantilePopulation {
    #[default]
    SameKind,
    AllPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApproxParams {
    /// Fixed buffer distance; derived from the data when absent.
    pub buffer_distance: Option<f64>,
    pub within_ratio_threshold: f64,
    pub quantile: f64,
    pub population: QuantilePopulation,
}

impl Default for ApproxParams {
    fn default() -> Self {
        ApproxParams {
            buffer_distance: None,
            within_ratio_threshold: 0.8,
            quantile: 0.05,
            population: QuantilePopulation::SameKind,
        }
    }
}

impl ApproxParams {
    pub fn validate(&self) -> Result<()> {
        if let Some(d) = self.buffer_distance {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidParameter(format!("buffer distance must be positive, got {d}")));
            }
        }
        if !(self.within_ratio_threshold > 0.0 && self.within_ratio_threshold <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "within ratio threshold must be in (0, 1], got {}",
                self.within_ratio_threshold
            )));
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "quantile must be in (0, 1), got {}",
                self.quantile
            )));
        }
        Ok(())
    }

    /// The fixed buffer distance, or the quantile of the data when unset.
    pub fn resolve_buffer_distance(&self, a: &MapLayer, b: &MapLayer) -> Result<f64> {
        self.validate()?;
        match self.buffer_distance {
            Some(d) => Ok(d),
            None => quantile_buffer_distance(a, b, self.quantile, self.population),
        }
    }
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Smallest buffer distance ever returned; applies when many pairs touch.
pub const MIN_BUFFER_DISTANCE: f64 = DEFAULT_EPSILON * 1e3;

/// The 0.05 quantile of nearest-point distances over cross-layer pairs of
/// the same geometry kind.
pub fn broad_buffer_distance(a: &MapLayer, b: &MapLayer) -> Result<f64> {
    quantile_buffer_distance(a, b, 0.05, QuantilePopulation::SameKind)
}

pub fn quantile_buffer_distance(a: &MapLayer, b: &MapLayer, q: f64, population: QuantilePopulation) -> Result<f64> {
    let mut dists: Vec<f64> = a
        .entities()
        .par_iter()
        .flat_map_iter(|ea| {
            b.entities()
                .iter()
                .filter(move |eb| population == QuantilePopulation::AllPairs || eb.kind() == ea.kind())
                .map(move |eb| distance(DistanceMetric::Ednp, ea.geometry(), eb.geometry()))
        })
        .collect();
    if dists.is_empty() {
        return Err(Error::NoCandidatePairs);
    }
    dists.par_sort_unstable_by(f64::total_cmp);
    Ok(quantile_sorted(&dists, q).max(MIN_BUFFER_DISTANCE))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxRelation {
    pub holds: bool,
    pub overlap_ratio: f64,
}

/// Shared area of two buffered regions relative to the smaller one.
pub fn overlap_ratio(r: &Region, s: &Region) -> f64 {
    let smaller = r.area().min(s.area());
    if smaller <= 0.0 {
        return 0.0;
    }
    (r.intersection_area(s) / smaller).clamp(0.0, 1.0)
}

/// Buffers both entities by `buffer_distance` and tests whether their
/// overlap covers at least `threshold` of the smaller buffer.
pub fn approximately_within(a: &Entity, b: &Entity, buffer_distance: f64, threshold: f64) -> Result<ApproxRelation> {
    // fixed operand order keeps the result exactly symmetric
    let (first, second) = match a
        .geometry()
        .vertices()
        .iter()
        .zip(b.geometry().vertices())
        .map(|(p, q)| p.lex_cmp(q))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.geometry().vertices().len().cmp(&b.geometry().vertices().len()))
    {
        std::cmp::Ordering::Greater => (b, a),
        _ => (a, b),
    };
    let ra = buffer(first.geometry(), buffer_distance).map_err(|e| Error::DegenerateGeometry {
        id: first.id().to_string(),
        source: e,
    })?;
    let rb = buffer(second.geometry(), buffer_distance).map_err(|e| Error::DegenerateGeometry {
        id: second.id().to_string(),
        source: e,
    })?;
    let ratio = overlap_ratio(&ra, &rb);
    Ok(ApproxRelation {
        holds: ratio >= threshold,
        overlap_ratio: ratio,
    })
}

/// Buffers of every entity in a layer, computed once and reused.
pub struct BufferedLayer {
    regions: Vec<Region>,
}

impl BufferedLayer {
    pub fn build(layer: &MapLayer, buffer_distance: f64) -> Result<Self> {
        let regions = layer
            .entities()
            .par_iter()
            .map(|e| {
                buffer(e.geometry(), buffer_distance).map_err(|err| Error::DegenerateGeometry {
                    id: e.id().to_string(),
                    source: err,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BufferedLayer { regions })
    }

    pub fn region(&self, index: usize) -> &Region {
        &self.regions[index]
    }
}
