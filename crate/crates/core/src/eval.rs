//! Precision, recall and F-score of an alignment against ground truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{AlignmentResult, GeometryKind, GroundTruth, MapLayer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub correct: usize,
    pub identified: usize,
    pub truth_total: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    /// Nothing was identified, so precision is reported as 0.
    pub precision_undefined: bool,
    /// The truth is empty, so recall is reported as 0.
    pub recall_undefined: bool,
}

impl Scores {
    pub fn from_counts(correct: usize, identified: usize, truth_total: usize) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(correct, identified);
        let recall = ratio(correct, truth_total);
        Scores {
            correct,
            identified,
            truth_total,
            precision,
            recall,
            f_score: f_score(precision, recall),
            precision_undefined: identified == 0,
            recall_undefined: truth_total == 0,
        }
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    #[serde(flatten)]
    pub overall: Scores,
    /// Keyed by geometry kind of the map A entity. Empty unless layers were
    /// supplied.
    pub by_kind: BTreeMap<String, Scores>,
}

pub fn evaluate(result: &AlignmentResult, truth: &GroundTruth) -> EvaluationReport {
    EvaluationReport {
        overall: count(result, truth, |_| true),
        by_kind: BTreeMap::new(),
    }
}

/// Like [`evaluate`], with a breakdown by the geometry kind of each pair's
/// map A entity. Pairs naming entities absent from `map_a` count only
/// towards the overall figures.
pub fn evaluate_with_layers(result: &AlignmentResult, truth: &GroundTruth, map_a: &MapLayer) -> EvaluationReport {
    let mut report = evaluate(result, truth);
    for kind in [GeometryKind::Point, GeometryKind::Polyline, GeometryKind::Polygon] {
        let of_kind = |id: &str| map_a.get(id).is_some_and(|e| e.kind() == kind);
        let scores = count(result, truth, of_kind);
        if scores.identified > 0 || scores.truth_total > 0 {
            report.by_kind.insert(kind.as_str().to_string(), scores);
        }
    }
    report
}

fn count(result: &AlignmentResult, truth: &GroundTruth, keep: impl Fn(&str) -> bool) -> Scores {
    let mut identified = 0;
    let mut correct = 0;
    for p in result.pairs().filter(|p| keep(&p.id_a)) {
        identified += 1;
        if truth.contains(&p.id_a, &p.id_b) {
            correct += 1;
        }
    }
    let truth_total = truth.pairs().filter(|(a, _)| keep(a)).count();
    Scores::from_counts(correct, identified, truth_total)
}
