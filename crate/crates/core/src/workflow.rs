//! End-to-end alignment: georeference check, text seed, rubber sheeting,
//! classification, and the merge of seed and classifier output.

use serde::{Deserialize, Serialize};

use crate::classify::{ClassifierContext, ClassifierKind};
use crate::error::{Error, Result};
use crate::geometry::DistanceMetric;
use crate::model::{AlignmentResult, MapLayer};
use crate::rubbersheet::{rubber_sheet, AffineTransform};
use crate::textalign::{align_by_labels, TextMethod};
use crate::topology::ApproxParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkflowConfig {
    pub text_method: TextMethod,
    pub metric: DistanceMetric,
    pub classifier: ClassifierKind,
    /// Largest angle in degrees between matched roads.
    pub angle_limit: f64,
    pub approx: ApproxParams,
    /// Reserved; no stage of the default pipeline draws random numbers.
    pub random_seed: u64,
}

impl Default for WorkflowConfig {
    fn default() -> Self {
        WorkflowConfig {
            text_method: TextMethod::StrCaselessPunc,
            metric: DistanceMetric::Hdv,
            classifier: ClassifierKind::DistApprox,
            angle_limit: 45.0,
            approx: ApproxParams::default(),
            random_seed: 0,
        }
    }
}

impl WorkflowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.angle_limit > 0.0 && self.angle_limit <= 90.0) {
            return Err(Error::InvalidParameter(format!(
                "angle_limit must be in (0, 90], got {}",
                self.angle_limit
            )));
        }
        self.approx.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Both maps georeferenced; classifier runs on raw coordinates.
    Georeferenced,
    /// Map A was transformed into map B's frame.
    RubberSheeted,
    /// Too few usable control points; topological propagation only.
    TopoOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowTrace {
    pub map_a: String,
    pub map_b: String,
    pub config: WorkflowConfig,
    pub branch: Branch,
    pub classifier_run: ClassifierKind,
    pub seed_pairs: usize,
    pub control_points: usize,
    pub control_points_accepted: usize,
    pub initial_transform: Option<AffineTransform>,
    pub transform: Option<AffineTransform>,
    pub buffer_distance: Option<f64>,
    pub classifier_pairs: usize,
    pub seed_conflicts: usize,
    pub final_pairs: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct WorkflowOutput {
    pub result: AlignmentResult,
    pub trace: WorkflowTrace,
    /// Map A in the frame the classifier used.
    pub aligned_a: MapLayer,
}

/// Aligns `a` to `b`. Only an invalid configuration is an error; stage
/// failures are recorded in the trace and leave the result partial.
pub fn run_workflow(a: &MapLayer, b: &MapLayer, config: &WorkflowConfig) -> Result<WorkflowOutput> {
    config.validate()?;
    let mut trace = WorkflowTrace {
        map_a: a.map_id().to_string(),
        map_b: b.map_id().to_string(),
        config: config.clone(),
        branch: Branch::Georeferenced,
        classifier_run: config.classifier,
        seed_pairs: 0,
        control_points: 0,
        control_points_accepted: 0,
        initial_transform: None,
        transform: None,
        buffer_distance: None,
        classifier_pairs: 0,
        seed_conflicts: 0,
        final_pairs: 0,
        notes: Vec::new(),
    };

    let georeferenced = a.georeferenced() && b.georeferenced();
    let mut seed = AlignmentResult::new();
    if !georeferenced || config.classifier == ClassifierKind::Topo {
        seed = align_by_labels(a, b, config.text_method);
        trace.seed_pairs = seed.len();
        if seed.is_empty() {
            trace.notes.push("empty seed: no label matched uniquely on both maps".into());
        }
    }
    if georeferenced {
        trace.notes.push("both maps georeferenced: rubber sheeting skipped".into());
    }

    let mut aligned_a = a.clone();
    if !georeferenced {
        match rubber_sheet(a, b, &seed) {
            Ok(rs) => {
                trace.branch = Branch::RubberSheeted;
                trace.control_points = rs.control_points.len();
                trace.control_points_accepted = rs.accepted_count();
                trace.initial_transform = Some(rs.initial_transform);
                trace.transform = Some(rs.transform);
                aligned_a = rs.transformed_a;
            }
            Err(e) => {
                trace.branch = Branch::TopoOnly;
                trace.classifier_run = ClassifierKind::Topo;
                trace.control_points = crate::rubbersheet::extract_control_points(&seed, a, b).len();
                trace.notes.push(format!("rubber sheeting not possible ({e}); falling back to topo"));
            }
        }
    }

    let ctx = ClassifierContext::new(&aligned_a, b, config.metric, config.angle_limit, config.approx)?;
    let classified = match ctx.run(trace.classifier_run, &seed) {
        Ok(r) => r,
        Err(e) => {
            trace.notes.push(format!("classifier {} produced nothing: {e}", trace.classifier_run));
            AlignmentResult::new()
        }
    };
    trace.buffer_distance = ctx.buffer_distance_used();
    trace.classifier_pairs = classified.len();

    let mut result = seed;
    for pair in classified.pairs() {
        if result.contains(&pair.id_a, &pair.id_b) {
            continue;
        }
        if !result.try_insert(pair.clone()) {
            trace.seed_conflicts += 1;
        }
    }
    trace.final_pairs = result.len();
    result
        .validate_against(a, b)
        .map_err(|e| Error::Invariant(format!("workflow produced an invalid alignment: {e}")))?;

    Ok(WorkflowOutput {
        result,
        trace,
        aligned_a,
    })
}
