//! Per-sample reconstruction stages: completion, assembly and scoring.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{assemble_mesh, Assembly, AssemblyParams};
use crate::geom::{PlanePrimitive, Point3};
use crate::metrics::{evaluate, nc_prim, EvalRecord, MetricsError, METRIC_SAMPLES};
use crate::model::{prepare_cloud, select_primitives, Model, ModelError};
use crate::segment::{detect_planes, SegmentParams};
use crate::synth::{resample, Sample, INPUT_POINTS};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// Settings of the stages after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructParams {
    pub segment: SegmentParams,
    /// Confidence threshold for keeping a predicted primitive.
    pub tau: f64,
    pub assembly: AssemblyParams,
    pub metric_samples: usize,
    pub metric_seed: u64,
}

impl Default for ReconstructParams {
    fn default() -> Self {
        Self {
            segment: SegmentParams::default(),
            tau: 0.5,
            assembly: AssemblyParams::default(),
            metric_samples: METRIC_SAMPLES,
            metric_seed: 0,
        }
    }
}

/// All predicted primitives for a raw input cloud, before selection.
pub fn complete(
    model: &Model,
    cloud: &[Point3],
    seg: &SegmentParams,
) -> Result<Vec<PlanePrimitive>> {
    let input = prepare_cloud(cloud, seg, &model.config)?;
    Ok(model.predict(&input)?)
}

/// Primitives of the input segmentation alone, with no completion.
pub fn baseline_primitives(cloud: &[Point3], seg: &SegmentParams) -> Vec<PlanePrimitive> {
    if cloud.is_empty() {
        return Vec::new();
    }
    let pts = if cloud.len() == INPUT_POINTS {
        cloud.to_vec()
    } else {
        resample(cloud, INPUT_POINTS)
    };
    detect_planes(&pts, seg).to_primitives(&pts)
}

/// Assembles a mesh, or `None` when the selection yields no usable surface.
pub fn reconstruct(selected: &[PlanePrimitive], params: &AssemblyParams) -> Option<Assembly> {
    assemble_mesh(selected, params).ok()
}

/// Scores one reconstruction against its sample.
pub fn score(
    name: &str,
    sample: &Sample,
    selected: &[PlanePrimitive],
    params: &ReconstructParams,
) -> Result<EvalRecord> {
    let asm = reconstruct(selected, &params.assembly);
    let prim = nc_prim(selected, &sample.gt_primitives).ok();
    Ok(evaluate(
        name,
        asm.as_ref().map(|a| &a.mesh),
        &sample.gt_mesh,
        prim,
        params.metric_samples,
        params.metric_seed,
    )?)
}

/// Complete, select, assemble and score every sample.
pub fn evaluate_model(
    model: &Model,
    samples: &[Sample],
    params: &ReconstructParams,
) -> Result<Vec<EvalRecord>> {
    samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let pred = complete(model, &s.input_cloud, &params.segment)?;
            score(
                &i.to_string(),
                s,
                &select_primitives(&pred, params.tau),
                params,
            )
        })
        .collect()
}

/// Segment the incomplete input, assemble directly and score.
pub fn evaluate_baseline(
    samples: &[Sample],
    params: &ReconstructParams,
) -> Result<Vec<EvalRecord>> {
    samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            score(
                &i.to_string(),
                s,
                &baseline_primitives(&s.input_cloud, &params.segment),
                params,
            )
        })
        .collect()
}
