//! The three-stage deflickering pipeline and its machine-readable report.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Instant;
use crate::flow::{read_flo, AdjacentFlows, FlowParams};
use crate::image::{BinaryMask, FrameSequence, IlluminationMap};
use crate::priors::{extract_priors_timed, DeflickerPriors, PriorParams, Stage1Timings};
use crate::repair::{global_correct, local_repair, temporal_blend, Neighbor, RepairParams};
use crate::ste::SteParams;

/// Parameters of every stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineParams {
    pub ste: SteParams,
    pub priors: PriorParams,
    pub flow: FlowParams,
    pub repair: RepairParams,
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        self.ste.validate()?;
        self.priors.validate()?;
        self.flow.validate()?;
        self.repair.validate()
    }
}

/// Where adjacent-frame flows come from.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum FlowSource {
    #[default]
    Internal,
    /// Directory holding `fwd_%06d.flo` (frame `k` towards `k + 1`, on `k`'s
    /// grid) and `bwd_%06d.flo` (frame `k + 1` towards `k`, on `k + 1`'s
    /// grid). Pairs without both files fall back to internal estimation.
    Imported(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowProvenance {
    Internal,
    Imported,
}

pub fn forward_flow_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("fwd_{k:06}.flo"))
}

pub fn backward_flow_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("bwd_{k:06}.flo"))
}

impl FlowSource {
    /// Flows between frames `k` and `k + 1`, given their illumination maps
    /// and the pixels to leave out of an internal estimate.
    pub fn adjacent(
        &self,
        k: usize,
        (a, a_ignore): (&IlluminationMap, &BinaryMask),
        (b, b_ignore): (&IlluminationMap, &BinaryMask),
        params: &FlowParams,
    ) -> Result<(AdjacentFlows, FlowProvenance)> {
        if let FlowSource::Imported(dir) = self {
            let (fp, bp) = (forward_flow_path(dir, k), backward_flow_path(dir, k));
            if fp.is_file() && bp.is_file() {
                let flows = AdjacentFlows {
                    forward: read_flo(&fp)?,
                    backward: read_flo(&bp)?,
                };
                Error::check_dims(a.dims(), flows.forward.dims())?;
                Error::check_dims(a.dims(), flows.backward.dims())?;
                return Ok((flows, FlowProvenance::Imported));
            }
        }
        Ok((
            AdjacentFlows::estimate_ignoring(a, b, a_ignore, b_ignore, params)?,
            FlowProvenance::Internal,
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "status", content = "reason")]
pub enum StageStatus {
    Ran,
    Skipped(String),
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Timings {
    pub stage1: Stage1Timings,
    pub stage1_total_ms: f64,
    pub stage2_global_ms: f64,
    pub stage2_flow_ms: f64,
    pub stage2_local_ms: f64,
    pub stage3_ms: f64,
    pub total_ms: f64,
}

/// Cost model of the stage-1 smoothing: histogram matches depend only on the
/// clip length and the window radius, never on resolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LutCost {
    pub levels: usize,
    pub window_frames: usize,
    pub matches_per_frame: usize,
    pub total_matches: usize,
}

impl LutCost {
    pub fn new(len: usize, ste: &SteParams) -> Self {
        let total_matches = (0..len)
            .map(|t| {
                let lo = t.saturating_sub(ste.radius);
                let hi = (t + ste.radius).min(len - 1);
                256 * (hi - lo + 1)
            })
            .sum();
        Self {
            levels: 256,
            window_frames: 2 * ste.radius + 1,
            matches_per_frame: ste.matches_per_frame(),
            total_matches,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PipelineReport {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub parameters: PipelineParams,
    pub singular: Vec<usize>,
    pub kl_series: Vec<f64>,
    pub kl_thresholds: Vec<f64>,
    pub exposure_fraction: Vec<f64>,
    pub local_stage: StageStatus,
    pub local_repaired: Vec<usize>,
    pub temporal_stage: StageStatus,
    pub flow_pairs_internal: usize,
    pub flow_pairs_imported: usize,
    pub lut_cost: LutCost,
    pub timings: Timings,
}

impl PipelineReport {
    /// JSON form without the `timings` member, for reproducibility checks.
    pub fn to_json_without_timings(&self) -> Result<serde_json::Value> {
        let mut v = serde_json::to_value(self)?;
        if let Some(o) = v.as_object_mut() {
            o.remove("timings");
        }
        Ok(v)
    }
}

pub struct PipelineOutput {
    pub frames: FrameSequence,
    /// Stage-2 global correction alone, before local repair.
    pub globally_corrected: FrameSequence,
    pub priors: DeflickerPriors,
    pub report: PipelineReport,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Run all stages on `frames`.
///
/// Stage 2 corrects every frame through its STE lookup table, then repairs
/// exposed regions of singular frames from their globally corrected
/// neighbours. Stage 3 runs only when `temporal_blend_alpha > 0`.
pub fn deflicker_pipeline(
    frames: &FrameSequence,
    params: &PipelineParams,
    flows: &FlowSource,
) -> Result<PipelineOutput> {
    params.validate()?;
    let start = Instant::now();
    let len = frames.len();
    let (w, h) = frames.dims();

    let t1 = Instant::now();
    let (priors, stage1) = extract_priors_timed(frames, &params.ste, &params.priors)?;
    let stage1_total_ms = ms(t1);

    let t2 = Instant::now();
    let global = frames
        .frames()
        .par_iter()
        .zip(&priors.illumination)
        .zip(&priors.filtered_maps)
        .map(|((f, v), fv)| global_correct(f, v, fv))
        .collect::<Result<Vec<_>>>()?;
    let stage2_global_ms = ms(t2);

    let targets: Vec<usize> = priors
        .singular
        .iter()
        .copied()
        .filter(|&t| !priors.exposure[t].is_empty())
        .collect();
    let local_stage = if !params.repair.enable_local {
        StageStatus::Skipped("disabled".into())
    } else if len < 2 {
        StageStatus::Skipped("single-frame clip".into())
    } else if targets.is_empty() {
        StageStatus::Skipped("no singular frame with exposed pixels".into())
    } else {
        StageStatus::Ran
    };
    let blend = params.repair.temporal_blend_alpha > 0.0 && len > 1;

    let mut pairs: BTreeSet<usize> = BTreeSet::new();
    if local_stage == StageStatus::Ran {
        for &t in &targets {
            if t > 0 {
                pairs.insert(t - 1);
            }
            if t + 1 < len {
                pairs.insert(t);
            }
        }
    }
    if blend {
        pairs.extend(0..len - 1);
    }

    // Flows are estimated on the filtered illumination, i.e. on the
    // brightness-stabilized stage-2 frames, without the exposed pixels.
    let t_flow = Instant::now();
    let maps = &priors.filtered_maps;
    let estimated = pairs
        .par_iter()
        .map(|&k| {
            flows
                .adjacent(
                    k,
                    (&maps[k], &priors.exposure[k]),
                    (&maps[k + 1], &priors.exposure[k + 1]),
                    &params.flow,
                )
                .map(|r| (k, r))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut flow_pairs_internal = 0;
    let mut flow_pairs_imported = 0;
    let mut flow_map: BTreeMap<usize, AdjacentFlows> = BTreeMap::new();
    for (k, (f, prov)) in estimated {
        match prov {
            FlowProvenance::Internal => flow_pairs_internal += 1,
            FlowProvenance::Imported => flow_pairs_imported += 1,
        }
        flow_map.insert(k, f);
    }
    let stage2_flow_ms = ms(t_flow);

    let t_local = Instant::now();
    let mut repaired = global.clone();
    let mut local_repaired = Vec::new();
    if local_stage == StageStatus::Ran {
        let fixed = targets
            .par_iter()
            .map(|&t| {
                let prev = (t > 0).then(|| Neighbor::previous(&global[t - 1], &flow_map[&(t - 1)]));
                let next = (t + 1 < len).then(|| Neighbor::next(&global[t + 1], &flow_map[&t]));
                local_repair(
                    &global[t],
                    &priors.exposure[t],
                    prev,
                    next,
                    &params.repair,
                    params.flow.fb_threshold,
                )
                .map(|f| (t, f))
            })
            .collect::<Result<Vec<_>>>()?;
        for (t, f) in fixed {
            repaired[t] = f;
            local_repaired.push(t);
        }
    }
    let stage2_local_ms = ms(t_local);

    let t3 = Instant::now();
    let (output, temporal_stage) = if blend {
        let ordered: Vec<AdjacentFlows> = (0..len - 1).map(|k| flow_map[&k].clone()).collect();
        (
            temporal_blend(
                &repaired,
                &ordered,
                params.repair.temporal_blend_alpha,
                params.flow.fb_threshold,
            )?,
            StageStatus::Ran,
        )
    } else if len < 2 {
        (repaired, StageStatus::Skipped("single-frame clip".into()))
    } else {
        (repaired, StageStatus::Skipped("alpha is 0".into()))
    };
    let stage3_ms = ms(t3);

    let report = PipelineReport {
        frames: len,
        width: w,
        height: h,
        parameters: *params,
        singular: priors.singular.clone(),
        kl_series: priors.kl_series.clone(),
        kl_thresholds: priors.thresholds.clone(),
        exposure_fraction: priors.exposure.iter().map(|m| m.fraction()).collect(),
        local_stage,
        local_repaired,
        temporal_stage,
        flow_pairs_internal,
        flow_pairs_imported,
        lut_cost: LutCost::new(len, &params.ste),
        timings: Timings {
            stage1,
            stage1_total_ms,
            stage2_global_ms,
            stage2_flow_ms,
            stage2_local_ms,
            stage3_ms,
            total_ms: ms(start),
        },
    };
    Ok(PipelineOutput {
        frames: FrameSequence::with_frame_rate(output, frames.frame_rate())?,
        globally_corrected: FrameSequence::with_frame_rate(global, frames.frame_rate())?,
        priors,
        report,
    })
}
