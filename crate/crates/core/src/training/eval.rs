use super::data::video_features;
use crate::dataset::VideoRecord;
use crate::error::Result;
use crate::geometry::{lift, refine_root_depth, Pose3D};
use crate::metrics::{EvalReport, EvalSequence, StMode};
use crate::nets::{PoseModel, FALLBACK_ROOT_DEPTH};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub st_mode: StMode,
    /// Diagnostics only: frames whose refinement fails take the ground-truth
    /// root depth instead of the previous frame's estimate.
    pub gt_root_on_failure: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            st_mode: StMode::PerSequence,
            gt_root_on_failure: false,
        }
    }
}

/// Per-frame prediction, root-depth refinement with the video's own
/// reference bone, lifting, and all four metrics. A frame whose refinement
/// fails reuses the last recovered depth and counts as a failure.
pub fn predict_video(model: &mut PoseModel, video: &VideoRecord, opts: &EvalOptions) -> Result<EvalSequence> {
    let features = video_features(video, model.config.depth_range);
    let preds = model.predict(&features)?;
    let bone = video.skeleton().reference_bone();
    let depths: Vec<Option<f64>> = preds
        .iter()
        .map(|p| refine_root_depth(p, &video.intrinsics, bone).ok())
        .collect();
    let mut last = depths.iter().flatten().next().copied().unwrap_or(FALLBACK_ROOT_DEPTH);
    let mut failures = 0;
    let mut pred = Vec::with_capacity(preds.len());
    for (t, (p, d)) in preds.iter().zip(&depths).enumerate() {
        let z = match d {
            Some(z) => *z,
            None => {
                failures += 1;
                if opts.gt_root_on_failure {
                    video.poses[t].root()[2]
                } else {
                    last
                }
            }
        };
        last = z;
        pred.push(lift(p, &video.intrinsics, z)?);
    }
    Ok(EvalSequence {
        id: video.id,
        pred,
        gt: video.poses.clone(),
        refine_failures: failures,
    })
}

pub fn evaluate(model: &mut PoseModel, videos: &[&VideoRecord], opts: &EvalOptions) -> Result<EvalReport> {
    let seqs: Result<Vec<_>> = videos.iter().map(|v| predict_video(model, v, opts)).collect();
    EvalReport::from_sequences(&seqs?, opts.st_mode)
}

/// Lifts exact 2.5D ground truth the way [`evaluate`] lifts predictions;
/// used to check the evaluation path in isolation.
pub fn oracle_sequence(video: &VideoRecord) -> Result<Vec<Pose3D>> {
    let bone = video.skeleton().reference_bone();
    video
        .poses
        .iter()
        .map(|p| {
            let q = crate::geometry::project(p, &video.intrinsics)?;
            let z = refine_root_depth(&q, &video.intrinsics, bone)?;
            lift(&q, &video.intrinsics, z)
        })
        .collect()
}
