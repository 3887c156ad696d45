use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{refine_root_depth, CameraIntrinsics, RefBone, REFERENCE_BONE, NUM_JOINTS, ROOT};
use crate::nets::pose::outputs_to_poses;
use crate::numcore::{Tape, Tensor, Var};

/// Joint representation fed to the discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReprMode {
    /// Normalized image coordinates and relative depth.
    #[serde(rename = "25d")]
    TwoHalfD,
    /// Camera-frame coordinates relative to the clip's first root.
    #[serde(rename = "3d")]
    ThreeD,
}

impl ReprMode {
    pub fn name(self) -> &'static str {
        match self {
            ReprMode::TwoHalfD => "25d",
            ReprMode::ThreeD => "3d",
        }
    }
}

/// Root depth assumed when a clip has no usable refinement at all, mm.
pub const FALLBACK_ROOT_DEPTH: f64 = 675.0;

/// Constant geometry needed to lift a batch of clips to 3D.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftContext {
    /// One entry per clip.
    pub intrinsics: Vec<CameraIntrinsics>,
    /// One absolute root depth per frame.
    pub root_depth: Vec<f64>,
    /// Lifted root of each clip's first frame.
    pub origin: Vec<[f64; 3]>,
    /// Frames whose depth came from a neighbour because refinement failed.
    pub refine_failures: usize,
}

impl LiftContext {
    /// Root depths by per-frame refinement against a bone of `bone_mm`; a
    /// failed frame inherits the previous frame's depth.
    pub fn from_values(kp: &[f64], zrel: &[f64], intrinsics: &[CameraIntrinsics], seq: usize, bone_mm: f64) -> Result<Self> {
        let poses = outputs_to_poses(kp, zrel);
        if poses.len() != intrinsics.len() * seq {
            return Err(Error::Shape(format!(
                "{} frames for {} clips of {seq}",
                poses.len(),
                intrinsics.len()
            )));
        }
        let bone = RefBone {
            joint_a: REFERENCE_BONE.0,
            joint_b: REFERENCE_BONE.1,
            length_mm: bone_mm,
        };
        let mut root_depth = Vec::with_capacity(poses.len());
        let mut origin = Vec::with_capacity(intrinsics.len());
        let mut failures = 0;
        for (c, k) in intrinsics.iter().enumerate() {
            let frames = &poses[c * seq..(c + 1) * seq];
            let depths: Vec<Option<f64>> = frames.iter().map(|p| refine_root_depth(p, k, bone).ok()).collect();
            let first_ok = depths.iter().flatten().next().copied().unwrap_or(FALLBACK_ROOT_DEPTH);
            let mut last = first_ok;
            for d in &depths {
                match d {
                    Some(z) => last = *z,
                    None => failures += 1,
                }
                root_depth.push(last);
            }
            let z0 = root_depth[c * seq];
            let r = k.ray(frames[0].kp2d[ROOT]);
            origin.push([r[0] * z0, r[1] * z0, z0]);
        }
        Ok(LiftContext {
            intrinsics: intrinsics.to_vec(),
            root_depth,
            origin,
            refine_failures: failures,
        })
    }
}

/// Assembles `[b, 3, S, 21]` discriminator input from per-frame head outputs
/// `kp: [b*S, 42]` and `zrel: [b*S, 21]`, keeping the graph differentiable.
///
/// 2.5D channels are `(2u/W - 1, 2v/W - 1, zrel/R)`. 3D channels are the
/// lifted camera coordinates minus the clip origin, divided by `R`.
#[allow(clippy::too_many_arguments)]
pub fn sequence_representation(
    tape: &mut Tape,
    kp: Var,
    zrel: Var,
    batch: usize,
    seq: usize,
    mode: ReprMode,
    lift: Option<&LiftContext>,
    image_size: f64,
    depth_range: f64,
) -> Result<Var> {
    let rows = batch * seq;
    if tape.shape(kp) != [rows, NUM_JOINTS * 2] || tape.shape(zrel) != [rows, NUM_JOINTS] {
        return Err(Error::Shape(format!(
            "representation of {batch}x{seq} frames from kp {:?} and zrel {:?}",
            tape.shape(kp),
            tape.shape(zrel)
        )));
    }
    let (planar, depth) = match mode {
        ReprMode::TwoHalfD => {
            let p = tape.affine(kp, 2.0 / image_size, -1.0)?;
            let d = tape.scale(zrel, 1.0 / depth_range)?;
            (p, d)
        }
        ReprMode::ThreeD => {
            let ctx = lift.ok_or_else(|| Error::Config("3D representation needs intrinsics".into()))?;
            if ctx.intrinsics.len() != batch || ctx.root_depth.len() != rows {
                return Err(Error::Shape("lift context does not match the batch".into()));
            }
            let mut inv_f = Vec::with_capacity(rows * NUM_JOINTS * 2);
            let mut offset = Vec::with_capacity(rows * NUM_JOINTS * 2);
            let mut depth_shift = Vec::with_capacity(rows * NUM_JOINTS);
            for r in 0..rows {
                let k = &ctx.intrinsics[r / seq];
                for _ in 0..NUM_JOINTS {
                    inv_f.extend([1.0 / k.fx, 1.0 / k.fy]);
                    offset.extend([-k.cx / k.fx, -k.cy / k.fy]);
                    depth_shift.push(ctx.root_depth[r]);
                }
            }
            let ray = tape.mul_const(kp, &Tensor::new(&[rows, NUM_JOINTS * 2], inv_f)?)?;
            let off = tape.constant(Tensor::new(&[rows, NUM_JOINTS * 2], offset)?);
            let ray = tape.add(ray, off)?;
            let shift = tape.constant(Tensor::new(&[rows, NUM_JOINTS], depth_shift)?);
            let z = tape.add(zrel, shift)?;
            let dup: Vec<usize> = (0..rows * NUM_JOINTS * 2).map(|i| i / 2).collect();
            let z2 = tape.gather(z, Rc::new(dup), &[rows, NUM_JOINTS * 2])?;
            let xy = tape.mul(ray, z2)?;
            let mut xy_origin = Vec::with_capacity(rows * NUM_JOINTS * 2);
            let mut z_origin = Vec::with_capacity(rows * NUM_JOINTS);
            for r in 0..rows {
                let o = ctx.origin[r / seq];
                for _ in 0..NUM_JOINTS {
                    xy_origin.extend([-o[0], -o[1]]);
                    z_origin.push(-o[2]);
                }
            }
            let xo = tape.constant(Tensor::new(&[rows, NUM_JOINTS * 2], xy_origin)?);
            let xy = tape.add(xy, xo)?;
            let zo = tape.constant(Tensor::new(&[rows, NUM_JOINTS], z_origin)?);
            let z = tape.add(z, zo)?;
            (tape.scale(xy, 1.0 / depth_range)?, tape.scale(z, 1.0 / depth_range)?)
        }
    };
    let pf = tape.reshape(planar, &[rows * NUM_JOINTS * 2])?;
    let df = tape.reshape(depth, &[rows * NUM_JOINTS])?;
    let flat = tape.concat(&[pf, df])?;
    tape.gather(flat, Rc::new(layout_index(batch, seq)), &[batch, 3, seq, NUM_JOINTS])
}

/// Source positions realizing the `[b, 3, S, 21]` layout from the flat
/// concatenation of planar pairs and depths.
fn layout_index(batch: usize, seq: usize) -> Vec<usize> {
    let planar_len = batch * seq * NUM_JOINTS * 2;
    let mut idx = Vec::with_capacity(batch * 3 * seq * NUM_JOINTS);
    for b in 0..batch {
        for c in 0..3 {
            for s in 0..seq {
                for j in 0..NUM_JOINTS {
                    let row = b * seq + s;
                    idx.push(if c < 2 {
                        (row * NUM_JOINTS + j) * 2 + c
                    } else {
                        planar_len + row * NUM_JOINTS + j
                    });
                }
            }
        }
    }
    idx
}
