//! Scalar objectives, all built on the tape so they can be differentiated.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::geometry::NUM_JOINTS;
use crate::numcore::{Tape, Tensor, Var};

/// Added under the square root of the smoother so its gradient stays finite
/// for identical consecutive frames.
pub const SMOOTHER_EPS: f64 = 1e-24;

/// Supervised terms of one labeled batch.
#[derive(Debug, Clone, Copy)]
pub struct SupervisedLoss {
    pub total: Var,
    pub j2d: Var,
    pub zr: Var,
}

/// Mean absolute keypoint error plus `lambda_z` times mean absolute relative
/// depth error. Targets are in the same units as the predictions.
pub fn loss_supervised(
    tape: &mut Tape,
    kp: Var,
    zrel: Var,
    gt_kp: &Tensor,
    gt_zrel: &Tensor,
    lambda_z: f64,
) -> Result<SupervisedLoss> {
    if tape.shape(kp) != gt_kp.shape() || tape.shape(zrel) != gt_zrel.shape() {
        return Err(Error::Shape(format!(
            "supervised targets {:?}/{:?} for predictions {:?}/{:?}",
            gt_kp.shape(),
            gt_zrel.shape(),
            tape.shape(kp),
            tape.shape(zrel)
        )));
    }
    let t = tape.constant(gt_kp.clone());
    let d = tape.sub(kp, t)?;
    let d = tape.abs(d)?;
    let j2d = tape.mean(d)?;
    let t = tape.constant(gt_zrel.clone());
    let d = tape.sub(zrel, t)?;
    let d = tape.abs(d)?;
    let zr = tape.mean(d)?;
    let wz = tape.scale(zr, lambda_z)?;
    let total = tape.add(j2d, wz)?;
    Ok(SupervisedLoss { total, j2d, zr })
}

fn scores_len(tape: &Tape, scores: Var) -> Result<usize> {
    match tape.shape(scores) {
        [n] if *n > 0 => Ok(*n),
        s => Err(Error::Shape(format!("scores must be a nonempty vector, got {s:?}"))),
    }
}

fn mean_sq_dist_to_one(tape: &mut Tape, s: Var) -> Result<Var> {
    let d = tape.affine(s, -1.0, 1.0)?;
    let d = tape.square(d)?;
    tape.mean(d)
}

/// Least-squares discriminator objective. The first `n_real` scores belong
/// to real sequences, the rest to predictions.
pub fn loss_discriminator(tape: &mut Tape, scores: Var, n_real: usize) -> Result<Var> {
    let n = scores_len(tape, scores)?;
    if n_real == 0 || n_real >= n {
        return Err(Error::Shape(format!("{n_real} real among {n} scores")));
    }
    let real = tape.gather(scores, Rc::new((0..n_real).collect()), &[n_real])?;
    let fake = tape.gather(scores, Rc::new((n_real..n).collect()), &[n - n_real])?;
    let lr = mean_sq_dist_to_one(tape, real)?;
    let f = tape.square(fake)?;
    let lf = tape.mean(f)?;
    tape.add(lr, lf)
}

/// Least-squares generator objective on scores of predicted sequences.
pub fn loss_motion_model(tape: &mut Tape, scores: Var) -> Result<Var> {
    scores_len(tape, scores)?;
    mean_sq_dist_to_one(tape, scores)
}

/// Mean Euclidean norm of consecutive-frame differences of `[b, 3, S, 21]`
/// sequences, each frame taken as one 63-vector.
pub fn loss_temporal_smoother(tape: &mut Tape, seqs: Var) -> Result<Var> {
    let s = tape.shape(seqs).to_vec();
    if s.len() != 4 || s[1] != 3 || s[3] != NUM_JOINTS || s[2] < 2 {
        return Err(Error::Shape(format!("smoother needs [b, 3, S>=2, {NUM_JOINTS}], got {s:?}")));
    }
    let (b, seq) = (s[0], s[2]);
    let steps = seq - 1;
    let frame_dim = 3 * NUM_JOINTS;
    let mut next = Vec::with_capacity(b * steps * frame_dim);
    let mut prev = Vec::with_capacity(b * steps * frame_dim);
    for bi in 0..b {
        for t in 1..seq {
            for c in 0..3 {
                for j in 0..NUM_JOINTS {
                    let at = |tt: usize| ((bi * 3 + c) * seq + tt) * NUM_JOINTS + j;
                    next.push(at(t));
                    prev.push(at(t - 1));
                }
            }
        }
    }
    let shape = [b * steps, frame_dim];
    let xn = tape.gather(seqs, Rc::new(next), &shape)?;
    let xp = tape.gather(seqs, Rc::new(prev), &shape)?;
    let d = tape.sub(xn, xp)?;
    let d = tape.square(d)?;
    let ss = tape.sum_last(d)?;
    let ss = tape.affine(ss, 1.0, SMOOTHER_EPS)?;
    let norms = tape.sqrt(ss)?;
    tape.mean(norms)
}

/// Fraction of real scores above one half and fake scores below it.
pub fn discriminator_accuracy(scores: &[f64], n_real: usize) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let hits = scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| if i < n_real { s > 0.5 } else { s < 0.5 })
        .count();
    hits as f64 / scores.len() as f64
}
