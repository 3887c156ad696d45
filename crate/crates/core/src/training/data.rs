use rand::Rng as _;

use super::config::{RealMotionSource, TrainConfig};
use crate::dataset::{
    augment_rotation, split_protocol1, split_protocol2, Dataset, DatasetSplit, MotionClip, Protocol, VideoRecord,
    VideoRole, IMAGE_SIZE, OBS_DIM,
};
use crate::error::{Error, Result};
use crate::geometry::{lift, project, CameraIntrinsics, Pose25D, NUM_JOINTS};
use crate::nets::{LiftContext, ReprMode};
use crate::numcore::{Tape, Tensor};
use crate::nets::sequence_representation;
use crate::rng::{derive_seed, Rng};

pub(crate) const STREAM_SPLIT: u64 = 1;

/// Observation features of one unlabeled video.
#[derive(Debug, Clone)]
pub struct FeatureVideo {
    pub id: u32,
    pub intrinsics: CameraIntrinsics,
    /// `[frames, OBS_DIM]`, row-major.
    pub features: Vec<f64>,
    pub frames: usize,
}

/// Everything the training loops sample from, detached from the dataset file.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub image_size: f64,
    pub depth_range: f64,
    /// Rows of labeled frames: features `[n, OBS_DIM]`, targets `[n, 42]` and `[n, 21]`.
    pub sup_features: Vec<f64>,
    pub sup_kp: Vec<f64>,
    pub sup_zrel: Vec<f64>,
    pub unlabeled: Vec<FeatureVideo>,
    pub real: Vec<VideoRecord>,
    pub split: DatasetSplit,
}

impl TrainData {
    pub fn labeled_rows(&self) -> usize {
        self.sup_features.len() / OBS_DIM
    }
}

pub fn video_features(video: &VideoRecord, depth_range: f64) -> Vec<f64> {
    let mut out = vec![0.0; video.len() * OBS_DIM];
    for (o, row) in video.observations.iter().zip(out.chunks_mut(OBS_DIM)) {
        o.features(depth_range, row);
    }
    out
}

pub fn make_split(train: &[&VideoRecord], config: &TrainConfig) -> Result<DatasetSplit> {
    let seed = derive_seed(config.seed, STREAM_SPLIT);
    match Protocol::from_number(config.protocol)? {
        Protocol::FrameStride => split_protocol1(train, config.label_fraction, seed),
        Protocol::WholeVideo => split_protocol2(train, config.label_fraction, seed),
    }
}

/// Splits the training videos and gathers labeled rows, unlabeled videos and
/// the real-motion pool.
pub fn prepare(dataset: &Dataset, config: &TrainConfig) -> Result<TrainData> {
    config.validate()?;
    let train: Vec<&VideoRecord> = dataset.by_role(VideoRole::Train).collect();
    if train.is_empty() {
        return Err(Error::Config("dataset has no training videos".into()));
    }
    let split = make_split(&train, config)?;
    prepare_with_split(dataset, config, split)
}

pub fn prepare_with_split(dataset: &Dataset, config: &TrainConfig, split: DatasetSplit) -> Result<TrainData> {
    let depth_range = dataset.header.depth_range;
    let mut sup_features = Vec::new();
    let mut sup_kp = Vec::new();
    let mut sup_zrel = Vec::new();
    let mut row = vec![0.0; OBS_DIM];
    for (id, frame) in split.labeled_frames() {
        let v = dataset
            .video(id)
            .ok_or_else(|| Error::Config(format!("split names unknown video {id}")))?;
        v.observations[frame].features(depth_range, &mut row);
        sup_features.extend_from_slice(&row);
        let p = project(&v.poses[frame], &v.intrinsics)?;
        sup_kp.extend(p.kp2d.iter().flatten());
        sup_zrel.extend_from_slice(&p.zrel);
    }
    if sup_features.is_empty() {
        return Err(Error::Config("split has no labeled frames".into()));
    }

    let seq = config.effective_seq_len();
    let mut unlabeled_ids = match split.protocol {
        Protocol::WholeVideo => split.unlabeled_videos(),
        Protocol::FrameStride => split.masks.iter().map(|(id, _)| *id).collect(),
    };
    if unlabeled_ids.is_empty() {
        unlabeled_ids = split.masks.iter().map(|(id, _)| *id).collect();
    }
    let mut unlabeled = Vec::with_capacity(unlabeled_ids.len());
    for id in unlabeled_ids {
        let v = dataset.video(id).ok_or_else(|| Error::Config(format!("unknown video {id}")))?;
        if v.len() < seq {
            return Err(Error::TooShort { needed: seq, got: v.len() });
        }
        unlabeled.push(FeatureVideo {
            id,
            intrinsics: v.intrinsics,
            features: video_features(v, depth_range),
            frames: v.len(),
        });
    }

    let real: Vec<VideoRecord> = match config.real_motion {
        RealMotionSource::Library => dataset.by_role(VideoRole::Library).cloned().collect(),
        RealMotionSource::Labeled => {
            if split.protocol != Protocol::WholeVideo {
                return Err(Error::Config(
                    "labeled real motion needs whole-video labels; use the motion library".into(),
                ));
            }
            split
                .videos_with_labels()
                .into_iter()
                .filter_map(|id| dataset.video(id).cloned())
                .collect()
        }
    };
    if config.method.uses_discriminator() {
        if real.is_empty() {
            return Err(Error::Config("no videos available as real motion".into()));
        }
        if let Some(v) = real.iter().find(|v| v.len() < seq) {
            return Err(Error::TooShort { needed: seq, got: v.len() });
        }
    }

    Ok(TrainData {
        image_size: IMAGE_SIZE,
        depth_range,
        sup_features,
        sup_kp,
        sup_zrel,
        unlabeled,
        real,
        split,
    })
}

/// A labeled minibatch.
#[derive(Debug, Clone)]
pub struct SupBatch {
    pub features: Tensor,
    pub kp: Tensor,
    pub zrel: Tensor,
}

pub fn sample_sup(data: &TrainData, n: usize, rng: &mut Rng) -> Result<SupBatch> {
    let rows = data.labeled_rows();
    let mut f = Vec::with_capacity(n * OBS_DIM);
    let mut kp = Vec::with_capacity(n * NUM_JOINTS * 2);
    let mut z = Vec::with_capacity(n * NUM_JOINTS);
    for _ in 0..n {
        let i = rng.gen_range(0..rows);
        f.extend_from_slice(&data.sup_features[i * OBS_DIM..(i + 1) * OBS_DIM]);
        kp.extend_from_slice(&data.sup_kp[i * NUM_JOINTS * 2..(i + 1) * NUM_JOINTS * 2]);
        z.extend_from_slice(&data.sup_zrel[i * NUM_JOINTS..(i + 1) * NUM_JOINTS]);
    }
    Ok(SupBatch {
        features: Tensor::new(&[n, OBS_DIM], f)?,
        kp: Tensor::new(&[n, NUM_JOINTS * 2], kp)?,
        zrel: Tensor::new(&[n, NUM_JOINTS], z)?,
    })
}

/// Consecutive observation windows from unlabeled videos, `[clips * seq, OBS_DIM]`.
#[derive(Debug, Clone)]
pub struct ClipBatch {
    pub features: Tensor,
    pub intrinsics: Vec<CameraIntrinsics>,
    pub seq: usize,
}

pub fn sample_clips(data: &TrainData, clips: usize, seq: usize, rng: &mut Rng) -> Result<ClipBatch> {
    let mut f = Vec::with_capacity(clips * seq * OBS_DIM);
    let mut intrinsics = Vec::with_capacity(clips);
    for _ in 0..clips {
        let v = &data.unlabeled[rng.gen_range(0..data.unlabeled.len())];
        let start = rng.gen_range(0..=v.frames - seq);
        f.extend_from_slice(&v.features[start * OBS_DIM..(start + seq) * OBS_DIM]);
        intrinsics.push(v.intrinsics);
    }
    Ok(ClipBatch {
        features: Tensor::new(&[clips * seq, OBS_DIM], f)?,
        intrinsics,
        seq,
    })
}

/// Flat 2.5D values of a batch of clips, the common currency of both
/// discriminator branches.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqValues {
    /// `[clips * seq, 42]`
    pub kp: Vec<f64>,
    /// `[clips * seq, 21]`
    pub zrel: Vec<f64>,
    pub intrinsics: Vec<CameraIntrinsics>,
    pub seq: usize,
}

impl SeqValues {
    pub fn clips(&self) -> usize {
        self.intrinsics.len()
    }

    fn push_25d(&mut self, poses: &[Pose25D]) {
        for p in poses {
            self.kp.extend(p.kp2d.iter().flatten());
            self.zrel.extend_from_slice(&p.zrel);
        }
    }

    pub fn from_clips(clips: &[MotionClip]) -> Result<Self> {
        let seq = clips.first().map_or(0, |c| c.len());
        let mut out = SeqValues {
            kp: Vec::new(),
            zrel: Vec::new(),
            intrinsics: Vec::with_capacity(clips.len()),
            seq,
        };
        for c in clips {
            if c.len() != seq {
                return Err(Error::Shape("clips of unequal length".into()));
            }
            out.push_25d(&c.to_25d()?);
            out.intrinsics.push(c.intrinsics);
        }
        Ok(out)
    }

    pub fn concat(&self, other: &SeqValues) -> Result<SeqValues> {
        if self.seq != other.seq {
            return Err(Error::Shape("sequence lengths differ".into()));
        }
        let mut out = self.clone();
        out.kp.extend_from_slice(&other.kp);
        out.zrel.extend_from_slice(&other.zrel);
        out.intrinsics.extend_from_slice(&other.intrinsics);
        Ok(out)
    }
}

/// Ground-truth clips of the real-motion pool, optionally rotation-augmented.
pub fn sample_real(data: &TrainData, clips: usize, seq: usize, max_angle: Option<f64>, rng: &mut Rng, aug_rng: &mut Rng) -> Result<SeqValues> {
    let mut out = Vec::with_capacity(clips);
    for _ in 0..clips {
        let v = &data.real[rng.gen_range(0..data.real.len())];
        let start = rng.gen_range(0..=v.len() - seq);
        let clip = MotionClip::from_video(v, start, seq)?;
        out.push(match max_angle {
            Some(a) => augment_rotation(&clip, a, aug_rng).clip,
            None => clip,
        });
    }
    SeqValues::from_clips(&out)
}

/// Rotation-augments predicted clips by lifting them with the refined root
/// depths of `lift`, rotating in 3D and projecting back.
pub fn augment_predicted(values: &SeqValues, lift_ctx: &LiftContext, max_angle: f64, rng: &mut Rng) -> Result<SeqValues> {
    let seq = values.seq;
    let poses = crate::nets::outputs_to_poses(&values.kp, &values.zrel);
    let mut out = SeqValues {
        kp: Vec::with_capacity(values.kp.len()),
        zrel: Vec::with_capacity(values.zrel.len()),
        intrinsics: values.intrinsics.clone(),
        seq,
    };
    for (c, k) in values.intrinsics.iter().enumerate() {
        let frames = &poses[c * seq..(c + 1) * seq];
        let lifted: Result<Vec<_>> = frames
            .iter()
            .enumerate()
            .map(|(t, p)| lift(p, k, lift_ctx.root_depth[c * seq + t]))
            .collect();
        let rotated = lifted.ok().and_then(|poses3| {
            let clip = MotionClip {
                video_id: 0,
                start: 0,
                intrinsics: *k,
                poses: poses3,
            };
            let a = augment_rotation(&clip, max_angle, rng);
            if a.applied {
                a.clip.to_25d().ok()
            } else {
                None
            }
        });
        out.push_25d(rotated.as_deref().unwrap_or(frames));
    }
    Ok(out)
}

/// Discriminator input for constant sequence values.
pub fn representation_tensor(values: &SeqValues, mode: ReprMode, bone_mm: f64, image_size: f64, depth_range: f64) -> Result<Tensor> {
    let (b, seq) = (values.clips(), values.seq);
    let mut tape = Tape::new();
    let kp = tape.constant(Tensor::new(&[b * seq, NUM_JOINTS * 2], values.kp.clone())?);
    let z = tape.constant(Tensor::new(&[b * seq, NUM_JOINTS], values.zrel.clone())?);
    let ctx = match mode {
        ReprMode::ThreeD => Some(LiftContext::from_values(&values.kp, &values.zrel, &values.intrinsics, seq, bone_mm)?),
        ReprMode::TwoHalfD => None,
    };
    let r = sequence_representation(&mut tape, kp, z, b, seq, mode, ctx.as_ref(), image_size, depth_range)?;
    Ok(tape.value(r).clone())
}
