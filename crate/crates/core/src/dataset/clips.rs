use rand::Rng as _;

use super::{VideoRecord, IMAGE_SIZE};
use crate::error::{Error, Result};
use crate::geometry::{project, rotate_about_z, CameraIntrinsics, Pose25D, Pose3D};
use crate::rng::Rng;

/// `S` consecutive ground-truth frames of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    pub video_id: u32,
    pub start: usize,
    pub intrinsics: CameraIntrinsics,
    pub poses: Vec<Pose3D>,
}

impl MotionClip {
    pub fn from_video(video: &VideoRecord, start: usize, len: usize) -> Result<Self> {
        if start + len > video.len() || len == 0 {
            return Err(Error::TooShort {
                needed: start + len.max(1),
                got: video.len(),
            });
        }
        Ok(MotionClip {
            video_id: video.id,
            start,
            intrinsics: video.intrinsics,
            poses: video.poses[start..start + len].to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn to_25d(&self) -> Result<Vec<Pose25D>> {
        self.poses.iter().map(|p| project(p, &self.intrinsics)).collect()
    }

    /// True when every joint of every frame projects inside the image.
    pub fn in_frustum(&self) -> bool {
        self.poses.iter().all(|p| match project(p, &self.intrinsics) {
            Ok(pp) => pp.kp2d.iter().flatten().all(|&c| (0.0..=IMAGE_SIZE).contains(&c)),
            Err(_) => false,
        })
    }
}

/// All windows of `len` frames starting every `stride` frames.
pub fn window_clips(video: &VideoRecord, len: usize, stride: usize) -> Result<Vec<MotionClip>> {
    if len == 0 || stride == 0 {
        return Err(Error::Config("clip length and stride must be positive".into()));
    }
    if video.len() < len {
        return Err(Error::TooShort {
            needed: len,
            got: video.len(),
        });
    }
    (0..=video.len() - len)
        .step_by(stride)
        .map(|start| MotionClip::from_video(video, start, len))
        .collect()
}

/// Rotates every frame by `angle` about the camera z axis through the root
/// joint of the first frame.
pub fn rotate_clip(clip: &MotionClip, angle: f64) -> MotionClip {
    let centre = clip.poses.first().map(|p| p.root()).unwrap_or([0.0; 3]);
    MotionClip {
        poses: clip.poses.iter().map(|p| rotate_about_z(p, centre, angle)).collect(),
        ..clip.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub clip: MotionClip,
    pub angle: f64,
    /// False when no sampled angle kept the clip inside the image.
    pub applied: bool,
}

const AUGMENT_RETRIES: usize = 8;

/// One angle drawn uniformly from `[-max_angle, max_angle]` is applied to the
/// whole clip; angles that push a joint out of the image are redrawn.
pub fn augment_rotation(clip: &MotionClip, max_angle: f64, rng: &mut Rng) -> Augmented {
    if max_angle > 0.0 {
        for _ in 0..AUGMENT_RETRIES {
            let angle = rng.gen_range(-max_angle..=max_angle);
            let rotated = rotate_clip(clip, angle);
            if rotated.in_frustum() {
                return Augmented {
                    clip: rotated,
                    angle,
                    applied: true,
                };
            }
        }
    }
    Augmented {
        clip: clip.clone(),
        angle: 0.0,
        applied: false,
    }
}
