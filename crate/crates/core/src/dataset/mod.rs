//! Synthetic hand-motion videos, their on-disk format, semi-supervised
//! labeling protocols and fixed-length motion clips.

mod clips;
mod format;
mod split;
mod synth;

pub use clips::{augment_rotation, rotate_clip, window_clips, Augmented, MotionClip};
pub use format::{Dataset, DatasetHeader, DATASET_MAGIC, DATASET_VERSION};
pub use split::{split_protocol1, split_protocol2, DatasetSplit, Protocol};
pub use synth::{generate_synthetic_dataset, SynthConfig, MAX_HAND_SCALE, MIN_HAND_SCALE};

use crate::geometry::{CameraIntrinsics, Point2, Pose3D, NUM_JOINTS};

/// Square image extent in pixels.
pub const IMAGE_SIZE: f64 = 256.0;

/// Length of the feature vector fed to the pose model.
pub const OBS_DIM: usize = NUM_JOINTS * 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VideoRole {
    Train,
    Test,
    /// Ground-truth motion only, never paired with observations during training.
    Library,
}

impl VideoRole {
    pub fn code(self) -> u8 {
        match self {
            VideoRole::Train => 0,
            VideoRole::Test => 1,
            VideoRole::Library => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(VideoRole::Train),
            1 => Some(VideoRole::Test),
            2 => Some(VideoRole::Library),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VideoRole::Train => "train",
            VideoRole::Test => "test",
            VideoRole::Library => "library",
        }
    }
}

/// Noisy, partially occluded 2.5D detection of one frame. Occluded joints
/// carry zeros in every coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub kp2d: [Point2; NUM_JOINTS],
    pub zrel: [f64; NUM_JOINTS],
    pub visible: [bool; NUM_JOINTS],
}

impl Observation {
    /// Pose-model input: per joint `(u, v)` mapped to `[-1, 1]`, depth divided
    /// by `depth_range`, and the visibility flag.
    pub fn features(&self, depth_range: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), OBS_DIM);
        for j in 0..NUM_JOINTS {
            let o = &mut out[j * 4..j * 4 + 4];
            if self.visible[j] {
                o[0] = self.kp2d[j][0] * 2.0 / IMAGE_SIZE - 1.0;
                o[1] = self.kp2d[j][1] * 2.0 / IMAGE_SIZE - 1.0;
                o[2] = self.zrel[j] / depth_range;
                o[3] = 1.0;
            } else {
                o.fill(0.0);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub id: u32,
    pub role: VideoRole,
    /// Size factor of the hand; fixes every bone length of the video.
    pub hand_scale: f64,
    pub intrinsics: CameraIntrinsics,
    pub fps: f64,
    pub poses: Vec<Pose3D>,
    pub observations: Vec<Observation>,
}

impl VideoRecord {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn skeleton(&self) -> crate::geometry::Skeleton {
        crate::geometry::Skeleton::new(self.hand_scale)
    }
}
