use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::StMode;
use crate::nets::{DiscArch, ReprMode};

/// Which unlabeled-data objective accompanies the supervised loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Supervised training only.
    None,
    /// Discriminator on single frames.
    PosePrior,
    /// Penalty on inter-frame differences of predicted sequences.
    TemporalSmoother,
    /// Discriminator on predicted sequences.
    MotionModel,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::PosePrior => "pose_prior",
            Method::TemporalSmoother => "temporal_smoother",
            Method::MotionModel => "motion_model",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Method::None),
            "pose_prior" => Ok(Method::PosePrior),
            "temporal_smoother" => Ok(Method::TemporalSmoother),
            "motion_model" => Ok(Method::MotionModel),
            _ => Err(Error::Config(format!("unknown method `{s}`"))),
        }
    }

    pub fn uses_discriminator(self) -> bool {
        matches!(self, Method::PosePrior | Method::MotionModel)
    }
}

/// Where real motion for the discriminator comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RealMotionSource {
    /// Ground truth of the training videos that carry labels.
    Labeled,
    /// Separate motion-only videos, unpaired with any training observation.
    Library,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub protocol: u8,
    pub label_fraction: f64,
    pub seq_len: usize,
    pub repr: ReprMode,
    pub augment: bool,
    /// Also rotate predicted clips before they reach the discriminator update.
    pub augment_fakes: bool,
    pub max_angle_deg: f64,
    pub spectral_norm: bool,
    pub disc_arch: DiscArch,
    pub disc_width: usize,
    /// Hidden width of the fully connected discriminator variant.
    pub disc_mlp_width: usize,
    pub pose_width: usize,
    pub pose_layers: usize,
    pub lambda_z: f64,
    pub lambda_mm: f64,
    pub real_motion: RealMotionSource,
    pub pretrain_steps: usize,
    pub pretrain_lr: f64,
    pub adv_steps: usize,
    pub lr_pose: f64,
    pub lr_disc: f64,
    pub adv_beta1: f64,
    pub batch_frames: usize,
    pub batch_clips: usize,
    pub disc_steps: usize,
    pub grad_clip: f64,
    pub log_every: usize,
    pub checkpoint_every: usize,
    pub st_mode: StModeConfig,
    pub seed: u64,
}

/// Serializable form of [`StMode`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StModeConfig {
    PerSequence,
    PerFrame,
}

impl From<StModeConfig> for StMode {
    fn from(m: StModeConfig) -> StMode {
        match m {
            StModeConfig::PerSequence => StMode::PerSequence,
            StModeConfig::PerFrame => StMode::PerFrame,
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::MotionModel,
            protocol: 2,
            label_fraction: 0.1,
            seq_len: 16,
            repr: ReprMode::TwoHalfD,
            augment: true,
            augment_fakes: true,
            max_angle_deg: 30.0,
            spectral_norm: false,
            disc_arch: DiscArch::Conv,
            disc_width: 32,
            disc_mlp_width: 256,
            pose_width: 256,
            pose_layers: 3,
            lambda_z: 1.0,
            lambda_mm: 3.0,
            real_motion: RealMotionSource::Library,
            pretrain_steps: 2000,
            pretrain_lr: 1e-3,
            adv_steps: 800,
            lr_pose: 1e-4,
            lr_disc: 4e-4,
            adv_beta1: 0.5,
            batch_frames: 64,
            batch_clips: 8,
            disc_steps: 1,
            grad_clip: 5.0,
            log_every: 10,
            checkpoint_every: 0,
            st_mode: StModeConfig::PerSequence,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Sequence length the discriminator actually sees.
    pub fn effective_seq_len(&self) -> usize {
        match self.method {
            Method::PosePrior => 1,
            _ => self.seq_len,
        }
    }

    /// Settings that determine the pretrained model; runs agreeing on this
    /// key can share one pretraining.
    pub fn pretrain_key(&self) -> String {
        format!(
            "p{} l{} s{} w{} h{} z{} n{} lr{} b{}",
            self.protocol,
            self.label_fraction,
            self.seed,
            self.pose_width,
            self.pose_layers,
            self.lambda_z,
            self.pretrain_steps,
            self.pretrain_lr,
            self.batch_frames
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lambda_z >= 0.0 && self.lambda_mm >= 0.0) {
            return bad("loss weights must be non-negative".into());
        }
        if self.seq_len == 0 {
            return bad("sequence length must be at least 1".into());
        }
        if self.method == Method::TemporalSmoother && self.seq_len < 2 {
            return bad("the temporal smoother needs sequences of at least 2 frames".into());
        }
        if !(self.label_fraction > 0.0 && self.label_fraction <= 1.0) {
            return bad(format!("label fraction must lie in (0, 1], got {}", self.label_fraction));
        }
        if !matches!(self.protocol, 1 | 2) {
            return bad(format!("protocol must be 1 or 2, got {}", self.protocol));
        }
        if self.batch_frames == 0 || self.batch_clips == 0 || self.disc_steps == 0 {
            return bad("batch sizes and discriminator steps must be positive".into());
        }
        if self.pose_width == 0 || self.pose_layers == 0 || self.disc_width == 0 || self.disc_mlp_width == 0 {
            return bad("network widths must be positive".into());
        }
        if !(self.pretrain_lr > 0.0 && self.lr_pose > 0.0 && self.lr_disc > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(0.0..1.0).contains(&self.adv_beta1) {
            return bad("adversarial beta1 must lie in [0, 1)".into());
        }
        if !(self.max_angle_deg >= 0.0) || !(self.grad_clip > 0.0) {
            return bad("augmentation angle and gradient clip must be non-negative".into());
        }
        Ok(())
    }
}
