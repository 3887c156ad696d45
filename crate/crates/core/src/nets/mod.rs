//! The per-frame pose model and the motion discriminator.

mod disc;
mod layers;
mod pose;
mod repr;

pub use disc::{DiscArch, DiscConfig, MotionDiscriminator, MAX_DISC_PARAMS};
pub use layers::{fan_in_uniform, BatchNorm, Conv, Linear, NormMode, BN_EPS, BN_MOMENTUM, LEAKY_SLOPE};
pub use pose::{outputs_to_poses, PoseModel, PoseModelConfig, PoseOutput};
pub use repr::{sequence_representation, LiftContext, ReprMode, FALLBACK_ROOT_DEPTH};
