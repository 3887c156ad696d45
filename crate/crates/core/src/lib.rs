//! Semi-supervised 2.5D hand pose estimation with an adversarial motion prior.
//!
//! A per-frame pose model is trained on labeled frames and, through a
//! sequence discriminator scoring the plausibility of its predicted motion,
//! on unlabeled videos. The crate bundles everything needed to run that
//! experiment at desk scale:
//!
//! - [`numcore`]: tensors, reverse-mode differentiation, Adam, checkpoints
//! - [`geometry`]: pinhole projection, 2.5D lifting, root-depth recovery
//! - [`metrics`]: MPJPE variants, aligned errors, motion statistics
//! - [`dataset`]: synthetic hand-motion videos, labeling protocols, clips
//! - [`nets`]: the pose model and the motion discriminator
//! - [`training`]: losses, pretraining, adversarial training, evaluation

pub mod dataset;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod nets;
pub mod numcore;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
