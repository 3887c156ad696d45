//! Supervised pretraining, adversarial training against a motion
//! discriminator, the unlabeled-data baselines, and evaluation.

pub mod config;
pub mod data;
pub mod engine;
pub mod eval;
pub mod losses;
pub mod run;

pub use config::{Method, RealMotionSource, StModeConfig, TrainConfig};
pub use data::{prepare, prepare_with_split, TrainData};
pub use engine::{
    adversarial_train, canonical_bone_mm, curves_csv, pretrain, CurveRow, Pretrained, TrainState, Trainer,
};
pub use eval::{evaluate, EvalOptions};
pub use run::{model_from_checkpoint, to_checkpoint, train_and_evaluate, train_from_pretrained, RunOutcome};
