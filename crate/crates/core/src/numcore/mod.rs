//! Tensor arithmetic, reverse-mode differentiation and optimization.

pub mod checkpoint;
pub mod gradcheck;
pub mod linalg;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use optim::{clip_grad_norm, Adam, AdamConfig};
pub use params::{Bound, ParamId, ParamSet};
pub use tape::{BatchStats, NormSource, Padding, Tape, Var};
pub use tensor::Tensor;
