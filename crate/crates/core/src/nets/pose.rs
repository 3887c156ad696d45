use std::collections::BTreeMap;

use super::layers::{BatchNorm, Linear, NormMode, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::geometry::{Pose25D, NUM_JOINTS, ROOT};
use crate::numcore::{Bound, ParamSet, Tape, Tensor, Var};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct PoseModelConfig {
    pub input_dim: usize,
    pub width: usize,
    pub hidden_layers: usize,
    pub image_size: f64,
    /// Bound on predicted relative depth, mm.
    pub depth_range: f64,
}

/// Per-frame regressor from an observation vector to 2.5D keypoints.
///
/// A fully connected trunk (linear, batch norm, leaky rectifier per layer)
/// feeds two heads. Keypoints pass through `size * sigmoid` and relative
/// depths through `depth_range * tanh`, so outputs are bounded by
/// construction; the root's relative depth is pinned to zero.
#[derive(Debug, Clone)]
pub struct PoseModel {
    pub config: PoseModelConfig,
    pub params: ParamSet,
    trunk: Vec<(Linear, BatchNorm)>,
    kp_head: Linear,
    z_head: Linear,
}

/// Output nodes of one forward pass: `kp: [n, 42]` as `(u, v)` pairs and `zrel: [n, 21]`.
#[derive(Debug, Clone, Copy)]
pub struct PoseOutput {
    pub kp: Var,
    pub zrel: Var,
}

impl PoseModel {
    pub fn new(config: PoseModelConfig, rng: &mut Rng) -> Self {
        let mut params = ParamSet::new();
        let mut trunk = Vec::with_capacity(config.hidden_layers);
        let mut d = config.input_dim;
        for i in 0..config.hidden_layers {
            let lin = Linear::new(&mut params, &format!("pose.fc{i}"), d, config.width, false, rng);
            let bn = BatchNorm::new(&mut params, &format!("pose.bn{i}"), config.width);
            trunk.push((lin, bn));
            d = config.width;
        }
        let kp_head = Linear::new(&mut params, "pose.kp", d, NUM_JOINTS * 2, false, rng);
        let z_head = Linear::new(&mut params, "pose.z", d, NUM_JOINTS, false, rng);
        PoseModel {
            config,
            params,
            trunk,
            kp_head,
            z_head,
        }
    }

    /// Zeroes both output heads so every prediction sits at the squashing midpoint.
    pub fn zero_heads(&mut self) {
        for id in [self.kp_head.w, self.kp_head.b, self.z_head.w, self.z_head.b] {
            self.params.get_mut(id).data_mut().fill(0.0);
        }
    }

    pub fn forward(&mut self, tape: &mut Tape, bound: &Bound, x: Var, mode: NormMode) -> Result<PoseOutput> {
        let shape = tape.shape(x).to_vec();
        if shape.len() != 2 || shape[1] != self.config.input_dim {
            return Err(Error::Shape(format!(
                "pose model expects [n, {}], got {shape:?}",
                self.config.input_dim
            )));
        }
        let n = shape[0];
        let mut h = x;
        for (lin, bn) in &mut self.trunk {
            h = lin.forward(tape, bound, h, false)?;
            h = bn.forward(tape, bound, h, mode)?;
            h = tape.leaky_relu(h, LEAKY_SLOPE)?;
        }
        let a = self.kp_head.forward(tape, bound, h, false)?;
        let a = tape.sigmoid(a)?;
        let kp = tape.scale(a, self.config.image_size)?;
        let b = self.z_head.forward(tape, bound, h, false)?;
        let b = tape.tanh(b)?;
        let mut mask = Tensor::full(&[n, NUM_JOINTS], self.config.depth_range);
        for row in mask.data_mut().chunks_mut(NUM_JOINTS) {
            row[ROOT] = 0.0;
        }
        let zrel = tape.mul_const(b, &mask)?;
        Ok(PoseOutput { kp, zrel })
    }

    /// Frozen-statistics predictions for a batch of feature rows.
    pub fn predict(&mut self, features: &[f64]) -> Result<Vec<Pose25D>> {
        let d = self.config.input_dim;
        if features.len() % d != 0 {
            return Err(Error::Shape(format!("{} features is not a multiple of {d}", features.len())));
        }
        let n = features.len() / d;
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let x = tape.constant(Tensor::new(&[n, d], features.to_vec())?);
        let out = self.forward(&mut tape, &bound, x, NormMode::Frozen)?;
        Ok(outputs_to_poses(tape.value(out.kp).data(), tape.value(out.zrel).data()))
    }

    pub fn state(&self) -> Vec<(String, Tensor)> {
        self.trunk.iter().flat_map(|(_, bn)| bn.state()).collect()
    }

    pub fn load_state(&mut self, entries: &[(String, Tensor)]) -> Result<()> {
        for (_, bn) in &mut self.trunk {
            bn.load_state(entries)?;
        }
        Ok(())
    }

    pub fn manifest(&self) -> BTreeMap<String, String> {
        let c = &self.config;
        [
            ("pose.kind", "mlp".to_string()),
            ("pose.input_dim", c.input_dim.to_string()),
            ("pose.width", c.width.to_string()),
            ("pose.hidden_layers", c.hidden_layers.to_string()),
            ("pose.image_size", c.image_size.to_string()),
            ("pose.depth_range", c.depth_range.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Splits raw head outputs back into per-frame poses.
pub fn outputs_to_poses(kp: &[f64], zrel: &[f64]) -> Vec<Pose25D> {
    kp.chunks(NUM_JOINTS * 2)
        .zip(zrel.chunks(NUM_JOINTS))
        .map(|(k, z)| {
            let mut p = Pose25D {
                kp2d: [[0.0; 2]; NUM_JOINTS],
                zrel: [0.0; NUM_JOINTS],
                zroot: None,
            };
            for j in 0..NUM_JOINTS {
                p.kp2d[j] = [k[2 * j], k[2 * j + 1]];
                p.zrel[j] = z[j];
            }
            p
        })
        .collect()
}
