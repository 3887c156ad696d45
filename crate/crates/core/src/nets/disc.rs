use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::layers::{BatchNorm, Conv, Linear, NormMode, SpectralNorm, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::geometry::NUM_JOINTS;
use crate::numcore::{Bound, ParamSet, Tape, Tensor, Var};
use crate::rng::Rng;

pub const MAX_DISC_PARAMS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscArch {
    /// Sequence laid out as a 3-channel `S x 21` image: encoding conv, two
    /// residual blocks, decoding conv, global average pool, sigmoid.
    Conv,
    /// Flattened sequence through three fully connected layers.
    Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscConfig {
    pub arch: DiscArch,
    pub seq_len: usize,
    pub width: usize,
    pub decode_width: usize,
    pub spectral_norm: bool,
}

impl DiscConfig {
    pub fn conv(seq_len: usize) -> Self {
        DiscConfig {
            arch: DiscArch::Conv,
            seq_len,
            width: 32,
            decode_width: 8,
            spectral_norm: false,
        }
    }
}

#[derive(Debug, Clone)]
struct ResBlock {
    conv1: Conv,
    bn: BatchNorm,
    conv2: Conv,
}

#[derive(Debug, Clone)]
enum Body {
    Conv {
        enc: Conv,
        blocks: Vec<ResBlock>,
        dec: Conv,
        out: Linear,
    },
    Mlp {
        layers: Vec<Linear>,
        out: Linear,
    },
}

/// Scores a batch of `[b, 3, S, 21]` sequences with values in `(0, 1)`.
#[derive(Debug, Clone)]
pub struct MotionDiscriminator {
    pub config: DiscConfig,
    pub params: ParamSet,
    body: Body,
}

impl MotionDiscriminator {
    pub fn new(config: DiscConfig, rng: &mut Rng) -> Result<Self> {
        let mut params = ParamSet::new();
        let sn = config.spectral_norm;
        let body = match config.arch {
            DiscArch::Conv => {
                let w = config.width;
                let enc = Conv::new(&mut params, "disc.enc", 3, w, 3, sn, rng);
                let blocks = (0..2)
                    .map(|i| ResBlock {
                        conv1: Conv::new(&mut params, &format!("disc.res{i}.conv1"), w, w, 3, sn, rng),
                        bn: BatchNorm::new(&mut params, &format!("disc.res{i}.bn"), w),
                        conv2: Conv::new(&mut params, &format!("disc.res{i}.conv2"), w, w, 3, sn, rng),
                    })
                    .collect();
                let dec = Conv::new(&mut params, "disc.dec", w, config.decode_width, 3, sn, rng);
                let out = Linear::new(&mut params, "disc.out", config.decode_width, 1, sn, rng);
                Body::Conv { enc, blocks, dec, out }
            }
            DiscArch::Mlp => {
                let mut d = 3 * config.seq_len * NUM_JOINTS;
                let layers = (0..3)
                    .map(|i| {
                        let l = Linear::new(&mut params, &format!("disc.fc{i}"), d, config.width, sn, rng);
                        d = config.width;
                        l
                    })
                    .collect();
                let out = Linear::new(&mut params, "disc.out", d, 1, sn, rng);
                Body::Mlp { layers, out }
            }
        };
        if config.arch == DiscArch::Conv && params.numel() >= MAX_DISC_PARAMS {
            return Err(Error::Architecture(format!(
                "discriminator has {} parameters, limit is {MAX_DISC_PARAMS}",
                params.numel()
            )));
        }
        Ok(MotionDiscriminator { config, params, body })
    }

    /// Returns scores of shape `[b]`. In `Train` mode normalization uses the
    /// batch and spectral-norm estimates advance one power iteration.
    pub fn forward(&mut self, tape: &mut Tape, bound: &Bound, x: Var, mode: NormMode) -> Result<Var> {
        let s = tape.shape(x).to_vec();
        if s.len() != 4 || s[1] != 3 || s[2] != self.config.seq_len || s[3] != NUM_JOINTS {
            return Err(Error::Shape(format!(
                "discriminator expects [b, 3, {}, {NUM_JOINTS}], got {s:?}",
                self.config.seq_len
            )));
        }
        let b = s[0];
        let update = mode == NormMode::Train;
        let logits = match &mut self.body {
            Body::Conv { enc, blocks, dec, out } => {
                let h = enc.forward(tape, bound, x, update)?;
                let mut h = tape.leaky_relu(h, LEAKY_SLOPE)?;
                for blk in blocks.iter_mut() {
                    let r = blk.conv1.forward(tape, bound, h, update)?;
                    let r = blk.bn.forward(tape, bound, r, mode)?;
                    let r = tape.leaky_relu(r, LEAKY_SLOPE)?;
                    let r = blk.conv2.forward(tape, bound, r, update)?;
                    h = tape.add(h, r)?;
                }
                let h = dec.forward(tape, bound, h, update)?;
                let h = tape.leaky_relu(h, LEAKY_SLOPE)?;
                let plane = self.config.seq_len * NUM_JOINTS;
                let h = tape.reshape(h, &[b, self.config.decode_width, plane])?;
                let pooled = tape.mean_last(h)?;
                out.forward(tape, bound, pooled, update)?
            }
            Body::Mlp { layers, out } => {
                let mut h = tape.reshape(x, &[b, 3 * self.config.seq_len * NUM_JOINTS])?;
                for l in layers.iter_mut() {
                    h = l.forward(tape, bound, h, update)?;
                    h = tape.leaky_relu(h, LEAKY_SLOPE)?;
                }
                out.forward(tape, bound, h, update)?
            }
        };
        let p = tape.sigmoid(logits)?;
        tape.reshape(p, &[b])
    }

    /// Frozen-mode scores of constant input.
    pub fn score(&mut self, input: &Tensor) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let x = tape.constant(input.clone());
        let y = self.forward(&mut tape, &bound, x, NormMode::Frozen)?;
        Ok(tape.value(y).data().to_vec())
    }

    fn norms(&mut self) -> Vec<&mut BatchNorm> {
        match &mut self.body {
            Body::Conv { blocks, .. } => blocks.iter_mut().map(|b| &mut b.bn).collect(),
            Body::Mlp { .. } => Vec::new(),
        }
    }

    fn spectral(&mut self) -> Vec<&mut Option<SpectralNorm>> {
        match &mut self.body {
            Body::Conv { enc, blocks, dec, out } => {
                let mut v = vec![&mut enc.sn];
                for b in blocks.iter_mut() {
                    v.push(&mut b.conv1.sn);
                    v.push(&mut b.conv2.sn);
                }
                v.push(&mut dec.sn);
                v.push(&mut out.sn);
                v
            }
            Body::Mlp { layers, out } => {
                let mut v: Vec<_> = layers.iter_mut().map(|l| &mut l.sn).collect();
                v.push(&mut out.sn);
                v
            }
        }
    }

    pub fn state(&mut self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = self.norms().into_iter().flat_map(|bn| bn.state()).collect();
        for (i, sn) in self.spectral().into_iter().enumerate() {
            if let Some(sn) = sn {
                out.push((format!("disc.sn{i}.u"), Tensor::from_vec(sn.u.clone())));
            }
        }
        out
    }

    pub fn load_state(&mut self, entries: &[(String, Tensor)]) -> Result<()> {
        for bn in self.norms() {
            bn.load_state(entries)?;
        }
        for (i, sn) in self.spectral().into_iter().enumerate() {
            if let Some(sn) = sn {
                let key = format!("disc.sn{i}.u");
                let (_, t) = entries
                    .iter()
                    .find(|(n, _)| *n == key)
                    .ok_or_else(|| Error::Architecture(format!("missing state {key}")))?;
                if t.len() != sn.u.len() {
                    return Err(Error::Architecture(format!("{key} has the wrong length")));
                }
                sn.u = t.data().to_vec();
            }
        }
        Ok(())
    }

    pub fn manifest(&self) -> BTreeMap<String, String> {
        let c = &self.config;
        let arch = match c.arch {
            DiscArch::Conv => "conv",
            DiscArch::Mlp => "mlp",
        };
        [
            ("disc.arch", arch.to_string()),
            ("disc.seq_len", c.seq_len.to_string()),
            ("disc.width", c.width.to_string()),
            ("disc.decode_width", c.decode_width.to_string()),
            ("disc.spectral_norm", c.spectral_norm.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}
