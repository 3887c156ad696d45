use rand::Rng as _;

use crate::error::Result;
use crate::numcore::{Bound, NormSource, Padding, ParamId, ParamSet, Tape, Tensor, Var};
use crate::rng::Rng;

/// Slope of every leaky rectifier in both networks.
pub const LEAKY_SLOPE: f64 = 0.2;
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// How normalization layers behave in a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// Current-batch statistics, folded into the running aggregates.
    Train,
    /// Running aggregates only; outputs are independent of batch composition.
    Frozen,
}

/// Fan-in scaled uniform initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn fan_in_uniform(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-bound..bound)).collect()).expect("init shape")
}

/// Persistent power-iteration vector estimating a weight's top singular value.
#[derive(Debug, Clone)]
pub struct SpectralNorm {
    pub u: Vec<f64>,
}

impl SpectralNorm {
    fn new(rows: usize, rng: &mut Rng) -> Self {
        let mut u: Vec<f64> = (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
        normalize(&mut u);
        SpectralNorm { u }
    }

    /// Divides `w` (viewed as `rows x cols`) by its estimated spectral norm.
    /// The singular vectors are constants; the division is differentiated.
    fn apply(&mut self, tape: &mut Tape, w: Var, rows: usize, cols: usize, update: bool) -> Result<Var> {
        let wv = tape.value(w).data().to_vec();
        let mut v = vec![0.0; cols];
        for r in 0..rows {
            for c in 0..cols {
                v[c] += wv[r * cols + c] * self.u[r];
            }
        }
        normalize(&mut v);
        let mut u = vec![0.0; rows];
        for r in 0..rows {
            u[r] = (0..cols).map(|c| wv[r * cols + c] * v[c]).sum();
        }
        normalize(&mut u);
        if update {
            self.u = u.clone();
        }
        let shape = tape.shape(w).to_vec();
        let w2 = tape.reshape(w, &[rows, cols])?;
        let ut = tape.constant(Tensor::new(&[1, rows], u)?);
        let uw = tape.matmul(ut, w2)?;
        let uwv = tape.mul_const(uw, &Tensor::new(&[1, cols], v)?)?;
        let sigma = tape.sum(uwv)?;
        let inv = tape.recip(sigma)?;
        let scaled = tape.scale_by(w2, inv)?;
        tape.reshape(scaled, &shape)
    }
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.iter_mut().for_each(|x| *x /= n);
}

/// `x W + b` for `x: [n, fan_in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
    pub sn: Option<SpectralNorm>,
}

impl Linear {
    pub fn new(params: &mut ParamSet, name: &str, fan_in: usize, fan_out: usize, sn: bool, rng: &mut Rng) -> Self {
        let w = params.add(format!("{name}.w"), fan_in_uniform(&[fan_in, fan_out], fan_in, rng));
        let b = params.add(format!("{name}.b"), fan_in_uniform(&[fan_out], fan_in, rng));
        Linear {
            w,
            b,
            fan_in,
            fan_out,
            sn: sn.then(|| SpectralNorm::new(fan_in, rng)),
        }
    }

    pub fn forward(&mut self, tape: &mut Tape, bound: &Bound, x: Var, update: bool) -> Result<Var> {
        let mut w = bound.var(self.w);
        if let Some(sn) = &mut self.sn {
            w = sn.apply(tape, w, self.fan_in, self.fan_out, update)?;
        }
        let y = tape.matmul(x, w)?;
        tape.add_bias(y, bound.var(self.b))
    }
}

/// Stride-1, same-padded square convolution.
#[derive(Debug, Clone)]
pub struct Conv {
    pub w: ParamId,
    pub b: ParamId,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub sn: Option<SpectralNorm>,
}

impl Conv {
    pub fn new(params: &mut ParamSet, name: &str, cin: usize, cout: usize, k: usize, sn: bool, rng: &mut Rng) -> Self {
        let fan_in = cin * k * k;
        let w = params.add(format!("{name}.w"), fan_in_uniform(&[cout, cin, k, k], fan_in, rng));
        let b = params.add(format!("{name}.b"), fan_in_uniform(&[cout], fan_in, rng));
        Conv {
            w,
            b,
            cin,
            cout,
            k,
            sn: sn.then(|| SpectralNorm::new(cout, rng)),
        }
    }

    pub fn forward(&mut self, tape: &mut Tape, bound: &Bound, x: Var, update: bool) -> Result<Var> {
        let mut w = bound.var(self.w);
        if let Some(sn) = &mut self.sn {
            w = sn.apply(tape, w, self.cout, self.cin * self.k * self.k, update)?;
        }
        tape.conv2d(x, w, bound.var(self.b), Padding::Same)
    }
}

/// Batch normalization over axis 1 with running aggregates.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub name: String,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    pub fn new(params: &mut ParamSet, name: &str, channels: usize) -> Self {
        BatchNorm {
            name: name.to_string(),
            gamma: params.add(format!("{name}.gamma"), Tensor::ones(&[channels])),
            beta: params.add(format!("{name}.beta"), Tensor::zeros(&[channels])),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }

    pub fn forward(&mut self, tape: &mut Tape, bound: &Bound, x: Var, mode: NormMode) -> Result<Var> {
        let (g, b) = (bound.var(self.gamma), bound.var(self.beta));
        match mode {
            NormMode::Train => {
                let (y, stats) = tape.batch_norm(x, g, b, NormSource::Batch, BN_EPS)?;
                if let Some(s) = stats {
                    for c in 0..self.running_mean.len() {
                        self.running_mean[c] = (1.0 - BN_MOMENTUM) * self.running_mean[c] + BN_MOMENTUM * s.mean[c];
                        self.running_var[c] = (1.0 - BN_MOMENTUM) * self.running_var[c] + BN_MOMENTUM * s.var[c];
                    }
                }
                Ok(y)
            }
            NormMode::Frozen => {
                let source = NormSource::Frozen {
                    mean: &self.running_mean,
                    var: &self.running_var,
                };
                Ok(tape.batch_norm(x, g, b, source, BN_EPS)?.0)
            }
        }
    }

    pub fn state(&self) -> [(String, Tensor); 2] {
        [
            (format!("{}.running_mean", self.name), Tensor::from_vec(self.running_mean.clone())),
            (format!("{}.running_var", self.name), Tensor::from_vec(self.running_var.clone())),
        ]
    }

    pub fn load_state(&mut self, entries: &[(String, Tensor)]) -> Result<()> {
        let find = |suffix: &str| {
            let key = format!("{}.{suffix}", self.name);
            entries
                .iter()
                .find(|(n, _)| *n == key)
                .map(|(_, t)| t.data().to_vec())
                .ok_or_else(|| crate::Error::Architecture(format!("missing state {key}")))
        };
        let mean = find("running_mean")?;
        let var = find("running_var")?;
        if mean.len() != self.running_mean.len() || var.len() != self.running_var.len() {
            return Err(crate::Error::Architecture(format!("{} statistics have the wrong width", self.name)));
        }
        self.running_mean = mean;
        self.running_var = var;
        Ok(())
    }
}
