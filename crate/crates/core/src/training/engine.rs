use super::config::{Method, TrainConfig};
use super::data::{
    augment_predicted, representation_tensor, sample_clips, sample_real, sample_sup, ClipBatch, SeqValues, SupBatch,
    TrainData,
};
use super::losses::{
    discriminator_accuracy, loss_discriminator, loss_motion_model, loss_supervised, loss_temporal_smoother,
};
use crate::dataset::OBS_DIM;
use crate::error::{Error, Result};
use crate::geometry::Skeleton;
use crate::nets::{
    sequence_representation, DiscArch, DiscConfig, LiftContext, MotionDiscriminator, NormMode, PoseModel,
    PoseModelConfig,
};
use crate::numcore::{clip_grad_norm, Adam, AdamConfig, Tape, Tensor, Var};
use crate::rng::{derive_seed, seeded, Rng};

const STREAM_INIT_MODEL: u64 = 2;
const STREAM_INIT_DISC: u64 = 3;
const STREAM_PRETRAIN: u64 = 4;
const STREAM_SUP: u64 = 5;
const STREAM_CLIPS: u64 = 6;
const STREAM_REAL: u64 = 7;
const STREAM_AUGMENT: u64 = 8;

/// Consecutive discriminator steps at a degenerate accuracy before a
/// collapse is reported.
pub const COLLAPSE_WINDOW: usize = 200;

/// Reference bone length used to lift predictions during training, where
/// the hand size of an unlabeled video is unknown.
pub fn canonical_bone_mm() -> f64 {
    Skeleton::new(1.0).reference_bone().length_mm
}

fn diverged(step: usize, what: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::NonFinite(op) => Error::Divergence(format!("{what} step {step}: non-finite value in {op}")),
        other => other,
    }
}

fn check_finite(step: usize, what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Divergence(format!("{what} step {step}: loss is {v}")))
    }
}

pub fn build_model(data: &TrainData, config: &TrainConfig) -> PoseModel {
    let mut rng = seeded(derive_seed(config.seed, STREAM_INIT_MODEL));
    PoseModel::new(
        PoseModelConfig {
            input_dim: OBS_DIM,
            width: config.pose_width,
            hidden_layers: config.pose_layers,
            image_size: data.image_size,
            depth_range: data.depth_range,
        },
        &mut rng,
    )
}

pub fn disc_config(config: &TrainConfig) -> DiscConfig {
    let mut c = DiscConfig::conv(config.effective_seq_len());
    c.arch = config.disc_arch;
    c.width = match config.disc_arch {
        DiscArch::Conv => config.disc_width,
        DiscArch::Mlp => config.disc_mlp_width,
    };
    c.spectral_norm = config.spectral_norm;
    c
}

pub fn build_disc(config: &TrainConfig) -> Result<MotionDiscriminator> {
    let mut rng = seeded(derive_seed(config.seed, STREAM_INIT_DISC));
    MotionDiscriminator::new(disc_config(config), &mut rng)
}

#[derive(Debug, Clone)]
pub struct Pretrained {
    pub model: PoseModel,
    /// `(step, supervised loss)` at every logging interval of both stages.
    pub curve: Vec<(usize, f64)>,
    pub final_loss: f64,
}

/// Supervised pretraining on labeled frames in two stages of
/// `pretrain_steps` each: first with live batch statistics, then with the
/// accumulated aggregates frozen.
pub fn pretrain(data: &TrainData, config: &TrainConfig) -> Result<Pretrained> {
    let mut model = build_model(data, config);
    let mut rng = seeded(derive_seed(config.seed, STREAM_PRETRAIN));
    let mut opt = Adam::new(
        AdamConfig {
            lr: config.pretrain_lr,
            ..AdamConfig::default()
        },
        &model.params,
    );
    let mut curve = Vec::new();
    let mut last = f64::NAN;
    let total = 2 * config.pretrain_steps;
    for step in 0..total {
        let mode = if step < config.pretrain_steps {
            NormMode::Train
        } else {
            NormMode::Frozen
        };
        let batch = sample_sup(data, config.batch_frames, &mut rng)?;
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape);
        let run = |tape: &mut Tape, model: &mut PoseModel| -> Result<Var> {
            let x = tape.constant(batch.features.clone());
            let out = model.forward(tape, &bound, x, mode)?;
            let l = loss_supervised(tape, out.kp, out.zrel, &batch.kp, &batch.zrel, config.lambda_z)?;
            tape.backward(l.total)?;
            Ok(l.total)
        };
        let l = run(&mut tape, &mut model).map_err(diverged(step, "pretrain"))?;
        last = check_finite(step, "pretrain", tape.value(l).item())?;
        let grads = model.params.grads(&tape, &bound);
        opt.step(&mut model.params, &grads)?;
        if config.log_every > 0 && (step % config.log_every == 0 || step + 1 == total) {
            curve.push((step, last));
            log::debug!("pretrain step {step} loss {last:.4}");
        }
    }
    Ok(Pretrained {
        model,
        curve,
        final_loss: last,
    })
}

/// One row of the loss-curve table. Terms that a method does not compute are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub step: usize,
    pub l_j2d: f64,
    pub l_zr: f64,
    pub l_mm: Option<f64>,
    pub l_d: Option<f64>,
    pub d_acc: Option<f64>,
}

pub const CURVE_COLUMNS: [&str; 6] = ["step", "l_j2d", "l_zr", "l_mm", "l_d", "d_acc"];

pub fn curves_csv(rows: &[CurveRow]) -> String {
    let opt = |v: Option<f64>| v.map(crate::metrics::sig6).unwrap_or_default();
    let mut out = CURVE_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.step,
            crate::metrics::sig6(r.l_j2d),
            crate::metrics::sig6(r.l_zr),
            opt(r.l_mm),
            opt(r.l_d),
            opt(r.d_acc)
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: PoseModel,
    pub disc: Option<MotionDiscriminator>,
    pub opt_model: Adam,
    pub opt_disc: Option<Adam>,
    pub step: usize,
    pub curves: Vec<CurveRow>,
    /// Normalization uses aggregate statistics; always set once pretraining ends.
    pub frozen_stats: bool,
    pub collapse_events: usize,
    /// Predicted frames whose root depth could not be refined while lifting.
    pub lift_failures: usize,
}

/// Values of the pose model's objective on one step's batches.
#[derive(Debug, Clone)]
pub struct ModelTerms {
    pub total: f64,
    pub j2d: f64,
    pub zr: f64,
    pub unlabeled: Option<f64>,
    /// Detached predictions on the unlabeled clips.
    pub fake: Option<SeqValues>,
    pub lift_failures: usize,
}

/// Builds the pose model's objective on `tape`. The discriminator, when
/// given, is bound as constants in frozen mode, so gradients pass through it
/// without touching its parameters.
#[allow(clippy::too_many_arguments)]
fn model_objective(
    tape: &mut Tape,
    model: &mut PoseModel,
    disc: Option<&mut MotionDiscriminator>,
    sup: &SupBatch,
    clips: Option<&ClipBatch>,
    config: &TrainConfig,
    data: &TrainData,
) -> Result<(Var, crate::numcore::Bound, ModelTerms)> {
    let bound = model.params.bind(tape);
    let x = tape.constant(sup.features.clone());
    let out = model.forward(tape, &bound, x, NormMode::Frozen)?;
    let l = loss_supervised(tape, out.kp, out.zrel, &sup.kp, &sup.zrel, config.lambda_z)?;
    let mut total = l.total;
    let mut terms = ModelTerms {
        total: 0.0,
        j2d: tape.value(l.j2d).item(),
        zr: tape.value(l.zr).item(),
        unlabeled: None,
        fake: None,
        lift_failures: 0,
    };
    if let Some(c) = clips {
        let x = tape.constant(c.features.clone());
        let out = model.forward(tape, &bound, x, NormMode::Frozen)?;
        let fake = SeqValues {
            kp: tape.value(out.kp).data().to_vec(),
            zrel: tape.value(out.zrel).data().to_vec(),
            intrinsics: c.intrinsics.clone(),
            seq: c.seq,
        };
        let lift = match config.repr {
            crate::nets::ReprMode::ThreeD => Some(LiftContext::from_values(
                &fake.kp,
                &fake.zrel,
                &fake.intrinsics,
                c.seq,
                canonical_bone_mm(),
            )?),
            crate::nets::ReprMode::TwoHalfD => None,
        };
        terms.lift_failures = lift.as_ref().map_or(0, |l| l.refine_failures);
        let rep = sequence_representation(
            tape,
            out.kp,
            out.zrel,
            c.intrinsics.len(),
            c.seq,
            config.repr,
            lift.as_ref(),
            data.image_size,
            data.depth_range,
        )?;
        let lu = match (config.method, disc) {
            (Method::TemporalSmoother, _) => Some(loss_temporal_smoother(tape, rep)?),
            (Method::MotionModel | Method::PosePrior, Some(d)) => {
                let dbound = d.params.bind_frozen(tape);
                let scores = d.forward(tape, &dbound, rep, NormMode::Frozen)?;
                Some(loss_motion_model(tape, scores)?)
            }
            _ => None,
        };
        if let Some(lu) = lu {
            terms.unlabeled = Some(tape.value(lu).item());
            if config.lambda_mm > 0.0 {
                let w = tape.scale(lu, config.lambda_mm)?;
                total = tape.add(total, w)?;
            }
        }
        terms.fake = Some(fake);
    }
    terms.total = tape.value(total).item();
    Ok((total, bound, terms))
}

/// Value of the pose model's objective without changing any state.
pub fn model_objective_value(
    model: &mut PoseModel,
    disc: Option<&mut MotionDiscriminator>,
    sup: &SupBatch,
    clips: Option<&ClipBatch>,
    config: &TrainConfig,
    data: &TrainData,
) -> Result<f64> {
    let mut tape = Tape::new();
    Ok(model_objective(&mut tape, model, disc, sup, clips, config, data)?.2.total)
}

/// One clipped Adam step of the pose model on its combined objective.
pub fn model_update(
    model: &mut PoseModel,
    opt: &mut Adam,
    disc: Option<&mut MotionDiscriminator>,
    sup: &SupBatch,
    clips: Option<&ClipBatch>,
    config: &TrainConfig,
    data: &TrainData,
) -> Result<ModelTerms> {
    let mut tape = Tape::new();
    let (total, bound, terms) = model_objective(&mut tape, model, disc, sup, clips, config, data)?;
    tape.backward(total)?;
    let mut grads = model.params.grads(&tape, &bound);
    clip_grad_norm(&mut grads, config.grad_clip);
    opt.step(&mut model.params, &grads)?;
    Ok(terms)
}

fn disc_forward_loss(disc: &mut MotionDiscriminator, input: &Tensor, n_real: usize) -> Result<(Tape, Var, crate::numcore::Bound, Var)> {
    let mut tape = Tape::new();
    let bound = disc.params.bind(&mut tape);
    let x = tape.constant(input.clone());
    let scores = disc.forward(&mut tape, &bound, x, NormMode::Train)?;
    let loss = loss_discriminator(&mut tape, scores, n_real)?;
    Ok((tape, loss, bound, scores))
}

/// Least-squares objective of `disc` on a batch whose first `n_real`
/// sequences are real. Runs in training mode, so normalization aggregates
/// advance.
pub fn disc_objective_value(disc: &mut MotionDiscriminator, input: &Tensor, n_real: usize) -> Result<f64> {
    let (tape, loss, _, _) = disc_forward_loss(disc, input, n_real)?;
    Ok(tape.value(loss).item())
}

/// One Adam step of the discriminator; returns its loss and accuracy before the step.
pub fn disc_update(disc: &mut MotionDiscriminator, opt: &mut Adam, input: &Tensor, n_real: usize) -> Result<(f64, f64)> {
    let (mut tape, loss, bound, scores) = disc_forward_loss(disc, input, n_real)?;
    tape.backward(loss)?;
    let grads = disc.params.grads(&tape, &bound);
    opt.step(&mut disc.params, &grads)?;
    Ok((tape.value(loss).item(), discriminator_accuracy(tape.value(scores).data(), n_real)))
}

struct Streams {
    sup: Rng,
    clips: Rng,
    real: Rng,
    augment: Rng,
}

/// Alternating optimization of the pose model and the discriminator.
pub struct Trainer<'a> {
    pub state: TrainState,
    data: &'a TrainData,
    config: &'a TrainConfig,
    streams: Streams,
    collapse_run: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(model: PoseModel, data: &'a TrainData, config: &'a TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = |lr| AdamConfig {
            lr,
            beta1: config.adv_beta1,
            ..AdamConfig::default()
        };
        let opt_model = Adam::new(adam(config.lr_pose), &model.params);
        let (disc, opt_disc) = if config.method.uses_discriminator() {
            let d = build_disc(config)?;
            let o = Adam::new(adam(config.lr_disc), &d.params);
            (Some(d), Some(o))
        } else {
            (None, None)
        };
        let s = |k| seeded(derive_seed(config.seed, k));
        Ok(Trainer {
            state: TrainState {
                model,
                disc,
                opt_model,
                opt_disc,
                step: 0,
                curves: Vec::new(),
                frozen_stats: true,
                collapse_events: 0,
                lift_failures: 0,
            },
            data,
            config,
            streams: Streams {
                sup: s(STREAM_SUP),
                clips: s(STREAM_CLIPS),
                real: s(STREAM_REAL),
                augment: s(STREAM_AUGMENT),
            },
            collapse_run: 0,
        })
    }

    fn track_collapse(&mut self, acc: f64) {
        if acc == 1.0 || acc == 0.5 {
            self.collapse_run += 1;
            if self.collapse_run == COLLAPSE_WINDOW {
                self.state.collapse_events += 1;
                log::warn!(
                    "discriminator accuracy pinned at {acc} for {COLLAPSE_WINDOW} steps (step {})",
                    self.state.step
                );
                self.collapse_run = 0;
            }
        } else {
            self.collapse_run = 0;
        }
    }

    /// One outer step: pose-model update on labeled plus unlabeled terms, then
    /// `disc_steps` discriminator updates on real against detached predicted clips.
    pub fn step(&mut self) -> Result<CurveRow> {
        let (cfg, data) = (self.config, self.data);
        let step = self.state.step;
        let seq = cfg.effective_seq_len();
        let sup = sample_sup(data, cfg.batch_frames, &mut self.streams.sup)?;
        let clips = match cfg.method {
            Method::None => None,
            _ => Some(sample_clips(data, cfg.batch_clips, seq, &mut self.streams.clips)?),
        };
        let st = &mut self.state;
        let terms = model_update(
            &mut st.model,
            &mut st.opt_model,
            st.disc.as_mut(),
            &sup,
            clips.as_ref(),
            cfg,
            data,
        )
        .map_err(diverged(step, "adversarial"))?;
        check_finite(step, "adversarial", terms.total)?;
        st.lift_failures += terms.lift_failures;

        let mut d_stats = None;
        if let (Some(disc), Some(opt), Some(fake)) = (st.disc.as_mut(), st.opt_disc.as_mut(), terms.fake.as_ref()) {
            let max_angle = cfg.augment.then(|| cfg.max_angle_deg.to_radians());
            let bone = canonical_bone_mm();
            let fake = match max_angle {
                Some(a) if cfg.augment_fakes => {
                    let ctx = LiftContext::from_values(&fake.kp, &fake.zrel, &fake.intrinsics, seq, bone)?;
                    augment_predicted(fake, &ctx, a, &mut self.streams.augment)?
                }
                _ => fake.clone(),
            };
            let fake_t = representation_tensor(&fake, cfg.repr, bone, data.image_size, data.depth_range)?;
            for _ in 0..cfg.disc_steps {
                let real = sample_real(
                    data,
                    cfg.batch_clips,
                    seq,
                    max_angle,
                    &mut self.streams.real,
                    &mut self.streams.augment,
                )?;
                let real_t = representation_tensor(&real, cfg.repr, bone, data.image_size, data.depth_range)?;
                let mut joined = real_t.data().to_vec();
                joined.extend_from_slice(fake_t.data());
                let mut shape = real_t.shape().to_vec();
                shape[0] += fake_t.shape()[0];
                let input = Tensor::new(&shape, joined)?;
                let (ld, acc) = disc_update(disc, opt, &input, real.clips()).map_err(diverged(step, "discriminator"))?;
                check_finite(step, "discriminator", ld)?;
                d_stats = Some((ld, acc));
            }
        }
        if let Some((_, acc)) = d_stats {
            self.track_collapse(acc);
        }
        let row = CurveRow {
            step,
            l_j2d: terms.j2d,
            l_zr: terms.zr,
            l_mm: terms.unlabeled,
            l_d: d_stats.map(|s| s.0),
            d_acc: d_stats.map(|s| s.1),
        };
        self.state.step += 1;
        let last = self.state.step == cfg.adv_steps;
        if cfg.log_every > 0 && (step % cfg.log_every == 0 || last) {
            self.state.curves.push(row.clone());
        }
        Ok(row)
    }

    /// Runs the configured number of steps, calling `observer` after each.
    pub fn run(mut self, observer: &mut dyn FnMut(&TrainState) -> Result<()>) -> Result<TrainState> {
        while self.state.step < self.config.adv_steps {
            self.step()?;
            observer(&self.state)?;
        }
        Ok(self.state)
    }
}

/// Adversarial (or baseline) phase starting from a pretrained model.
pub fn adversarial_train(
    model: PoseModel,
    data: &TrainData,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&TrainState) -> Result<()>,
) -> Result<TrainState> {
    Trainer::new(model, data, config)?.run(observer)
}
