use super::config::TrainConfig;
use super::data::{prepare, TrainData};
use super::engine::{adversarial_train, pretrain, Pretrained, TrainState};
use super::eval::{evaluate, EvalOptions};
use crate::dataset::{Dataset, VideoRecord, VideoRole, OBS_DIM};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::nets::{DiscArch, DiscConfig, MotionDiscriminator, PoseModel, PoseModelConfig};
use crate::numcore::Checkpoint;
use crate::rng::seeded;

pub const MODEL_PREFIX: &str = "model/";
pub const DISC_PREFIX: &str = "disc/";

/// Archive of the pose model (and optionally the discriminator) with the
/// architecture manifest and normalization state.
pub fn to_checkpoint(model: &PoseModel, disc: Option<&mut MotionDiscriminator>, step: usize) -> Checkpoint {
    let mut c = Checkpoint::new();
    for (k, v) in model.manifest() {
        c.set(&k, v);
    }
    c.set("step", step);
    for (name, t) in model.params.iter() {
        c.push(format!("{MODEL_PREFIX}{name}"), t.clone());
    }
    for (name, t) in model.state() {
        c.push(format!("{MODEL_PREFIX}{name}"), t);
    }
    if let Some(d) = disc {
        for (k, v) in d.manifest() {
            c.set(&k, v);
        }
        for (name, t) in d.params.iter() {
            c.push(format!("{DISC_PREFIX}{name}"), t.clone());
        }
        for (name, t) in d.state() {
            c.push(format!("{DISC_PREFIX}{name}"), t);
        }
    }
    c
}

fn parse<T: std::str::FromStr>(c: &Checkpoint, key: &str) -> Result<T> {
    c.require(key)?
        .parse()
        .map_err(|_| Error::Architecture(format!("manifest value of `{key}` is malformed")))
}

/// Rebuilds the pose model described by the manifest and loads its values.
pub fn model_from_checkpoint(c: &Checkpoint) -> Result<PoseModel> {
    let kind = c.require("pose.kind")?;
    if kind != "mlp" {
        return Err(Error::Architecture(format!("unknown pose model kind `{kind}`")));
    }
    let config = PoseModelConfig {
        input_dim: parse(c, "pose.input_dim")?,
        width: parse(c, "pose.width")?,
        hidden_layers: parse(c, "pose.hidden_layers")?,
        image_size: parse(c, "pose.image_size")?,
        depth_range: parse(c, "pose.depth_range")?,
    };
    if config.input_dim != OBS_DIM {
        return Err(Error::Architecture(format!(
            "checkpoint expects {} input features, observations have {OBS_DIM}",
            config.input_dim
        )));
    }
    let mut model = PoseModel::new(config, &mut seeded(0));
    let entries = c.with_prefix(MODEL_PREFIX);
    model.params.load(&entries)?;
    model.load_state(&entries)?;
    Ok(model)
}

pub fn disc_from_checkpoint(c: &Checkpoint) -> Result<MotionDiscriminator> {
    let arch = match c.require("disc.arch")? {
        "conv" => DiscArch::Conv,
        "mlp" => DiscArch::Mlp,
        other => return Err(Error::Architecture(format!("unknown discriminator `{other}`"))),
    };
    let config = DiscConfig {
        arch,
        seq_len: parse(c, "disc.seq_len")?,
        width: parse(c, "disc.width")?,
        decode_width: parse(c, "disc.decode_width")?,
        spectral_norm: parse(c, "disc.spectral_norm")?,
    };
    let mut d = MotionDiscriminator::new(config, &mut seeded(0))?;
    let entries = c.with_prefix(DISC_PREFIX);
    d.params.load(&entries)?;
    d.load_state(&entries)?;
    Ok(d)
}

/// Checks that a loaded model matches the dataset it is evaluated on.
pub fn check_compatible(model: &PoseModel, dataset: &Dataset) -> Result<()> {
    let want = dataset.header.depth_range;
    if (model.config.depth_range - want).abs() > 1e-9 * want {
        return Err(Error::Architecture(format!(
            "model depth range {} differs from dataset depth range {want}",
            model.config.depth_range
        )));
    }
    Ok(())
}

pub fn test_videos(dataset: &Dataset) -> Vec<&VideoRecord> {
    dataset.by_role(VideoRole::Test).collect()
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub data: TrainData,
    pub pretrained: Pretrained,
    pub pretrain_report: EvalReport,
    pub state: TrainState,
    pub report: EvalReport,
}

/// Pretraining, the configured training phase, and evaluation on the test videos.
pub fn train_and_evaluate(
    dataset: &Dataset,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&TrainState) -> Result<()>,
) -> Result<RunOutcome> {
    let data = prepare(dataset, config)?;
    let pretrained = pretrain(&data, config)?;
    train_from_pretrained(dataset, data, pretrained, config, observer)
}

/// Continues from an existing pretraining result, which must have been
/// produced under the same split and pretraining settings.
pub fn train_from_pretrained(
    dataset: &Dataset,
    data: TrainData,
    pretrained: Pretrained,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&TrainState) -> Result<()>,
) -> Result<RunOutcome> {
    let tests = test_videos(dataset);
    if tests.is_empty() {
        return Err(Error::Config("dataset has no test videos".into()));
    }
    let opts = EvalOptions {
        st_mode: config.st_mode.into(),
        ..EvalOptions::default()
    };
    let mut m = pretrained.model.clone();
    let pretrain_report = evaluate(&mut m, &tests, &opts)?;
    let mut state = adversarial_train(pretrained.model.clone(), &data, config, observer)?;
    let report = evaluate(&mut state.model, &tests, &opts)?;
    Ok(RunOutcome {
        data,
        pretrained,
        pretrain_report,
        state,
        report,
    })
}
