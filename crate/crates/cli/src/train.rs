use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use handmotion::dataset::Dataset;
use handmotion::metrics::{sig6, EvalReport};
use handmotion::nets::{DiscArch, ReprMode};
use handmotion::training::{
    curves_csv, prepare, pretrain, to_checkpoint, train_from_pretrained, Method, Pretrained, RealMotionSource,
    RunOutcome, StModeConfig, TrainConfig,
};

use crate::config::{self, invalid, set, RunConfig};
use crate::{ConfigArg, Switch};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    #[value(name = "none")]
    None,
    #[value(name = "pose_prior")]
    PosePrior,
    #[value(name = "temporal_smoother")]
    TemporalSmoother,
    #[value(name = "motion_model")]
    MotionModel,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::None => Method::None,
            MethodArg::PosePrior => Method::PosePrior,
            MethodArg::TemporalSmoother => Method::TemporalSmoother,
            MethodArg::MotionModel => Method::MotionModel,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReprArg {
    #[value(name = "25d")]
    TwoHalfD,
    #[value(name = "3d")]
    ThreeD,
}

impl From<ReprArg> for ReprMode {
    fn from(r: ReprArg) -> ReprMode {
        match r {
            ReprArg::TwoHalfD => ReprMode::TwoHalfD,
            ReprArg::ThreeD => ReprMode::ThreeD,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RealArg {
    Labeled,
    Library,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DiscArchArg {
    Conv,
    Mlp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StModeArg {
    #[value(name = "per_sequence")]
    PerSequence,
    #[value(name = "per_frame")]
    PerFrame,
}

impl From<StModeArg> for StModeConfig {
    fn from(m: StModeArg) -> StModeConfig {
        match m {
            StModeArg::PerSequence => StModeConfig::PerSequence,
            StModeArg::PerFrame => StModeConfig::PerFrame,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Dataset file written by `gen-data`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    protocol: Option<u8>,
    /// Fraction of training frames (protocol 1) or videos (protocol 2) with labels.
    #[arg(long)]
    labels: Option<f64>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long, value_enum)]
    repr: Option<ReprArg>,
    #[arg(long, value_enum)]
    aug: Option<Switch>,
    #[arg(long, value_enum)]
    sn: Option<Switch>,
    #[arg(long)]
    lambda_mm: Option<f64>,
    #[arg(long)]
    lambda_z: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    real_motion_source: Option<RealArg>,
    #[arg(long, value_enum)]
    disc_arch: Option<DiscArchArg>,
    /// Steps in each of the two pretraining stages.
    #[arg(long)]
    pretrain_steps: Option<usize>,
    #[arg(long)]
    adv_steps: Option<usize>,
    /// Write a checkpoint every this many steps; 0 disables.
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    log_every: Option<usize>,
    #[arg(long, value_enum)]
    st_mode: Option<StModeArg>,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
}

impl TrainArgs {
    fn apply(&self, t: &mut TrainConfig) {
        set(&mut t.protocol, self.protocol);
        set(&mut t.label_fraction, self.labels);
        set(&mut t.method, self.method.map(Into::into));
        set(&mut t.seq_len, self.seq_len);
        set(&mut t.repr, self.repr.map(Into::into));
        set(&mut t.augment, self.aug.map(Into::into));
        set(&mut t.spectral_norm, self.sn.map(Into::into));
        set(&mut t.lambda_mm, self.lambda_mm);
        set(&mut t.lambda_z, self.lambda_z);
        set(&mut t.seed, self.seed);
        set(
            &mut t.real_motion,
            self.real_motion_source.map(|r| match r {
                RealArg::Labeled => RealMotionSource::Labeled,
                RealArg::Library => RealMotionSource::Library,
            }),
        );
        set(
            &mut t.disc_arch,
            self.disc_arch.map(|a| match a {
                DiscArchArg::Conv => DiscArch::Conv,
                DiscArchArg::Mlp => DiscArch::Mlp,
            }),
        );
        set(&mut t.pretrain_steps, self.pretrain_steps);
        set(&mut t.adv_steps, self.adv_steps);
        set(&mut t.checkpoint_every, self.checkpoint_every);
        set(&mut t.log_every, self.log_every);
        set(&mut t.st_mode, self.st_mode.map(Into::into));
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

pub fn run(a: TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(a.config.config.as_deref())?;
    set(&mut cfg.data, a.data.clone().map(Some));
    a.apply(&mut cfg.train);
    cfg.train.validate()?;
    let data_path = cfg.data.clone().ok_or_else(|| invalid("no dataset given (--data or `data` in the config)"))?;
    let dataset = load_dataset(&data_path)?;
    let outcome = run_into(&a.out, &dataset, &cfg, &mut HashMap::new())?;
    print!("{}", headline(&outcome));
    Ok(())
}

pub fn headline(o: &RunOutcome) -> String {
    format!(
        "pretrained: rootrel {} mm, abs {} mm\nfinal: rootrel {} mm, abs {} mm\n",
        sig6(o.pretrain_report.mpjpe_rootrel_mm),
        sig6(o.pretrain_report.mpjpe_abs_mm),
        sig6(o.report.mpjpe_rootrel_mm),
        sig6(o.report.mpjpe_abs_mm)
    )
}

/// Trains into run directory `dir`, reusing a pretrained model from `cache`
/// when one with the same pretraining settings exists.
pub fn run_into(
    dir: &Path,
    dataset: &Dataset,
    cfg: &RunConfig,
    cache: &mut HashMap<String, Pretrained>,
) -> Result<RunOutcome> {
    let t = &cfg.train;
    t.validate()?;
    config::write(&dir.join("config.toml"), cfg.to_toml()?)?;
    let data = prepare(dataset, t)?;
    config::write(&dir.join("split.txt"), data.split.to_text())?;
    let key = t.pretrain_key();
    let pretrained = match cache.get(&key) {
        Some(p) => p.clone(),
        None => {
            log::info!("pretraining ({key})");
            let p = pretrain(&data, t)?;
            cache.insert(key, p.clone());
            p
        }
    };
    to_checkpoint(&pretrained.model, None, 0).save(&dir.join("pretrained.ckpt"))?;
    let mut curve = String::from("step,l_sup\n");
    for (s, l) in &pretrained.curve {
        let _ = writeln!(curve, "{s},{}", sig6(*l));
    }
    config::write(&dir.join("pretrain_curve.csv"), curve)?;

    let ckpt_dir = dir.join("checkpoints");
    let every = t.checkpoint_every;
    let mut observer = |s: &handmotion::training::TrainState| -> handmotion::Result<()> {
        if every > 0 && s.step % every == 0 {
            std::fs::create_dir_all(&ckpt_dir)?;
            let mut d = s.disc.clone();
            to_checkpoint(&s.model, d.as_mut(), s.step).save(&ckpt_dir.join(format!("step_{:06}.ckpt", s.step)))?;
        }
        if s.step % 100 == 0 {
            log::info!("step {}", s.step);
        }
        Ok(())
    };
    log::info!("{} for {} steps", t.method.name(), t.adv_steps);
    let mut outcome = train_from_pretrained(dataset, data, pretrained, t, &mut observer)?;
    let step = outcome.state.step;
    to_checkpoint(&outcome.state.model, outcome.state.disc.as_mut(), step).save(&dir.join("model.ckpt"))?;
    config::write(&dir.join("curves.csv"), curves_csv(&outcome.state.curves))?;
    write_report(dir, "pretrain_report", &outcome.pretrain_report)?;
    write_report(dir, "report", &outcome.report)?;
    Ok(outcome)
}

pub fn write_report(dir: &Path, stem: &str, r: &EvalReport) -> Result<()> {
    config::write(&dir.join(format!("{stem}.csv")), r.to_csv())?;
    config::write(&dir.join(format!("{stem}.txt")), r.to_text())
}
