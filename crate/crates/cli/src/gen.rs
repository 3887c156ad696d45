use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use handmotion::dataset::{generate_synthetic_dataset, Dataset, VideoRole};
use handmotion::metrics::{default_acceleration_edges, default_velocity_edges, motion_stats, sig6};

use crate::config::{self, set, RunConfig};
use crate::ConfigArg;

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Training videos.
    #[arg(long)]
    videos: Option<usize>,
    #[arg(long)]
    test_videos: Option<usize>,
    /// Motion-only videos used as real motion.
    #[arg(long)]
    library_videos: Option<usize>,
    /// Frames per video.
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    fps: Option<f64>,
    /// Keypoint noise, pixels.
    #[arg(long)]
    noise2d: Option<f64>,
    /// Relative-depth noise, mm.
    #[arg(long)]
    noisez: Option<f64>,
    /// Per-joint occlusion probability.
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    style_spread: Option<f64>,
    /// Longest clip the dataset must support.
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset file; the manifest goes next to it.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(a: GenArgs) -> Result<()> {
    let mut cfg = RunConfig::load(a.config.config.as_deref())?.synth;
    set(&mut cfg.videos, a.videos);
    set(&mut cfg.test_videos, a.test_videos);
    set(&mut cfg.library_videos, a.library_videos);
    set(&mut cfg.frames, a.frames);
    set(&mut cfg.fps, a.fps);
    set(&mut cfg.noise2d, a.noise2d);
    set(&mut cfg.noisez, a.noisez);
    set(&mut cfg.dropout, a.dropout);
    set(&mut cfg.style_spread, a.style_spread);
    set(&mut cfg.min_seq_len, a.seq_len);
    set(&mut cfg.seed, a.seed);
    cfg.validate()?;

    let dataset = generate_synthetic_dataset(&cfg)?;
    config::write(&a.out, dataset.to_bytes())?;
    let mut manifest_path = a.out.clone().into_os_string();
    manifest_path.push(".manifest.txt");
    let manifest_path = PathBuf::from(manifest_path);
    config::write(&manifest_path, dataset.manifest())?;
    print!("{}", summary(&dataset)?);
    log::info!("wrote {} and {}", a.out.display(), manifest_path.display());
    Ok(())
}

/// Video counts per role and the pooled joint speed and acceleration statistics.
pub fn summary(dataset: &Dataset) -> Result<String> {
    let mut out = String::new();
    for role in [VideoRole::Train, VideoRole::Test, VideoRole::Library] {
        let vids: Vec<_> = dataset.by_role(role).collect();
        let frames: usize = vids.iter().map(|v| v.len()).sum();
        out.push_str(&format!("{}_videos = {} ({} frames)\n", role.name(), vids.len(), frames));
    }
    let (ve, ae) = (default_velocity_edges(), default_acceleration_edges());
    let mut vel = (0.0, 0.0, 0usize);
    let mut acc = (0.0, 0.0, 0usize);
    for v in &dataset.videos {
        let st = motion_stats(&v.poses, dataset.header.fps, &ve, &ae).with_context(|| format!("video {}", v.id))?;
        let nv = (v.len() - 1) * handmotion::geometry::NUM_JOINTS;
        let na = (v.len() - 2) * handmotion::geometry::NUM_JOINTS;
        vel = (vel.0 + st.velocity.mean * nv as f64, f64::max(vel.1, st.velocity.max), vel.2 + nv);
        acc = (acc.0 + st.acceleration.mean * na as f64, f64::max(acc.1, st.acceleration.max), acc.2 + na);
    }
    out.push_str(&format!(
        "joint_speed_mm_per_s = mean {} max {}\n",
        sig6(vel.0 / vel.2.max(1) as f64),
        sig6(vel.1)
    ));
    out.push_str(&format!(
        "joint_accel_mm_per_s2 = mean {} max {}\n",
        sig6(acc.0 / acc.2.max(1) as f64),
        sig6(acc.1)
    ));
    Ok(out)
}
