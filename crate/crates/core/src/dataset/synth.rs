use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetHeader, Observation, VideoRecord, VideoRole, IMAGE_SIZE};
use crate::error::{Error, Result};
use crate::geometry::{project, CameraIntrinsics, Point3, Pose3D, NUM_JOINTS};
use crate::rng::{derive_seed, seeded, Rng};

pub const MIN_HAND_SCALE: f64 = 0.85;
pub const MAX_HAND_SCALE: f64 = 1.15;

/// Knuckle (first finger joint) distance from the wrist, thumb to pinky.
const KNUCKLE_MM: [f64; 5] = [35.0, 90.0, 88.0, 82.0, 76.0];
/// Phalanx lengths of each finger.
const PHALANX_MM: [[f64; 3]; 5] = [
    [35.0, 30.0, 25.0],
    [40.0, 23.0, 20.0],
    [45.0, 27.0, 22.0],
    [42.0, 26.0, 22.0],
    [33.0, 20.0, 19.0],
];
/// In-palm direction of each knuckle, degrees from the middle finger.
const FINGER_SPLAY_DEG: [f64; 5] = [45.0, 10.0, 0.0, -9.0, -18.0];
/// The thumb flexes in a plane tilted sideways from the palm normal.
const THUMB_TILT: f64 = 0.6;
/// Palm centre along the local finger axis; the hand rotates about it.
const PALM_CENTRE_MM: f64 = 60.0;

/// Per-finger limits of (abduction, flexion 1..3), radians.
const ANGLE_LO: [f64; 4] = [-0.25, -0.1, 0.0, 0.0];
const ANGLE_HI: [f64; 4] = [0.25, 1.4, 1.6, 1.1];
const N_ANGLES: usize = 20;

/// Global orientation (yaw, pitch, roll) of a video's typical pose and how
/// far a key pose may stray from it.
const ORIENT_CENTRE: [f64; 3] = [0.6, 0.5, 1.2];
const ORIENT_WANDER: [f64; 3] = [0.25, 0.25, 0.3];
const TRANSLATION_LO: Point3 = [-40.0, -30.0, 600.0];
const TRANSLATION_HI: Point3 = [40.0, 30.0, 750.0];

/// Key poses are spaced this many frames apart at the reference rate.
const KEY_GAP: (u32, u32) = (8, 24);
const REFERENCE_FPS: f64 = 30.0;
/// Keypoints must stay this far inside the image.
const IMAGE_MARGIN: f64 = 2.0;
const MAX_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub videos: usize,
    pub test_videos: usize,
    pub library_videos: usize,
    pub frames: usize,
    pub fps: f64,
    /// Standard deviation of keypoint noise, pixels.
    pub noise2d: f64,
    /// Standard deviation of relative-depth noise, mm.
    pub noisez: f64,
    /// Probability that a joint is occluded in a frame.
    pub dropout: f64,
    /// Fraction of each joint's range covered by one video's key poses.
    pub style_spread: f64,
    /// Shortest clip the data must support.
    pub min_seq_len: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            videos: 60,
            test_videos: 12,
            library_videos: 60,
            frames: 240,
            fps: 30.0,
            noise2d: 2.0,
            noisez: 25.0,
            dropout: 0.1,
            style_spread: 0.4,
            min_seq_len: 16,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.videos == 0 {
            return Err(Error::Config("need at least one training video".into()));
        }
        if self.frames < self.min_seq_len.max(3) {
            return Err(Error::Config(format!(
                "{} frames per video cannot hold a {}-frame clip",
                self.frames, self.min_seq_len
            )));
        }
        if !(self.fps > 0.0) {
            return Err(Error::Config(format!("fps must be positive, got {}", self.fps)));
        }
        if !(self.noise2d >= 0.0 && self.noisez >= 0.0) {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.style_spread > 0.0 && self.style_spread <= 1.0) {
            return Err(Error::Config(format!("style spread must lie in (0, 1], got {}", self.style_spread)));
        }
        Ok(())
    }
}

/// Generates training, test and motion-library videos. Each video is a pure
/// function of `(config, seed, role, index)`.
pub fn generate_synthetic_dataset(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let mut videos = Vec::new();
    let mut id = 0u32;
    for (role, count) in [
        (VideoRole::Train, config.videos),
        (VideoRole::Test, config.test_videos),
        (VideoRole::Library, config.library_videos),
    ] {
        for i in 0..count {
            let stream = (role.code() as u64) << 32 | i as u64;
            let mut rng = seeded(derive_seed(config.seed, stream));
            videos.push(generate_video(config, id, role, &mut rng)?);
            id += 1;
        }
    }
    Ok(Dataset {
        header: DatasetHeader::new(config.fps),
        videos,
    })
}

fn generate_video(config: &SynthConfig, id: u32, role: VideoRole, rng: &mut Rng) -> Result<VideoRecord> {
    for _ in 0..MAX_RESAMPLES {
        let (poses, scale, k) = sample_motion(config, rng)?;
        let mut inside = true;
        for p in &poses {
            let pp = project(p, &k)?;
            if pp.kp2d.iter().flatten().any(|&c| !(IMAGE_MARGIN..=IMAGE_SIZE - IMAGE_MARGIN).contains(&c)) {
                inside = false;
                break;
            }
        }
        if !inside {
            continue;
        }
        let observations = observe(&poses, &k, config, rng)?;
        return Ok(VideoRecord {
            id,
            role,
            hand_scale: scale,
            intrinsics: k,
            fps: config.fps,
            poses,
            observations,
        });
    }
    Err(Error::Config("could not keep the synthetic hand inside the image".into()))
}

fn sample_motion(config: &SynthConfig, rng: &mut Rng) -> Result<(Vec<Pose3D>, f64, CameraIntrinsics)> {
    let n = config.frames;
    let scale = rng.gen_range(MIN_HAND_SCALE..MAX_HAND_SCALE);
    let f = rng.gen_range(450.0..550.0);
    let k = CameraIntrinsics::new(f, f, 128.0 + rng.gen_range(-4.0..4.0), 128.0 + rng.gen_range(-4.0..4.0))?;

    let gap_scale = config.fps / REFERENCE_FPS;
    let mut keys = vec![0usize];
    while *keys.last().unwrap() < n - 1 {
        let gap = (rng.gen_range(KEY_GAP.0..KEY_GAP.1) as f64 * gap_scale).round().max(2.0) as usize;
        keys.push(keys.last().unwrap() + gap);
    }

    // each video has its own articulation style: key poses stay near a
    // per-video centre rather than spanning the full joint range
    let lo: Vec<f64> = (0..N_ANGLES).map(|i| ANGLE_LO[i % 4]).collect();
    let hi: Vec<f64> = (0..N_ANGLES).map(|i| ANGLE_HI[i % 4]).collect();
    let centre: Vec<f64> = (0..N_ANGLES).map(|i| rng.gen_range(lo[i]..hi[i])).collect();
    let angle_keys: Vec<Vec<f64>> = keys
        .iter()
        .map(|_| {
            (0..N_ANGLES)
                .map(|i| {
                    let half = (hi[i] - lo[i]) * config.style_spread / 2.0;
                    (centre[i] + rng.gen_range(-half..half)).clamp(lo[i], hi[i])
                })
                .collect()
        })
        .collect();
    let orient: Vec<f64> = ORIENT_CENTRE.iter().map(|&r| rng.gen_range(-r..r)).collect();
    let global_keys: Vec<Vec<f64>> = keys
        .iter()
        .map(|_| {
            let mut g: Vec<f64> = (0..3).map(|i| orient[i] + rng.gen_range(-ORIENT_WANDER[i]..ORIENT_WANDER[i])).collect();
            g.extend((0..3).map(|i| rng.gen_range(TRANSLATION_LO[i]..TRANSLATION_HI[i])));
            g
        })
        .collect();

    let mut poses = Vec::with_capacity(n);
    for t in 0..n {
        let mut angles = catmull_rom(&angle_keys, &keys, t);
        for (i, a) in angles.iter_mut().enumerate() {
            *a = a.clamp(lo[i], hi[i]);
        }
        let g = catmull_rom(&global_keys, &keys, t);
        let r = mat_mul(&euler(g[0], g[1], g[2]), &BASE_ORIENTATION);
        let local = forward_kinematics(&angles, scale);
        let mut joints = [[0.0; 3]; NUM_JOINTS];
        for (j, p) in local.iter().enumerate() {
            let q = [p[0], p[1] - PALM_CENTRE_MM * scale, p[2]];
            joints[j] = [
                r[0][0] * q[0] + r[0][1] * q[1] + r[0][2] * q[2] + g[3],
                r[1][0] * q[0] + r[1][1] * q[1] + r[1][2] * q[2] + g[4],
                r[2][0] * q[0] + r[2][1] * q[1] + r[2][2] * q[2] + g[5],
            ];
        }
        poses.push(Pose3D::new(joints));
    }
    Ok((poses, scale, k))
}

fn observe(poses: &[Pose3D], k: &CameraIntrinsics, config: &SynthConfig, rng: &mut Rng) -> Result<Vec<Observation>> {
    let n2 = Normal::new(0.0, config.noise2d).map_err(|e| Error::Config(e.to_string()))?;
    let nz = Normal::new(0.0, config.noisez).map_err(|e| Error::Config(e.to_string()))?;
    poses
        .iter()
        .map(|p| {
            let truth = project(p, k)?;
            let mut obs = Observation {
                kp2d: truth.kp2d,
                zrel: truth.zrel,
                visible: [true; NUM_JOINTS],
            };
            for j in 0..NUM_JOINTS {
                // draws happen unconditionally so noise settings never shift the stream
                let du = n2.sample(rng);
                let dv = n2.sample(rng);
                let dz = nz.sample(rng);
                let hidden = rng.gen::<f64>() < config.dropout;
                if hidden {
                    obs.kp2d[j] = [0.0, 0.0];
                    obs.zrel[j] = 0.0;
                    obs.visible[j] = false;
                } else {
                    if config.noise2d > 0.0 {
                        obs.kp2d[j][0] += du;
                        obs.kp2d[j][1] += dv;
                    }
                    if config.noisez > 0.0 {
                        obs.zrel[j] += dz;
                    }
                }
            }
            Ok(obs)
        })
        .collect()
}

/// Hand in its local frame: wrist at the origin, fingers along +y, palm
/// normal along +z.
fn forward_kinematics(angles: &[f64], scale: f64) -> [Point3; NUM_JOINTS] {
    let mut joints = [[0.0; 3]; NUM_JOINTS];
    for f in 0..5 {
        let [abd, f1, f2, f3] = [angles[4 * f], angles[4 * f + 1], angles[4 * f + 2], angles[4 * f + 3]];
        let splay = FINGER_SPLAY_DEG[f].to_radians();
        let knuckle = [splay.sin() * KNUCKLE_MM[f] * scale, splay.cos() * KNUCKLE_MM[f] * scale, 0.0];
        joints[1 + 4 * f] = knuckle;
        let dir = [(splay + abd).sin(), (splay + abd).cos(), 0.0];
        let tilt = if f == 0 { THUMB_TILT } else { 0.0 };
        let lateral = [(splay + abd).cos(), -(splay + abd).sin(), 0.0];
        let normal = [tilt.sin() * lateral[0], tilt.sin() * lateral[1], tilt.cos()];
        let mut p = knuckle;
        let mut bend = 0.0;
        for (s, flex) in [f1, f2, f3].into_iter().enumerate() {
            bend += flex;
            let len = PHALANX_MM[f][s] * scale;
            for a in 0..3 {
                p[a] += (bend.cos() * dir[a] + bend.sin() * normal[a]) * len;
            }
            joints[2 + 4 * f + s] = p;
        }
    }
    joints
}

/// Local y points up in the image and the palm faces the camera.
const BASE_ORIENTATION: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];

fn euler(yaw: f64, pitch: f64, roll: f64) -> [[f64; 3]; 3] {
    let (sy, cy) = yaw.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sr, cr) = roll.sin_cos();
    let rz = [[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]];
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    let rx = [[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]];
    mat_mul(&mat_mul(&rz, &ry), &rx)
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

/// Catmull-Rom interpolation through `values` placed at frames `keys`.
fn catmull_rom(values: &[Vec<f64>], keys: &[usize], t: usize) -> Vec<f64> {
    let seg = keys.partition_point(|&k| k <= t).saturating_sub(1).min(keys.len() - 2);
    let s = (t - keys[seg]) as f64 / (keys[seg + 1] - keys[seg]) as f64;
    let p0 = &values[seg.saturating_sub(1)];
    let p1 = &values[seg];
    let p2 = &values[seg + 1];
    let p3 = &values[(seg + 2).min(values.len() - 1)];
    (0..p1.len())
        .map(|i| {
            0.5 * (2.0 * p1[i]
                + (p2[i] - p0[i]) * s
                + (2.0 * p0[i] - 5.0 * p1[i] + 4.0 * p2[i] - p3[i]) * s * s
                + (-p0[i] + 3.0 * p1[i] - 3.0 * p2[i] + p3[i]) * s * s * s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{dist3, Skeleton, PARENT};

    fn small() -> SynthConfig {
        SynthConfig {
            videos: 3,
            test_videos: 1,
            library_videos: 1,
            frames: 40,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn bone_lengths_follow_the_skeleton_table() {
        let d = generate_synthetic_dataset(&small()).unwrap();
        for v in &d.videos {
            let sk = Skeleton::new(v.hand_scale);
            for p in &v.poses {
                for j in 1..NUM_JOINTS {
                    let len = dist3(p.joints[j], p.joints[PARENT[j]]);
                    assert!((len - sk.bone_length(j)).abs() < 1e-9, "joint {j}: {len}");
                }
            }
        }
    }

    #[test]
    fn keyframe_interpolation_passes_through_keys() {
        let values = vec![vec![1.0], vec![3.0], vec![-2.0]];
        let keys = [0, 10, 20];
        assert_eq!(catmull_rom(&values, &keys, 0), vec![1.0]);
        assert_eq!(catmull_rom(&values, &keys, 10), vec![3.0]);
        assert_eq!(catmull_rom(&values, &keys, 20), vec![-2.0]);
    }

    #[test]
    fn rejects_videos_shorter_than_a_clip() {
        let cfg = SynthConfig {
            frames: 8,
            min_seq_len: 16,
            ..small()
        };
        assert!(matches!(generate_synthetic_dataset(&cfg), Err(Error::Config(_))));
    }
}
