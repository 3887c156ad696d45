//! Binary dataset container.
//!
//! All integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes "HMDATA\0\0"
//! version    u32
//! skeleton   u32 version, u32 joint count, joint count x u32 parent,
//!            joint count x f64 canonical bone length
//! image      f64 width, f64 height
//! fps        f64
//! depth      f64 depth normalization range
//! videos     u32 count, then per video:
//!            u32 id, u8 role, f64 hand scale, 4 x f64 intrinsics (fx, fy, cx, cy),
//!            f64 fps, u32 frames, then per frame:
//!              21 x 3 f64 ground truth (mm),
//!              21 x 3 f64 observation (u px, v px, relative depth mm),
//!              21 x u8 visibility
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{Observation, VideoRecord, VideoRole, IMAGE_SIZE, MAX_HAND_SCALE};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose3D, Skeleton, CANONICAL_BONES_MM, NUM_JOINTS, PARENT, SKELETON_VERSION};
use crate::numcore::checkpoint::{read_bytes_exact, read_f64, read_u32, read_u8};

pub const DATASET_MAGIC: &[u8; 8] = b"HMDATA\0\0";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub skeleton_version: u32,
    pub parents: Vec<usize>,
    pub bones_mm: Vec<f64>,
    pub image_width: f64,
    pub image_height: f64,
    pub fps: f64,
    /// Bound on any joint's relative depth across all hands in the data.
    pub depth_range: f64,
}

impl DatasetHeader {
    pub fn new(fps: f64) -> Self {
        DatasetHeader {
            skeleton_version: SKELETON_VERSION,
            parents: PARENT.to_vec(),
            bones_mm: CANONICAL_BONES_MM.to_vec(),
            image_width: IMAGE_SIZE,
            image_height: IMAGE_SIZE,
            fps,
            depth_range: Skeleton::new(MAX_HAND_SCALE).max_root_distance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub videos: Vec<VideoRecord>,
}

impl Dataset {
    pub fn by_role(&self, role: VideoRole) -> impl Iterator<Item = &VideoRecord> {
        self.videos.iter().filter(move |v| v.role == role)
    }

    pub fn video(&self, id: u32) -> Option<&VideoRecord> {
        self.videos.iter().find(|v| v.id == id)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let frames: usize = self.videos.iter().map(|v| v.len()).sum();
        let mut out = Vec::with_capacity(256 + frames * (NUM_JOINTS * 49));
        out.extend_from_slice(DATASET_MAGIC);
        put_u32(&mut out, DATASET_VERSION);
        put_u32(&mut out, h.skeleton_version);
        put_u32(&mut out, h.parents.len() as u32);
        for &p in &h.parents {
            put_u32(&mut out, p as u32);
        }
        for &b in &h.bones_mm {
            put_f64(&mut out, b);
        }
        put_f64(&mut out, h.image_width);
        put_f64(&mut out, h.image_height);
        put_f64(&mut out, h.fps);
        put_f64(&mut out, h.depth_range);
        put_u32(&mut out, self.videos.len() as u32);
        for v in &self.videos {
            put_u32(&mut out, v.id);
            out.push(v.role.code());
            put_f64(&mut out, v.hand_scale);
            let k = v.intrinsics;
            for x in [k.fx, k.fy, k.cx, k.cy, v.fps] {
                put_f64(&mut out, x);
            }
            put_u32(&mut out, v.len() as u32);
            for (p, o) in v.poses.iter().zip(&v.observations) {
                for x in p.joints.iter().flatten() {
                    put_f64(&mut out, *x);
                }
                for j in 0..NUM_JOINTS {
                    put_f64(&mut out, o.kp2d[j][0]);
                    put_f64(&mut out, o.kp2d[j][1]);
                    put_f64(&mut out, o.zrel[j]);
                }
                out.extend(o.visible.iter().map(|&b| b as u8));
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        if read_bytes_exact(&mut r, 8)? != DATASET_MAGIC {
            return Err(Error::Format("not a dataset file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != DATASET_VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let skeleton_version = read_u32(&mut r)?;
        let joints = read_u32(&mut r)? as usize;
        if joints != NUM_JOINTS {
            return Err(Error::Format(format!("dataset has {joints} joints, expected {NUM_JOINTS}")));
        }
        let parents = (0..joints).map(|_| read_u32(&mut r).map(|p| p as usize)).collect::<Result<Vec<_>>>()?;
        let bones_mm = (0..joints).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        if skeleton_version != SKELETON_VERSION || parents != PARENT {
            return Err(Error::Format(format!("unknown skeleton layout (version {skeleton_version})")));
        }
        let header = DatasetHeader {
            skeleton_version,
            parents,
            bones_mm,
            image_width: read_f64(&mut r)?,
            image_height: read_f64(&mut r)?,
            fps: read_f64(&mut r)?,
            depth_range: read_f64(&mut r)?,
        };
        let count = read_u32(&mut r)? as usize;
        let mut videos = Vec::with_capacity(count);
        for _ in 0..count {
            let id = read_u32(&mut r)?;
            let role = VideoRole::from_code(read_u8(&mut r)?)
                .ok_or_else(|| Error::Format(format!("video {id} has an unknown role")))?;
            let hand_scale = read_f64(&mut r)?;
            let (fx, fy, cx, cy) = (read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?);
            let intrinsics = CameraIntrinsics::new(fx, fy, cx, cy).map_err(|e| Error::Format(e.to_string()))?;
            let fps = read_f64(&mut r)?;
            let frames = read_u32(&mut r)? as usize;
            if r.len() < frames * NUM_JOINTS * 49 {
                return Err(Error::Format(format!("video {id} truncated")));
            }
            let mut poses = Vec::with_capacity(frames);
            let mut observations = Vec::with_capacity(frames);
            for _ in 0..frames {
                let mut joints = [[0.0; 3]; NUM_JOINTS];
                for p in &mut joints {
                    *p = [read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?];
                }
                poses.push(Pose3D::new(joints));
                let mut o = Observation {
                    kp2d: [[0.0; 2]; NUM_JOINTS],
                    zrel: [0.0; NUM_JOINTS],
                    visible: [false; NUM_JOINTS],
                };
                for j in 0..NUM_JOINTS {
                    o.kp2d[j] = [read_f64(&mut r)?, read_f64(&mut r)?];
                    o.zrel[j] = read_f64(&mut r)?;
                }
                for j in 0..NUM_JOINTS {
                    o.visible[j] = match read_u8(&mut r)? {
                        0 => false,
                        1 => true,
                        b => return Err(Error::Format(format!("visibility byte {b}"))),
                    };
                }
                observations.push(o);
            }
            videos.push(VideoRecord {
                id,
                role,
                hand_scale,
                intrinsics,
                fps,
                poses,
                observations,
            });
        }
        if !r.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", r.len())));
        }
        Ok(Dataset { header, videos })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Dataset::from_bytes(&std::fs::read(path)?)
    }

    /// Human-readable listing of the videos, one line each.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        let h = &self.header;
        let _ = writeln!(out, "format_version = {DATASET_VERSION}");
        let _ = writeln!(out, "skeleton_version = {}", h.skeleton_version);
        let _ = writeln!(out, "image = {}x{}", h.image_width, h.image_height);
        let _ = writeln!(out, "fps = {}", h.fps);
        let _ = writeln!(out, "depth_range_mm = {}", h.depth_range);
        let _ = writeln!(out, "videos = {}", self.videos.len());
        let _ = writeln!(out, "# id role frames hand_scale fx fy cx cy");
        for v in &self.videos {
            let k = v.intrinsics;
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {} {}",
                v.id,
                v.role.name(),
                v.len(),
                v.hand_scale,
                k.fx,
                k.fy,
                k.cx,
                k.cy
            );
        }
        out
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}
