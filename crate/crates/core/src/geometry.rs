//! Pinhole camera model and the 2.5D keypoint representation.
//!
//! A 2.5D pose stores per-joint image coordinates together with each joint's
//! depth relative to the root (wrist). Given intrinsics and the absolute
//! root depth it lifts back to camera-space 3D; the root depth itself can be
//! recovered from a single known bone length.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_JOINTS: usize = 21;
pub const ROOT: usize = 0;

/// Joint layout: wrist, then thumb, index, middle, ring and pinky with four
/// joints each, ordered from the knuckle (MCP) to the tip.
pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "wrist", "thumb_mcp", "thumb_pip", "thumb_dip", "thumb_tip", "index_mcp", "index_pip",
    "index_dip", "index_tip", "middle_mcp", "middle_pip", "middle_dip", "middle_tip", "ring_mcp",
    "ring_pip", "ring_dip", "ring_tip", "pinky_mcp", "pinky_pip", "pinky_dip", "pinky_tip",
];

/// Parent of every joint in the kinematic tree; the root is its own parent.
pub const PARENT: [usize; NUM_JOINTS] = [0, 0, 1, 2, 3, 0, 5, 6, 7, 0, 9, 10, 11, 0, 13, 14, 15, 0, 17, 18, 19];

pub const SKELETON_VERSION: u32 = 1;

/// Canonical adult bone lengths in mm, indexed by child joint (entry 0 unused).
pub const CANONICAL_BONES_MM: [f64; NUM_JOINTS] = [
    0.0, // wrist
    35.0, 35.0, 30.0, 25.0, // thumb
    90.0, 40.0, 23.0, 20.0, // index
    88.0, 45.0, 27.0, 22.0, // middle
    82.0, 42.0, 26.0, 22.0, // ring
    76.0, 33.0, 20.0, 19.0, // pinky
];

/// Wrist to middle-finger knuckle, the bone used for root-depth recovery.
pub const REFERENCE_BONE: (usize, usize) = (0, 9);

pub type Point3 = [f64; 3];
pub type Point2 = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || !cx.is_finite() || !cy.is_finite() {
            return Err(Error::Config(format!("invalid intrinsics fx={fx} fy={fy}")));
        }
        Ok(CameraIntrinsics { fx, fy, cx, cy })
    }

    /// Normalized viewing ray `K^-1 [u, v, 1]`.
    pub fn ray(&self, uv: Point2) -> Point3 {
        [(uv[0] - self.cx) / self.fx, (uv[1] - self.cy) / self.fy, 1.0]
    }
}

/// Skeleton of one hand: the canonical bone table times a size factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub scale: f64,
}

impl Default for Skeleton {
    fn default() -> Self {
        Skeleton { scale: 1.0 }
    }
}

impl Skeleton {
    pub fn new(scale: f64) -> Self {
        Skeleton { scale }
    }

    /// Length of the bone ending at `joint` (0 for the root).
    pub fn bone_length(&self, joint: usize) -> f64 {
        CANONICAL_BONES_MM[joint] * self.scale
    }

    /// Sum of bone lengths on the path from the root to `joint`.
    pub fn path_length(&self, joint: usize) -> f64 {
        let mut j = joint;
        let mut total = 0.0;
        while j != ROOT {
            total += self.bone_length(j);
            j = PARENT[j];
        }
        total
    }

    pub fn max_root_distance(&self) -> f64 {
        (0..NUM_JOINTS).map(|j| self.path_length(j)).fold(0.0, f64::max)
    }

    pub fn reference_bone(&self) -> RefBone {
        let (a, b) = REFERENCE_BONE;
        RefBone {
            joint_a: a,
            joint_b: b,
            length_mm: self.path_length(b) - self.path_length(a),
        }
    }
}

/// Known-length bone used to recover absolute depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefBone {
    pub joint_a: usize,
    pub joint_b: usize,
    pub length_mm: f64,
}

/// Camera-space joint positions in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose3D {
    pub joints: [Point3; NUM_JOINTS],
}

impl Pose3D {
    pub fn new(joints: [Point3; NUM_JOINTS]) -> Self {
        Pose3D { joints }
    }

    pub fn from_flat(values: &[f64]) -> Result<Self> {
        if values.len() != NUM_JOINTS * 3 {
            return Err(Error::Shape(format!("pose needs {} values, got {}", NUM_JOINTS * 3, values.len())));
        }
        let mut joints = [[0.0; 3]; NUM_JOINTS];
        for (j, c) in values.chunks(3).enumerate() {
            joints[j] = [c[0], c[1], c[2]];
        }
        Ok(Pose3D { joints })
    }

    pub fn flat(&self) -> Vec<f64> {
        self.joints.iter().flatten().copied().collect()
    }

    pub fn root(&self) -> Point3 {
        self.joints[ROOT]
    }

    /// Joints expressed relative to the root.
    pub fn root_centered(&self) -> Pose3D {
        let r = self.root();
        let mut joints = self.joints;
        for p in &mut joints {
            *p = sub3(*p, r);
        }
        Pose3D { joints }
    }
}

/// 2D keypoints (pixels) plus root-relative depths (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose25D {
    pub kp2d: [Point2; NUM_JOINTS],
    pub zrel: [f64; NUM_JOINTS],
    pub zroot: Option<f64>,
}

impl Pose25D {
    pub fn flat_kp(&self) -> Vec<f64> {
        self.kp2d.iter().flatten().copied().collect()
    }
}

/// Perspective projection into the 2.5D representation.
pub fn project(pose: &Pose3D, k: &CameraIntrinsics) -> Result<Pose25D> {
    let zroot = pose.joints[ROOT][2];
    let mut kp2d = [[0.0; 2]; NUM_JOINTS];
    let mut zrel = [0.0; NUM_JOINTS];
    for (j, p) in pose.joints.iter().enumerate() {
        if !(p[2] > 0.0) {
            return Err(Error::Projection(format!("joint {j} has depth {}", p[2])));
        }
        kp2d[j] = [k.fx * p[0] / p[2] + k.cx, k.fy * p[1] / p[2] + k.cy];
        zrel[j] = p[2] - zroot;
    }
    Ok(Pose25D {
        kp2d,
        zrel,
        zroot: Some(zroot),
    })
}

/// Back-projects each keypoint along its viewing ray to depth `zrel + zroot`.
pub fn lift(pose: &Pose25D, k: &CameraIntrinsics, zroot: f64) -> Result<Pose3D> {
    let mut joints = [[0.0; 3]; NUM_JOINTS];
    for j in 0..NUM_JOINTS {
        let z = pose.zrel[j] + zroot;
        if !(z > 0.0) {
            return Err(Error::Projection(format!("lifted joint {j} has depth {z}")));
        }
        let r = k.ray(pose.kp2d[j]);
        joints[j] = [r[0] * z, r[1] * z, z];
    }
    Ok(Pose3D { joints })
}

/// Absolute root depth that makes the lifted bone `a -> b` exactly
/// `length_mm` long.
///
/// With rays `r_j` and lifted points `(zrel_j + Z) r_j`, the squared bone
/// length is a quadratic in `Z`; the larger real root is returned, and it
/// must place every joint in front of the camera.
pub fn refine_root_depth(pose: &Pose25D, k: &CameraIntrinsics, bone: RefBone) -> Result<f64> {
    let RefBone { joint_a: a, joint_b: b, length_mm } = bone;
    if a == b || a >= NUM_JOINTS || b >= NUM_JOINTS {
        return Err(Error::Refinement(format!("bad reference bone {a}->{b}")));
    }
    if !(length_mm > 0.0) {
        return Err(Error::Refinement(format!("bone length {length_mm}")));
    }
    let ra = k.ray(pose.kp2d[a]);
    let rb = k.ray(pose.kp2d[b]);
    let d = sub3(ra, rb);
    let e = sub3(scale3(ra, pose.zrel[a]), scale3(rb, pose.zrel[b]));
    let qa = dot3(d, d);
    let qb = 2.0 * dot3(d, e);
    let qc = dot3(e, e) - length_mm * length_mm;
    // rays from distinct pixels differ by at least ~1e-3 per pixel at typical focal lengths
    if qa < 1e-18 {
        return Err(Error::Refinement("reference joints share a viewing ray".into()));
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return Err(Error::Refinement("no real root depth satisfies the bone length".into()));
    }
    let z = (-qb + disc.sqrt()) / (2.0 * qa);
    let min_rel = pose.zrel.iter().copied().fold(f64::INFINITY, f64::min);
    if !(z + min_rel > 0.0) {
        return Err(Error::Refinement(format!("recovered depth {z} puts joints behind the camera")));
    }
    Ok(z)
}

pub fn translate_pose(pose: &Pose3D, t: Point3) -> Pose3D {
    let mut joints = pose.joints;
    for p in &mut joints {
        *p = add3(*p, t);
    }
    Pose3D { joints }
}

/// Rotation about the camera z axis through `center` (z components untouched).
pub fn rotate_about_z(pose: &Pose3D, center: Point3, angle: f64) -> Pose3D {
    let (s, c) = angle.sin_cos();
    let mut joints = pose.joints;
    for p in &mut joints {
        let dx = p[0] - center[0];
        let dy = p[1] - center[1];
        *p = [center[0] + c * dx - s * dy, center[1] + s * dx + c * dy, p[2]];
    }
    Pose3D { joints }
}

pub fn sub3(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add3(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale3(a: Point3, s: f64) -> Point3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot3(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm3(a: Point3) -> f64 {
    dot3(a, a).sqrt()
}

pub fn dist3(a: Point3, b: Point3) -> f64 {
    norm3(sub3(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k500() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 128.0, 128.0).unwrap()
    }

    fn spread_pose() -> Pose3D {
        let mut joints = [[0.0; 3]; NUM_JOINTS];
        for (j, p) in joints.iter_mut().enumerate() {
            let a = j as f64 * 0.7;
            *p = [20.0 * a.cos() + j as f64, 15.0 * a.sin() - j as f64, 500.0 + 3.0 * j as f64];
        }
        Pose3D::new(joints)
    }

    #[test]
    fn coincident_joints_project_to_principal_point() {
        let pose = Pose3D::new([[0.0, 0.0, 500.0]; NUM_JOINTS]);
        let p = project(&pose, &k500()).unwrap();
        for j in 0..NUM_JOINTS {
            assert_eq!(p.kp2d[j], [128.0, 128.0]);
            assert_eq!(p.zrel[j], 0.0);
        }
        assert_eq!(p.zroot, Some(500.0));
    }

    #[test]
    fn pinhole_arithmetic() {
        let mut joints = [[0.0, 0.0, 500.0]; NUM_JOINTS];
        joints[3] = [100.0, 50.0, 500.0];
        let p = project(&Pose3D::new(joints), &k500()).unwrap();
        // scalar oracle: u = fx * x / z + cx
        let u = 500.0 * 100.0 / 500.0 + 128.0;
        let v = 500.0 * 50.0 / 500.0 + 128.0;
        assert_eq!([u, v], [228.0, 178.0]);
        assert_eq!(p.kp2d[3], [u, v]);
    }

    #[test]
    fn projection_rejects_non_positive_depth() {
        let mut joints = [[0.0, 0.0, 500.0]; NUM_JOINTS];
        joints[7][2] = 0.0;
        assert!(matches!(project(&Pose3D::new(joints), &k500()), Err(Error::Projection(_))));
    }

    #[test]
    fn lift_of_centered_zero_depth_pose() {
        let p = Pose25D {
            kp2d: [[128.0, 128.0]; NUM_JOINTS],
            zrel: [0.0; NUM_JOINTS],
            zroot: None,
        };
        let lifted = lift(&p, &k500(), 640.0).unwrap();
        assert!(lifted.joints.iter().all(|j| *j == [0.0, 0.0, 640.0]));
        assert!(lift(&p, &k500(), -1.0).is_err());
    }

    #[test]
    fn lift_with_wrong_root_depth_scales_rays() {
        let pose = spread_pose();
        let k = k500();
        let p = project(&pose, &k).unwrap();
        let wrong = p.zroot.unwrap() + 100.0;
        let lifted = lift(&p, &k, wrong).unwrap();
        for j in 0..NUM_JOINTS {
            let z_true = pose.joints[j][2];
            let z_new = z_true + 100.0;
            // scalar re-evaluation: x scales with depth along the fixed ray
            let x = (p.kp2d[j][0] - k.cx) / k.fx * z_new;
            let y = (p.kp2d[j][1] - k.cy) / k.fy * z_new;
            assert!((lifted.joints[j][0] - x).abs() < 1e-9);
            assert!((lifted.joints[j][1] - y).abs() < 1e-9);
            assert!((lifted.joints[j][0] - pose.joints[j][0] * z_new / z_true).abs() < 1e-9);
            assert!((lifted.joints[j][2] - z_new).abs() < 1e-9);
        }
    }

    #[test]
    fn refinement_recovers_true_depth() {
        let pose = spread_pose();
        let k = k500();
        let p = project(&pose, &k).unwrap();
        let bone = RefBone {
            joint_a: 0,
            joint_b: 9,
            length_mm: dist3(pose.joints[0], pose.joints[9]),
        };
        let z = refine_root_depth(&p, &k, bone).unwrap();
        assert!((z - 500.0).abs() / 500.0 < 1e-9);
    }

    #[test]
    fn refinement_rejects_degenerate_bone() {
        let pose = Pose3D::new([[5.0, -3.0, 500.0]; NUM_JOINTS]);
        let p = project(&pose, &k500()).unwrap();
        let bone = RefBone {
            joint_a: 0,
            joint_b: 9,
            length_mm: 80.0,
        };
        assert!(matches!(refine_root_depth(&p, &k500(), bone), Err(Error::Refinement(_))));
        let same = RefBone { joint_b: 0, ..bone };
        assert!(refine_root_depth(&p, &k500(), same).is_err());
        let zero = RefBone { length_mm: 0.0, ..bone };
        assert!(refine_root_depth(&p, &k500(), zero).is_err());
    }

    #[test]
    fn depth_translation_moves_keypoints_toward_principal_point() {
        let mut joints = [[0.0, 0.0, 500.0]; NUM_JOINTS];
        joints[4] = [60.0, -40.0, 520.0];
        let pose = Pose3D::new(joints);
        let k = k500();
        let a = project(&pose, &k).unwrap();
        let b = project(&translate_pose(&pose, [0.0, 0.0, 100.0]), &k).unwrap();
        // scalar oracle
        let u = 500.0 * 60.0 / 620.0 + 128.0;
        let v = 500.0 * -40.0 / 620.0 + 128.0;
        assert!((b.kp2d[4][0] - u).abs() < 1e-12 && (b.kp2d[4][1] - v).abs() < 1e-12);
        assert!((b.kp2d[4][0] - 128.0).abs() < (a.kp2d[4][0] - 128.0).abs());
        assert_eq!(a.zrel, b.zrel);
        assert_eq!(translate_pose(&pose, [0.0; 3]), pose);
    }

    #[test]
    fn skeleton_paths() {
        let s = Skeleton::new(1.0);
        assert_eq!(s.path_length(0), 0.0);
        assert_eq!(s.path_length(12), 88.0 + 45.0 + 27.0 + 22.0);
        assert_eq!(s.max_root_distance(), 182.0);
        assert_eq!(s.reference_bone().length_mm, 88.0);
        assert_eq!(Skeleton::new(1.1).reference_bone().length_mm, 88.0 * 1.1);
    }
}
