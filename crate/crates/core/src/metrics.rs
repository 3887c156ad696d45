//! Pose error metrics and motion statistics. All distances are in mm.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{add3, dist3, dot3, norm3, scale3, sub3, Point3, Pose3D, NUM_JOINTS};

/// Mean Euclidean distance over joints.
pub fn mpjpe_absolute(pred: &Pose3D, gt: &Pose3D) -> f64 {
    pred.joints.iter().zip(&gt.joints).map(|(p, g)| dist3(*p, *g)).sum::<f64>() / NUM_JOINTS as f64
}

/// Mean joint error after moving both roots to the origin.
pub fn mpjpe_root_relative(pred: &Pose3D, gt: &Pose3D) -> f64 {
    mpjpe_absolute(&pred.root_centered(), &gt.root_centered())
}

/// Granularity of the scale/translation fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StMode {
    /// One scale and translation for the whole sequence.
    #[default]
    PerSequence,
    PerFrame,
}

/// Least-squares scale `s` and translation `t` minimizing `sum |s p + t - g|^2`.
pub fn fit_scale_translation(pred: &[Point3], gt: &[Point3]) -> Result<(f64, Point3)> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::Shape(format!("alignment of {} onto {} points", pred.len(), gt.len())));
    }
    let pc = centroid(pred);
    let gc = centroid(gt);
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        let dp = sub3(*p, pc);
        num += dot3(dp, sub3(*g, gc));
        den += dot3(dp, dp);
    }
    if den <= 1e-12 * pred.len() as f64 {
        return Err(Error::Alignment("predicted points are coincident".into()));
    }
    let s = num / den;
    Ok((s, sub3(gc, scale3(pc, s))))
}

/// Mean joint error after a scale/translation fit (no rotation) of the
/// prediction onto the ground truth.
pub fn epe_st_aligned(pred: &[Pose3D], gt: &[Pose3D], mode: StMode) -> Result<f64> {
    Ok(mean(&st_aligned_frame_errors(pred, gt, mode)?))
}

/// Per-frame errors underlying [`epe_st_aligned`].
pub fn st_aligned_frame_errors(pred: &[Pose3D], gt: &[Pose3D], mode: StMode) -> Result<Vec<f64>> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::Shape(format!("sequences of {} and {} frames", pred.len(), gt.len())));
    }
    let apply = |p: &Pose3D, g: &Pose3D, s: f64, t: Point3| {
        p.joints.iter().zip(&g.joints).map(|(a, b)| dist3(add3(scale3(*a, s), t), *b)).sum::<f64>()
            / NUM_JOINTS as f64
    };
    match mode {
        StMode::PerSequence => {
            let ps: Vec<Point3> = pred.iter().flat_map(|p| p.joints).collect();
            let gs: Vec<Point3> = gt.iter().flat_map(|p| p.joints).collect();
            let (s, t) = fit_scale_translation(&ps, &gs)?;
            Ok(pred.iter().zip(gt).map(|(p, g)| apply(p, g, s, t)).collect())
        }
        StMode::PerFrame => pred
            .iter()
            .zip(gt)
            .map(|(p, g)| {
                let (s, t) = fit_scale_translation(&p.joints, &g.joints)?;
                Ok(apply(p, g, s, t))
            })
            .collect(),
    }
}

/// Optimal similarity transform `g ~ s R p + t` with `det R = +1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub rotation: [[f64; 3]; 3],
    pub scale: f64,
    pub translation: Point3,
}

impl Similarity {
    pub fn apply(&self, p: Point3) -> Point3 {
        let r = &self.rotation;
        let rp = [dot3(r[0], p), dot3(r[1], p), dot3(r[2], p)];
        add3(scale3(rp, self.scale), self.translation)
    }
}

/// Least-squares similarity fit via the unit-quaternion formulation, which
/// only ever yields proper rotations.
pub fn fit_similarity(pred: &[Point3], gt: &[Point3]) -> Result<Similarity> {
    if pred.len() != gt.len() || pred.len() < 3 {
        return Err(Error::Shape(format!("similarity fit of {} onto {} points", pred.len(), gt.len())));
    }
    let pc = centroid(pred);
    let gc = centroid(gt);
    let mut s = [[0.0; 3]; 3];
    let mut spread = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        let a = sub3(*p, pc);
        let b = sub3(*g, gc);
        spread += dot3(a, a);
        for i in 0..3 {
            for j in 0..3 {
                s[i][j] += a[i] * b[j];
            }
        }
    }
    if spread <= 1e-12 * pred.len() as f64 {
        return Err(Error::Alignment("predicted points are coincident".into()));
    }
    let [[sxx, sxy, sxz], [syx, syy, syz], [szx, szy, szz]] = s;
    let n = [
        [sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
        [syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
        [szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
        [sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
    ];
    let q = top_eigenvector4(n);
    let rotation = quaternion_to_matrix(q);
    let mut num = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        let a = sub3(*p, pc);
        let ra = [dot3(rotation[0], a), dot3(rotation[1], a), dot3(rotation[2], a)];
        num += dot3(ra, sub3(*g, gc));
    }
    let scale = num / spread;
    let rpc = [dot3(rotation[0], pc), dot3(rotation[1], pc), dot3(rotation[2], pc)];
    Ok(Similarity {
        rotation,
        scale,
        translation: sub3(gc, scale3(rpc, scale)),
    })
}

/// Mean joint error after per-frame similarity alignment.
pub fn epe_procrustes(pred: &Pose3D, gt: &Pose3D) -> Result<f64> {
    let sim = fit_similarity(&pred.joints, &gt.joints)?;
    Ok(pred.joints.iter().zip(&gt.joints).map(|(p, g)| dist3(sim.apply(*p), *g)).sum::<f64>()
        / NUM_JOINTS as f64)
}

fn centroid(points: &[Point3]) -> Point3 {
    let mut c = [0.0; 3];
    for p in points {
        c = add3(c, *p);
    }
    scale3(c, 1.0 / points.len() as f64)
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Eigenvector of the largest eigenvalue of a symmetric 4x4 matrix (cyclic Jacobi).
fn top_eigenvector4(mut a: [[f64; 4]; 4]) -> [f64; 4] {
    let mut v = [[0.0; 4]; 4];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..64 {
        let off: f64 = (0..4).flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..4).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..3 {
            for q in p + 1..4 {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..4 {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..4 {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let best = (0..4).fold(0, |b, i| if a[i][i] > a[b][b] { i } else { b });
    let q = [v[0][best], v[1][best], v[2][best], v[3][best]];
    let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    q.map(|x| x / n)
}

fn quaternion_to_matrix([w, x, y, z]: [f64; 4]) -> [[f64; 3]; 3] {
    [
        [w * w + x * x - y * y - z * z, 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), w * w - x * x + y * y - z * z, 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), w * w - x * x - y * y + z * z],
    ]
}

/// Counts of values falling in `[edges[i], edges[i+1])`; values past the
/// last edge land in `overflow`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub overflow: u64,
    pub mean: f64,
    pub max: f64,
}

impl Histogram {
    pub fn build(edges: &[f64], values: &[f64]) -> Histogram {
        let mut counts = vec![0; edges.len().saturating_sub(1)];
        let mut overflow = 0;
        for &v in values {
            match edges.windows(2).position(|w| v >= w[0] && v < w[1]) {
                Some(i) => counts[i] += 1,
                None => overflow += 1,
            }
        }
        Histogram {
            edges: edges.to_vec(),
            counts,
            overflow,
            mean: mean(values),
            max: values.iter().copied().fold(0.0, f64::max),
        }
    }

    /// Value at the centre of the most populated bin.
    pub fn mode(&self) -> Option<f64> {
        let (i, c) = self.counts.iter().enumerate().max_by_key(|(i, c)| (**c, std::cmp::Reverse(*i)))?;
        (*c > 0).then(|| 0.5 * (self.edges[i] + self.edges[i + 1]))
    }
}

/// Joint speed (mm/s) and acceleration magnitude (mm/s^2) distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionStats {
    pub velocity: Histogram,
    pub acceleration: Histogram,
}

pub fn default_velocity_edges() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 50.0).collect()
}

pub fn default_acceleration_edges() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 1000.0).collect()
}

/// Finite-difference joint speeds and accelerations over a pose sequence
/// sampled at `fps`.
pub fn motion_stats(poses: &[Pose3D], fps: f64, vel_edges: &[f64], acc_edges: &[f64]) -> Result<MotionStats> {
    if poses.len() < 3 {
        return Err(Error::TooShort {
            needed: 3,
            got: poses.len(),
        });
    }
    let mut vel = Vec::with_capacity((poses.len() - 1) * NUM_JOINTS);
    let mut acc = Vec::with_capacity((poses.len() - 2) * NUM_JOINTS);
    for t in 1..poses.len() {
        for j in 0..NUM_JOINTS {
            vel.push(dist3(poses[t].joints[j], poses[t - 1].joints[j]) * fps);
        }
    }
    for t in 1..poses.len() - 1 {
        for j in 0..NUM_JOINTS {
            let second = sub3(
                add3(poses[t + 1].joints[j], poses[t - 1].joints[j]),
                scale3(poses[t].joints[j], 2.0),
            );
            acc.push(norm3(second) * fps * fps);
        }
    }
    Ok(MotionStats {
        velocity: Histogram::build(vel_edges, &vel),
        acceleration: Histogram::build(acc_edges, &acc),
    })
}

/// Metrics for one evaluated sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceReport {
    pub id: u32,
    pub frames: usize,
    pub mpjpe_abs_mm: f64,
    pub mpjpe_rootrel_mm: f64,
    pub epe_st_aligned_mm: f64,
    pub epe_procrustes_mm: f64,
    pub refine_failures: usize,
}

/// Aggregate evaluation: means over all frames and joints, plus per-sequence rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mpjpe_abs_mm: f64,
    pub mpjpe_rootrel_mm: f64,
    pub epe_st_aligned_mm: f64,
    pub epe_procrustes_mm: f64,
    pub frames: usize,
    pub refine_failures: usize,
    pub st_mode: StMode,
    pub sequences: Vec<SequenceReport>,
}

/// Predicted and ground-truth 3D poses of one sequence.
#[derive(Debug, Clone)]
pub struct EvalSequence {
    pub id: u32,
    pub pred: Vec<Pose3D>,
    pub gt: Vec<Pose3D>,
    pub refine_failures: usize,
}

pub const REPORT_COLUMNS: [&str; 7] = [
    "sequence",
    "frames",
    "mpjpe_abs_mm",
    "mpjpe_rootrel_mm",
    "epe_st_aligned_mm",
    "epe_procrustes_mm",
    "refine_failures",
];

impl EvalReport {
    pub fn from_sequences(seqs: &[EvalSequence], st_mode: StMode) -> Result<EvalReport> {
        let mut sequences = Vec::with_capacity(seqs.len());
        let mut sums = [0.0; 4];
        let mut frames = 0;
        let mut failures = 0;
        for s in seqs {
            if s.pred.len() != s.gt.len() || s.pred.is_empty() {
                return Err(Error::Shape(format!("sequence {} has mismatched frames", s.id)));
            }
            let n = s.pred.len();
            let mut row = [0.0; 4];
            for (p, g) in s.pred.iter().zip(&s.gt) {
                row[0] += mpjpe_absolute(p, g);
                row[1] += mpjpe_root_relative(p, g);
                row[3] += epe_procrustes(p, g)?;
            }
            row[2] = st_aligned_frame_errors(&s.pred, &s.gt, st_mode)?.iter().sum();
            for k in 0..4 {
                sums[k] += row[k];
                row[k] /= n as f64;
            }
            frames += n;
            failures += s.refine_failures;
            sequences.push(SequenceReport {
                id: s.id,
                frames: n,
                mpjpe_abs_mm: row[0],
                mpjpe_rootrel_mm: row[1],
                epe_st_aligned_mm: row[2],
                epe_procrustes_mm: row[3],
                refine_failures: s.refine_failures,
            });
        }
        if frames == 0 {
            return Err(Error::Shape("nothing to evaluate".into()));
        }
        let f = frames as f64;
        Ok(EvalReport {
            mpjpe_abs_mm: sums[0] / f,
            mpjpe_rootrel_mm: sums[1] / f,
            epe_st_aligned_mm: sums[2] / f,
            epe_procrustes_mm: sums[3] / f,
            frames,
            refine_failures: failures,
            st_mode,
            sequences,
        })
    }

    /// Flat `key = value` text.
    pub fn to_text(&self) -> String {
        let mode = match self.st_mode {
            StMode::PerSequence => "per_sequence",
            StMode::PerFrame => "per_frame",
        };
        let mut out = String::new();
        let _ = writeln!(out, "mpjpe_abs_mm = {}", sig6(self.mpjpe_abs_mm));
        let _ = writeln!(out, "mpjpe_rootrel_mm = {}", sig6(self.mpjpe_rootrel_mm));
        let _ = writeln!(out, "epe_st_aligned_mm = {}", sig6(self.epe_st_aligned_mm));
        let _ = writeln!(out, "epe_procrustes_mm = {}", sig6(self.epe_procrustes_mm));
        let _ = writeln!(out, "frames = {}", self.frames);
        let _ = writeln!(out, "refine_failures = {}", self.refine_failures);
        let _ = writeln!(out, "st_alignment = {mode}");
        out
    }

    /// Per-sequence table followed by an `all` row, comma-separated.
    pub fn to_csv(&self) -> String {
        let mut out = REPORT_COLUMNS.join(",");
        out.push('\n');
        let mut row = |name: String, frames: usize, m: [f64; 4], fails: usize| {
            let _ = writeln!(
                out,
                "{name},{frames},{},{},{},{},{fails}",
                sig6(m[0]),
                sig6(m[1]),
                sig6(m[2]),
                sig6(m[3])
            );
        };
        for s in &self.sequences {
            row(
                s.id.to_string(),
                s.frames,
                [s.mpjpe_abs_mm, s.mpjpe_rootrel_mm, s.epe_st_aligned_mm, s.epe_procrustes_mm],
                s.refine_failures,
            );
        }
        row(
            "all".into(),
            self.frames,
            [self.mpjpe_abs_mm, self.mpjpe_rootrel_mm, self.epe_st_aligned_mm, self.epe_procrustes_mm],
            self.refine_failures,
        );
        out
    }

    /// Reads back the headline values from [`EvalReport::to_text`] output.
    pub fn parse_headline(text: &str) -> Result<[f64; 4]> {
        let mut vals = [f64::NAN; 4];
        for line in text.lines() {
            let Some((k, v)) = line.split_once(" = ") else { continue };
            let idx = match k {
                "mpjpe_abs_mm" => 0,
                "mpjpe_rootrel_mm" => 1,
                "epe_st_aligned_mm" => 2,
                "epe_procrustes_mm" => 3,
                _ => continue,
            };
            vals[idx] = v.parse().map_err(|_| Error::Format(format!("bad value in `{line}`")))?;
        }
        if vals.iter().any(|v| v.is_nan()) {
            return Err(Error::Format("report lacks a headline metric".into()));
        }
        Ok(vals)
    }
}

/// Formats with six significant digits, without exponent for ordinary magnitudes.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..15).contains(&mag) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_pose(seed: f64) -> Pose3D {
        let mut joints = [[0.0; 3]; NUM_JOINTS];
        for (j, p) in joints.iter_mut().enumerate() {
            let a = j as f64 * 1.3 + seed;
            *p = [40.0 * a.sin(), 30.0 * (0.7 * a).cos(), 600.0 + 20.0 * (1.1 * a).sin()];
        }
        Pose3D::new(joints)
    }

    #[test]
    fn identical_poses_have_zero_error() {
        let p = sample_pose(0.3);
        assert_eq!(mpjpe_absolute(&p, &p), 0.0);
        assert_eq!(mpjpe_root_relative(&p, &p), 0.0);
        assert!(epe_procrustes(&p, &p).unwrap() < 1e-9);
        assert!(epe_st_aligned(&[p], &[p], StMode::PerSequence).unwrap() < 1e-12);
    }

    #[test]
    fn single_displaced_joint() {
        let g = sample_pose(0.0);
        let mut p = g;
        p.joints[5] = add3(p.joints[5], [3.0, 4.0, 0.0]);
        assert!((mpjpe_absolute(&p, &g) - 5.0 / 21.0).abs() < 1e-12);
    }

    #[test]
    fn root_relative_removes_translation_and_measures_scaling() {
        let g = sample_pose(1.0);
        let p = crate::geometry::translate_pose(&g, [10.0, -3.0, 40.0]);
        assert!(mpjpe_root_relative(&p, &g) < 1e-12);
        let r = g.root();
        let mut scaled = g;
        for j in &mut scaled.joints {
            *j = add3(r, scale3(sub3(*j, r), 1.1));
        }
        let expect = g.joints.iter().map(|j| 0.1 * dist3(*j, r)).sum::<f64>() / 21.0;
        assert!((mpjpe_root_relative(&scaled, &g) - expect).abs() < 1e-9);
    }

    #[test]
    fn exact_similarity_is_removed() {
        let g = sample_pose(2.0);
        let (c, s) = (0.8f64.cos(), 0.8f64.sin());
        let mut p = g;
        for j in &mut p.joints {
            let [x, y, z] = *j;
            *j = [1.3 * (c * x - s * z) + 5.0, 1.3 * y - 7.0, 1.3 * (s * x + c * z) + 2.0];
        }
        assert!(epe_procrustes(&p, &g).unwrap() < 1e-9);
        // rotation cannot be removed by scale/translation alone
        assert!(epe_st_aligned(&[p], &[g], StMode::PerSequence).unwrap() > 1.0);
    }

    #[test]
    fn reflection_is_not_removed() {
        let g = sample_pose(0.5);
        let mut p = g;
        for j in &mut p.joints {
            j[0] = -j[0];
        }
        assert!(epe_procrustes(&p, &g).unwrap() > 1.0);
    }

    #[test]
    fn exact_scale_translation_is_removed() {
        let seq: Vec<Pose3D> = (0..4).map(|i| sample_pose(i as f64)).collect();
        let pred: Vec<Pose3D> = seq
            .iter()
            .map(|g| {
                let mut p = *g;
                for j in &mut p.joints {
                    *j = add3(scale3(*j, 0.9), [1.0, 2.0, -30.0]);
                }
                p
            })
            .collect();
        for mode in [StMode::PerSequence, StMode::PerFrame] {
            assert!(epe_st_aligned(&pred, &seq, mode).unwrap() < 1e-9);
        }
    }

    #[test]
    fn coincident_prediction_is_degenerate() {
        let g = sample_pose(0.0);
        let p = Pose3D::new([[1.0, 2.0, 3.0]; NUM_JOINTS]);
        assert!(matches!(epe_procrustes(&p, &g), Err(Error::Alignment(_))));
        assert!(matches!(epe_st_aligned(&[p], &[g], StMode::PerFrame), Err(Error::Alignment(_))));
    }

    #[test]
    fn constant_and_linear_motion_statistics() {
        let p = sample_pose(0.0);
        let still = vec![p; 5];
        let st = motion_stats(&still, 30.0, &default_velocity_edges(), &default_acceleration_edges()).unwrap();
        assert_eq!(st.velocity.max, 0.0);
        assert_eq!(st.acceleration.max, 0.0);
        let moving: Vec<Pose3D> = (0..6)
            .map(|t| crate::geometry::translate_pose(&p, [3.0 * t as f64, 4.0 * t as f64, 0.0]))
            .collect();
        let st = motion_stats(&moving, 30.0, &default_velocity_edges(), &default_acceleration_edges()).unwrap();
        assert!((st.velocity.mean - 150.0).abs() < 1e-9);
        assert_eq!(st.velocity.mode(), Some(175.0));
        assert!(st.acceleration.max < 1e-9);
        assert!(motion_stats(&moving[..2], 30.0, &[0.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn report_text_and_table() {
        let g: Vec<Pose3D> = (0..3).map(|i| sample_pose(i as f64)).collect();
        let seq = EvalSequence {
            id: 4,
            pred: g.clone(),
            gt: g,
            refine_failures: 0,
        };
        let r = EvalReport::from_sequences(&[seq], StMode::PerSequence).unwrap();
        let text = r.to_text();
        assert!(text.contains("mpjpe_abs_mm = 0\n"));
        assert_eq!(EvalReport::parse_headline(&text).unwrap()[0], 0.0);
        let csv = r.to_csv();
        assert!(csv.starts_with("sequence,frames,"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(12.3456789), "12.3457");
        assert_eq!(sig6(0.001234567), "0.00123457");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(0.0), "0");
    }
}
