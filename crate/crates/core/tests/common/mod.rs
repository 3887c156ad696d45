#![allow(dead_code)]

use handmotion::geometry::{add3, dot3, project, sub3, CameraIntrinsics, Point3, Pose3D, Skeleton, NUM_JOINTS, PARENT};
use handmotion::rng::Rng;
use rand::Rng as _;

pub const IMAGE: f64 = 256.0;

pub fn random_camera(rng: &mut Rng) -> CameraIntrinsics {
    let f = rng.gen_range(220.0..320.0);
    CameraIntrinsics::new(f, f * rng.gen_range(0.97..1.03), rng.gen_range(120.0..136.0), rng.gen_range(120.0..136.0))
        .unwrap()
}

fn unit(rng: &mut Rng) -> Point3 {
    loop {
        let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n = dot3(v, v).sqrt();
        if n > 0.1 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Pose with exact bone lengths of `skeleton`: every bone points in a random
/// direction from its parent.
pub fn random_pose(rng: &mut Rng, skeleton: Skeleton, root: Point3) -> Pose3D {
    let mut joints = [[0.0; 3]; NUM_JOINTS];
    joints[0] = root;
    for j in 1..NUM_JOINTS {
        let d = unit(rng);
        let l = skeleton.bone_length(j);
        joints[j] = add3(joints[PARENT[j]], [d[0] * l, d[1] * l, d[2] * l]);
    }
    Pose3D::new(joints)
}

/// Random pose whose joints all project inside the image.
pub fn random_frustum_pose(rng: &mut Rng, k: &CameraIntrinsics) -> (Pose3D, Skeleton) {
    loop {
        let sk = Skeleton::new(rng.gen_range(0.8..1.2));
        let root = [rng.gen_range(-40.0..40.0), rng.gen_range(-40.0..40.0), rng.gen_range(550.0..900.0)];
        let p = random_pose(rng, sk, root);
        if let Ok(q) = project(&p, k) {
            if q.kp2d.iter().flatten().all(|&c| (0.0..=IMAGE).contains(&c)) {
                return (p, sk);
            }
        }
    }
}

pub fn perturb(rng: &mut Rng, p: &Pose3D, sigma: f64) -> Pose3D {
    let mut j = p.joints;
    for q in &mut j {
        for c in q.iter_mut() {
            *c += rng.gen_range(-sigma..sigma);
        }
    }
    Pose3D::new(j)
}

fn centroid(p: &[Point3]) -> Point3 {
    let mut c = [0.0; 3];
    for q in p {
        c = add3(c, *q);
    }
    [c[0] / p.len() as f64, c[1] / p.len() as f64, c[2] / p.len() as f64]
}

fn mean_dist(a: &[Point3], b: &[Point3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| dot3(sub3(*x, *y), sub3(*x, *y)).sqrt()).sum::<f64>() / a.len() as f64
}

/// Downhill simplex minimization.
pub fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64, iters: usize) -> Vec<f64> {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = (0..=n)
        .map(|i| {
            let mut x = x0.to_vec();
            if i > 0 {
                x[i - 1] += step;
            }
            let v = f(&x);
            (x, v)
        })
        .collect();
    for _ in 0..iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let worst = simplex[n].clone();
        let mut c = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for i in 0..n {
                c[i] += x[i] / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> { (0..n).map(|i| c[i] + t * (worst.0[i] - c[i])).collect() };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let xc = along(0.5);
            let fc = f(&xc);
            if fc < worst.1 {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = (0..n).map(|i| best[i] + 0.5 * (s.0[i] - best[i])).collect();
                    *s = (x.clone(), f(&x));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0).0
}

fn rodrigues(w: &[f64]) -> [[f64; 3]; 3] {
    let th = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    if th < 1e-300 {
        return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    }
    let k = [w[0] / th, w[1] / th, w[2] / th];
    let (s, c) = th.sin_cos();
    let v = 1.0 - c;
    [
        [c + k[0] * k[0] * v, k[0] * k[1] * v - k[2] * s, k[0] * k[2] * v + k[1] * s],
        [k[1] * k[0] * v + k[2] * s, c + k[1] * k[1] * v, k[1] * k[2] * v - k[0] * s],
        [k[2] * k[0] * v - k[1] * s, k[2] * k[1] * v + k[0] * s, c + k[2] * k[2] * v],
    ]
}

fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn apply(r: &[[f64; 3]; 3], p: Point3) -> Point3 {
    [dot3(r[0], p), dot3(r[1], p), dot3(r[2], p)]
}

fn cross(a: Point3, b: Point3) -> Point3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn solve3(m: [[f64; 3]; 3], b: Point3) -> Point3 {
    let det = dot3(m[0], cross(m[1], m[2]));
    let col = |i: usize| {
        let mut mm = m;
        for r in 0..3 {
            mm[r][i] = b[r];
        }
        dot3(mm[0], cross(mm[1], mm[2])) / det
    };
    [col(0), col(1), col(2)]
}

/// Procrustes error by direct minimization: simplex search over rotation
/// vectors from several starts, then Newton polishing on the rotation
/// manifold. Scale and translation follow in closed form for a fixed rotation.
pub fn procrustes_oracle(pred: &[Point3], gt: &[Point3]) -> f64 {
    let pc = centroid(pred);
    let gc = centroid(gt);
    let p: Vec<Point3> = pred.iter().map(|x| sub3(*x, pc)).collect();
    let g: Vec<Point3> = gt.iter().map(|x| sub3(*x, gc)).collect();
    let spread: f64 = p.iter().map(|x| dot3(*x, *x)).sum();
    let corr = |r: &[[f64; 3]; 3]| -> f64 { p.iter().zip(&g).map(|(a, b)| dot3(apply(r, *a), *b)).sum() };
    let objective = |w: &[f64]| -corr(&rodrigues(w));
    let mut best = vec![0.0; 3];
    let mut best_v = f64::INFINITY;
    let starts = [[0.0, 0.0, 0.0], [2.5, 0.0, 0.0], [0.0, 2.5, 0.0], [0.0, 0.0, 2.5], [1.5, 1.5, 1.5]];
    for s in starts {
        let w = nelder_mead(&objective, &s, 0.5, 400);
        let v = objective(&w);
        if v < best_v {
            best_v = v;
            best = w;
        }
    }
    let mut r = rodrigues(&best);
    for _ in 0..8 {
        // corr(R exp([w])) ~ corr + w.grad + w'Hw/2 with a = R'g
        let mut grad = [0.0; 3];
        let mut c = [[0.0; 3]; 3];
        for (pi, gi) in p.iter().zip(&g) {
            let a = apply(&transpose(&r), *gi);
            grad = add3(grad, cross(*pi, a));
            for i in 0..3 {
                for j in 0..3 {
                    c[i][j] += a[i] * pi[j];
                }
            }
        }
        let tr = c[0][0] + c[1][1] + c[2][2];
        let mut h = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                h[i][j] = 0.5 * (c[i][j] + c[j][i]) - if i == j { tr } else { 0.0 };
            }
        }
        let step = solve3(h, grad);
        r = matmul(&r, &rodrigues(&[-step[0], -step[1], -step[2]]));
    }
    let s = corr(&r) / spread;
    let t = sub3(gc, {
        let q = apply(&r, pc);
        [q[0] * s, q[1] * s, q[2] * s]
    });
    let aligned: Vec<Point3> = pred
        .iter()
        .map(|x| {
            let q = apply(&r, *x);
            add3([q[0] * s, q[1] * s, q[2] * s], t)
        })
        .collect();
    mean_dist(&aligned, gt)
}

fn transpose(r: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = r[j][i];
        }
    }
    t
}

/// Scale/translation-aligned error by a one-dimensional search over the
/// scale (translation optimal for each scale), finished with secant steps on
/// the derivative.
pub fn st_oracle(pred: &[Point3], gt: &[Point3]) -> f64 {
    let pc = centroid(pred);
    let gc = centroid(gt);
    let sse = |s: f64| -> f64 {
        pred.iter()
            .zip(gt)
            .map(|(p, g)| {
                let d = sub3(add3([s * p[0], s * p[1], s * p[2]], sub3(gc, [s * pc[0], s * pc[1], s * pc[2]])), *g);
                dot3(d, d)
            })
            .sum()
    };
    // golden-section search on [0, 4]
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, 4.0);
    for _ in 0..200 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if sse(c) < sse(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let deriv = |s: f64| -> f64 {
        pred.iter()
            .zip(gt)
            .map(|(p, g)| {
                let dp = sub3(*p, pc);
                let r = sub3([s * dp[0], s * dp[1], s * dp[2]], sub3(*g, gc));
                2.0 * dot3(r, dp)
            })
            .sum()
    };
    let (mut s0, mut s1) = (a, 0.5 * (a + b) + 1e-3);
    for _ in 0..4 {
        let (d0, d1) = (deriv(s0), deriv(s1));
        if d1 == d0 {
            break;
        }
        let s2 = s1 - d1 * (s1 - s0) / (d1 - d0);
        s0 = s1;
        s1 = s2;
    }
    let s = s1;
    let t = sub3(gc, [s * pc[0], s * pc[1], s * pc[2]]);
    let aligned: Vec<Point3> = pred.iter().map(|p| add3([s * p[0], s * p[1], s * p[2]], t)).collect();
    mean_dist(&aligned, gt)
}
