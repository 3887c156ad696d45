use handmotion::dataset::OBS_DIM;
use handmotion::geometry::{lift, CameraIntrinsics, NUM_JOINTS};
use handmotion::nets::*;
use handmotion::numcore::gradcheck::{check, check_steps};
use handmotion::numcore::{Bound, Tape, Tensor};
use handmotion::rng::seeded;
use rand::Rng;

fn small_model(seed: u64) -> PoseModel {
    PoseModel::new(
        PoseModelConfig {
            input_dim: OBS_DIM,
            width: 16,
            hidden_layers: 2,
            image_size: 256.0,
            depth_range: 200.0,
        },
        &mut seeded(seed),
    )
}

fn random_features(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    (0..n * OBS_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn pose_outputs_are_bounded_and_root_depth_is_zero() {
    let mut m = small_model(1);
    let mut rng = seeded(2);
    let x: Vec<f64> = (0..32 * OBS_DIM).map(|_| rng.gen_range(-40.0..40.0)).collect();
    for p in m.predict(&x).unwrap() {
        assert!(p.kp2d.iter().flatten().all(|&c| (0.0..=256.0).contains(&c)));
        assert!(p.zrel.iter().all(|z| z.abs() <= 200.0));
        assert_eq!(p.zrel[0], 0.0);
    }
}

#[test]
fn zeroed_heads_predict_the_midpoint() {
    let mut m = small_model(3);
    m.zero_heads();
    for p in m.predict(&random_features(5, 4)).unwrap() {
        assert!(p.kp2d.iter().flatten().all(|&c| c == 128.0));
        assert!(p.zrel.iter().all(|&z| z == 0.0));
    }
}

#[test]
fn frozen_predictions_ignore_batch_composition() {
    let mut m = small_model(5);
    // move the running statistics away from their initial values
    let mut tape = Tape::new();
    let bound = m.params.bind(&mut tape);
    let x = tape.constant(Tensor::new(&[8, OBS_DIM], random_features(8, 6)).unwrap());
    m.forward(&mut tape, &bound, x, NormMode::Train).unwrap();

    let feats = random_features(6, 7);
    let whole = m.predict(&feats).unwrap();
    let mut perm: Vec<f64> = Vec::new();
    for i in (0..6).rev() {
        perm.extend_from_slice(&feats[i * OBS_DIM..(i + 1) * OBS_DIM]);
    }
    let reversed = m.predict(&perm).unwrap();
    for i in 0..6 {
        let single = m.predict(&feats[i * OBS_DIM..(i + 1) * OBS_DIM]).unwrap();
        for (a, b) in [(&whole[i], &single[0]), (&whole[i], &reversed[5 - i])] {
            for j in 0..NUM_JOINTS {
                assert!((a.kp2d[j][0] - b.kp2d[j][0]).abs() < 1e-9);
                assert!((a.zrel[j] - b.zrel[j]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn discriminator_scores_lie_in_unit_interval() {
    let mut d = MotionDiscriminator::new(DiscConfig::conv(4), &mut seeded(8)).unwrap();
    assert!(d.params.numel() < MAX_DISC_PARAMS);
    let mut rng = seeded(9);
    let x = Tensor::new(&[3, 3, 4, NUM_JOINTS], (0..3 * 3 * 4 * NUM_JOINTS).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
    let s = d.score(&x).unwrap();
    assert_eq!(s.len(), 3);
    assert!(s.iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn oversized_conv_discriminator_is_rejected() {
    let mut c = DiscConfig::conv(16);
    c.width = 128;
    assert!(matches!(
        MotionDiscriminator::new(c, &mut seeded(0)),
        Err(handmotion::Error::Architecture(_))
    ));
}

#[test]
fn mlp_discriminator_scores_sequences() {
    let c = DiscConfig {
        arch: DiscArch::Mlp,
        seq_len: 2,
        width: 8,
        decode_width: 8,
        spectral_norm: true,
    };
    let mut d = MotionDiscriminator::new(c, &mut seeded(1)).unwrap();
    let s = d.score(&Tensor::zeros(&[2, 3, 2, NUM_JOINTS])).unwrap();
    assert_eq!(s.len(), 2);
}

fn camera() -> CameraIntrinsics {
    CameraIntrinsics::new(300.0, 310.0, 128.0, 126.0).unwrap()
}

fn random_heads(rows: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = seeded(seed);
    let kp = (0..rows * NUM_JOINTS * 2).map(|_| rng.gen_range(90.0..170.0)).collect();
    let mut z: Vec<f64> = (0..rows * NUM_JOINTS).map(|_| rng.gen_range(-60.0..60.0)).collect();
    for r in 0..rows {
        z[r * NUM_JOINTS] = 0.0;
    }
    (kp, z)
}

#[test]
fn two_half_d_channels_are_normalized() {
    let (b, s) = (2, 3);
    let (kp, z) = random_heads(b * s, 10);
    let mut tape = Tape::new();
    let k = tape.constant(Tensor::new(&[b * s, 42], kp.clone()).unwrap());
    let zv = tape.constant(Tensor::new(&[b * s, 21], z.clone()).unwrap());
    let r = sequence_representation(&mut tape, k, zv, b, s, ReprMode::TwoHalfD, None, 256.0, 200.0).unwrap();
    let v = tape.value(r);
    assert_eq!(v.shape(), &[b, 3, s, NUM_JOINTS]);
    assert!(v.data().iter().all(|x| x.abs() <= 1.0));
    // spot check the layout: clip 1, frame 2, joint 5
    let row = s + 2;
    let at = |c: usize| v.data()[((3 + c) * s + 2) * NUM_JOINTS + 5];
    assert!((at(0) - (kp[row * 42 + 10] / 128.0 - 1.0)).abs() < 1e-15);
    assert!((at(1) - (kp[row * 42 + 11] / 128.0 - 1.0)).abs() < 1e-15);
    assert!((at(2) - z[row * 21 + 5] / 200.0).abs() < 1e-15);
}

#[test]
fn three_d_channels_match_direct_lifting() {
    let (b, s) = (2, 4);
    let (kp, z) = random_heads(b * s, 11);
    let cams = vec![camera(), CameraIntrinsics::new(280.0, 280.0, 120.0, 130.0).unwrap()];
    let ctx = LiftContext::from_values(&kp, &z, &cams, s, 88.0).unwrap();
    let mut tape = Tape::new();
    let k = tape.constant(Tensor::new(&[b * s, 42], kp.clone()).unwrap());
    let zv = tape.constant(Tensor::new(&[b * s, 21], z.clone()).unwrap());
    let r = sequence_representation(&mut tape, k, zv, b, s, ReprMode::ThreeD, Some(&ctx), 256.0, 200.0).unwrap();
    let v = tape.value(r).data().to_vec();
    let poses = outputs_to_poses(&kp, &z);
    for c in 0..b {
        let origin = lift(&poses[c * s], &cams[c], ctx.root_depth[c * s]).unwrap().root();
        for t in 0..s {
            let p = lift(&poses[c * s + t], &cams[c], ctx.root_depth[c * s + t]).unwrap();
            for j in 0..NUM_JOINTS {
                for ch in 0..3 {
                    let want = (p.joints[j][ch] - origin[ch]) / 200.0;
                    let got = v[((c * 3 + ch) * s + t) * NUM_JOINTS + j];
                    assert!((want - got).abs() < 1e-12, "{want} vs {got}");
                }
            }
        }
    }
}

#[test]
fn pose_model_gradients_match_finite_differences() {
    let m = small_model(12);
    let x = Tensor::new(&[4, OBS_DIM], random_features(4, 13)).unwrap();
    let n = m.params.len();
    let mut inputs: Vec<Tensor> = m.params.values().to_vec();
    inputs.push(x);
    for mode in [NormMode::Train, NormMode::Frozen] {
        let r = check(&inputs, 1e-6, 1e-3, |tape, vars| {
            let mut m = m.clone();
            let bound = Bound::from_vars(vars[..n].to_vec());
            let out = m.forward(tape, &bound, vars[n], mode)?;
            // keep the objective near unit scale so roundoff stays below the tolerance
            let a = tape.scale(out.kp, 1.0 / 256.0)?;
            let a = tape.square(a)?;
            let a = tape.mean(a)?;
            let zz = tape.scale(out.zrel, 1.0 / 200.0)?;
            let zz = tape.square(zz)?;
            let b = tape.mean(zz)?;
            tape.add(a, b)
        })
        .unwrap();
        assert!(r.max_rel_err < 1e-4, "{mode:?}: {}", r.max_rel_err);
    }
}

#[test]
fn discriminator_gradients_match_finite_differences() {
    for (arch, sn) in [(DiscArch::Conv, false), (DiscArch::Conv, true), (DiscArch::Mlp, true)] {
        let c = DiscConfig {
            arch,
            seq_len: 3,
            width: 4,
            decode_width: 2,
            spectral_norm: sn,
        };
        let mut d = MotionDiscriminator::new(c, &mut seeded(14)).unwrap();
        let mut rng = seeded(15);
        let x = Tensor::new(&[3, 3, 3, NUM_JOINTS], (0..27 * NUM_JOINTS).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        // Spectral normalization differentiates with its singular vectors held
        // fixed, which agrees with finite differences once the power iteration
        // has converged.
        for _ in 0..300 {
            let mut tape = Tape::new();
            let bound = d.params.bind_frozen(&mut tape);
            let xv = tape.constant(x.clone());
            d.forward(&mut tape, &bound, xv, NormMode::Train).unwrap();
        }
        let n = d.params.len();
        let mut inputs: Vec<Tensor> = d.params.values().to_vec();
        inputs.push(x);
        let r = check_steps(&inputs, &[1e-6, 1e-7], 1e-3, |tape, vars| {
            let mut d = d.clone();
            let bound = Bound::from_vars(vars[..n].to_vec());
            let s = d.forward(tape, &bound, vars[n], NormMode::Train)?;
            let s = tape.square(s)?;
            tape.sum(s)
        })
        .unwrap();
        assert!(r.max_rel_err < 1e-4, "{arch:?} sn={sn}: {}", r.max_rel_err);
    }
}
