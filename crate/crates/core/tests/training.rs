use handmotion::dataset::*;
use handmotion::numcore::{Adam, AdamConfig, Tape, Tensor};
use handmotion::rng::seeded;
use handmotion::training::data::{representation_tensor, sample_clips, sample_real, sample_sup};
use handmotion::training::engine::{
    build_disc, disc_objective_value, disc_update, model_objective_value, model_update,
};
use handmotion::training::losses::loss_temporal_smoother;
use handmotion::training::*;
use handmotion::Error;

fn dataset() -> Dataset {
    generate_synthetic_dataset(&SynthConfig {
        videos: 6,
        test_videos: 2,
        library_videos: 4,
        frames: 40,
        seed: 21,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn config(method: Method) -> TrainConfig {
    TrainConfig {
        method,
        label_fraction: 0.5,
        pretrain_steps: 30,
        adv_steps: 20,
        batch_frames: 32,
        batch_clips: 4,
        disc_width: 8,
        pose_width: 32,
        log_every: 1,
        ..TrainConfig::default()
    }
}

fn adam(lr: f64, params: &handmotion::numcore::ParamSet) -> Adam {
    Adam::new(
        AdamConfig {
            lr,
            beta1: 0.5,
            ..AdamConfig::default()
        },
        params,
    )
}

#[test]
fn each_player_descends_its_own_objective() {
    let d = dataset();
    let cfg = config(Method::MotionModel);
    let data = prepare(&d, &cfg).unwrap();
    let mut model = pretrain(&data, &cfg).unwrap().model;
    let mut disc = build_disc(&cfg).unwrap();
    let (mut opt_m, mut opt_d) = (adam(1e-4, &model.params), adam(1e-4, &disc.params));
    let mut rng = seeded(5);
    let (mut m_down, mut d_down) = (0, 0);
    let steps = 60;
    for _ in 0..steps {
        let sup = sample_sup(&data, cfg.batch_frames, &mut rng).unwrap();
        let clips = sample_clips(&data, cfg.batch_clips, cfg.seq_len, &mut rng).unwrap();

        let disc_sum = disc.params.checksum();
        let before = model_objective_value(&mut model, Some(&mut disc), &sup, Some(&clips), &cfg, &data).unwrap();
        let terms = model_update(&mut model, &mut opt_m, Some(&mut disc), &sup, Some(&clips), &cfg, &data).unwrap();
        let after = model_objective_value(&mut model, Some(&mut disc), &sup, Some(&clips), &cfg, &data).unwrap();
        assert_eq!(disc.params.checksum(), disc_sum, "pose update touched the discriminator");
        m_down += usize::from(after < before);

        let fake = terms.fake.unwrap();
        let real = sample_real(&data, cfg.batch_clips, cfg.seq_len, None, &mut rng, &mut seeded(0)).unwrap();
        let bone = canonical_bone_mm();
        let both = real.concat(&fake).unwrap();
        let input = representation_tensor(&both, cfg.repr, bone, data.image_size, data.depth_range).unwrap();
        let model_sum = model.params.checksum();
        let before = disc_objective_value(&mut disc, &input, real.clips()).unwrap();
        disc_update(&mut disc, &mut opt_d, &input, real.clips()).unwrap();
        let after = disc_objective_value(&mut disc, &input, real.clips()).unwrap();
        assert_eq!(model.params.checksum(), model_sum, "discriminator update touched the pose model");
        d_down += usize::from(after < before);
    }
    assert!(m_down * 100 >= steps * 95, "pose objective fell on {m_down}/{steps} steps");
    assert!(d_down * 100 >= steps * 95, "discriminator objective fell on {d_down}/{steps} steps");
}

#[test]
fn pretraining_reduces_the_supervised_loss() {
    let d = dataset();
    let cfg = TrainConfig {
        pretrain_steps: 100,
        ..config(Method::None)
    };
    let data = prepare(&d, &cfg).unwrap();
    let p = pretrain(&data, &cfg).unwrap();
    let first = p.curve.first().unwrap().1;
    assert!(p.final_loss < 0.5 * first, "{first} -> {}", p.final_loss);
    assert_eq!(p.curve.last().unwrap().0, 2 * cfg.pretrain_steps - 1);
}

#[test]
fn curves_record_only_the_terms_a_method_computes() {
    let d = dataset();
    for (method, has_mm, has_d) in [
        (Method::None, false, false),
        (Method::TemporalSmoother, true, false),
        (Method::PosePrior, true, true),
        (Method::MotionModel, true, true),
    ] {
        let out = train_and_evaluate(&d, &config(method), &mut |_| Ok(())).unwrap();
        assert_eq!(out.state.curves.len(), 20);
        for r in &out.state.curves {
            assert_eq!(r.l_mm.is_some(), has_mm, "{method:?}");
            assert_eq!(r.l_d.is_some(), has_d, "{method:?}");
            assert_eq!(r.d_acc.is_some(), has_d, "{method:?}");
        }
        assert_eq!(out.state.disc.is_some(), has_d);
        let csv = curves_csv(&out.state.curves);
        assert!(csv.starts_with("step,l_j2d,l_zr,l_mm,l_d,d_acc\n"));
        assert_eq!(csv.lines().count(), 21);
    }
}

#[test]
fn pose_prior_discriminates_single_frames() {
    let cfg = config(Method::PosePrior);
    assert_eq!(cfg.effective_seq_len(), 1);
    assert_eq!(build_disc(&cfg).unwrap().config.seq_len, 1);
}

#[test]
fn smoother_penalty_is_the_mean_frame_step() {
    // Linear motion of one unit per frame along a single coordinate.
    let (b, s) = (2, 5);
    let mut v = vec![0.0; b * 3 * s * 21];
    for c in 0..b {
        for t in 0..s {
            v[((c * 3) * s + t) * 21 + 4] = t as f64 * 0.75;
        }
    }
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(&[b, 3, s, 21], v).unwrap());
    let l = loss_temporal_smoother(&mut tape, x).unwrap();
    assert!((tape.value(l).item() - 0.75).abs() < 1e-9);
    let still = tape.constant(Tensor::full(&[b, 3, s, 21], 0.3));
    let l = loss_temporal_smoother(&mut tape, still).unwrap();
    assert!(tape.value(l).item() < 1e-9);
}

#[test]
fn invalid_configs_are_rejected() {
    let d = dataset();
    let bad = [
        TrainConfig {
            label_fraction: 0.0,
            ..config(Method::None)
        },
        TrainConfig {
            seq_len: 1,
            ..config(Method::TemporalSmoother)
        },
        TrainConfig {
            protocol: 3,
            ..config(Method::None)
        },
        TrainConfig {
            lambda_mm: -1.0,
            ..config(Method::MotionModel)
        },
        TrainConfig {
            seq_len: 41,
            ..config(Method::MotionModel)
        },
    ];
    for c in bad {
        let r = train_and_evaluate(&d, &c, &mut |_| Ok(()));
        assert!(matches!(r, Err(Error::Config(_)) | Err(Error::TooShort { .. })), "{c:?} gave {:?}", r.err());
    }
}

#[test]
fn checkpoints_restore_the_same_predictions() {
    let d = dataset();
    let mut out = train_and_evaluate(&d, &config(Method::MotionModel), &mut |_| Ok(())).unwrap();
    let ck = to_checkpoint(&out.state.model, out.state.disc.as_mut(), out.state.step);
    let bytes = ck.to_bytes();
    let back = handmotion::numcore::Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes(), bytes);
    let mut m = model_from_checkpoint(&back).unwrap();
    assert_eq!(m.params.checksum(), out.state.model.params.checksum());
    let tests = run::test_videos(&d);
    assert_eq!(evaluate(&mut m, &tests, &EvalOptions::default()).unwrap(), out.report);
    run::check_compatible(&m, &d).unwrap();
}

#[test]
fn observer_errors_stop_training() {
    let d = dataset();
    let r = train_and_evaluate(&d, &config(Method::None), &mut |s| {
        if s.step == 3 {
            Err(Error::Io(std::io::Error::other("stop")))
        } else {
            Ok(())
        }
    });
    assert!(matches!(r, Err(Error::Io(_))));
}
