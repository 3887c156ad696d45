mod common;

use handmotion::dataset::*;
use handmotion::geometry::{dist3, project, NUM_JOINTS, PARENT};
use handmotion::metrics::{default_acceleration_edges, default_velocity_edges, motion_stats};
use handmotion::rng::seeded;
use proptest::prelude::*;

fn small(seed: u64) -> SynthConfig {
    SynthConfig {
        videos: 5,
        test_videos: 2,
        library_videos: 3,
        frames: 48,
        seed,
        ..SynthConfig::default()
    }
}

#[test]
fn generation_is_deterministic_and_round_trips() {
    let a = generate_synthetic_dataset(&small(7)).unwrap();
    let b = generate_synthetic_dataset(&small(7)).unwrap();
    let bytes = a.to_bytes();
    assert_eq!(bytes, b.to_bytes());
    let back = Dataset::from_bytes(&bytes).unwrap();
    assert_eq!(back, a);
    assert_eq!(back.to_bytes(), bytes);
    let c = generate_synthetic_dataset(&small(8)).unwrap();
    assert_ne!(c.to_bytes(), bytes);
}

#[test]
fn roles_and_sizes_follow_the_config() {
    let d = generate_synthetic_dataset(&small(1)).unwrap();
    assert_eq!(d.by_role(VideoRole::Train).count(), 5);
    assert_eq!(d.by_role(VideoRole::Test).count(), 2);
    assert_eq!(d.by_role(VideoRole::Library).count(), 3);
    assert!(d.videos.iter().all(|v| v.len() == 48 && v.observations.len() == 48));
    let ids: std::collections::BTreeSet<u32> = d.videos.iter().map(|v| v.id).collect();
    assert_eq!(ids.len(), d.videos.len());
}

#[test]
fn noise_free_observations_equal_projections() {
    let cfg = SynthConfig {
        noise2d: 0.0,
        noisez: 0.0,
        dropout: 0.0,
        ..small(2)
    };
    let d = generate_synthetic_dataset(&cfg).unwrap();
    for v in &d.videos {
        for (p, o) in v.poses.iter().zip(&v.observations) {
            let q = project(p, &v.intrinsics).unwrap();
            assert_eq!(o.kp2d, q.kp2d);
            assert_eq!(o.zrel, q.zrel);
            assert!(o.visible.iter().all(|&x| x));
        }
    }
}

#[test]
fn poses_keep_their_bone_lengths_and_stay_in_view() {
    let d = generate_synthetic_dataset(&small(3)).unwrap();
    for v in &d.videos {
        let sk = v.skeleton();
        for p in &v.poses {
            for j in 1..NUM_JOINTS {
                let l = dist3(p.joints[j], p.joints[PARENT[j]]);
                assert!((l - sk.bone_length(j)).abs() < 1e-9);
            }
        }
        let clip = MotionClip::from_video(v, 0, v.len()).unwrap();
        assert!(clip.in_frustum());
    }
}

#[test]
fn joint_speeds_stay_inside_the_histogram_range() {
    let d = generate_synthetic_dataset(&small(4)).unwrap();
    for v in &d.videos {
        let st = motion_stats(&v.poses, v.fps, &default_velocity_edges(), &default_acceleration_edges()).unwrap();
        assert_eq!(st.velocity.overflow, 0, "video {} max speed {}", v.id, st.velocity.max);
    }
}

#[test]
fn too_short_videos_are_rejected_before_generation() {
    let cfg = SynthConfig {
        frames: 8,
        min_seq_len: 16,
        ..small(0)
    };
    assert!(matches!(generate_synthetic_dataset(&cfg), Err(handmotion::Error::Config(_))));
}

#[test]
fn corrupted_files_are_rejected() {
    let d = generate_synthetic_dataset(&small(5)).unwrap();
    let mut bytes = d.to_bytes();
    assert!(Dataset::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    bytes[0] ^= 0xff;
    assert!(Dataset::from_bytes(&bytes).is_err());
}

#[test]
fn protocol_one_labels_every_kth_frame() {
    let d = generate_synthetic_dataset(&small(6)).unwrap();
    let train: Vec<_> = d.by_role(VideoRole::Train).collect();
    let s = split_protocol1(&train, 0.1, 0).unwrap();
    for (_, m) in &s.masks {
        for (t, &l) in m.iter().enumerate() {
            assert_eq!(l, t % 10 == 0);
        }
    }
    assert!(s.unlabeled_videos().is_empty());
    assert!(split_protocol1(&train, 0.0, 0).is_err());
}

#[test]
fn protocol_two_labels_whole_videos() {
    let d = generate_synthetic_dataset(&small(6)).unwrap();
    let train: Vec<_> = d.by_role(VideoRole::Train).collect();
    let s = split_protocol2(&train, 0.4, 9).unwrap();
    assert_eq!(s.videos_with_labels().len(), 2);
    assert_eq!(s.unlabeled_videos().len(), 3);
    for (_, m) in &s.masks {
        assert!(m.iter().all(|&l| l == m[0]));
    }
    assert_eq!(split_protocol2(&train, 0.4, 9).unwrap(), s);
    let full = split_protocol2(&train, 1.0, 9).unwrap();
    assert_eq!(full.labeled_count(), full.frame_count());
    assert_eq!(DatasetSplit::from_text(&s.to_text()).unwrap(), s);
}

#[test]
fn windows_cover_the_video() {
    let d = generate_synthetic_dataset(&small(7)).unwrap();
    let v = &d.videos[0];
    let w = window_clips(v, 16, 4).unwrap();
    assert_eq!(w.len(), (48 - 16) / 4 + 1);
    assert_eq!(w[2].poses[0], v.poses[8]);
    assert!(window_clips(v, 49, 1).is_err());
    assert!(window_clips(v, 16, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn rotation_augmentation_is_an_isometry(seed in any::<u64>(), max_angle in 0.0..1.0f64) {
        let d = generate_synthetic_dataset(&SynthConfig { videos: 1, test_videos: 0, library_videos: 0, frames: 20, ..small(seed % 50) }).unwrap();
        let clip = MotionClip::from_video(&d.videos[0], 2, 16).unwrap();
        let a = augment_rotation(&clip, max_angle, &mut seeded(seed));
        prop_assert!(a.angle.abs() <= max_angle);
        prop_assert!(a.clip.in_frustum());
        prop_assert_eq!(a.clip.poses[0].root(), clip.poses[0].root());
        for (p, q) in clip.poses.iter().zip(&a.clip.poses) {
            for i in 0..NUM_JOINTS {
                for j in 0..i {
                    prop_assert!((dist3(p.joints[i], p.joints[j]) - dist3(q.joints[i], q.joints[j])).abs() < 1e-9);
                }
            }
        }
    }
}
