//! Dataset ingestion, keyframe filtering, sliding-window sequencing and
//! preprocessing, plus the synthetic plane-scene fixture generator.

mod image_io;
mod index;
pub mod synthetic;
mod types;
mod windows;

pub use image_io::{
    preprocess, read_depth, read_image, resize_bilinear, resize_depth_nearest, write_depth,
    write_image,
};
pub use index::{keyframe_filter, load_dataset, DatasetIndex, FrameRef, KeyframeFilterOutcome, SceneIndex};
pub use types::{reverse_sample, DepthBuf, Direction, ImageBuf, SequenceSample};
pub use windows::{load_window, make_windows, relative_from_absolute, WindowRef};

#[cfg(test)]
mod tests {
    use super::synthetic::{render_plane_scene, write_scene, PlaneSceneSpec};
    use super::*;
    use crate::geometry::{Intrinsics, PoseSE3};
    use nalgebra::Matrix4;

    fn translation(x: f64) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m[(0, 3)] = x;
        m
    }

    #[test]
    fn empty_root_yields_empty_index() {
        let dir = tempfile::tempdir().unwrap();
        let index = load_dataset(dir.path()).unwrap();
        assert!(index.scenes.is_empty());
    }

    #[test]
    fn synthetic_scene_round_trips_through_the_layout() {
        let dir = tempfile::tempdir().unwrap();
        let spec = PlaneSceneSpec { n_frames: 12, ..PlaneSceneSpec::desk(12) };
        let scene = render_plane_scene(&spec).unwrap();
        write_scene(dir.path(), "plane0", &scene).unwrap();

        let index = load_dataset(dir.path()).unwrap();
        assert_eq!(index.scenes.len(), 1);
        let s = &index.scenes[0];
        assert_eq!(s.frames.len(), 12);
        assert_eq!(s.image_size, (96, 64));
        // cam.txt uses shortest round-trip decimal, so intrinsics are exact.
        assert_eq!(s.intrinsics, scene.intrinsics);
        let poses = s.abs_poses.as_ref().unwrap();
        assert_eq!(poses.len(), 12);
        for (a, b) in poses.iter().zip(&scene.abs_poses) {
            for i in 0..16 {
                assert_eq!(a.as_slice()[i], b.as_slice()[i]);
            }
        }
        assert!(s.frames.iter().all(|f| f.depth_path.is_some()));
    }

    #[test]
    fn malformed_pose_line_is_reported_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let spec = PlaneSceneSpec::desk(3);
        let scene = render_plane_scene(&spec).unwrap();
        write_scene(dir.path(), "bad", &scene).unwrap();
        let poses_path = dir.path().join("scenes/bad/poses.txt");
        // 11 numbers on line 2.
        std::fs::write(&poses_path, "1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 0 0 1 0 0 0 0 1\n1 0 0 0 0 1 0 0 0 0 1 0\n").unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("poses.txt"), "{msg}");
        assert!(msg.contains(":2"), "{msg}");
        assert!(msg.contains("11"), "{msg}");
    }

    #[test]
    fn keyframe_filter_static_scene_keeps_only_first() {
        let spec = PlaneSceneSpec { step: [0.0; 3], yaw_rate: 0.0, ..PlaneSceneSpec::desk(5) };
        let scene = render_plane_scene(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_scene(dir.path(), "static", &scene).unwrap();
        let index = load_dataset(dir.path()).unwrap();
        let out = keyframe_filter(&index, 0.3);
        assert_eq!(out.index.scenes[0].frames.len(), 1);
        assert!(out.skipped_scenes.is_empty());
    }

    #[test]
    fn keyframe_filter_uniform_spacing_keeps_all() {
        let index = DatasetIndex {
            scenes: vec![SceneIndex {
                scene_id: "u".into(),
                intrinsics: Intrinsics::new(80.0, 80.0, 10.0, 10.0).unwrap(),
                image_size: (32, 32),
                frames: (0..6)
                    .map(|i| FrameRef {
                        id: i,
                        image_path: format!("{i}.png").into(),
                        depth_path: None,
                    })
                    .collect(),
                abs_poses: Some((0..6).map(|i| translation(0.5 * i as f64)).collect()),
            }],
        };
        let out = keyframe_filter(&index, 0.3);
        assert_eq!(out.index.scenes[0].frames.len(), 6);
    }

    /// Greedy scan oracle on irregular spacings.
    #[test]
    fn keyframe_filter_matches_greedy_scan_oracle() {
        let spacings = [0.1, 0.25, 0.4, 0.1, 0.3];
        let mut cum = vec![0.0];
        for s in spacings {
            cum.push(cum.last().unwrap() + s);
        }
        let sigma = 0.3;
        // Independent scan.
        let mut expected = vec![0usize];
        let mut last = 0.0;
        for (i, &x) in cum.iter().enumerate().skip(1) {
            if x - last >= sigma {
                expected.push(i);
                last = x;
            }
        }
        let index = DatasetIndex {
            scenes: vec![SceneIndex {
                scene_id: "irr".into(),
                intrinsics: Intrinsics::new(80.0, 80.0, 10.0, 10.0).unwrap(),
                image_size: (32, 32),
                frames: (0..cum.len())
                    .map(|i| FrameRef {
                        id: i as u32,
                        image_path: format!("{i}.png").into(),
                        depth_path: None,
                    })
                    .collect(),
                abs_poses: Some(cum.iter().map(|&x| translation(x)).collect()),
            }],
        };
        let out = keyframe_filter(&index, sigma);
        let kept: Vec<usize> =
            out.index.scenes[0].frames.iter().map(|f| f.id as usize).collect();
        assert_eq!(kept, expected);
        assert_eq!(kept, vec![0, 2, 3, 5]);
    }

    #[test]
    fn keyframe_filter_is_idempotent_and_flags_poseless_scenes() {
        let spec = PlaneSceneSpec::desk(8);
        let scene = render_plane_scene(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_scene(dir.path(), "a", &scene).unwrap();
        let index = load_dataset(dir.path()).unwrap();
        let once = keyframe_filter(&index, 0.3);
        let twice = keyframe_filter(&once.index, 0.3);
        assert_eq!(
            once.index.scenes[0].frames.len(),
            twice.index.scenes[0].frames.len()
        );

        let mut no_poses = index.clone();
        no_poses.scenes[0].abs_poses = None;
        let out = keyframe_filter(&no_poses, 0.3);
        assert_eq!(out.skipped_scenes, vec!["a".to_string()]);
        assert_eq!(out.index.scenes[0].frames.len(), 8);
    }

    #[test]
    fn window_counts_and_coverage() {
        let spec = PlaneSceneSpec::desk(12);
        let scene = render_plane_scene(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_scene(dir.path(), "w", &scene).unwrap();
        let index = load_dataset(dir.path()).unwrap();
        let windows = make_windows(&index, 10, 1);
        assert_eq!(windows.len(), 3); // 12 - 10 + 1
        // Every keyframe except the last N-1 starts exactly one window.
        let starts: Vec<usize> = windows.iter().map(|w| w.start).collect();
        assert_eq!(starts, vec![0, 1, 2]);
        // Too-short scenes contribute nothing.
        assert!(make_windows(&index, 13, 1).is_empty());
    }

    #[test]
    fn reverse_is_an_involution_and_inverts_poses() {
        let spec = PlaneSceneSpec::desk(6);
        let scene = render_plane_scene(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_scene(dir.path(), "r", &scene).unwrap();
        let index = load_dataset(dir.path()).unwrap();
        let sample = load_window(&index, WindowRef { scene: 0, start: 0 }, 6, (96, 64)).unwrap();
        let rev = reverse_sample(&sample);
        assert_eq!(rev.direction, Direction::Backward);
        let back = reverse_sample(&rev);
        assert_eq!(back.frame_ids, sample.frame_ids);
        assert_eq!(back.frames, sample.frames);

        // Reversed relative poses are the inverses of the forward ones.
        let fw = sample.gt_rel_poses.as_ref().unwrap();
        let bw = rev.gt_rel_poses.as_ref().unwrap();
        let n = sample.frames.len();
        for k in 0..fw.len() {
            let expect = fw[n - 2 - k].matrix().try_inverse().unwrap();
            let got = bw[k].matrix();
            for i in 0..16 {
                assert!((expect.as_slice()[i] - got.as_slice()[i]).abs() < 1e-10);
            }
        }
        // Round trip back to (approximately) the originals.
        let fw2 = back.gt_rel_poses.as_ref().unwrap();
        for k in 0..fw.len() {
            for i in 0..3 {
                assert!((fw[k].rotation[i] - fw2[k].rotation[i]).abs() < 1e-12);
                assert!((fw[k].translation[i] - fw2[k].translation[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn preprocess_identity_and_kitti_resize() {
        // Same-size preprocess is exact.
        let img = ImageBuf::new(8, 10, (0..240).map(|i| i as f32 / 240.0).collect()).unwrap();
        let k = Intrinsics::new(100.0, 90.0, 4.5, 3.5).unwrap();
        let (out, k2) = preprocess(&img, &k, 10, 8).unwrap();
        assert_eq!(out, img);
        assert_eq!(k2, k);

        // 1242x375 -> 416x128 rescales fx by 416/1242.
        let big = ImageBuf::new(375, 1242, vec![0.25; 3 * 375 * 1242]).unwrap();
        let kk = Intrinsics::new(718.0, 718.0, 620.5, 187.0).unwrap();
        let (small, k3) = preprocess(&big, &kk, 416, 128).unwrap();
        assert_eq!((small.width, small.height), (416, 128));
        assert!((k3.fx - 718.0 * (416.0 / 1242.0)).abs() < 1e-9);
        assert!((k3.fy - 718.0 * (128.0 / 375.0)).abs() < 1e-9);
        // Constant image stays constant.
        assert!(small.data.iter().all(|&v| (v - 0.25).abs() < 1e-6));
    }

    /// Reprojecting a 3D point with the rescaled intrinsics lands where the
    /// resize maps the original pixel.
    #[test]
    fn rescaled_intrinsics_are_consistent_with_resize_mapping() {
        let k = Intrinsics::new(718.0, 700.0, 620.5, 187.0).unwrap();
        let (w0, h0) = (1242usize, 375usize);
        let (w1, h1) = (416usize, 128usize);
        let k2 = k.rescaled((w0, h0), (w1, h1));
        let (sx, sy) = (w1 as f64 / w0 as f64, h1 as f64 / h0 as f64);
        for &(x, y, z) in &[(1.0, 2.0, 10.0), (-3.0, 0.5, 25.0), (0.01, -0.02, 5.0)] {
            let (u0, v0) = k.project(x, y, z);
            let (u1, v1) = k2.project(x, y, z);
            let expect_u = (u0 + 0.5) * sx - 0.5;
            let expect_v = (v0 + 0.5) * sy - 0.5;
            assert!((u1 - expect_u).abs() < 0.5);
            assert!((v1 - expect_v).abs() < 0.5);
            assert!((u1 - expect_u).abs() < 1e-9); // exact, in fact
            assert!((v1 - expect_v).abs() < 1e-9);
        }
    }

    #[test]
    fn depth_png_quantization_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let depth = DepthBuf::new(4, 5, (0..20).map(|i| i as f64 * 3.7).collect()).unwrap();
        let path = dir.path().join("d.png");
        write_depth(&path, &depth).unwrap();
        let back = read_depth(&path).unwrap();
        for (a, b) in depth.values.iter().zip(&back.values) {
            assert!((a - b).abs() <= 0.5 / 256.0 + 1e-9, "{a} vs {b}");
        }
    }

    /// The synthetic fronto-parallel scene has constant depth and its
    /// images shift by exactly fx*dx/z pixels per frame.
    #[test]
    fn fronto_parallel_scene_depth_and_parallax() {
        let spec = PlaneSceneSpec::fronto_parallel(3);
        let scene = render_plane_scene(&spec).unwrap();
        for d in &scene.depths {
            assert!(d.values.iter().all(|&z| (z - spec.z0).abs() < 1e-9));
        }
        // Frame t at pixel (u,v) equals frame t+1 at pixel (u - fx*dx/z, v):
        // both look at the same plane point.
        let shift = (spec.intrinsics.fx * spec.step[0] / spec.z0).round() as usize; // 4 px
        assert_eq!(shift, 4);
        let (h, w) = (spec.height, spec.width);
        for y in (0..h).step_by(7) {
            for x in 0..w - shift {
                let a = scene.frames[0].get(0, y, x + shift);
                let b = scene.frames[1].get(0, y, x);
                assert!(
                    (a - b).abs() < 1e-5,
                    "and pixel ({x},{y}): {a} vs {b}"
                );
            }
        }
    }
}
