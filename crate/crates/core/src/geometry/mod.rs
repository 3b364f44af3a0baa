//! Camera model, SE(3) algebra and the differentiable geometric module.

mod intrinsics;
mod pose;
mod warp;

pub use intrinsics::Intrinsics;
pub use pose::{compose, composite, PoseSE3};
pub use warp::{
    bilinear_sample, in_bounds, pixel_grid, pose_leaf, pose_on_tape, pose_values,
    projected_coords, pseudo_inverse_flow, warp, PseudoInverseFlow, TapePose, WarpOutput,
    BOUNDS_EPS,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::{gradient_check, GradCheckOpts, Tape, Tensor, TensorId};

    fn k_test() -> Intrinsics {
        Intrinsics::new(100.0, 100.0, 11.5, 7.5).unwrap()
    }

    /// Smooth plane texture; world coordinates in meters.
    fn plane_tex(x: f64, y: f64) -> f64 {
        0.5 + 0.2 * (2.1 * x).sin() + 0.2 * (1.7 * y).cos() + 0.08 * (1.3 * (x + y)).sin()
    }

    /// Image of a fronto-parallel plane at depth `z0` seen from a camera at
    /// world x-offset `cam_x`.
    fn plane_image(k: &Intrinsics, h: usize, w: usize, z0: f64, cam_x: f64) -> Tensor<f64> {
        let mut vals = Vec::with_capacity(h * w);
        for v in 0..h {
            for u in 0..w {
                let x = (u as f64 - k.cx) / k.fx * z0 + cam_x;
                let y = (v as f64 - k.cy) / k.fy * z0;
                vals.push(plane_tex(x, y));
            }
        }
        Tensor::from_f64(vec![1, h, w], &vals).unwrap()
    }

    #[test]
    fn identity_pose_warp_reproduces_source() {
        let k = k_test();
        let (h, w) = (16, 24);
        let mut tape = Tape::<f64>::new();
        let img = tape.constant(plane_image(&k, h, w, 10.0, 0.0));
        let depth = tape.constant(Tensor::full(vec![1, h, w], 10.0));
        let pose = pose_leaf(&mut tape, &PoseSE3::identity()).unwrap();
        let out = warp(&mut tape, img, depth, pose.matrix, &k).unwrap();

        assert_eq!(out.valid_count, h * w);
        assert!(tape.values(out.mask).iter().all(|&m| m == 1.0));
        for i in 0..2 * h * w {
            assert!(tape.values(out.flow)[i].abs() < 1e-9);
        }
        for i in 0..h * w {
            let diff = (tape.values(out.warped)[i] - tape.values(img)[i]).abs();
            assert!(diff < 1e-9, "pixel {i} differs by {diff}");
        }
    }

    /// Fronto-parallel plane at Z, pure x-translation: closed-form parallax
    /// flow `(fx * tx / Z, 0)` everywhere.
    #[test]
    fn plane_flow_matches_pinhole_parallax_formula() {
        let k = k_test();
        let (h, w) = (16, 24);
        let (z0, tx) = (10.0, 0.5);
        let mut tape = Tape::<f64>::new();
        let depth = tape.constant(Tensor::full(vec![1, h, w], z0));
        let pose = pose_leaf(&mut tape, &PoseSE3::new([0.0; 3], [tx, 0.0, 0.0])).unwrap();
        let (coords, _, _) = projected_coords(&mut tape, depth, pose.matrix, &k).unwrap();
        let base = pixel_grid(&mut tape, h, w).unwrap();
        let flow = tape.sub(coords, base).unwrap();

        let expected = k.fx * tx / z0; // 100 * 0.5 / 10 = 5 px
        assert!((expected - 5.0).abs() < 1e-12);
        let plane = h * w;
        for i in 0..plane {
            assert!((tape.values(flow)[i] - expected).abs() < 1e-3);
            assert!(tape.values(flow)[plane + i].abs() < 1e-9);
        }
    }

    #[test]
    fn mask_zeroes_pixels_warped_out_of_frame() {
        let k = k_test();
        let (h, w) = (16, 24);
        let z0 = 10.0;
        // Flow of +5 px pushes the 5 right-most columns out of frame.
        let mut tape = Tape::<f64>::new();
        let depth = tape.constant(Tensor::full(vec![1, h, w], z0));
        let pose = pose_leaf(&mut tape, &PoseSE3::new([0.0; 3], [0.5, 0.0, 0.0])).unwrap();
        let (coords, mask, valid) = projected_coords(&mut tape, depth, pose.matrix, &k).unwrap();

        let plane = h * w;
        let cv = tape.values(coords);
        let mv = tape.values(mask);
        for i in 0..plane {
            let (u, v) = (cv[i], cv[plane + i]);
            let inside = in_bounds(u, w) && in_bounds(v, h);
            assert_eq!(mv[i] == 1.0, inside, "mask mismatch at {i}");
            let col = i % w;
            assert_eq!(mv[i] == 1.0, col < w - 5, "column {col}");
        }
        assert_eq!(valid, h * (w - 5));
    }

    /// Warping with exact depth and pose reproduces the target image up to
    /// bilinear interpolation error (well under 2% of the dynamic range).
    #[test]
    fn photometric_self_consistency_on_rigid_plane() {
        let k = k_test();
        let (h, w) = (16, 24);
        let (z0, dx) = (10.0, 0.35);
        // target = frame t at cam_x = dx, source = frame i at cam_x = 0.
        let mut tape = Tape::<f64>::new();
        let source = tape.constant(plane_image(&k, h, w, z0, 0.0));
        let target = plane_image(&k, h, w, z0, dx);
        let depth = tape.constant(Tensor::full(vec![1, h, w], z0));
        let pose = pose_leaf(&mut tape, &PoseSE3::new([0.0; 3], [dx, 0.0, 0.0])).unwrap();
        let out = warp(&mut tape, source, depth, pose.matrix, &k).unwrap();

        let mv = tape.values(out.mask);
        let wv = tape.values(out.warped);
        let mut err = 0.0;
        let mut n = 0usize;
        for i in 0..h * w {
            if mv[i] == 1.0 {
                err += (wv[i] - target.values()[i]).abs();
                n += 1;
            }
        }
        let mean = err / n as f64;
        // Texture spans ~0.96 in value; 2% of that is ~0.019.
        assert!(mean < 0.019, "mean photometric error {mean}");
    }

    /// Pseudo-inverse flow on a rigid plane agrees with the direct flow.
    #[test]
    fn pseudo_inverse_flow_is_consistent_on_plane_scene() {
        let k = k_test();
        let (h, w) = (16, 24);
        let (z0, dx) = (10.0, 0.3);
        let mut tape = Tape::<f64>::new();
        let depth_a = tape.constant(Tensor::full(vec![1, h, w], z0));
        let depth_b = tape.constant(Tensor::full(vec![1, h, w], z0));
        // A at x=0, B at x=dx.
        let p_ab = pose_leaf(&mut tape, &PoseSE3::new([0.0; 3], [-dx, 0.0, 0.0])).unwrap();
        let p_ba = pose_leaf(&mut tape, &PoseSE3::new([0.0; 3], [dx, 0.0, 0.0])).unwrap();

        let (coords_ba, _, _) = projected_coords(&mut tape, depth_b, p_ba.matrix, &k).unwrap();
        let base = pixel_grid(&mut tape, h, w).unwrap();
        let flow_ba = tape.sub(coords_ba, base).unwrap();

        let out = pseudo_inverse_flow(&mut tape, flow_ba, depth_a, p_ab.matrix, &k).unwrap();
        let mv = tape.values(out.mask);
        let fi = tape.values(out.interpolated);
        let fd = tape.values(out.direct);
        let plane = h * w;
        let mut max_diff = 0.0f64;
        for i in 0..plane {
            if mv[i] == 1.0 {
                max_diff = max_diff.max((fi[i] - fd[i]).abs());
                max_diff = max_diff.max((fi[plane + i] - fd[plane + i]).abs());
            }
        }
        assert!(max_diff <= 0.05, "max |interp - direct| = {max_diff}");
    }

    #[test]
    fn pseudo_inverse_static_scene_is_zero() {
        let k = k_test();
        let (h, w) = (8, 12);
        let mut tape = Tape::<f64>::new();
        let depth = tape.constant(Tensor::full(vec![1, h, w], 5.0));
        let zero_flow = tape.constant(Tensor::zeros(vec![2, h, w]));
        let ident = pose_leaf(&mut tape, &PoseSE3::identity()).unwrap();
        let out = pseudo_inverse_flow(&mut tape, zero_flow, depth, ident.matrix, &k).unwrap();
        assert!(tape.values(out.interpolated).iter().all(|v| v.abs() < 1e-9));
        assert!(tape.values(out.direct).iter().all(|v| v.abs() < 1e-9));
        assert_eq!(out.valid_count, h * w);
    }

    #[test]
    fn bilinear_sample_identity_and_midpoint() {
        let mut tape = Tape::<f64>::new();
        let grid = tape.constant(
            Tensor::from_f64(vec![1, 2, 2], &[2.0, 4.0, 6.0, 8.0]).unwrap(),
        );
        // Integer lattice reproduces the input.
        let ident = tape.constant(
            Tensor::from_f64(vec![2, 2, 2], &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0]).unwrap(),
        );
        let out = bilinear_sample(&mut tape, grid, ident).unwrap();
        assert_eq!(tape.values(out), tape.values(grid));

        // Coordinate (0.5, 0) sits between 2 and 4.
        let mid = tape.constant(Tensor::from_f64(vec![2, 1, 1], &[0.5, 0.0]).unwrap());
        let out = bilinear_sample(&mut tape, grid, mid).unwrap();
        assert_eq!(tape.values(out)[0], 3.0);
    }

    #[test]
    fn bilinear_sample_gradient_check() {
        let grid = Tensor::<f64>::from_f64(
            vec![2, 3, 4],
            &(0..24).map(|i| (i as f64 * 0.7).sin()).collect::<Vec<_>>(),
        )
        .unwrap();
        // Keep sample points away from the integer lattice where bilinear
        // interpolation is non-smooth.
        let coords = Tensor::<f64>::from_f64(
            vec![2, 2, 2],
            &[0.4, 1.6, 2.3, 0.7, 0.45, 1.25, 0.6, 1.75],
        )
        .unwrap();
        let r = gradient_check(
            |tape: &mut Tape<f64>, ids: &[TensorId]| {
                let s = tape.grid_sample(ids[0], ids[1])?;
                let sq = tape.mul(s, s)?;
                tape.sum(sq)
            },
            &[grid, coords],
            &GradCheckOpts::full(1e-6, 1e-3),
        )
        .unwrap();
        assert!(r.pass, "max rel err {}", r.max_rel_err);
    }

    /// Warping through a composite pose equals warping with the matrix
    /// product of the individual relative poses.
    #[test]
    fn warp_compose_consistency() {
        let k = k_test();
        let (h, w) = (12, 16);
        let p_t_tm1 = PoseSE3::new([0.004, -0.002, 0.003], [0.2, 0.01, -0.05]);
        let p_tm1_tm2 = PoseSE3::new([-0.002, 0.005, 0.001], [0.15, -0.02, 0.04]);

        let mut tape = Tape::<f64>::new();
        let depth = tape.constant(Tensor::full(vec![1, h, w], 8.0));

        // Route 1: composite pose values through the value-level algebra.
        let comp = composite(&[p_t_tm1, p_tm1_tm2]);
        let pose1 = pose_leaf(&mut tape, &comp).unwrap();
        let (coords1, _, _) = projected_coords(&mut tape, depth, pose1.matrix, &k).unwrap();

        // Route 2: on-tape matrix product M(p_tm1_tm2) * M(p_t_tm1).
        let a = pose_leaf(&mut tape, &p_t_tm1).unwrap();
        let b = pose_leaf(&mut tape, &p_tm1_tm2).unwrap();
        let prod = tape.matmul(b.matrix, a.matrix).unwrap();
        let (coords2, _, _) = projected_coords(&mut tape, depth, prod, &k).unwrap();

        let c1 = tape.values(coords1);
        let c2 = tape.values(coords2);
        for i in 0..2 * h * w {
            assert!((c1[i] - c2[i]).abs() < 1e-6, "coord {i}: {} vs {}", c1[i], c2[i]);
        }
    }

    #[test]
    fn warp_rejects_nonpositive_depth() {
        let k = k_test();
        let mut tape = Tape::<f64>::new();
        let img = tape.constant(Tensor::full(vec![1, 4, 4], 0.5));
        let mut dvals = vec![1.0; 16];
        dvals[5] = 0.0;
        let depth = tape.constant(Tensor::from_f64(vec![1, 4, 4], &dvals).unwrap());
        let pose = pose_leaf(&mut tape, &PoseSE3::identity()).unwrap();
        assert!(warp(&mut tape, img, depth, pose.matrix, &k).is_err());
    }

    /// Gradients of a warp-based scalar flow to depth and pose.
    #[test]
    fn warp_gradient_check_wrt_depth_and_pose() {
        let k = Intrinsics::new(20.0, 20.0, 5.5, 3.5).unwrap();
        let (h, w) = (8, 12);
        let source: Vec<f64> = (0..h * w).map(|i| 0.5 + 0.3 * (i as f64 * 0.37).sin()).collect();
        let depth: Vec<f64> = (0..h * w).map(|i| 6.0 + 0.8 * (i as f64 * 0.23).cos()).collect();
        let pose6 = [0.01, -0.02, 0.015, 0.2, -0.1, 0.05];

        let source_t = Tensor::<f64>::from_f64(vec![1, h, w], &source).unwrap();
        let r = gradient_check(
            move |tape: &mut Tape<f64>, ids: &[TensorId]| {
                let img = tape.constant(source_t.clone());
                let pose = pose_on_tape(tape, ids[1])?;
                let out = warp(tape, img, ids[0], pose.matrix, &k)?;
                let masked = tape.mul_bcast_chan(out.warped, out.mask)?;
                let sq = tape.mul(masked, masked)?;
                tape.sum(sq)
            },
            &[
                Tensor::from_f64(vec![1, h, w], &depth).unwrap(),
                Tensor::from_f64(vec![6], &pose6).unwrap(),
            ],
            &GradCheckOpts::full(1e-6, 1e-4),
        )
        .unwrap();
        assert!(r.pass, "max rel err {}", r.max_rel_err);
    }
}
