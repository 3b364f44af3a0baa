//! Minimal reverse-mode differentiation engine over dense real arrays.
//!
//! The engine is a Wengert tape: [`Tape`] records every primitive
//! application in execution order, [`Tape::backward`] replays the record in
//! reverse accumulating gradients, and [`gradient_check`] verifies any
//! scalar-valued graph against central finite differences.
//!
//! Forward and backward of a single tape are one logical thread; tensors are
//! immutable once recorded, and distinct tapes may run concurrently.

mod backward;
mod check;
mod conv;
mod sample;
mod se3;
mod tape;
mod tensor;

pub use check::{gradient_check, gradient_check_with_oracle, GradCheck, GradCheckOpts};
pub use tape::{BnBatchStats, Tape, TensorId};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::real::Real;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t64(shape: Vec<usize>, v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    /// Independent nested-loop convolution used as the oracle for conv2d.
    /// Same contract: zero padding "same", out = ceil(in/stride), shortfall
    /// split evenly with the extra pixel at the end.
    fn conv_oracle(
        x: &[f64],
        (ci, h, w): (usize, usize, usize),
        wt: &[f64],
        (co, kh, kw): (usize, usize, usize),
        stride: usize,
    ) -> Vec<f64> {
        let oh = h.div_ceil(stride);
        let ow = w.div_ceil(stride);
        let py = (((oh - 1) * stride + kh).saturating_sub(h)) / 2;
        let px = (((ow - 1) * stride + kw).saturating_sub(w)) / 2;
        let mut out = vec![0.0; co * oh * ow];
        for o in 0..co {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for c in 0..ci {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - py as isize;
                                let ix = (ox * stride + kx) as isize - px as isize;
                                if iy < 0 || iy >= h as isize || ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += x[(c * h + iy as usize) * w + ix as usize]
                                    * wt[((o * ci + c) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[(o * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv2d_identity_kernel_passes_input_through() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t64(vec![1, 3, 4], &[1., 2., 3., 4., 5., 6., 7., 8., 9., 10., 11., 12.]), false);
        let k = tape.leaf(t64(vec![1, 1, 1, 1], &[1.0]), false);
        let y = tape.conv2d(x, k, 1).unwrap();
        assert_eq!(tape.values(y), tape.values(x));
    }

    #[test]
    fn activation_fixed_points() {
        let mut tape = Tape::<f64>::new();
        let z = tape.leaf(t64(vec![1], &[0.0]), false);
        let neg = tape.leaf(t64(vec![1], &[-1.0]), false);
        let s = tape.sigmoid(z).unwrap();
        let th = tape.tanh(z).unwrap();
        let lr = tape.leaky_relu(neg, 0.2).unwrap();
        assert_eq!(tape.scalar_value(s), 0.5);
        assert_eq!(tape.scalar_value(th), 0.0);
        assert!((tape.scalar_value(lr) + 0.2).abs() < 1e-15);
    }

    #[test]
    fn conv2d_stride2_matches_reference_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let expected = conv_oracle(&x, (1, 4, 4), &k, (1, 3, 3), 2);

        let mut tape = Tape::<f64>::new();
        let xi = tape.leaf(t64(vec![1, 4, 4], &x), false);
        let ki = tape.leaf(t64(vec![1, 1, 3, 3], &k), false);
        let y = tape.conv2d(xi, ki, 2).unwrap();
        assert_eq!(tape.shape(y), &[1, 2, 2]);
        for (a, b) in tape.values(y).iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t64(vec![4], &[1., 2., 3., 4.]), true);
        let loss = tape.sum(x).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad_vec(x), vec![1.0; 4]);
    }

    #[test]
    fn backward_of_quadratic() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t64(vec![3], &[1., 2., 3.]), true);
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad_vec(x), vec![2., 4., 6.]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t64(vec![3], &[1., 2., 3.]), true);
        assert!(matches!(tape.backward(x), Err(Error::Shape { .. })));
    }

    #[test]
    fn disconnected_leaf_reports_zero_grad() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t64(vec![2], &[1., 2.]), true);
        let unused = tape.leaf(t64(vec![2], &[5., 6.]), true);
        let loss = tape.sum(x).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad_vec(unused), vec![0.0; 2]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t64(vec![2], &[3., 4.]), true);
        let loss = tape.sum(x).unwrap();
        tape.backward(loss).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad_vec(x), vec![2.0; 2]);
    }

    /// Random 5-op graph against finite differences, both precisions.
    #[test]
    fn random_small_graph_matches_finite_differences() {
        fn build<T: Real>(tape: &mut Tape<T>, ids: &[TensorId]) -> crate::Result<TensorId> {
            let a = tape.sigmoid(ids[0])?;
            let b = tape.mul(a, ids[1])?;
            let c = tape.tanh(b)?;
            let d = tape.add(c, ids[0])?;
            tape.sum(d)
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let y: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let r64 = gradient_check(
                build::<f64>,
                &[t64(vec![6], &x), t64(vec![6], &y)],
                &GradCheckOpts::full(1e-6, 1e-5),
            )
            .unwrap();
            assert!(r64.pass, "f64 max rel err {}", r64.max_rel_err);

            // In-precision f32 differencing carries ~1e-3 of quotient noise for
            // small gradient elements; 1e-2 is its honest bound at step 1e-3.
            let xs32 = [
                Tensor::<f32>::from_f64(vec![6], &x).unwrap(),
                Tensor::<f32>::from_f64(vec![6], &y).unwrap(),
            ];
            let r32 =
                gradient_check(build::<f32>, &xs32, &GradCheckOpts::full(1e-3, 1e-2)).unwrap();
            assert!(r32.pass, "f32 max rel err {}", r32.max_rel_err);

            // The f32 graph against the f64 difference oracle holds 1e-3.
            let inputs = [(vec![6], x.clone()), (vec![6], y.clone())];
            let rx = gradient_check_with_oracle::<f32, f64, _, _>(
                build::<f32>,
                build::<f64>,
                &inputs,
                &GradCheckOpts::full(1e-6, 1e-3),
            )
            .unwrap();
            assert!(rx.pass, "f32-vs-f64 max rel err {}", rx.max_rel_err);
        }
    }

    #[test]
    fn gradient_check_of_sum_is_exact() {
        let r = gradient_check(
            |tape: &mut Tape<f64>, ids| tape.sum(ids[0]),
            &[t64(vec![5], &[0.3, -0.7, 1.1, 0.0, 2.5])],
            &GradCheckOpts::full(1e-6, 1e-9),
        )
        .unwrap();
        assert!(r.pass);
        assert!(r.max_rel_err < 1e-9);
    }

    #[test]
    fn backward_is_linear_in_the_loss() {
        let x0 = t64(vec![4], &[0.4, -0.2, 0.9, 1.3]);
        let (a, b) = (0.7, -1.9);

        let build = |tape: &mut Tape<f64>, x: TensorId| {
            let s = tape.sigmoid(x).unwrap();
            let l1 = tape.sum(s).unwrap();
            let m = tape.mul(x, x).unwrap();
            let l2 = tape.mean(m).unwrap();
            (l1, l2)
        };

        // grad(a*l1 + b*l2)
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(x0.clone(), true);
        let (l1, l2) = build(&mut tape, x);
        let al1 = tape.affine(l1, a, 0.0).unwrap();
        let bl2 = tape.affine(l2, b, 0.0).unwrap();
        let total = tape.add(al1, bl2).unwrap();
        tape.backward(total).unwrap();
        let combined = tape.grad_vec(x);

        // a*grad(l1) + b*grad(l2), separately
        let mut tape1 = Tape::<f64>::new();
        let x1 = tape1.leaf(x0.clone(), true);
        let (l1, _) = build(&mut tape1, x1);
        tape1.backward(l1).unwrap();
        let g1 = tape1.grad_vec(x1);
        let mut tape2 = Tape::<f64>::new();
        let x2 = tape2.leaf(x0, true);
        let (_, l2) = build(&mut tape2, x2);
        tape2.backward(l2).unwrap();
        let g2 = tape2.grad_vec(x2);

        for i in 0..4 {
            let expect = a * g1[i] + b * g2[i];
            let rel = (combined[i] - expect).abs() / expect.abs().max(1e-12);
            assert!(rel < 1e-6, "element {i}: {} vs {}", combined[i], expect);
        }
    }

    #[test]
    fn forward_values_are_deterministic() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let x: Vec<f64> = (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut tape = Tape::<f64>::new();
            let xi = tape.leaf(t64(vec![2, 3, 4], &x), false);
            let wi = tape.leaf(t64(vec![1, 2, 3, 3], &w), false);
            let y = tape.conv2d(xi, wi, 2).unwrap();
            let s = tape.sigmoid(y).unwrap();
            let m = tape.mean(s).unwrap();
            tape.scalar_value(m).to_bits()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_output_is_an_error() {
        let mut tape = Tape::<f64>::new();
        let zero = tape.leaf(t64(vec![1], &[0.0]), false);
        let one = tape.leaf(t64(vec![1], &[1.0]), false);
        assert!(matches!(tape.div(one, zero), Err(Error::NonFinite(_))));
    }

    #[test]
    fn concat_and_slice_round_trip_gradients() {
        let r = gradient_check(
            |tape: &mut Tape<f64>, ids| {
                let cat = tape.concat0(&[ids[0], ids[1]])?;
                let sl = tape.slice(cat, 1, vec![3])?;
                let sq = tape.mul(sl, sl)?;
                tape.sum(sq)
            },
            &[t64(vec![2], &[1.5, -0.5]), t64(vec![2], &[2.0, 0.25])],
            &GradCheckOpts::full(1e-6, 1e-7),
        )
        .unwrap();
        assert!(r.pass, "max rel err {}", r.max_rel_err);
    }

    #[test]
    fn se3_exp_quarter_turn_about_z() {
        let mut tape = Tape::<f64>::new();
        let v = tape.leaf(
            t64(vec![6], &[0.0, 0.0, std::f64::consts::FRAC_PI_2, 0.0, 0.0, 0.0]),
            false,
        );
        let m = tape.se3_exp(v).unwrap();
        let vals = tape.values(m);
        // R maps (1,0,0) -> (0,1,0)
        let mapped = [vals[0], vals[4], vals[8]];
        assert!(mapped[0].abs() < 1e-12);
        assert!((mapped[1] - 1.0).abs() < 1e-12);
        assert!(mapped[2].abs() < 1e-12);
        assert_eq!(vals[15], 1.0);
    }
}
