//! Reverse sweep: seed the loss with 1 and fold vector-Jacobian products
//! back through the tape in reverse insertion order (ids are topological by
//! construction, so each node is visited exactly once).
//!
//! Interior gradients are dropped once propagated; leaf gradients accumulate
//! across repeated `backward` calls until `zero_grad`.

use crate::ad::conv::{self, ConvDims, DeconvDims};
use crate::ad::sample;
use crate::ad::se3;
use crate::ad::tape::{Op, Tape, TensorId};
use crate::error::{Error, Result};
use crate::real::Real;

impl<T: Real> Tape<T> {
    /// Populate gradients of `loss` w.r.t. every reachable `requires_grad`
    /// leaf. `loss` must be scalar. Disconnected leaves simply keep no
    /// gradient (reported as zeros by `grad_vec`).
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.nodes[loss.0].out.numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.shape(loss)),
            ));
        }
        {
            let node = &mut self.nodes[loss.0];
            let n = node.out.numel();
            let buf = node.grad.get_or_insert_with(|| vec![T::zero(); n]);
            buf[0] += T::one();
        }
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if node.grad.is_none() {
                continue;
            }
            let is_leaf = matches!(node.op, Op::Leaf);
            if !node.requires_grad {
                if !is_leaf {
                    self.nodes[id].grad = None;
                }
                continue;
            }
            if is_leaf {
                continue;
            }
            let op = node.op.clone();
            let g = self.nodes[id].grad.take().unwrap();
            self.propagate(TensorId(id), &op, &g);
        }
        Ok(())
    }

    fn acc(&mut self, id: TensorId, contrib: Vec<T>) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        let node = &mut self.nodes[id.0];
        let n = node.out.numel();
        debug_assert_eq!(contrib.len(), n);
        let buf = node.grad.get_or_insert_with(|| vec![T::zero(); n]);
        for (b, c) in buf.iter_mut().zip(contrib) {
            *b += c;
        }
    }

    fn unary_vjp(&mut self, input: TensorId, g: &[T], f: impl Fn(usize, f64) -> f64) {
        let contrib = g
            .iter()
            .enumerate()
            .map(|(i, gv)| T::from_f64(f(i, gv.as_f64())))
            .collect();
        self.acc(input, contrib);
    }

    fn propagate(&mut self, out_id: TensorId, op: &Op, g: &[T]) {
        match *op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(a, g.to_vec());
                self.acc(b, g.to_vec());
            }
            Op::Sub(a, b) => {
                self.acc(a, g.to_vec());
                let neg: Vec<T> = g.iter().map(|&v| -v).collect();
                self.acc(b, neg);
            }
            Op::Mul(a, b) => {
                let av = self.values(a).to_vec();
                let bv = self.values(b).to_vec();
                self.unary_vjp(a, g, |i, gv| gv * bv[i].as_f64());
                self.unary_vjp(b, g, |i, gv| gv * av[i].as_f64());
            }
            Op::Div(a, b) => {
                let bv = self.values(b).to_vec();
                let yv = self.values(out_id).to_vec();
                self.unary_vjp(a, g, |i, gv| gv / bv[i].as_f64());
                self.unary_vjp(b, g, |i, gv| -gv * yv[i].as_f64() / bv[i].as_f64());
            }
            Op::Neg(a) => {
                let neg: Vec<T> = g.iter().map(|&v| -v).collect();
                self.acc(a, neg);
            }
            Op::Abs(a) => {
                let av = self.values(a).to_vec();
                self.unary_vjp(a, g, |i, gv| {
                    let x = av[i].as_f64();
                    if x > 0.0 {
                        gv
                    } else if x < 0.0 {
                        -gv
                    } else {
                        0.0
                    }
                });
            }
            Op::Exp(a) => {
                let yv = self.values(out_id).to_vec();
                self.unary_vjp(a, g, |i, gv| gv * yv[i].as_f64());
            }
            Op::Sqrt(a) => {
                let yv = self.values(out_id).to_vec();
                self.unary_vjp(a, g, |i, gv| gv / (2.0 * yv[i].as_f64()));
            }
            Op::Recip(a) => {
                let yv = self.values(out_id).to_vec();
                self.unary_vjp(a, g, |i, gv| {
                    let y = yv[i].as_f64();
                    -gv * y * y
                });
            }
            Op::Sigmoid(a) => {
                let yv = self.values(out_id).to_vec();
                self.unary_vjp(a, g, |i, gv| {
                    let y = yv[i].as_f64();
                    gv * y * (1.0 - y)
                });
            }
            Op::Tanh(a) => {
                let yv = self.values(out_id).to_vec();
                self.unary_vjp(a, g, |i, gv| {
                    let y = yv[i].as_f64();
                    gv * (1.0 - y * y)
                });
            }
            Op::Relu(a) => {
                let av = self.values(a).to_vec();
                self.unary_vjp(a, g, |i, gv| if av[i].as_f64() > 0.0 { gv } else { 0.0 });
            }
            Op::LeakyRelu(a, slope) => {
                let av = self.values(a).to_vec();
                self.unary_vjp(a, g, |i, gv| {
                    if av[i].as_f64() > 0.0 {
                        gv
                    } else {
                        gv * slope
                    }
                });
            }
            Op::ClampMin(a, min) => {
                let av = self.values(a).to_vec();
                self.unary_vjp(a, g, |i, gv| if av[i].as_f64() >= min { gv } else { 0.0 });
            }
            Op::Affine(a, mul, _) => {
                self.unary_vjp(a, g, |_, gv| gv * mul);
            }
            Op::AddScalarT(a, s) => {
                self.acc(a, g.to_vec());
                let total: f64 = g.iter().map(|v| v.as_f64()).sum();
                self.acc(s, vec![T::from_f64(total)]);
            }
            Op::MulScalarT(a, s) => {
                let sv = self.values(s)[0].as_f64();
                let av = self.values(a).to_vec();
                self.unary_vjp(a, g, |_, gv| gv * sv);
                let total: f64 =
                    g.iter().zip(&av).map(|(gv, xv)| gv.as_f64() * xv.as_f64()).sum();
                self.acc(s, vec![T::from_f64(total)]);
            }
            Op::Sum(a) => {
                let n = self.tensor(a).numel();
                let gv = g[0];
                self.acc(a, vec![gv; n]);
            }
            Op::Mean(a) => {
                let n = self.tensor(a).numel();
                let gv = T::from_f64(g[0].as_f64() / n as f64);
                self.acc(a, vec![gv; n]);
            }
            Op::ReduceChanMean(a) => {
                let (c, h, w) = self.tensor(a).chw().unwrap();
                let plane = h * w;
                let mut contrib = vec![T::zero(); c * plane];
                for ch in 0..c {
                    let gv = T::from_f64(g[ch].as_f64() / plane as f64);
                    for i in 0..plane {
                        contrib[ch * plane + i] = gv;
                    }
                }
                self.acc(a, contrib);
            }
            Op::AddChan(x, b) => {
                let (c, h, w) = self.tensor(x).chw().unwrap();
                let plane = h * w;
                self.acc(x, g.to_vec());
                let mut db = vec![T::zero(); c];
                for ch in 0..c {
                    let acc: f64 =
                        g[ch * plane..(ch + 1) * plane].iter().map(|v| v.as_f64()).sum();
                    db[ch] = T::from_f64(acc);
                }
                self.acc(b, db);
            }
            Op::MulChan(x, s) => {
                let (c, h, w) = self.tensor(x).chw().unwrap();
                let plane = h * w;
                let sv = self.values(s).to_vec();
                let xv = self.values(x).to_vec();
                let mut dx = vec![T::zero(); c * plane];
                let mut ds = vec![T::zero(); c];
                for ch in 0..c {
                    let ss = sv[ch].as_f64();
                    let mut acc = 0f64;
                    for i in 0..plane {
                        let gv = g[ch * plane + i].as_f64();
                        dx[ch * plane + i] = T::from_f64(gv * ss);
                        acc += gv * xv[ch * plane + i].as_f64();
                    }
                    ds[ch] = T::from_f64(acc);
                }
                self.acc(x, dx);
                self.acc(s, ds);
            }
            Op::MeanChan(a) => {
                let (c, h, w) = self.tensor(a).chw().unwrap();
                let plane = h * w;
                let mut contrib = vec![T::zero(); c * plane];
                for i in 0..plane {
                    let gv = T::from_f64(g[i].as_f64() / c as f64);
                    for ch in 0..c {
                        contrib[ch * plane + i] = gv;
                    }
                }
                self.acc(a, contrib);
            }
            Op::MulBcastChan(x, m) => {
                let (c, h, w) = self.tensor(x).chw().unwrap();
                let plane = h * w;
                let mv = self.values(m).to_vec();
                let xv = self.values(x).to_vec();
                let mut dx = vec![T::zero(); c * plane];
                let mut dm = vec![0f64; plane];
                for ch in 0..c {
                    for i in 0..plane {
                        let gv = g[ch * plane + i].as_f64();
                        dx[ch * plane + i] = T::from_f64(gv * mv[i].as_f64());
                        dm[i] += gv * xv[ch * plane + i].as_f64();
                    }
                }
                self.acc(x, dx);
                self.acc(m, dm.into_iter().map(T::from_f64).collect());
            }
            Op::GradX(a) => {
                let (c, h, w) = self.tensor(a).chw().unwrap();
                let mut contrib = vec![T::zero(); c * h * w];
                for ch in 0..c {
                    for y in 0..h {
                        let row = (ch * h + y) * w;
                        for x in 0..w - 1 {
                            let gv = g[row + x];
                            contrib[row + x + 1] += gv;
                            contrib[row + x] -= gv;
                        }
                    }
                }
                self.acc(a, contrib);
            }
            Op::GradY(a) => {
                let (c, h, w) = self.tensor(a).chw().unwrap();
                let mut contrib = vec![T::zero(); c * h * w];
                for ch in 0..c {
                    for y in 0..h - 1 {
                        for x in 0..w {
                            let i = (ch * h + y) * w + x;
                            let gv = g[i];
                            contrib[i + w] += gv;
                            contrib[i] -= gv;
                        }
                    }
                }
                self.acc(a, contrib);
            }
            Op::Concat0(ref parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.tensor(p).numel();
                    let chunk = g[offset..offset + n].to_vec();
                    self.acc(p, chunk);
                    offset += n;
                }
            }
            Op::Slice(a, offset) => {
                let n = self.tensor(a).numel();
                let mut contrib = vec![T::zero(); n];
                contrib[offset..offset + g.len()].copy_from_slice(g);
                self.acc(a, contrib);
            }
            Op::Reshape(a) => {
                self.acc(a, g.to_vec());
            }
            Op::Conv2d { input, weight, stride } => {
                let (ci, h, w) = self.tensor(input).chw().unwrap();
                let wsh = self.shape(weight);
                let (co, kh, kw) = (wsh[0], wsh[2], wsh[3]);
                let dims = ConvDims::new(ci, h, w, co, kh, kw, stride);
                let (dx, dw) =
                    conv::conv2d_backward(self.values(input), self.values(weight), g, &dims);
                self.acc(input, dx);
                self.acc(weight, dw);
            }
            Op::Deconv2d { input, weight } => {
                let (ci, h, w) = self.tensor(input).chw().unwrap();
                let wsh = self.shape(weight);
                let (co, kh, kw) = (wsh[1], wsh[2], wsh[3]);
                let osh = self.shape(out_id);
                let (oh, ow) = (osh[1], osh[2]);
                let dims = DeconvDims::new(ci, h, w, co, kh, kw, 2, oh, ow).unwrap();
                let (dx, dw) =
                    conv::deconv2d_backward(self.values(input), self.values(weight), g, &dims);
                self.acc(input, dx);
                self.acc(weight, dw);
            }
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                let n = self.shape(b)[1];
                let (da, db) = conv::matmul_backward(self.values(a), self.values(b), g, m, k, n);
                self.acc(a, da);
                self.acc(b, db);
            }
            Op::Se3Exp(v) => {
                let dv = se3::se3_exp_backward(self.values(v), g);
                self.acc(v, dv);
            }
            Op::GridSample { grid, coords } => {
                let (c, h, w) = self.tensor(grid).chw().unwrap();
                let csh = self.shape(coords);
                let (oh, ow) = (csh[1], csh[2]);
                let (dg, dc) = sample::grid_sample_backward(
                    self.values(grid),
                    self.values(coords),
                    g,
                    c,
                    h,
                    w,
                    oh,
                    ow,
                );
                self.acc(grid, dg);
                self.acc(coords, dc);
            }
        }
    }
}
