//! Reverse-mode tape: ordered record of primitive applications.
//!
//! Nodes are appended in execution order, so ids are already a topological
//! order and the backward sweep is a single reverse pass. Every primitive
//! checks its output for NaN/Inf; a non-finite value is an error, never a
//! silent state.

use crate::ad::conv::{self, ConvDims, DeconvDims};
use crate::ad::sample;
use crate::ad::se3;
use crate::ad::tensor::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;

/// Handle to a tensor recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

// Variant fields mirror the forward parameters even where backward does not
// need them (the add constant of Affine), keeping Debug output complete.
#[allow(dead_code)]
#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Div(TensorId, TensorId),
    Neg(TensorId),
    Abs(TensorId),
    Exp(TensorId),
    Sqrt(TensorId),
    Recip(TensorId),
    Sigmoid(TensorId),
    Tanh(TensorId),
    Relu(TensorId),
    LeakyRelu(TensorId, f64),
    ClampMin(TensorId, f64),
    Affine(TensorId, f64, f64),
    AddScalarT(TensorId, TensorId),
    MulScalarT(TensorId, TensorId),
    Sum(TensorId),
    Mean(TensorId),
    ReduceChanMean(TensorId),
    AddChan(TensorId, TensorId),
    MulChan(TensorId, TensorId),
    MeanChan(TensorId),
    MulBcastChan(TensorId, TensorId),
    GradX(TensorId),
    GradY(TensorId),
    Concat0(Vec<TensorId>),
    Slice(TensorId, usize),
    Reshape(TensorId),
    Conv2d { input: TensorId, weight: TensorId, stride: usize },
    Deconv2d { input: TensorId, weight: TensorId },
    MatMul(TensorId, TensorId),
    Se3Exp(TensorId),
    GridSample { grid: TensorId, coords: TensorId },
}

impl Op {
    pub(crate) fn inputs(&self) -> Vec<TensorId> {
        use Op::*;
        match self {
            Leaf => vec![],
            Neg(a) | Abs(a) | Exp(a) | Sqrt(a) | Recip(a) | Sigmoid(a) | Tanh(a) | Relu(a)
            | LeakyRelu(a, _) | ClampMin(a, _) | Affine(a, _, _) | Sum(a) | Mean(a)
            | ReduceChanMean(a) | MeanChan(a) | GradX(a) | GradY(a) | Slice(a, _)
            | Reshape(a) | Se3Exp(a) => vec![*a],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | AddScalarT(a, b)
            | MulScalarT(a, b) | AddChan(a, b) | MulChan(a, b) | MulBcastChan(a, b)
            | MatMul(a, b) => vec![*a, *b],
            Concat0(v) => v.clone(),
            Conv2d { input, weight, .. } => vec![*input, *weight],
            Deconv2d { input, weight } => vec![*input, *weight],
            GridSample { grid, coords } => vec![*grid, *coords],
        }
    }
}

pub(crate) struct Node<T: Real> {
    pub op: Op,
    pub out: Tensor<T>,
    pub grad: Option<Vec<T>>,
    pub requires_grad: bool,
}

/// Recording tape. One tape is one logical forward graph; distinct tapes are
/// independent and may run concurrently.
pub struct Tape<T: Real> {
    pub(crate) nodes: Vec<Node<T>>,
    check_finite: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), check_finite: true }
    }

    /// Disable the per-primitive NaN/Inf scan (profiling escape hatch).
    pub fn set_check_finite(&mut self, check: bool) {
        self.check_finite = check;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn tensor(&self, id: TensorId) -> &Tensor<T> {
        &self.nodes[id.0].out
    }

    pub fn values(&self, id: TensorId) -> &[T] {
        self.nodes[id.0].out.values()
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        self.nodes[id.0].out.shape()
    }

    /// Scalar value of a 1-element tensor, in f64.
    pub fn scalar_value(&self, id: TensorId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].out.numel(), 1);
        self.nodes[id.0].out.values()[0].as_f64()
    }

    pub fn grad(&self, id: TensorId) -> Option<&[T]> {
        self.nodes[id.0].grad.as_deref()
    }

    /// Gradient of a leaf, zeros when the leaf is disconnected from the loss.
    pub fn grad_vec(&self, id: TensorId) -> Vec<T> {
        match &self.nodes[id.0].grad {
            Some(g) => g.clone(),
            None => vec![T::zero(); self.nodes[id.0].out.numel()],
        }
    }

    pub fn requires_grad(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Clear accumulated gradients (leaves included).
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    // ───────────────────────── leaves ─────────────────────────

    pub fn leaf(&mut self, t: Tensor<T>, requires_grad: bool) -> TensorId {
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node { op: Op::Leaf, out: t, grad: None, requires_grad });
        id
    }

    pub fn constant(&mut self, t: Tensor<T>) -> TensorId {
        self.leaf(t, false)
    }

    pub fn scalar(&mut self, v: f64) -> TensorId {
        self.constant(Tensor::scalar(T::from_f64(v)))
    }

    fn push(&mut self, op: Op, out: Tensor<T>, op_name: &'static str) -> Result<TensorId> {
        if self.check_finite && !out.all_finite() {
            return Err(Error::NonFinite(op_name));
        }
        let requires_grad = op.inputs().iter().any(|i| self.nodes[i.0].requires_grad);
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node { op, out, grad: None, requires_grad });
        Ok(id)
    }

    fn same_shape(&self, a: TensorId, b: TensorId, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    fn unary(
        &mut self,
        a: TensorId,
        op: Op,
        op_name: &'static str,
        f: impl Fn(f64) -> f64,
    ) -> Result<TensorId> {
        let t = &self.nodes[a.0].out;
        let values = t.values().iter().map(|&v| T::from_f64(f(v.as_f64()))).collect();
        let out = Tensor::new(t.shape().to_vec(), values)?;
        self.push(op, out, op_name)
    }

    fn binary(
        &mut self,
        a: TensorId,
        b: TensorId,
        op: Op,
        op_name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<TensorId> {
        self.same_shape(a, b, op_name)?;
        let values = self.nodes[a.0]
            .out
            .values()
            .iter()
            .zip(self.nodes[b.0].out.values())
            .map(|(&x, &y)| T::from_f64(f(x.as_f64(), y.as_f64())))
            .collect();
        let out = Tensor::new(self.shape(a).to_vec(), values)?;
        self.push(op, out, op_name)
    }

    // ───────────────────── elementwise ─────────────────────

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    pub fn div(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, Op::Div(a, b), "div", |x, y| x / y)
    }

    pub fn neg(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary(a, Op::Neg(a), "neg", |x| -x)
    }

    pub fn abs(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary(a, Op::Abs(a), "abs", f64::abs)
    }

    pub fn exp(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary(a, Op::Exp(a), "exp", f64::exp)
    }

    pub fn sqrt(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary(a, Op::Sqrt(a), "sqrt", f64::sqrt)
    }

    pub fn recip(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary(a, Op::Recip(a), "recip", f64::recip)
    }

    pub fn sigmoid(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary(a, Op::Sigmoid(a), "sigmoid", |x| 1.0 / (1.0 + (-x).exp()))
    }

    pub fn tanh(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary(a, Op::Tanh(a), "tanh", f64::tanh)
    }

    pub fn relu(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary(a, Op::Relu(a), "relu", |x| x.max(0.0))
    }

    pub fn leaky_relu(&mut self, a: TensorId, slope: f64) -> Result<TensorId> {
        self.unary(a, Op::LeakyRelu(a, slope), "leaky_relu", |x| {
            if x > 0.0 {
                x
            } else {
                slope * x
            }
        })
    }

    pub fn clamp_min(&mut self, a: TensorId, min: f64) -> Result<TensorId> {
        self.unary(a, Op::ClampMin(a, min), "clamp_min", |x| x.max(min))
    }

    /// `y = mul * x + add` with plain f64 constants.
    pub fn affine(&mut self, a: TensorId, mul: f64, add: f64) -> Result<TensorId> {
        self.unary(a, Op::Affine(a, mul, add), "affine", |x| mul * x + add)
    }

    /// Broadcast add of a 1-element tensor.
    pub fn add_scalar_t(&mut self, a: TensorId, s: TensorId) -> Result<TensorId> {
        if self.nodes[s.0].out.numel() != 1 {
            return Err(Error::shape("add_scalar_t", "rhs must have one element"));
        }
        let sv = self.nodes[s.0].out.values()[0].as_f64();
        self.unary(a, Op::AddScalarT(a, s), "add_scalar_t", |x| x + sv)
    }

    /// Broadcast multiply by a 1-element tensor.
    pub fn mul_scalar_t(&mut self, a: TensorId, s: TensorId) -> Result<TensorId> {
        if self.nodes[s.0].out.numel() != 1 {
            return Err(Error::shape("mul_scalar_t", "rhs must have one element"));
        }
        let sv = self.nodes[s.0].out.values()[0].as_f64();
        self.unary(a, Op::MulScalarT(a, s), "mul_scalar_t", |x| x * sv)
    }

    // ───────────────────── reductions ─────────────────────

    pub fn sum(&mut self, a: TensorId) -> Result<TensorId> {
        let acc: f64 = self.nodes[a.0].out.values().iter().map(|v| v.as_f64()).sum();
        self.push(Op::Sum(a), Tensor::scalar(T::from_f64(acc)), "sum")
    }

    pub fn mean(&mut self, a: TensorId) -> Result<TensorId> {
        let n = self.nodes[a.0].out.numel();
        if n == 0 {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let acc: f64 = self.nodes[a.0].out.values().iter().map(|v| v.as_f64()).sum();
        self.push(Op::Mean(a), Tensor::scalar(T::from_f64(acc / n as f64)), "mean")
    }

    /// Per-channel spatial mean: `[C, H, W] -> [C]`.
    pub fn reduce_chan_mean(&mut self, a: TensorId) -> Result<TensorId> {
        let (c, h, w) = self.nodes[a.0].out.chw()?;
        let plane = h * w;
        let vals = self.nodes[a.0].out.values();
        let mut out = Vec::with_capacity(c);
        for ch in 0..c {
            let acc: f64 = vals[ch * plane..(ch + 1) * plane].iter().map(|v| v.as_f64()).sum();
            out.push(T::from_f64(acc / plane as f64));
        }
        self.push(Op::ReduceChanMean(a), Tensor::new(vec![c], out)?, "reduce_chan_mean")
    }

    /// `x[C,H,W] + b[C]`, channel broadcast.
    pub fn add_chan(&mut self, x: TensorId, b: TensorId) -> Result<TensorId> {
        let (c, h, w) = self.nodes[x.0].out.chw()?;
        if self.shape(b) != [c] {
            return Err(Error::shape("add_chan", format!("bias {:?} vs C={}", self.shape(b), c)));
        }
        let plane = h * w;
        let xv = self.nodes[x.0].out.values();
        let bv = self.nodes[b.0].out.values();
        let mut out = Vec::with_capacity(xv.len());
        for ch in 0..c {
            let bb = bv[ch].as_f64();
            for i in 0..plane {
                out.push(T::from_f64(xv[ch * plane + i].as_f64() + bb));
            }
        }
        self.push(Op::AddChan(x, b), Tensor::new(vec![c, h, w], out)?, "add_chan")
    }

    /// `x[C,H,W] * s[C]`, channel broadcast.
    pub fn mul_chan(&mut self, x: TensorId, s: TensorId) -> Result<TensorId> {
        let (c, h, w) = self.nodes[x.0].out.chw()?;
        if self.shape(s) != [c] {
            return Err(Error::shape("mul_chan", format!("scale {:?} vs C={}", self.shape(s), c)));
        }
        let plane = h * w;
        let xv = self.nodes[x.0].out.values();
        let sv = self.nodes[s.0].out.values();
        let mut out = Vec::with_capacity(xv.len());
        for ch in 0..c {
            let ss = sv[ch].as_f64();
            for i in 0..plane {
                out.push(T::from_f64(xv[ch * plane + i].as_f64() * ss));
            }
        }
        self.push(Op::MulChan(x, s), Tensor::new(vec![c, h, w], out)?, "mul_chan")
    }

    /// Mean over channels: `[C, H, W] -> [1, H, W]`.
    pub fn mean_chan(&mut self, a: TensorId) -> Result<TensorId> {
        let (c, h, w) = self.nodes[a.0].out.chw()?;
        let plane = h * w;
        let vals = self.nodes[a.0].out.values();
        let mut out = vec![T::zero(); plane];
        for i in 0..plane {
            let mut acc = 0f64;
            for ch in 0..c {
                acc += vals[ch * plane + i].as_f64();
            }
            out[i] = T::from_f64(acc / c as f64);
        }
        self.push(Op::MeanChan(a), Tensor::new(vec![1, h, w], out)?, "mean_chan")
    }

    /// `x[C,H,W] * m[1,H,W]`, spatial mask broadcast over channels.
    pub fn mul_bcast_chan(&mut self, x: TensorId, m: TensorId) -> Result<TensorId> {
        let (c, h, w) = self.nodes[x.0].out.chw()?;
        if self.shape(m) != [1, h, w] {
            return Err(Error::shape(
                "mul_bcast_chan",
                format!("mask {:?} vs [1,{},{}]", self.shape(m), h, w),
            ));
        }
        let plane = h * w;
        let xv = self.nodes[x.0].out.values();
        let mv = self.nodes[m.0].out.values();
        let mut out = Vec::with_capacity(xv.len());
        for ch in 0..c {
            for i in 0..plane {
                out.push(T::from_f64(xv[ch * plane + i].as_f64() * mv[i].as_f64()));
            }
        }
        self.push(Op::MulBcastChan(x, m), Tensor::new(vec![c, h, w], out)?, "mul_bcast_chan")
    }

    // ───────────────────── spatial gradients ─────────────────────

    /// Forward difference along width; replicate boundary (last column 0).
    pub fn grad_x(&mut self, a: TensorId) -> Result<TensorId> {
        let (c, h, w) = self.nodes[a.0].out.chw()?;
        let vals = self.nodes[a.0].out.values();
        let mut out = vec![T::zero(); vals.len()];
        for ch in 0..c {
            for y in 0..h {
                let row = (ch * h + y) * w;
                for x in 0..w - 1 {
                    out[row + x] =
                        T::from_f64(vals[row + x + 1].as_f64() - vals[row + x].as_f64());
                }
            }
        }
        self.push(Op::GradX(a), Tensor::new(vec![c, h, w], out)?, "grad_x")
    }

    /// Forward difference along height; replicate boundary (last row 0).
    pub fn grad_y(&mut self, a: TensorId) -> Result<TensorId> {
        let (c, h, w) = self.nodes[a.0].out.chw()?;
        let vals = self.nodes[a.0].out.values();
        let mut out = vec![T::zero(); vals.len()];
        for ch in 0..c {
            for y in 0..h - 1 {
                for x in 0..w {
                    let i = (ch * h + y) * w + x;
                    out[i] = T::from_f64(vals[i + w].as_f64() - vals[i].as_f64());
                }
            }
        }
        self.push(Op::GradY(a), Tensor::new(vec![c, h, w], out)?, "grad_y")
    }

    // ───────────────────── structure ops ─────────────────────

    /// Concatenate along axis 0 (channel concat for `[C,H,W]` maps, stacking
    /// for vectors). Trailing dimensions must match.
    pub fn concat0(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::shape("concat0", "no inputs"));
        }
        let rest = self.shape(parts[0])[1..].to_vec();
        let mut dim0 = 0;
        let mut values = Vec::new();
        for &p in parts {
            let sh = self.shape(p);
            if sh[1..] != rest[..] {
                return Err(Error::shape(
                    "concat0",
                    format!("trailing dims differ: {:?} vs {:?}", &sh[1..], rest),
                ));
            }
            dim0 += sh[0];
            values.extend_from_slice(self.values(p));
        }
        let mut shape = vec![dim0];
        shape.extend_from_slice(&rest);
        self.push(Op::Concat0(parts.to_vec()), Tensor::new(shape, values)?, "concat0")
    }

    /// Contiguous slice in flat storage with an explicit output shape.
    pub fn slice(&mut self, a: TensorId, offset: usize, shape: Vec<usize>) -> Result<TensorId> {
        let len: usize = shape.iter().product();
        let n = self.nodes[a.0].out.numel();
        if offset + len > n {
            return Err(Error::shape(
                "slice",
                format!("offset {} + len {} > numel {}", offset, len, n),
            ));
        }
        let values = self.values(a)[offset..offset + len].to_vec();
        self.push(Op::Slice(a, offset), Tensor::new(shape, values)?, "slice")
    }

    /// Channel range of a `[C,H,W]` map.
    pub fn slice_channels(&mut self, a: TensorId, c0: usize, c1: usize) -> Result<TensorId> {
        let (c, h, w) = self.nodes[a.0].out.chw()?;
        if c0 >= c1 || c1 > c {
            return Err(Error::shape("slice_channels", format!("[{},{}) of C={}", c0, c1, c)));
        }
        self.slice(a, c0 * h * w, vec![c1 - c0, h, w])
    }

    pub fn reshape(&mut self, a: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        let len: usize = shape.iter().product();
        if len != self.nodes[a.0].out.numel() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} -> {:?}", self.shape(a), shape),
            ));
        }
        let values = self.values(a).to_vec();
        self.push(Op::Reshape(a), Tensor::new(shape, values)?, "reshape")
    }

    // ───────────────────── dense kernels ─────────────────────

    /// 2-D convolution, zero padding "same", stride 1 or 2.
    /// Input `[Cin,H,W]`, weight `[Cout,Cin,kh,kw]`.
    pub fn conv2d(&mut self, input: TensorId, weight: TensorId, stride: usize) -> Result<TensorId> {
        if stride != 1 && stride != 2 {
            return Err(Error::shape("conv2d", format!("stride {} not in {{1,2}}", stride)));
        }
        let (ci, h, w) = self.nodes[input.0].out.chw()?;
        let wsh = self.shape(weight).to_vec();
        let [co, wci, kh, kw] = match wsh.as_slice() {
            [a, b, c, d] => [*a, *b, *c, *d],
            other => {
                return Err(Error::shape("conv2d", format!("weight shape {:?}", other)));
            }
        };
        if wci != ci {
            return Err(Error::shape("conv2d", format!("Cin {} vs weight {}", ci, wci)));
        }
        let dims = ConvDims::new(ci, h, w, co, kh, kw, stride);
        let out = conv::conv2d_forward(self.values(input), self.values(weight), &dims);
        self.push(
            Op::Conv2d { input, weight, stride },
            Tensor::new(vec![co, dims.oh, dims.ow], out)?,
            "conv2d",
        )
    }

    /// Transposed 2-D convolution, stride 2, explicit output size.
    /// Input `[Cin,H,W]`, weight `[Cin,Cout,kh,kw]`.
    pub fn deconv2d(
        &mut self,
        input: TensorId,
        weight: TensorId,
        out_h: usize,
        out_w: usize,
    ) -> Result<TensorId> {
        let (ci, h, w) = self.nodes[input.0].out.chw()?;
        let wsh = self.shape(weight).to_vec();
        let [wci, co, kh, kw] = match wsh.as_slice() {
            [a, b, c, d] => [*a, *b, *c, *d],
            other => {
                return Err(Error::shape("deconv2d", format!("weight shape {:?}", other)));
            }
        };
        if wci != ci {
            return Err(Error::shape("deconv2d", format!("Cin {} vs weight {}", ci, wci)));
        }
        let dims = DeconvDims::new(ci, h, w, co, kh, kw, 2, out_h, out_w).ok_or_else(|| {
            Error::shape(
                "deconv2d",
                format!("output {}x{} does not halve to input {}x{}", out_h, out_w, h, w),
            )
        })?;
        let out = conv::deconv2d_forward(self.values(input), self.values(weight), &dims);
        self.push(
            Op::Deconv2d { input, weight },
            Tensor::new(vec![co, out_h, out_w], out)?,
            "deconv2d",
        )
    }

    /// Dense matrix product `[m,k] x [k,n]`.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (m, k) = match self.shape(a) {
            [m, k] => (*m, *k),
            other => return Err(Error::shape("matmul", format!("lhs {:?}", other))),
        };
        let (k2, n) = match self.shape(b) {
            [k2, n] => (*k2, *n),
            other => return Err(Error::shape("matmul", format!("rhs {:?}", other))),
        };
        if k != k2 {
            return Err(Error::shape("matmul", format!("inner dims {} vs {}", k, k2)));
        }
        let out = conv::matmul_forward(self.values(a), self.values(b), m, k, n);
        self.push(Op::MatMul(a, b), Tensor::new(vec![m, n], out)?, "matmul")
    }

    /// SE(3) exponential: 6-vector `[rx,ry,rz,tx,ty,tz]` to a `[4,4]` matrix.
    pub fn se3_exp(&mut self, v: TensorId) -> Result<TensorId> {
        if self.nodes[v.0].out.numel() != 6 {
            return Err(Error::shape("se3_exp", format!("{:?}", self.shape(v))));
        }
        let out = se3::se3_exp_forward(self.values(v));
        self.push(Op::Se3Exp(v), Tensor::new(vec![4, 4], out)?, "se3_exp")
    }

    /// Bilinear sampling of `grid[C,H,W]` at `coords[2,Ho,Wo]`.
    pub fn grid_sample(&mut self, grid: TensorId, coords: TensorId) -> Result<TensorId> {
        let (c, h, w) = self.nodes[grid.0].out.chw()?;
        let (cc, oh, ow) = self.nodes[coords.0].out.chw()?;
        if cc != 2 {
            return Err(Error::shape("grid_sample", format!("coords {:?}", self.shape(coords))));
        }
        let out =
            sample::grid_sample_forward(self.values(grid), self.values(coords), c, h, w, oh, ow);
        self.push(
            Op::GridSample { grid, coords },
            Tensor::new(vec![c, oh, ow], out)?,
            "grid_sample",
        )
    }

    // ───────────────────── composites ─────────────────────

    /// Per-channel batch normalization.
    ///
    /// Training mode (`running == None`) normalizes by batch statistics and
    /// returns them so the caller can update its running averages; inference
    /// mode normalizes by the supplied running statistics.
    pub fn batch_norm(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        running: Option<(&[T], &[T])>,
        eps: f64,
    ) -> Result<(TensorId, Option<BnBatchStats<T>>)> {
        let (c, _, _) = self.nodes[x.0].out.chw()?;
        match running {
            None => {
                let mean = self.reduce_chan_mean(x)?;
                let neg_mean = self.neg(mean)?;
                let centered = self.add_chan(x, neg_mean)?;
                let sq = self.mul(centered, centered)?;
                let var = self.reduce_chan_mean(sq)?;
                let stats = BnBatchStats {
                    mean: self.values(mean).to_vec(),
                    var: self.values(var).to_vec(),
                };
                let shifted = self.affine(var, 1.0, eps)?;
                let std = self.sqrt(shifted)?;
                let inv_std = self.recip(std)?;
                let xhat = self.mul_chan(centered, inv_std)?;
                let scaled = self.mul_chan(xhat, gamma)?;
                let y = self.add_chan(scaled, beta)?;
                Ok((y, Some(stats)))
            }
            Some((rm, rv)) => {
                if rm.len() != c || rv.len() != c {
                    return Err(Error::shape("batch_norm", "running stats length"));
                }
                let mean = self.constant(Tensor::new(vec![c], rm.to_vec())?);
                let var = self.constant(Tensor::new(vec![c], rv.to_vec())?);
                let neg_mean = self.neg(mean)?;
                let centered = self.add_chan(x, neg_mean)?;
                let shifted = self.affine(var, 1.0, eps)?;
                let std = self.sqrt(shifted)?;
                let inv_std = self.recip(std)?;
                let xhat = self.mul_chan(centered, inv_std)?;
                let scaled = self.mul_chan(xhat, gamma)?;
                let y = self.add_chan(scaled, beta)?;
                Ok((y, None))
            }
        }
    }
}

/// Batch statistics computed by a training-mode batch norm.
pub struct BnBatchStats<T: Real> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}
