//! Shared building blocks: convolution + batch norm + activation, its
//! transposed counterpart, and plain output convolutions.

use crate::ad::{BnBatchStats, Tape, Tensor, TensorId};
use crate::error::Result;
use crate::nets::params::{uniform_fan_in, Bound, ParamKey, ParamSet, StateKey, StateSet};
use crate::real::Real;
use rand::Rng;

pub(crate) const BN_EPS: f64 = 1e-5;
/// Momentum of the running-statistics EMA.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy)]
pub(crate) enum Act {
    LeakyRelu02,
    Relu,
}

/// One training-mode batch-norm observation to fold into the running stats.
pub struct BnUpdate<T: Real> {
    pub mean_key: StateKey,
    pub var_key: StateKey,
    pub stats: BnBatchStats<T>,
}

/// Batch-statistics mode for a forward pass: training collects per-layer
/// batch stats for the caller to fold into the running averages; inference
/// normalizes by the stored running statistics.
pub enum BnMode<'a, T: Real> {
    Train { updates: &'a mut Vec<BnUpdate<T>> },
    Eval { stats: &'a StateSet<T> },
}

fn batch_norm_layer<T: Real>(
    tape: &mut Tape<T>,
    bound: &Bound,
    mode: &mut BnMode<'_, T>,
    x: TensorId,
    gamma: ParamKey,
    beta: ParamKey,
    mean_key: StateKey,
    var_key: StateKey,
) -> Result<TensorId> {
    match mode {
        BnMode::Train { updates } => {
            let (y, stats) =
                tape.batch_norm(x, bound.id(gamma), bound.id(beta), None, BN_EPS)?;
            updates.push(BnUpdate { mean_key, var_key, stats: stats.unwrap() });
            Ok(y)
        }
        BnMode::Eval { stats } => {
            let running = (stats.get(mean_key), stats.get(var_key));
            let (y, _) =
                tape.batch_norm(x, bound.id(gamma), bound.id(beta), Some(running), BN_EPS)?;
            Ok(y)
        }
    }
}

fn activate<T: Real>(tape: &mut Tape<T>, x: TensorId, act: Act) -> Result<TensorId> {
    match act {
        Act::LeakyRelu02 => tape.leaky_relu(x, 0.2),
        Act::Relu => tape.relu(x),
    }
}

/// 3x3 convolution followed by batch norm and an activation.
pub(crate) struct ConvBn {
    w: ParamKey,
    gamma: ParamKey,
    beta: ParamKey,
    rmean: StateKey,
    rvar: StateKey,
    stride: usize,
    act: Act,
}

impl ConvBn {
    pub fn new<T: Real>(
        prefix: &str,
        cin: usize,
        cout: usize,
        stride: usize,
        act: Act,
        params: &mut ParamSet<T>,
        states: &mut StateSet<T>,
        rng: &mut impl Rng,
    ) -> Self {
        let w = params.register(
            format!("{prefix}.w"),
            uniform_fan_in(rng, vec![cout, cin, 3, 3], cin * 9),
        );
        let gamma = params.register(format!("{prefix}.bn.gamma"), Tensor::full(vec![cout], T::one()));
        let beta = params.register(format!("{prefix}.bn.beta"), Tensor::zeros(vec![cout]));
        let rmean = states.register(format!("{prefix}.bn.mean"), vec![T::zero(); cout]);
        let rvar = states.register(format!("{prefix}.bn.var"), vec![T::one(); cout]);
        ConvBn { w, gamma, beta, rmean, rvar, stride, act }
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        mode: &mut BnMode<'_, T>,
        x: TensorId,
    ) -> Result<TensorId> {
        let y = tape.conv2d(x, bound.id(self.w), self.stride)?;
        let y = batch_norm_layer(tape, bound, mode, y, self.gamma, self.beta, self.rmean, self.rvar)?;
        activate(tape, y, self.act)
    }
}

/// Stride-2 transposed 3x3 convolution followed by batch norm and an
/// activation; the output size is pinned by the caller.
pub(crate) struct DeconvBn {
    w: ParamKey,
    gamma: ParamKey,
    beta: ParamKey,
    rmean: StateKey,
    rvar: StateKey,
    act: Act,
}

impl DeconvBn {
    pub fn new<T: Real>(
        prefix: &str,
        cin: usize,
        cout: usize,
        act: Act,
        params: &mut ParamSet<T>,
        states: &mut StateSet<T>,
        rng: &mut impl Rng,
    ) -> Self {
        let w = params.register(
            format!("{prefix}.w"),
            uniform_fan_in(rng, vec![cin, cout, 3, 3], cin * 9),
        );
        let gamma = params.register(format!("{prefix}.bn.gamma"), Tensor::full(vec![cout], T::one()));
        let beta = params.register(format!("{prefix}.bn.beta"), Tensor::zeros(vec![cout]));
        let rmean = states.register(format!("{prefix}.bn.mean"), vec![T::zero(); cout]);
        let rvar = states.register(format!("{prefix}.bn.var"), vec![T::one(); cout]);
        DeconvBn { w, gamma, beta, rmean, rvar, act }
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        mode: &mut BnMode<'_, T>,
        x: TensorId,
        out_h: usize,
        out_w: usize,
    ) -> Result<TensorId> {
        let y = tape.deconv2d(x, bound.id(self.w), out_h, out_w)?;
        let y = batch_norm_layer(tape, bound, mode, y, self.gamma, self.beta, self.rmean, self.rvar)?;
        activate(tape, y, self.act)
    }
}

/// Plain convolution with bias and no normalization (output heads).
pub(crate) struct ConvOut {
    w: ParamKey,
    b: ParamKey,
    stride: usize,
}

impl ConvOut {
    pub fn new<T: Real>(
        prefix: &str,
        cin: usize,
        cout: usize,
        ksize: usize,
        params: &mut ParamSet<T>,
        rng: &mut impl Rng,
    ) -> Self {
        let w = params.register(
            format!("{prefix}.w"),
            uniform_fan_in(rng, vec![cout, cin, ksize, ksize], cin * ksize * ksize),
        );
        let b = params.register(format!("{prefix}.b"), Tensor::zeros(vec![cout]));
        ConvOut { w, b, stride: 1 }
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        x: TensorId,
    ) -> Result<TensorId> {
        let y = tape.conv2d(x, bound.id(self.w), self.stride)?;
        tape.add_chan(y, bound.id(self.b))
    }
}
