//! Convolutional LSTM cell: gate pre-activations come from one 3x3
//! convolution over the channel concatenation of input and hidden map, so
//! the recurrence preserves spatial structure.

use crate::ad::{Tape, Tensor, TensorId};
use crate::error::Result;
use crate::nets::params::{uniform_fan_in, Bound, ParamKey, ParamSet};
use crate::real::Real;
use rand::Rng;

/// Hidden and cell maps, both `[C,H,W]`, living on a tape.
#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: TensorId,
    pub c: TensorId,
}

pub struct ConvLstm {
    w: ParamKey,
    b: ParamKey,
    pub(crate) channels: usize,
}

impl ConvLstm {
    /// Gate order in the stacked output channels: input, forget, output,
    /// candidate. The forget-gate bias starts at +1 so early recurrence
    /// retains state.
    pub fn new<T: Real>(
        prefix: &str,
        cin: usize,
        channels: usize,
        params: &mut ParamSet<T>,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = (cin + channels) * 9;
        let w = params.register(
            format!("{prefix}.w"),
            uniform_fan_in(rng, vec![4 * channels, cin + channels, 3, 3], fan_in),
        );
        let mut bias = vec![T::zero(); 4 * channels];
        for v in bias.iter_mut().skip(channels).take(channels) {
            *v = T::one();
        }
        let b = params.register(
            format!("{prefix}.b"),
            Tensor::new(vec![4 * channels], bias).expect("bias shape"),
        );
        ConvLstm { w, b, channels }
    }

    pub fn zero_state<T: Real>(&self, tape: &mut Tape<T>, h: usize, w: usize) -> LstmState {
        let zh = tape.constant(Tensor::zeros(vec![self.channels, h, w]));
        let zc = tape.constant(Tensor::zeros(vec![self.channels, h, w]));
        LstmState { h: zh, c: zc }
    }

    /// One recurrence step: gates from `conv(x ++ h)`, then
    /// `c' = f*c + i*g`, `h' = o*tanh(c')`. Returns `(h', state')`.
    pub fn step<T: Real>(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        x: TensorId,
        state: &LstmState,
    ) -> Result<(TensorId, LstmState)> {
        let c = self.channels;
        let z = tape.concat0(&[x, state.h])?;
        let pre = tape.conv2d(z, bound.id(self.w), 1)?;
        let pre = tape.add_chan(pre, bound.id(self.b))?;
        let i_pre = tape.slice_channels(pre, 0, c)?;
        let f_pre = tape.slice_channels(pre, c, 2 * c)?;
        let o_pre = tape.slice_channels(pre, 2 * c, 3 * c)?;
        let g_pre = tape.slice_channels(pre, 3 * c, 4 * c)?;
        let i = tape.sigmoid(i_pre)?;
        let f = tape.sigmoid(f_pre)?;
        let o = tape.sigmoid(o_pre)?;
        let g = tape.tanh(g_pre)?;
        let fc = tape.mul(f, state.c)?;
        let ig = tape.mul(i, g)?;
        let c_next = tape.add(fc, ig)?;
        let tanh_c = tape.tanh(c_next)?;
        let h_next = tape.mul(o, tanh_c)?;
        Ok((h_next, LstmState { h: h_next, c: c_next }))
    }
}
