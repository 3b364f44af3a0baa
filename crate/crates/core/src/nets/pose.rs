//! Visual odometry network: a VGG-style encoder over the concatenation of
//! the current image and its estimated depth map, with a ConvLSTM after
//! every level, closed by a 1x1 convolution to six values (averaged over
//! the remaining spatial extent) that decode to the relative pose from the
//! current frame to the previous one.

use crate::ad::{Tape, TensorId};
use crate::error::Result;
use crate::geometry::{pose_on_tape, TapePose};
use crate::nets::config::NetConfig;
use crate::nets::convlstm::{ConvLstm, LstmState};
use crate::nets::layers::{Act, BnMode, ConvBn, ConvOut};
use crate::nets::params::{Bound, ParamSet, StateSet};
use crate::real::Real;
use rand::Rng;

/// The predicted rotation 3-vector is the raw head output scaled by this
/// factor, keeping early-training motions small.
pub const ROTATION_SCALE: f64 = 0.01;

struct Level {
    conv: ConvBn,
    lstm: ConvLstm,
}

pub struct PoseNet {
    levels: Vec<Level>,
    out: ConvOut,
    sizes: Vec<(usize, usize)>,
}

pub struct PoseOutput {
    /// Raw 6-vector head output (before rotation scaling), `[6]`.
    pub raw6: TensorId,
    /// Decoded relative pose `P_{t->t-1}` on the tape.
    pub pose: TapePose,
    /// Next hidden states.
    pub states: Vec<LstmState>,
}

impl PoseNet {
    pub fn new<T: Real>(
        cfg: &NetConfig,
        params: &mut ParamSet<T>,
        states: &mut StateSet<T>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut levels = Vec::with_capacity(cfg.encoder_channels.len());
        let mut cin = cfg.image_channels + 1;
        for (i, &c) in cfg.encoder_channels.iter().enumerate() {
            let conv = ConvBn::new(
                &format!("pose.enc{i}.conv"),
                cin,
                c,
                2,
                Act::Relu,
                params,
                states,
                rng,
            );
            let lstm = ConvLstm::new(&format!("pose.enc{i}.lstm"), c, c, params, rng);
            levels.push(Level { conv, lstm });
            cin = c;
        }
        let out = ConvOut::new("pose.out", cin, 6, 1, params, rng);
        Ok(PoseNet { levels, out, sizes: cfg.encoder_sizes() })
    }

    pub fn state_count(&self) -> usize {
        self.levels.len()
    }

    pub fn zero_states<T: Real>(&self, tape: &mut Tape<T>) -> Vec<LstmState> {
        self.levels
            .iter()
            .enumerate()
            .map(|(i, level)| {
                let (h, w) = self.sizes[i];
                level.lstm.zero_state(tape, h, w)
            })
            .collect()
    }

    /// One step over the 4-channel concatenation of image and depth.
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        mode: &mut BnMode<'_, T>,
        image: TensorId,
        depth: TensorId,
        states: &[LstmState],
    ) -> Result<PoseOutput> {
        assert_eq!(states.len(), self.levels.len(), "pose net state count");
        let mut x = tape.concat0(&[image, depth])?;
        let mut next_states = Vec::with_capacity(self.levels.len());
        for (i, level) in self.levels.iter().enumerate() {
            x = level.conv.forward(tape, bound, mode, x)?;
            let (y, st) = level.lstm.step(tape, bound, x, &states[i])?;
            next_states.push(st);
            x = y;
        }
        let head = self.out.forward(tape, bound, x)?;
        let raw6 = tape.reduce_chan_mean(head)?;
        let rot = tape.slice(raw6, 0, vec![3])?;
        let rot_scaled = tape.affine(rot, ROTATION_SCALE, 0.0)?;
        let trans = tape.slice(raw6, 3, vec![3])?;
        let vec6 = tape.concat0(&[rot_scaled, trans])?;
        let pose = pose_on_tape(tape, vec6)?;
        Ok(PoseOutput { raw6, pose, states: next_states })
    }
}
