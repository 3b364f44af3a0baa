//! The depth + pose pair sharing one parameter store, plus the per-frame
//! step used by training rollouts and streaming inference.

use crate::ad::{Tape, Tensor, TensorId};
use crate::error::Result;
use crate::nets::config::NetConfig;
use crate::nets::convlstm::LstmState;
use crate::nets::depth::{DepthNet, DepthOutput};
use crate::nets::layers::{BnMode, BnUpdate, BN_MOMENTUM};
use crate::nets::params::{Bound, ParamSet, StateSet};
use crate::nets::pose::{PoseNet, PoseOutput};
use crate::real::Real;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Model<T: Real> {
    pub cfg: NetConfig,
    pub params: ParamSet<T>,
    pub stats: StateSet<T>,
    pub depth_net: DepthNet,
    pub pose_net: PoseNet,
}

/// Hidden states of both networks, as tape handles.
pub struct ModelStates {
    pub depth: Vec<LstmState>,
    pub pose: Vec<LstmState>,
}

/// Outputs of one frame step.
pub struct ModelStep {
    pub depth: DepthOutput,
    pub pose: PoseOutput,
}

/// Hidden states lifted off a tape (for carrying across tapes during
/// streaming inference).
#[derive(Debug, Clone)]
pub struct StateValues<T: Real> {
    depth: Vec<(Tensor<T>, Tensor<T>)>,
    pose: Vec<(Tensor<T>, Tensor<T>)>,
}

impl<T: Real> Model<T> {
    pub fn new(cfg: NetConfig, seed: u64) -> Result<Self> {
        let mut params = ParamSet::new();
        let mut stats = StateSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let depth_net = DepthNet::new(&cfg, &mut params, &mut stats, &mut rng)?;
        let pose_net = PoseNet::new(&cfg, &mut params, &mut stats, &mut rng)?;
        Ok(Model { cfg, params, stats, depth_net, pose_net })
    }

    pub fn zero_states(&self, tape: &mut Tape<T>) -> ModelStates {
        ModelStates {
            depth: self.depth_net.zero_states(tape),
            pose: self.pose_net.zero_states(tape),
        }
    }

    /// One frame: depth from the image, then pose from the image
    /// concatenated with that depth estimate (gradients flow through the
    /// depth input, coupling the scene scale of the two networks).
    pub fn step(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        mode: &mut BnMode<'_, T>,
        image: TensorId,
        states: &ModelStates,
    ) -> Result<(ModelStep, ModelStates)> {
        let depth = self.depth_net.forward(tape, bound, mode, image, &states.depth)?;
        let pose =
            self.pose_net.forward(tape, bound, mode, image, depth.depth, &states.pose)?;
        let next = ModelStates { depth: depth.states.clone(), pose: pose.states.clone() };
        Ok((ModelStep { depth, pose }, next))
    }

    /// Fold training-mode batch statistics into the running averages.
    pub fn apply_bn_updates(&mut self, updates: Vec<BnUpdate<T>>) {
        for u in updates {
            self.stats.ema_update(u.mean_key, &u.stats.mean, BN_MOMENTUM);
            self.stats.ema_update(u.var_key, &u.stats.var, BN_MOMENTUM);
        }
    }

    pub fn export_states(&self, tape: &Tape<T>, states: &ModelStates) -> StateValues<T> {
        let lift = |v: &[LstmState]| {
            v.iter()
                .map(|s| (tape.tensor(s.h).clone(), tape.tensor(s.c).clone()))
                .collect()
        };
        StateValues { depth: lift(&states.depth), pose: lift(&states.pose) }
    }

    pub fn import_states(&self, tape: &mut Tape<T>, values: &StateValues<T>) -> ModelStates {
        let place = |v: &[(Tensor<T>, Tensor<T>)], tape: &mut Tape<T>| {
            v.iter()
                .map(|(h, c)| LstmState {
                    h: tape.constant(h.clone()),
                    c: tape.constant(c.clone()),
                })
                .collect()
        };
        ModelStates { depth: place(&values.depth, tape), pose: place(&values.pose, tape) }
    }
}
