//! ConvLSTM cell, depth network and pose network, with configurable width
//! and resolution.

mod config;
mod convlstm;
mod layers;
mod model;
mod params;
mod pose;

pub mod depth;

pub use config::{LstmPlacement, NetConfig};
pub use convlstm::{ConvLstm, LstmState};
pub use depth::{DepthNet, DepthOutput};
pub use layers::{BnMode, BnUpdate, BN_MOMENTUM};
pub use model::{Model, ModelStates, ModelStep, StateValues};
pub use params::{collect_grads, Bound, ParamEntry, ParamKey, ParamSet, StateEntry, StateKey, StateSet};
pub use pose::{PoseNet, PoseOutput, ROTATION_SCALE};
