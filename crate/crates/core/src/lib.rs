//! Recurrent multi-view monocular depth and visual odometry estimation.
//!
//! The crate is organized around a small reverse-mode autodiff engine ([`ad`])
//! on which everything differentiable is built: the differentiable geometric
//! module ([`geometry`]), the training objectives ([`losses`]) and the
//! ConvLSTM-interleaved depth and pose networks ([`nets`]). Around those sit
//! the dataset pipeline ([`data`]), the two-stage training loop ([`train`]),
//! streaming inference ([`infer`]) and the depth/odometry evaluation
//! protocols ([`eval`]).

pub mod ad;
pub mod data;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod infer;
pub mod losses;
pub mod nets;
pub mod real;
pub mod train;

pub use error::{Error, Result};
pub use real::Real;
