//! In-memory image, depth-map and sequence-sample types.

use crate::ad::Tensor;
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, PoseSE3};
use crate::real::Real;

/// RGB image, channel-major `[3][H][W]`, values in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuf {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl ImageBuf {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * height * width {
            return Err(Error::Data(format!(
                "image buffer length {} != 3*{}*{}",
                data.len(),
                height,
                width
            )));
        }
        Ok(ImageBuf { height, width, data })
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let values = self.data.iter().map(|&v| T::from_f64(v as f64)).collect();
        Tensor::new(vec![3, self.height, self.width], values).expect("consistent dims")
    }
}

/// Metric depth map in meters; 0 marks a missing measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthBuf {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl DepthBuf {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::Data(format!(
                "depth buffer length {} != {}*{}",
                values.len(),
                height,
                width
            )));
        }
        Ok(DepthBuf { height, width, values })
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }

    /// Ground-truth inverse depth and validity mask as `[1,H,W]` tensors.
    /// Invalid pixels carry an inverse depth of 0 under a 0 mask.
    pub fn to_inv_depth_tensors<T: Real>(&self) -> (Tensor<T>, Tensor<T>) {
        let mut xi = Vec::with_capacity(self.values.len());
        let mut mask = Vec::with_capacity(self.values.len());
        for &z in &self.values {
            if z > 0.0 {
                xi.push(T::from_f64(1.0 / z));
                mask.push(T::one());
            } else {
                xi.push(T::zero());
                mask.push(T::zero());
            }
        }
        let shape = vec![1, self.height, self.width];
        (
            Tensor::new(shape.clone(), xi).expect("consistent dims"),
            Tensor::new(shape, mask).expect("consistent dims"),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// A window of consecutive keyframes ready for training.
#[derive(Debug, Clone)]
pub struct SequenceSample {
    pub scene_id: String,
    pub frame_ids: Vec<u32>,
    pub frames: Vec<ImageBuf>,
    pub intrinsics: Intrinsics,
    pub gt_depths: Option<Vec<DepthBuf>>,
    /// `gt_rel_poses[k] = P_{k+1 -> k}` in this sample's frame order.
    pub gt_rel_poses: Option<Vec<PoseSE3>>,
    pub direction: Direction,
}

/// Flip a sample's direction: frames reverse, relative poses reverse and
/// invert.
pub fn reverse_sample(s: &SequenceSample) -> SequenceSample {
    let n = s.frames.len();
    let gt_rel_poses = s.gt_rel_poses.as_ref().map(|poses| {
        (0..poses.len()).map(|k| poses[n - 2 - k].inverse()).collect()
    });
    SequenceSample {
        scene_id: s.scene_id.clone(),
        frame_ids: s.frame_ids.iter().rev().copied().collect(),
        frames: s.frames.iter().rev().cloned().collect(),
        intrinsics: s.intrinsics,
        gt_depths: s.gt_depths.as_ref().map(|d| d.iter().rev().cloned().collect()),
        gt_rel_poses,
        direction: match s.direction {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        },
    }
}
