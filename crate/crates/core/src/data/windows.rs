//! Sliding-window sequence generation and sample loading.

use crate::data::image_io::{preprocess, read_depth, read_image, resize_depth_nearest};
use crate::data::index::{DatasetIndex, SceneIndex};
use crate::data::types::{Direction, SequenceSample};
use crate::error::{Error, Result};
use crate::geometry::PoseSE3;

/// One forward window: `n` consecutive keyframes of one scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowRef {
    pub scene: usize,
    pub start: usize,
}

/// Every offset of every scene long enough contributes one window; shorter
/// scenes contribute none.
pub fn make_windows(index: &DatasetIndex, n: usize, stride: usize) -> Vec<WindowRef> {
    assert!(n >= 1 && stride >= 1);
    let mut windows = Vec::new();
    for (scene_idx, scene) in index.scenes.iter().enumerate() {
        if scene.frames.len() < n {
            continue;
        }
        let mut start = 0;
        while start + n <= scene.frames.len() {
            windows.push(WindowRef { scene: scene_idx, start });
            start += stride;
        }
    }
    windows
}

/// Relative pose `P_{t -> t-1} = inv(M_{t-1}) * M_t` from consecutive
/// camera-to-world absolutes.
pub fn relative_from_absolute(
    prev: &nalgebra::Matrix4<f64>,
    cur: &nalgebra::Matrix4<f64>,
) -> Result<PoseSE3> {
    let inv = prev
        .try_inverse()
        .ok_or_else(|| Error::Numeric("absolute pose is singular".into()))?;
    PoseSE3::from_matrix(&(inv * cur))
}

/// Load a window, resizing frames (and sparse depth, nearest-neighbor) to
/// `target` = (width, height) and rescaling the intrinsics accordingly.
pub fn load_window(
    index: &DatasetIndex,
    wref: WindowRef,
    n: usize,
    target: (usize, usize),
) -> Result<SequenceSample> {
    let scene: &SceneIndex = &index.scenes[wref.scene];
    if wref.start + n > scene.frames.len() {
        return Err(Error::Data(format!(
            "window [{}..{}) exceeds scene {} with {} keyframes",
            wref.start,
            wref.start + n,
            scene.scene_id,
            scene.frames.len()
        )));
    }
    let mut frames = Vec::with_capacity(n);
    let mut frame_ids = Vec::with_capacity(n);
    let mut depths = Vec::new();
    let mut intrinsics = scene.intrinsics;
    let mut have_all_depths = true;
    for i in 0..n {
        let fr = &scene.frames[wref.start + i];
        let img = read_image(&fr.image_path)?;
        let (resized, k2) = preprocess(&img, &scene.intrinsics, target.0, target.1)?;
        intrinsics = k2;
        frames.push(resized);
        frame_ids.push(fr.id);
        match &fr.depth_path {
            Some(p) => depths.push(resize_depth_nearest(&read_depth(p)?, target.0, target.1)),
            None => have_all_depths = false,
        }
    }
    let gt_rel_poses = match &scene.abs_poses {
        None => None,
        Some(poses) => {
            let mut rels = Vec::with_capacity(n - 1);
            for t in 1..n {
                rels.push(relative_from_absolute(
                    &poses[wref.start + t - 1],
                    &poses[wref.start + t],
                )?);
            }
            Some(rels)
        }
    };
    Ok(SequenceSample {
        scene_id: scene.scene_id.clone(),
        frame_ids,
        frames,
        intrinsics,
        gt_depths: have_all_depths.then_some(depths),
        gt_rel_poses,
        direction: Direction::Forward,
    })
}
