//! Dataset index: scan the on-disk layout, parse intrinsics and poses,
//! filter keyframes by baseline motion.
//!
//! Layout per scene (all paths under `root/scenes/<scene_id>/`):
//!   - `image/<%06d>.png`   8-bit RGB frames
//!   - `cam.txt`            one line `fx fy cx cy`
//!   - `poses.txt`          optional; per frame 12 reals, 3x4 row-major
//!                          camera-to-world
//!   - `depth/<%06d>.png`   optional; 16-bit, meters = value/256, 0 missing

use crate::error::{Error, Result};
use crate::geometry::Intrinsics;
use nalgebra::Matrix4;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct FrameRef {
    pub id: u32,
    pub image_path: PathBuf,
    pub depth_path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct SceneIndex {
    pub scene_id: String,
    pub intrinsics: Intrinsics,
    /// (width, height) of the stored frames.
    pub image_size: (usize, usize),
    pub frames: Vec<FrameRef>,
    /// Camera-to-world absolute poses, parallel to `frames`.
    pub abs_poses: Option<Vec<Matrix4<f64>>>,
}

#[derive(Debug, Clone, Default)]
pub struct DatasetIndex {
    pub scenes: Vec<SceneIndex>,
}

impl DatasetIndex {
    pub fn total_frames(&self) -> usize {
        self.scenes.iter().map(|s| s.frames.len()).sum()
    }
}

fn parse_cam_file(path: &Path) -> Result<Intrinsics> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let nums: Vec<f64> = text
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Data(format!("{}: bad number '{t}'", path.display())))
        })
        .collect::<Result<_>>()?;
    if nums.len() != 4 {
        return Err(Error::Data(format!(
            "{}: expected 'fx fy cx cy', got {} numbers",
            path.display(),
            nums.len()
        )));
    }
    Intrinsics::new(nums[0], nums[1], nums[2], nums[3])
}

fn parse_poses_file(path: &Path) -> Result<Vec<Matrix4<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut poses = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let nums: Vec<f64> = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|_| {
                    Error::Data(format!(
                        "{}:{}: bad number '{t}'",
                        path.display(),
                        lineno + 1
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if nums.len() != 12 {
            return Err(Error::Data(format!(
                "{}:{}: pose line has {} values, expected 12",
                path.display(),
                lineno + 1,
                nums.len()
            )));
        }
        let mut m = Matrix4::identity();
        for r in 0..3 {
            for c in 0..4 {
                m[(r, c)] = nums[r * 4 + c];
            }
        }
        poses.push(m);
    }
    Ok(poses)
}

/// Build the index. A missing or empty `root/scenes` directory yields an
/// empty index; malformed scene contents are errors.
pub fn load_dataset(root: &Path) -> Result<DatasetIndex> {
    let scenes_dir = root.join("scenes");
    if !scenes_dir.is_dir() {
        return Ok(DatasetIndex::default());
    }
    let mut scene_dirs: Vec<PathBuf> = std::fs::read_dir(&scenes_dir)
        .map_err(|e| Error::io(&scenes_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    scene_dirs.sort();

    let mut scenes = Vec::new();
    for dir in scene_dirs {
        let scene_id = dir.file_name().unwrap().to_string_lossy().into_owned();
        let intrinsics = parse_cam_file(&dir.join("cam.txt"))?;

        let image_dir = dir.join("image");
        let mut image_paths: Vec<PathBuf> = std::fs::read_dir(&image_dir)
            .map_err(|e| Error::io(&image_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "png"))
            .collect();
        image_paths.sort();
        if image_paths.is_empty() {
            return Err(Error::Data(format!("scene {scene_id}: no frames")));
        }

        let mut frames = Vec::with_capacity(image_paths.len());
        let mut image_size = None;
        for path in image_paths {
            let stem = path.file_stem().unwrap().to_string_lossy();
            let id: u32 = stem
                .parse()
                .map_err(|_| Error::Data(format!("{}: non-numeric frame name", path.display())))?;
            let (w, h) = image::image_dimensions(&path).map_err(|e| {
                Error::Data(format!("cannot decode image {}: {e}", path.display()))
            })?;
            let size = (w as usize, h as usize);
            match image_size {
                None => image_size = Some(size),
                Some(s) if s != size => {
                    return Err(Error::Data(format!(
                        "scene {scene_id}: frame {id} size {size:?} differs from {s:?}"
                    )));
                }
                _ => {}
            }
            let depth_path = dir.join("depth").join(format!("{:06}.png", id));
            frames.push(FrameRef {
                id,
                image_path: path,
                depth_path: depth_path.is_file().then_some(depth_path),
            });
        }
        let image_size = image_size.unwrap();
        if !intrinsics.principal_point_inside(image_size.0, image_size.1) {
            return Err(Error::Data(format!(
                "scene {scene_id}: principal point ({}, {}) outside {}x{} image",
                intrinsics.cx, intrinsics.cy, image_size.0, image_size.1
            )));
        }

        let poses_path = dir.join("poses.txt");
        let abs_poses = if poses_path.is_file() {
            let poses = parse_poses_file(&poses_path)?;
            if poses.len() != frames.len() {
                return Err(Error::Data(format!(
                    "scene {scene_id}: {} poses for {} frames",
                    poses.len(),
                    frames.len()
                )));
            }
            Some(poses)
        } else {
            None
        };

        scenes.push(SceneIndex { scene_id, intrinsics, image_size, frames, abs_poses });
    }
    Ok(DatasetIndex { scenes })
}

/// Result of keyframe filtering: the filtered index plus the scenes that
/// were passed through unfiltered for lack of poses.
#[derive(Debug, Clone)]
pub struct KeyframeFilterOutcome {
    pub index: DatasetIndex,
    /// Scene ids skipped because no ground-truth poses were available.
    pub skipped_scenes: Vec<String>,
}

/// Greedy baseline-motion filter: the first frame is always kept, and a
/// frame survives iff its translation from the last kept frame is at least
/// `sigma` meters. Scenes without poses pass through unchanged (flagged).
pub fn keyframe_filter(index: &DatasetIndex, sigma: f64) -> KeyframeFilterOutcome {
    let mut scenes = Vec::with_capacity(index.scenes.len());
    let mut skipped = Vec::new();
    for scene in &index.scenes {
        match &scene.abs_poses {
            None => {
                skipped.push(scene.scene_id.clone());
                scenes.push(scene.clone());
            }
            Some(poses) => {
                let mut kept_frames = Vec::new();
                let mut kept_poses = Vec::new();
                let mut last: Option<Matrix4<f64>> = None;
                for (frame, pose) in scene.frames.iter().zip(poses) {
                    let keep = match &last {
                        None => true,
                        Some(prev) => {
                            let dx = pose[(0, 3)] - prev[(0, 3)];
                            let dy = pose[(1, 3)] - prev[(1, 3)];
                            let dz = pose[(2, 3)] - prev[(2, 3)];
                            (dx * dx + dy * dy + dz * dz).sqrt() >= sigma
                        }
                    };
                    if keep {
                        kept_frames.push(frame.clone());
                        kept_poses.push(*pose);
                        last = Some(*pose);
                    }
                }
                scenes.push(SceneIndex {
                    scene_id: scene.scene_id.clone(),
                    intrinsics: scene.intrinsics,
                    image_size: scene.image_size,
                    frames: kept_frames,
                    abs_poses: Some(kept_poses),
                });
            }
        }
    }
    KeyframeFilterOutcome { index: DatasetIndex { scenes }, skipped_scenes: skipped }
}
