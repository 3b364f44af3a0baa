//! Synthetic textured-plane scenes with exact depth, pose and flow — the
//! workhorse fixture for geometry oracles, overfit runs and CLI smoke tests.
//!
//! The world contains a single plane `z = z0 + tilt_x * x + tilt_y * y`
//! carrying a smooth multi-sine texture. The camera starts at the origin
//! looking down +z and advances by a fixed step (plus an optional yaw rate)
//! per frame, so every image, depth map and relative pose has a closed form.

use crate::data::image_io::{write_depth, write_image};
use crate::data::types::{DepthBuf, ImageBuf};
use crate::error::{Error, Result};
use crate::geometry::Intrinsics;
use nalgebra::{Matrix4, Rotation3, Vector3};
use std::path::Path;

#[derive(Debug, Clone)]
pub struct PlaneSceneSpec {
    pub width: usize,
    pub height: usize,
    pub intrinsics: Intrinsics,
    pub n_frames: usize,
    /// Plane depth at the world origin.
    pub z0: f64,
    /// Plane slope along world x / y.
    pub tilt_x: f64,
    pub tilt_y: f64,
    /// Camera translation per frame, world coordinates.
    pub step: [f64; 3],
    /// Camera yaw (about world y) per frame, radians.
    pub yaw_rate: f64,
}

impl PlaneSceneSpec {
    /// Desk-scale default: 64x96 frames, a plane tilted along x so depth
    /// spans roughly 7..14 m across the view, and a 0.5 m sideways step
    /// that clears the 0.3 m keyframe baseline.
    pub fn desk(n_frames: usize) -> Self {
        PlaneSceneSpec {
            width: 96,
            height: 64,
            intrinsics: Intrinsics::new(80.0, 80.0, 47.5, 31.5).unwrap(),
            n_frames,
            z0: 10.0,
            tilt_x: 0.45,
            tilt_y: 0.15,
            step: [0.5, 0.0, 0.0],
            yaw_rate: 0.002,
        }
    }

    /// Fronto-parallel variant (constant depth), for closed-form parallax
    /// checks.
    pub fn fronto_parallel(n_frames: usize) -> Self {
        PlaneSceneSpec { tilt_x: 0.0, tilt_y: 0.0, yaw_rate: 0.0, ..Self::desk(n_frames) }
    }
}

/// Plane texture, per channel, smooth enough for bilinear resampling but
/// with gradient everywhere.
pub fn plane_texture(x: f64, y: f64, c: usize) -> f64 {
    let p = c as f64 * 2.1;
    0.5 + 0.18 * (1.9 * x + 0.4 * p).sin()
        + 0.15 * (1.3 * y - 0.3 * p).cos()
        + 0.10 * (0.9 * (x + y) + p).sin()
        + 0.05 * (2.7 * (x - 0.5 * y)).cos()
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub spec: PlaneSceneSpec,
    pub frames: Vec<ImageBuf>,
    /// Dense exact depth per frame.
    pub depths: Vec<DepthBuf>,
    /// Camera-to-world absolutes.
    pub abs_poses: Vec<Matrix4<f64>>,
    pub intrinsics: Intrinsics,
}

pub fn render_plane_scene(spec: &PlaneSceneSpec) -> Result<SyntheticScene> {
    let k = spec.intrinsics;
    // Plane in normal form n.X = d.
    let normal = Vector3::new(-spec.tilt_x, -spec.tilt_y, 1.0);
    let d = spec.z0;
    let mut frames = Vec::with_capacity(spec.n_frames);
    let mut depths = Vec::with_capacity(spec.n_frames);
    let mut abs_poses = Vec::with_capacity(spec.n_frames);
    for t in 0..spec.n_frames {
        let yaw = spec.yaw_rate * t as f64;
        let rot = Rotation3::from_scaled_axis(Vector3::new(0.0, yaw, 0.0));
        let pos = Vector3::new(
            spec.step[0] * t as f64,
            spec.step[1] * t as f64,
            spec.step[2] * t as f64,
        );
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(rot.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&pos);
        abs_poses.push(m);

        let mut img = vec![0f32; 3 * spec.height * spec.width];
        let mut dep = vec![0f64; spec.height * spec.width];
        for v in 0..spec.height {
            for u in 0..spec.width {
                let dir_cam =
                    Vector3::new((u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0);
                let dir_world = rot * dir_cam;
                let denom = normal.dot(&dir_world);
                if denom.abs() < 1e-9 {
                    return Err(Error::Numeric("synthetic ray parallel to plane".into()));
                }
                let z = (d - normal.dot(&pos)) / denom;
                if z <= 0.0 {
                    return Err(Error::Numeric(
                        "synthetic plane behind camera; adjust spec".into(),
                    ));
                }
                let point = pos + dir_world * z;
                dep[v * spec.width + u] = z;
                for c in 0..3 {
                    img[(c * spec.height + v) * spec.width + u] =
                        plane_texture(point.x, point.y, c) as f32;
                }
            }
        }
        frames.push(ImageBuf::new(spec.height, spec.width, img)?);
        depths.push(DepthBuf::new(spec.height, spec.width, dep)?);
    }
    Ok(SyntheticScene { spec: spec.clone(), frames, depths, abs_poses, intrinsics: k })
}

/// Cut an in-memory scene into training windows at its native resolution
/// (no disk round trip; exact depths and poses).
pub fn scene_to_samples(
    scene: &SyntheticScene,
    n: usize,
    stride: usize,
) -> Result<Vec<crate::data::types::SequenceSample>> {
    use crate::data::types::{Direction, SequenceSample};
    use crate::data::windows::relative_from_absolute;
    let mut samples = Vec::new();
    if scene.frames.len() < n {
        return Ok(samples);
    }
    let mut start = 0;
    while start + n <= scene.frames.len() {
        let mut rels = Vec::with_capacity(n - 1);
        for t in 1..n {
            rels.push(relative_from_absolute(
                &scene.abs_poses[start + t - 1],
                &scene.abs_poses[start + t],
            )?);
        }
        samples.push(SequenceSample {
            scene_id: "synthetic".into(),
            frame_ids: (start as u32..(start + n) as u32).collect(),
            frames: scene.frames[start..start + n].to_vec(),
            intrinsics: scene.intrinsics,
            gt_depths: Some(scene.depths[start..start + n].to_vec()),
            gt_rel_poses: Some(rels),
            direction: Direction::Forward,
        });
        start += stride;
    }
    Ok(samples)
}

/// Write a rendered scene into the on-disk dataset layout under
/// `root/scenes/<scene_id>/`.
pub fn write_scene(root: &Path, scene_id: &str, scene: &SyntheticScene) -> Result<()> {
    let dir = root.join("scenes").join(scene_id);
    let image_dir = dir.join("image");
    let depth_dir = dir.join("depth");
    std::fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
    std::fs::create_dir_all(&depth_dir).map_err(|e| Error::io(&depth_dir, e))?;

    let k = scene.intrinsics;
    let cam_path = dir.join("cam.txt");
    std::fs::write(&cam_path, format!("{} {} {} {}\n", k.fx, k.fy, k.cx, k.cy))
        .map_err(|e| Error::io(&cam_path, e))?;

    let mut pose_lines = String::new();
    for m in &scene.abs_poses {
        let mut cells = Vec::with_capacity(12);
        for r in 0..3 {
            for c in 0..4 {
                cells.push(format!("{}", m[(r, c)]));
            }
        }
        pose_lines.push_str(&cells.join(" "));
        pose_lines.push('\n');
    }
    let poses_path = dir.join("poses.txt");
    std::fs::write(&poses_path, pose_lines).map_err(|e| Error::io(&poses_path, e))?;

    for (t, (img, dep)) in scene.frames.iter().zip(&scene.depths).enumerate() {
        write_image(&image_dir.join(format!("{:06}.png", t)), img)?;
        write_depth(&depth_dir.join(format!("{:06}.png", t)), dep)?;
    }
    Ok(())
}
