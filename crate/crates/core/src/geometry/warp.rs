//! Differentiable geometric module: backproject with the target depth,
//! transform by a relative pose, project with the intrinsics, bilinearly
//! sample — all recorded on the tape so gradients flow to depth, pose and
//! the sampled source.

use crate::ad::{Tape, Tensor, TensorId};
use crate::error::{Error, Result};
use crate::geometry::intrinsics::Intrinsics;
use crate::geometry::pose::PoseSE3;
use crate::real::Real;

/// Smallest admissible camera-space depth after the rigid transform; keeps
/// the projective division finite for points driven toward the focal plane.
const MIN_PROJECT_DEPTH: f64 = 1e-5;

/// Slack on the visibility bounds test, in pixels.
pub const BOUNDS_EPS: f64 = 1e-6;

/// The visibility rule: a projected coordinate counts as inside
/// `[0, extent-1]` with `BOUNDS_EPS` of slack on both ends.
pub fn in_bounds(coord: f64, extent: usize) -> bool {
    coord >= -BOUNDS_EPS && coord <= (extent - 1) as f64 + BOUNDS_EPS
}

/// A pose living on the tape: the raw 6-vector and its matrix form.
#[derive(Debug, Clone, Copy)]
pub struct TapePose {
    pub vec6: TensorId,
    pub matrix: TensorId,
}

/// Record a pose from its 6-vector node (gradients flow into the vector).
pub fn pose_on_tape<T: Real>(tape: &mut Tape<T>, vec6: TensorId) -> Result<TapePose> {
    let matrix = tape.se3_exp(vec6)?;
    Ok(TapePose { vec6, matrix })
}

/// Record a fixed pose as a constant leaf.
pub fn pose_leaf<T: Real>(tape: &mut Tape<T>, pose: &PoseSE3) -> Result<TapePose> {
    let v = tape.constant(Tensor::from_f64(vec![6], &pose.to_vec6())?);
    pose_on_tape(tape, v)
}

/// Read a pose back off the tape.
pub fn pose_values<T: Real>(tape: &Tape<T>, pose: &TapePose) -> PoseSE3 {
    let v: Vec<f64> = tape.values(pose.vec6).iter().map(|x| x.as_f64()).collect();
    PoseSE3::from_vec6(&v)
}

/// Constant `[1,H,W]` grids of normalized ray directions `(u-cx)/fx` and
/// `(v-cy)/fy`; pixel centers at integer coordinates, origin top-left.
fn ray_grids<T: Real>(
    tape: &mut Tape<T>,
    k: &Intrinsics,
    h: usize,
    w: usize,
) -> Result<(TensorId, TensorId)> {
    let mut a = Vec::with_capacity(h * w);
    let mut b = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            a.push((x as f64 - k.cx) / k.fx);
            b.push((y as f64 - k.cy) / k.fy);
        }
    }
    let a = tape.constant(Tensor::from_f64(vec![1, h, w], &a)?);
    let b = tape.constant(Tensor::from_f64(vec![1, h, w], &b)?);
    Ok((a, b))
}

/// Constant `[2,H,W]` grid of pixel coordinates `(u, v)`.
pub fn pixel_grid<T: Real>(tape: &mut Tape<T>, h: usize, w: usize) -> Result<TensorId> {
    let mut vals = Vec::with_capacity(2 * h * w);
    for y in 0..h {
        for x in 0..w {
            let _ = y;
            vals.push(x as f64);
        }
    }
    for y in 0..h {
        for _x in 0..w {
            vals.push(y as f64);
        }
    }
    Ok(tape.constant(Tensor::from_f64(vec![2, h, w], &vals)?))
}

/// Projected pixel coordinates of every target pixel under the relative
/// pose, plus the geometric visibility mask (a constant: it carries no
/// gradient). `depth` is `[1,H,W]`, `mat` is `[4,4]`.
pub fn projected_coords<T: Real>(
    tape: &mut Tape<T>,
    depth: TensorId,
    mat: TensorId,
    k: &Intrinsics,
) -> Result<(TensorId, TensorId, usize)> {
    let (c, h, w) = tape.tensor(depth).chw()?;
    if c != 1 {
        return Err(Error::shape("projected_coords", "depth must be [1,H,W]"));
    }
    if tape.shape(mat) != [4, 4] {
        return Err(Error::shape("projected_coords", "pose matrix must be [4,4]"));
    }
    if tape.values(depth).iter().any(|z| z.as_f64() <= 0.0) {
        return Err(Error::Numeric("warp: nonpositive depth".into()));
    }

    let (a, b) = ray_grids(tape, k, h, w)?;
    let x_cam = tape.mul(a, depth)?;
    let y_cam = tape.mul(b, depth)?;

    let mut rows = [TensorId(0); 3];
    for (r, row) in rows.iter_mut().enumerate() {
        let m0 = tape.slice(mat, r * 4, vec![1])?;
        let m1 = tape.slice(mat, r * 4 + 1, vec![1])?;
        let m2 = tape.slice(mat, r * 4 + 2, vec![1])?;
        let m3 = tape.slice(mat, r * 4 + 3, vec![1])?;
        let tx = tape.mul_scalar_t(x_cam, m0)?;
        let ty = tape.mul_scalar_t(y_cam, m1)?;
        let tz = tape.mul_scalar_t(depth, m2)?;
        let s0 = tape.add(tx, ty)?;
        let s1 = tape.add(s0, tz)?;
        *row = tape.add_scalar_t(s1, m3)?;
    }
    let [xp, yp, zp] = rows;
    let z_safe = tape.clamp_min(zp, MIN_PROJECT_DEPTH)?;
    let xn = tape.div(xp, z_safe)?;
    let yn = tape.div(yp, z_safe)?;
    let u = tape.affine(xn, k.fx, k.cx)?;
    let v = tape.affine(yn, k.fy, k.cy)?;
    let coords = tape.concat0(&[u, v])?;

    // Visibility: warped coordinate inside [0, W-1] x [0, H-1], padded by
    // BOUNDS_EPS so border pixels survive the rounding of the projective
    // round-trip (an identity pose must keep every pixel visible).
    let plane = h * w;
    let cv = tape.values(coords);
    let mut mask = vec![T::zero(); plane];
    let mut valid = 0usize;
    for i in 0..plane {
        let uu = cv[i].as_f64();
        let vv = cv[plane + i].as_f64();
        if in_bounds(uu, w) && in_bounds(vv, h) {
            mask[i] = T::one();
            valid += 1;
        }
    }
    let mask = tape.constant(Tensor::new(vec![1, h, w], mask)?);
    Ok((coords, mask, valid))
}

#[derive(Debug, Clone, Copy)]
pub struct WarpOutput {
    /// `[1,H,W]` binary visibility mask (constant, no gradient).
    pub mask: TensorId,
    /// Source image resampled into the target view, `[C,H,W]`.
    pub warped: TensorId,
    /// Dense pixel displacement field `p' - p`, `[2,H,W]`.
    pub flow: TensorId,
    /// Raw projected coordinates `p'`, `[2,H,W]`.
    pub coords: TensorId,
    /// Number of mask-1 pixels.
    pub valid_count: usize,
}

/// Warp `source` into the target view defined by `depth` (target frame) and
/// the relative pose matrix `mat` (target -> source).
pub fn warp<T: Real>(
    tape: &mut Tape<T>,
    source: TensorId,
    depth: TensorId,
    mat: TensorId,
    k: &Intrinsics,
) -> Result<WarpOutput> {
    let (_, h, w) = tape.tensor(source).chw()?;
    let (_, dh, dw) = tape.tensor(depth).chw()?;
    if (h, w) != (dh, dw) {
        return Err(Error::shape("warp", format!("image {}x{} vs depth {}x{}", h, w, dh, dw)));
    }
    let (coords, mask, valid_count) = projected_coords(tape, depth, mat, k)?;
    let warped = tape.grid_sample(source, coords)?;
    let base = pixel_grid(tape, h, w)?;
    let flow = tape.sub(coords, base)?;
    Ok(WarpOutput { mask, warped, flow, coords, valid_count })
}

#[derive(Debug, Clone, Copy)]
pub struct PseudoInverseFlow {
    /// Visibility of frame-A pixels in frame B (constant).
    pub mask: TensorId,
    /// Pseudo-inverse flow: `-F_{B->A}` sampled at the projected coords.
    pub interpolated: TensorId,
    /// Directly computed `F_{A->B}`.
    pub direct: TensorId,
    pub valid_count: usize,
}

/// Same coordinate pipeline as [`warp`] but interpolating the negated
/// reverse flow instead of image values, yielding the pseudo-inverse flow
/// alongside the direct one.
pub fn pseudo_inverse_flow<T: Real>(
    tape: &mut Tape<T>,
    flow_b_to_a: TensorId,
    depth_a: TensorId,
    mat_a_to_b: TensorId,
    k: &Intrinsics,
) -> Result<PseudoInverseFlow> {
    let (c, _, _) = tape.tensor(flow_b_to_a).chw()?;
    if c != 2 {
        return Err(Error::shape("pseudo_inverse_flow", "flow must be [2,H,W]"));
    }
    let (coords, mask, valid_count) = projected_coords(tape, depth_a, mat_a_to_b, k)?;
    let neg = tape.neg(flow_b_to_a)?;
    let interpolated = tape.grid_sample(neg, coords)?;
    let (_, h, w) = tape.tensor(depth_a).chw()?;
    let base = pixel_grid(tape, h, w)?;
    let direct = tape.sub(coords, base)?;
    Ok(PseudoInverseFlow { mask, interpolated, direct, valid_count })
}

/// Standard 4-neighbor bilinear interpolation of `grid[C,H,W]` at
/// `coords[2,H',W']`; out-of-bounds coordinates clamp to the border.
pub fn bilinear_sample<T: Real>(
    tape: &mut Tape<T>,
    grid: TensorId,
    coords: TensorId,
) -> Result<TensorId> {
    tape.grid_sample(grid, coords)
}
