//! Bilinear grid sampling kernels (forward + gradients).
//!
//! `grid` is `[C, H, W]`; `coords` is `[2, Ho, Wo]` with channel 0 holding x
//! (width direction) and channel 1 holding y. Pixel centers sit on integer
//! coordinates with the origin at the top-left. Out-of-bounds coordinates
//! clamp to the border for value purposes — validity is the caller's mask
//! problem — and clamped coordinates receive zero gradient.

use crate::real::Real;

pub(crate) fn grid_sample_forward<T: Real>(
    grid: &[T],
    coords: &[T],
    c: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let plane = oh * ow;
    let mut out = vec![T::zero(); c * plane];
    for i in 0..plane {
        let u = coords[i].as_f64();
        let v = coords[plane + i].as_f64();
        let uc = u.clamp(0.0, (w - 1) as f64);
        let vc = v.clamp(0.0, (h - 1) as f64);
        let x0 = uc.floor() as usize;
        let y0 = vc.floor() as usize;
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let fx = uc - x0 as f64;
        let fy = vc - y0 as f64;
        for ch in 0..c {
            let base = ch * h * w;
            let g00 = grid[base + y0 * w + x0].as_f64();
            let g01 = grid[base + y0 * w + x1].as_f64();
            let g10 = grid[base + y1 * w + x0].as_f64();
            let g11 = grid[base + y1 * w + x1].as_f64();
            let top = g00 + fx * (g01 - g00);
            let bot = g10 + fx * (g11 - g10);
            out[ch * plane + i] = T::from_f64(top + fy * (bot - top));
        }
    }
    out
}

pub(crate) fn grid_sample_backward<T: Real>(
    grid: &[T],
    coords: &[T],
    g_out: &[T],
    c: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
) -> (Vec<T>, Vec<T>) {
    let plane = oh * ow;
    let mut d_grid = vec![0f64; grid.len()];
    let mut d_coords = vec![0f64; coords.len()];
    for i in 0..plane {
        let u = coords[i].as_f64();
        let v = coords[plane + i].as_f64();
        let u_in = (0.0..=(w - 1) as f64).contains(&u);
        let v_in = (0.0..=(h - 1) as f64).contains(&v);
        let uc = u.clamp(0.0, (w - 1) as f64);
        let vc = v.clamp(0.0, (h - 1) as f64);
        let x0 = uc.floor() as usize;
        let y0 = vc.floor() as usize;
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let fx = uc - x0 as f64;
        let fy = vc - y0 as f64;
        for ch in 0..c {
            let base = ch * h * w;
            let gv = g_out[ch * plane + i].as_f64();
            if gv == 0.0 {
                continue;
            }
            let g00 = grid[base + y0 * w + x0].as_f64();
            let g01 = grid[base + y0 * w + x1].as_f64();
            let g10 = grid[base + y1 * w + x0].as_f64();
            let g11 = grid[base + y1 * w + x1].as_f64();
            d_grid[base + y0 * w + x0] += gv * (1.0 - fx) * (1.0 - fy);
            d_grid[base + y0 * w + x1] += gv * fx * (1.0 - fy);
            d_grid[base + y1 * w + x0] += gv * (1.0 - fx) * fy;
            d_grid[base + y1 * w + x1] += gv * fx * fy;
            if u_in {
                d_coords[i] += gv * ((1.0 - fy) * (g01 - g00) + fy * (g11 - g10));
            }
            if v_in {
                d_coords[plane + i] += gv * ((1.0 - fx) * (g10 - g00) + fx * (g11 - g01));
            }
        }
    }
    (
        d_grid.into_iter().map(T::from_f64).collect(),
        d_coords.into_iter().map(T::from_f64).collect(),
    )
}
