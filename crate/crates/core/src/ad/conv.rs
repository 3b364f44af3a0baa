//! Scalar convolution / transposed-convolution kernels.
//!
//! Layout conventions: activations are `[C, H, W]`, convolution weights are
//! `[Cout, Cin, kh, kw]`, transposed-convolution weights are
//! `[Cin, Cout, kh, kw]`. Padding is "same": `out = ceil(in / stride)` with
//! the shortfall split evenly and the extra pixel at the end. Dot products
//! accumulate in f64 so 32-bit runs stay deterministic and well conditioned.

use crate::real::Real;

/// Output length and leading pad for a "same"-padded dimension.
pub(crate) fn same_pad(in_len: usize, k: usize, stride: usize) -> (usize, usize) {
    let out = in_len.div_ceil(stride);
    let pad_total = ((out - 1) * stride + k).saturating_sub(in_len);
    (out, pad_total / 2)
}

pub(crate) struct ConvDims {
    pub ci: usize,
    pub h: usize,
    pub w: usize,
    pub co: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub oh: usize,
    pub ow: usize,
    pub py: usize,
    pub px: usize,
}

impl ConvDims {
    pub fn new(ci: usize, h: usize, w: usize, co: usize, kh: usize, kw: usize, stride: usize) -> Self {
        let (oh, py) = same_pad(h, kh, stride);
        let (ow, px) = same_pad(w, kw, stride);
        ConvDims { ci, h, w, co, kh, kw, stride, oh, ow, py, px }
    }
}

pub(crate) fn conv2d_forward<T: Real>(x: &[T], wt: &[T], d: &ConvDims) -> Vec<T> {
    let mut out = vec![T::zero(); d.co * d.oh * d.ow];
    for o in 0..d.co {
        for oy in 0..d.oh {
            for ox in 0..d.ow {
                let mut acc = 0f64;
                for c in 0..d.ci {
                    for ky in 0..d.kh {
                        let iy = (oy * d.stride + ky) as isize - d.py as isize;
                        if iy < 0 || iy >= d.h as isize {
                            continue;
                        }
                        let row = (c * d.h + iy as usize) * d.w;
                        let wrow = ((o * d.ci + c) * d.kh + ky) * d.kw;
                        for kx in 0..d.kw {
                            let ix = (ox * d.stride + kx) as isize - d.px as isize;
                            if ix < 0 || ix >= d.w as isize {
                                continue;
                            }
                            acc += x[row + ix as usize].as_f64() * wt[wrow + kx].as_f64();
                        }
                    }
                }
                out[(o * d.oh + oy) * d.ow + ox] = T::from_f64(acc);
            }
        }
    }
    out
}

/// Gradients w.r.t. input and weight given upstream `g` of shape `[Cout, oh, ow]`.
pub(crate) fn conv2d_backward<T: Real>(
    x: &[T],
    wt: &[T],
    g: &[T],
    d: &ConvDims,
) -> (Vec<T>, Vec<T>) {
    let mut dx = vec![0f64; x.len()];
    let mut dw = vec![0f64; wt.len()];
    for o in 0..d.co {
        for oy in 0..d.oh {
            for ox in 0..d.ow {
                let gv = g[(o * d.oh + oy) * d.ow + ox].as_f64();
                if gv == 0.0 {
                    continue;
                }
                for c in 0..d.ci {
                    for ky in 0..d.kh {
                        let iy = (oy * d.stride + ky) as isize - d.py as isize;
                        if iy < 0 || iy >= d.h as isize {
                            continue;
                        }
                        let row = (c * d.h + iy as usize) * d.w;
                        let wrow = ((o * d.ci + c) * d.kh + ky) * d.kw;
                        for kx in 0..d.kw {
                            let ix = (ox * d.stride + kx) as isize - d.px as isize;
                            if ix < 0 || ix >= d.w as isize {
                                continue;
                            }
                            dx[row + ix as usize] += gv * wt[wrow + kx].as_f64();
                            dw[wrow + kx] += gv * x[row + ix as usize].as_f64();
                        }
                    }
                }
            }
        }
    }
    (
        dx.into_iter().map(T::from_f64).collect(),
        dw.into_iter().map(T::from_f64).collect(),
    )
}

/// Transposed convolution dims. The output size is supplied by the caller
/// (mirrors a recorded encoder size); padding is whatever a same-padded
/// forward convolution from `(oh, ow)` down to `(h, w)` would use, making the
/// operation the exact adjoint of that convolution.
pub(crate) struct DeconvDims {
    pub ci: usize,
    pub h: usize,
    pub w: usize,
    pub co: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub oh: usize,
    pub ow: usize,
    pub py: usize,
    pub px: usize,
}

impl DeconvDims {
    pub fn new(
        ci: usize,
        h: usize,
        w: usize,
        co: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        oh: usize,
        ow: usize,
    ) -> Option<Self> {
        let (h_check, py) = same_pad(oh, kh, stride);
        let (w_check, px) = same_pad(ow, kw, stride);
        if h_check != h || w_check != w {
            return None;
        }
        Some(DeconvDims { ci, h, w, co, kh, kw, stride, oh, ow, py, px })
    }
}

pub(crate) fn deconv2d_forward<T: Real>(x: &[T], wt: &[T], d: &DeconvDims) -> Vec<T> {
    let mut out = vec![0f64; d.co * d.oh * d.ow];
    for c in 0..d.ci {
        for iy in 0..d.h {
            for ix in 0..d.w {
                let xv = x[(c * d.h + iy) * d.w + ix].as_f64();
                if xv == 0.0 {
                    continue;
                }
                for o in 0..d.co {
                    for ky in 0..d.kh {
                        let ty = (iy * d.stride + ky) as isize - d.py as isize;
                        if ty < 0 || ty >= d.oh as isize {
                            continue;
                        }
                        let orow = (o * d.oh + ty as usize) * d.ow;
                        let wrow = ((c * d.co + o) * d.kh + ky) * d.kw;
                        for kx in 0..d.kw {
                            let tx = (ix * d.stride + kx) as isize - d.px as isize;
                            if tx < 0 || tx >= d.ow as isize {
                                continue;
                            }
                            out[orow + tx as usize] += xv * wt[wrow + kx].as_f64();
                        }
                    }
                }
            }
        }
    }
    out.into_iter().map(T::from_f64).collect()
}

pub(crate) fn deconv2d_backward<T: Real>(
    x: &[T],
    wt: &[T],
    g: &[T],
    d: &DeconvDims,
) -> (Vec<T>, Vec<T>) {
    let mut dx = vec![0f64; x.len()];
    let mut dw = vec![0f64; wt.len()];
    for c in 0..d.ci {
        for iy in 0..d.h {
            for ix in 0..d.w {
                let xv = x[(c * d.h + iy) * d.w + ix].as_f64();
                let mut acc = 0f64;
                for o in 0..d.co {
                    for ky in 0..d.kh {
                        let ty = (iy * d.stride + ky) as isize - d.py as isize;
                        if ty < 0 || ty >= d.oh as isize {
                            continue;
                        }
                        let orow = (o * d.oh + ty as usize) * d.ow;
                        let wrow = ((c * d.co + o) * d.kh + ky) * d.kw;
                        for kx in 0..d.kw {
                            let tx = (ix * d.stride + kx) as isize - d.px as isize;
                            if tx < 0 || tx >= d.ow as isize {
                                continue;
                            }
                            let gv = g[orow + tx as usize].as_f64();
                            acc += gv * wt[wrow + kx].as_f64();
                            dw[wrow + kx] += gv * xv;
                        }
                    }
                }
                dx[(c * d.h + iy) * d.w + ix] = acc;
            }
        }
    }
    (
        dx.into_iter().map(T::from_f64).collect(),
        dw.into_iter().map(T::from_f64).collect(),
    )
}

/// Plain dense matmul `[m,k] x [k,n]`, f64 accumulation.
pub(crate) fn matmul_forward<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0f64;
            for l in 0..k {
                acc += a[i * k + l].as_f64() * b[l * n + j].as_f64();
            }
            out[i * n + j] = T::from_f64(acc);
        }
    }
    out
}

pub(crate) fn matmul_backward<T: Real>(
    a: &[T],
    b: &[T],
    g: &[T],
    m: usize,
    k: usize,
    n: usize,
) -> (Vec<T>, Vec<T>) {
    let mut da = vec![0f64; a.len()];
    let mut db = vec![0f64; b.len()];
    for i in 0..m {
        for j in 0..n {
            let gv = g[i * n + j].as_f64();
            for l in 0..k {
                da[i * k + l] += gv * b[l * n + j].as_f64();
                db[l * n + j] += gv * a[i * k + l].as_f64();
            }
        }
    }
    (
        da.into_iter().map(T::from_f64).collect(),
        db.into_iter().map(T::from_f64).collect(),
    )
}
