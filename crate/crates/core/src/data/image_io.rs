//! PNG IO and resampling.
//!
//! Images are 8-bit RGB; depth maps are 16-bit single-channel PNGs holding
//! meters times 256 with 0 meaning "no measurement" (the usual sparse-depth
//! convention).

use crate::data::types::{DepthBuf, ImageBuf};
use crate::error::{Error, Result};
use crate::geometry::Intrinsics;
use image::{ImageBuffer, Luma, Rgb};
use std::path::Path;

pub fn read_image(path: &Path) -> Result<ImageBuf> {
    let img = image::open(path)
        .map_err(|e| Error::Data(format!("cannot decode image {}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0f32; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            let px = img.get_pixel(x as u32, y as u32);
            for c in 0..3 {
                data[(c * h + y) * w + x] = px[c] as f32 / 255.0;
            }
        }
    }
    ImageBuf::new(h, w, data)
}

pub fn write_image(path: &Path, img: &ImageBuf) -> Result<()> {
    let mut out: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::new(img.width as u32, img.height as u32);
    for y in 0..img.height {
        for x in 0..img.width {
            let px = [
                (img.get(0, y, x).clamp(0.0, 1.0) * 255.0).round() as u8,
                (img.get(1, y, x).clamp(0.0, 1.0) * 255.0).round() as u8,
                (img.get(2, y, x).clamp(0.0, 1.0) * 255.0).round() as u8,
            ];
            out.put_pixel(x as u32, y as u32, Rgb(px));
        }
    }
    out.save(path)
        .map_err(|e| Error::Data(format!("cannot write image {}: {e}", path.display())))
}

pub fn read_depth(path: &Path) -> Result<DepthBuf> {
    let img = image::open(path)
        .map_err(|e| Error::Data(format!("cannot decode depth {}: {e}", path.display())))?
        .to_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values = img.pixels().map(|p| p[0] as f64 / 256.0).collect();
    DepthBuf::new(h, w, values)
}

pub fn write_depth(path: &Path, depth: &DepthBuf) -> Result<()> {
    let mut out: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::new(depth.width as u32, depth.height as u32);
    for y in 0..depth.height {
        for x in 0..depth.width {
            let v = depth.values[y * depth.width + x].max(0.0) * 256.0;
            out.put_pixel(x as u32, y as u32, Luma([v.round().min(u16::MAX as f64) as u16]));
        }
    }
    out.save(path)
        .map_err(|e| Error::Data(format!("cannot write depth {}: {e}", path.display())))
}

/// Bilinear resize with pixel-center alignment; a same-size target is an
/// exact copy.
pub fn resize_bilinear(img: &ImageBuf, target_w: usize, target_h: usize) -> ImageBuf {
    if target_w == img.width && target_h == img.height {
        return img.clone();
    }
    let sx = img.width as f32 / target_w as f32;
    let sy = img.height as f32 / target_h as f32;
    let mut data = vec![0f32; 3 * target_h * target_w];
    for y in 0..target_h {
        let v = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, (img.height - 1) as f32);
        let y0 = v.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let fy = v - y0 as f32;
        for x in 0..target_w {
            let u = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, (img.width - 1) as f32);
            let x0 = u.floor() as usize;
            let x1 = (x0 + 1).min(img.width - 1);
            let fx = u - x0 as f32;
            for c in 0..3 {
                let g00 = img.get(c, y0, x0);
                let g01 = img.get(c, y0, x1);
                let g10 = img.get(c, y1, x0);
                let g11 = img.get(c, y1, x1);
                let top = g00 + fx * (g01 - g00);
                let bot = g10 + fx * (g11 - g10);
                data[(c * target_h + y) * target_w + x] = top + fy * (bot - top);
            }
        }
    }
    ImageBuf { height: target_h, width: target_w, data }
}

/// Nearest-neighbor resize for sparse depth (bilinear would smear the
/// missing-value zeros into neighbors).
pub fn resize_depth_nearest(depth: &DepthBuf, target_w: usize, target_h: usize) -> DepthBuf {
    if target_w == depth.width && target_h == depth.height {
        return depth.clone();
    }
    let sx = depth.width as f64 / target_w as f64;
    let sy = depth.height as f64 / target_h as f64;
    let mut values = vec![0f64; target_h * target_w];
    for y in 0..target_h {
        let v = (((y as f64 + 0.5) * sy - 0.5).round().max(0.0) as usize).min(depth.height - 1);
        for x in 0..target_w {
            let u = (((x as f64 + 0.5) * sx - 0.5).round().max(0.0) as usize).min(depth.width - 1);
            values[y * target_w + x] = depth.values[v * depth.width + u];
        }
    }
    DepthBuf { height: target_h, width: target_w, values }
}

/// Resize an image to the configured network input and rescale the
/// intrinsics by the same per-axis factors.
pub fn preprocess(
    img: &ImageBuf,
    k: &Intrinsics,
    target_w: usize,
    target_h: usize,
) -> Result<(ImageBuf, Intrinsics)> {
    if img.width == 0 || img.height == 0 || target_w == 0 || target_h == 0 {
        return Err(Error::Data("preprocess: zero-sized image".into()));
    }
    let resized = resize_bilinear(img, target_w, target_h);
    let k2 = k.rescaled((img.width, img.height), (target_w, target_h));
    Ok((resized, k2))
}
