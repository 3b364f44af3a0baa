//! Pinhole camera intrinsics.

use crate::error::{Error, Result};

/// Focal lengths and principal point in pixels. Pixel centers sit on integer
/// coordinates with the origin at the top-left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::Data(format!("focal lengths must be positive, got {fx}, {fy}")));
        }
        Ok(Intrinsics { fx, fy, cx, cy })
    }

    pub fn principal_point_inside(&self, width: usize, height: usize) -> bool {
        self.cx >= 0.0
            && self.cx <= (width - 1) as f64
            && self.cy >= 0.0
            && self.cy <= (height - 1) as f64
    }

    /// Intrinsics after resizing the image, keeping pixel centers aligned:
    /// a source pixel `u` maps to `(u + 0.5) * s - 0.5`.
    pub fn rescaled(&self, from: (usize, usize), to: (usize, usize)) -> Intrinsics {
        let sx = to.0 as f64 / from.0 as f64;
        let sy = to.1 as f64 / from.1 as f64;
        Intrinsics {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: (self.cx + 0.5) * sx - 0.5,
            cy: (self.cy + 0.5) * sy - 0.5,
        }
    }

    /// Project a camera-space point; returns pixel coordinates.
    pub fn project(&self, x: f64, y: f64, z: f64) -> (f64, f64) {
        (self.fx * x / z + self.cx, self.fy * y / z + self.cy)
    }
}
