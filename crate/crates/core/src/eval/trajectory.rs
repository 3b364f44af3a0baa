//! Trajectory integration, alignment and the odometry evaluation criterion
//! (average translation and rotation errors over fixed-length
//! sub-sequences), plus the 3x4 row-major pose-file format.

use crate::error::{Error, Result};
use crate::geometry::PoseSE3;
use nalgebra::{Matrix4, Vector3};
use std::path::Path;

/// Ordered camera-to-world absolute poses, one per frame.
pub type Trajectory = Vec<Matrix4<f64>>;

/// Integrate frame-to-frame relatives: `M_0 = I`,
/// `M_t = M_{t-1} * matrix(P_{t->t-1})` — the inverse of the relative-pose
/// extraction `P_{t->t-1} = inv(M_{t-1}) * M_t`. No drift correction.
pub fn integrate_trajectory(rel_poses: &[PoseSE3]) -> Trajectory {
    let mut traj = Vec::with_capacity(rel_poses.len() + 1);
    let mut m = Matrix4::identity();
    traj.push(m);
    for p in rel_poses {
        m *= p.matrix();
        traj.push(m);
    }
    traj
}

/// Recover the relatives from consecutive absolutes.
pub fn extract_relatives(traj: &[Matrix4<f64>]) -> Result<Vec<PoseSE3>> {
    let mut rels = Vec::with_capacity(traj.len().saturating_sub(1));
    for t in 1..traj.len() {
        let inv = traj[t - 1]
            .try_inverse()
            .ok_or_else(|| Error::Numeric("singular trajectory pose".into()))?;
        rels.push(PoseSE3::from_matrix(&(inv * traj[t]))?);
    }
    Ok(rels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignMode {
    None,
    /// Least-squares scale about the first-frame-anchored origin
    /// (for scale-ambiguous monocular predictions).
    Scale,
}

impl std::str::FromStr for AlignMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AlignMode::None),
            "scale" => Ok(AlignMode::Scale),
            other => Err(Error::Config(format!("unknown alignment mode '{other}'"))),
        }
    }
}

fn positions(traj: &[Matrix4<f64>]) -> Vec<Vector3<f64>> {
    traj.iter().map(|m| Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)])).collect()
}

/// Align predicted translations to ground truth. Scale mode solves
/// `argmin_s sum ||s p_i - g_i||^2 = <p,g> / <p,p>` over first-frame
/// anchored positions and scales the translations; rotations are untouched.
/// Returns the aligned trajectory and the scale used.
pub fn align(pred: &[Matrix4<f64>], gt: &[Matrix4<f64>], mode: AlignMode) -> Result<(Trajectory, f64)> {
    if pred.len() != gt.len() {
        return Err(Error::shape("align", format!("{} vs {} poses", pred.len(), gt.len())));
    }
    match mode {
        AlignMode::None => Ok((pred.to_vec(), 1.0)),
        AlignMode::Scale => {
            let p = positions(pred);
            let g = positions(gt);
            let p0 = p[0];
            let g0 = g[0];
            let mut dot = 0.0;
            let mut norm = 0.0;
            for i in 0..p.len() {
                let pi = p[i] - p0;
                let gi = g[i] - g0;
                dot += pi.dot(&gi);
                norm += pi.dot(&pi);
            }
            if norm == 0.0 {
                return Err(Error::Numeric(
                    "align: degenerate (all-zero) predicted positions".into(),
                ));
            }
            let s = dot / norm;
            let out = pred
                .iter()
                .map(|m| {
                    let mut m2 = *m;
                    for r in 0..3 {
                        m2[(r, 3)] = p0[r] + s * (m[(r, 3)] - p0[r]);
                    }
                    m2
                })
                .collect();
            Ok((out, s))
        }
    }
}

/// Errors accumulated at one ladder length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LengthBucket {
    pub length_m: f64,
    pub t_err_pct: f64,
    pub r_err_deg_per_m: f64,
    pub segments: usize,
}

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdometryMetrics {
    pub per_length: Vec<LengthBucket>,
    pub t_err_pct: f64,
    pub r_err_deg_per_m: f64,
    /// Number of (start, length) segments evaluated; zero flags a
    /// trajectory shorter than the shortest ladder length.
    pub segments: usize,
}

/// The default evaluation ladder: 100 m to 800 m in steps of 100 m.
pub fn default_ladder() -> Vec<f64> {
    (1..=8).map(|i| 100.0 * i as f64).collect()
}

fn rotation_angle(m: &Matrix4<f64>) -> f64 {
    let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
    (0.5 * (trace - 1.0)).clamp(-1.0, 1.0).acos()
}

/// Average translation (%) and rotation (deg/m) errors over every
/// sub-sequence whose ground-truth path length reaches each ladder entry.
pub fn odometry_metrics(
    pred: &[Matrix4<f64>],
    gt: &[Matrix4<f64>],
    ladder: &[f64],
) -> Result<OdometryMetrics> {
    if pred.len() != gt.len() {
        return Err(Error::shape(
            "odometry_metrics",
            format!("{} vs {} poses", pred.len(), gt.len()),
        ));
    }
    let n = gt.len();
    let gpos = positions(gt);
    let mut dist = vec![0.0; n];
    for i in 1..n {
        dist[i] = dist[i - 1] + (gpos[i] - gpos[i - 1]).norm();
    }

    let mut buckets: Vec<(f64, f64, f64, usize)> =
        ladder.iter().map(|&l| (l, 0.0, 0.0, 0usize)).collect();
    for start in 0..n {
        for bucket in buckets.iter_mut() {
            let target = dist[start] + bucket.0;
            // First frame whose cumulative path length reaches the target.
            let end = match (start + 1..n).find(|&e| dist[e] >= target) {
                Some(e) => e,
                None => continue,
            };
            let seg_len = dist[end] - dist[start];
            if seg_len <= 0.0 {
                continue;
            }
            let gt_rel = gt[start]
                .try_inverse()
                .ok_or_else(|| Error::Numeric("singular gt pose".into()))?
                * gt[end];
            let pred_rel = pred[start]
                .try_inverse()
                .ok_or_else(|| Error::Numeric("singular predicted pose".into()))?
                * pred[end];
            let e = gt_rel
                .try_inverse()
                .ok_or_else(|| Error::Numeric("singular relative pose".into()))?
                * pred_rel;
            let t_err = Vector3::new(e[(0, 3)], e[(1, 3)], e[(2, 3)]).norm() / seg_len;
            let r_err = rotation_angle(&e).to_degrees() / seg_len;
            bucket.1 += t_err;
            bucket.2 += r_err;
            bucket.3 += 1;
        }
    }

    let mut per_length = Vec::new();
    let (mut t_sum, mut r_sum, mut count) = (0.0, 0.0, 0usize);
    for (l, t, r, c) in buckets {
        if c > 0 {
            per_length.push(LengthBucket {
                length_m: l,
                t_err_pct: 100.0 * t / c as f64,
                r_err_deg_per_m: r / c as f64,
                segments: c,
            });
        }
        t_sum += t;
        r_sum += r;
        count += c;
    }
    if count == 0 {
        return Ok(OdometryMetrics {
            per_length,
            t_err_pct: 0.0,
            r_err_deg_per_m: 0.0,
            segments: 0,
        });
    }
    Ok(OdometryMetrics {
        per_length,
        t_err_pct: 100.0 * t_sum / count as f64,
        r_err_deg_per_m: r_sum / count as f64,
        segments: count,
    })
}

// ───────────────────── pose file IO ─────────────────────

/// Write one line per frame: 12 space-separated reals, the 3x4 row-major
/// camera-to-world block. Values use the shortest round-trip decimal form.
pub fn write_trajectory(path: &Path, traj: &[Matrix4<f64>]) -> Result<()> {
    let mut text = String::new();
    for m in traj {
        let mut cells = Vec::with_capacity(12);
        for r in 0..3 {
            for c in 0..4 {
                cells.push(format!("{}", m[(r, c)]));
            }
        }
        text.push_str(&cells.join(" "));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut traj = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let nums: Vec<f64> = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|_| {
                    Error::Data(format!("{}:{}: bad number '{t}'", path.display(), lineno + 1))
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
        traj.push(m);
    }
    Ok(traj)
}
