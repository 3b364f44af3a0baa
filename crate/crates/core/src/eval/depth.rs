//! Depth metrics under the standard monocular evaluation protocol: errors
//! over pixels with valid ground truth up to a depth cap, with optional
//! per-image median scale alignment for relative-scale predictions.

use crate::data::DepthBuf;
use crate::error::{Error, Result};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleAlign {
    None,
    /// Multiply predictions by `median(gt)/median(pred)` over valid pixels.
    Median,
}

impl std::str::FromStr for ScaleAlign {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ScaleAlign::None),
            "median" => Ok(ScaleAlign::Median),
            other => Err(Error::Config(format!("unknown scale alignment '{other}'"))),
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Metrics over pixels with `0 < gt <= cap`. Predictions must be strictly
/// positive; they are clamped to the cap before comparison.
pub fn depth_metrics(
    pred: &DepthBuf,
    gt: &DepthBuf,
    cap: f64,
    align: ScaleAlign,
) -> Result<DepthMetrics> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(Error::shape(
            "depth_metrics",
            format!(
                "pred {}x{} vs gt {}x{}",
                pred.width, pred.height, gt.width, gt.height
            ),
        ));
    }
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for (&p, &g) in pred.values.iter().zip(&gt.values) {
        if g > 0.0 && g <= cap {
            if p <= 0.0 {
                return Err(Error::Numeric("depth_metrics: nonpositive prediction".into()));
            }
            pairs.push((p, g));
        }
    }
    if pairs.is_empty() {
        return Err(Error::Numeric("depth_metrics: no valid ground-truth pixels".into()));
    }
    let scale = match align {
        ScaleAlign::None => 1.0,
        ScaleAlign::Median => {
            let mut ps: Vec<f64> = pairs.iter().map(|&(p, _)| p).collect();
            let mut gs: Vec<f64> = pairs.iter().map(|&(_, g)| g).collect();
            median(&mut gs) / median(&mut ps)
        }
    };
    let n = pairs.len() as f64;
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log) = (0.0, 0.0, 0.0, 0.0);
    let (mut a1, mut a2, mut a3) = (0usize, 0usize, 0usize);
    for &(p0, g) in &pairs {
        let p = (p0 * scale).min(cap);
        let d = p - g;
        abs_rel += d.abs() / g;
        sq_rel += d * d / g;
        sq += d * d;
        let dl = p.ln() - g.ln();
        sq_log += dl * dl;
        let ratio = (p / g).max(g / p);
        if ratio < 1.25 {
            a1 += 1;
        }
        if ratio < 1.25f64.powi(2) {
            a2 += 1;
        }
        if ratio < 1.25f64.powi(3) {
            a3 += 1;
        }
    }
    Ok(DepthMetrics {
        abs_rel: abs_rel / n,
        sq_rel: sq_rel / n,
        rmse: (sq / n).sqrt(),
        rmse_log: (sq_log / n).sqrt(),
        delta1: a1 as f64 / n,
        delta2: a2 as f64 / n,
        delta3: a3 as f64 / n,
    })
}

/// Mean of per-frame metrics.
pub fn aggregate_depth_metrics(all: &[DepthMetrics]) -> DepthMetrics {
    let n = all.len().max(1) as f64;
    let mut acc = DepthMetrics {
        abs_rel: 0.0,
        sq_rel: 0.0,
        rmse: 0.0,
        rmse_log: 0.0,
        delta1: 0.0,
        delta2: 0.0,
        delta3: 0.0,
    };
    for m in all {
        acc.abs_rel += m.abs_rel;
        acc.sq_rel += m.sq_rel;
        acc.rmse += m.rmse;
        acc.rmse_log += m.rmse_log;
        acc.delta1 += m.delta1;
        acc.delta2 += m.delta2;
        acc.delta3 += m.delta3;
    }
    acc.abs_rel /= n;
    acc.sq_rel /= n;
    acc.rmse /= n;
    acc.rmse_log /= n;
    acc.delta1 /= n;
    acc.delta2 /= n;
    acc.delta3 /= n;
    acc
}
