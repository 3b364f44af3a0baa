//! Training objectives: multi-view reprojection, forward-backward flow
//! consistency, smoothness (edge-aware or ground-truth gradient), absolute
//! inverse-depth supervision, visibility-mask regularization, and their
//! weighted combination.
//!
//! Sums over the image domain are implemented as masked means per pair so
//! the weights stay resolution independent; pairs whose visibility mask is
//! empty contribute zero instead of erroring (distant pairs can lose all
//! overlap).

use crate::ad::{Tape, TensorId};
use crate::error::{Error, Result};
use crate::geometry::{pixel_grid, projected_coords, warp, Intrinsics};
use crate::real::Real;
use serde::{Deserialize, Serialize};

/// Per-term weights of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub depth: f64,
    pub smooth: f64,
    pub flow_consistency: f64,
    pub mask_reg: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { depth: 1.0, smooth: 1.0, flow_consistency: 0.05, mask_reg: 0.05 }
    }
}

/// Reprojection interval weight: `1 / (2^delta - 1)`, so adjacent pairs get
/// weight 1 and the weight decays exponentially with frame distance.
pub fn lambda_weight(delta: usize) -> f64 {
    1.0 / ((1u64 << delta) as f64 - 1.0)
}

/// Which source frames pair with each target in the reprojection loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairMode {
    /// Only `i = t-1` (stage-1 pretraining).
    Consecutive,
    /// Every `i < t` (full multi-view objective).
    All,
}

/// One direction of a processed sequence living on a tape.
///
/// `rel_mats[k]` is the `[4,4]` matrix of the relative pose taking frame
/// `k+1` coordinates into frame `k` coordinates, in this pass's frame
/// ordering.
pub struct SequencePass {
    /// Images `[C,H,W]`, one per frame in pass order.
    pub images: Vec<TensorId>,
    /// Inverse-depth maps `[1,H,W]`.
    pub inv_depths: Vec<TensorId>,
    /// Metric depth maps `[1,H,W]`.
    pub depths: Vec<TensorId>,
    /// Relative pose matrices, length `N-1`.
    pub rel_mats: Vec<TensorId>,
}

#[derive(Debug, Clone, Copy)]
pub struct PairReport {
    pub target: usize,
    pub source: usize,
    pub lambda: f64,
    pub valid: usize,
    pub value: f64,
}

pub struct ReprojectionOutput {
    pub loss: TensorId,
    pub pairs: Vec<PairReport>,
    /// Visibility masks recorded per pair (for the mask regularizer).
    pub masks: Vec<TensorId>,
}

/// Multi-view reprojection: for every ordered pair `i < t`, warp view `i`
/// into view `t` through the composed relative pose and accumulate the
/// lambda-weighted masked mean of `|I_t - warped|`.
pub fn multi_view_reprojection<T: Real>(
    tape: &mut Tape<T>,
    pass: &SequencePass,
    k: &Intrinsics,
    mode: PairMode,
) -> Result<ReprojectionOutput> {
    let n = pass.images.len();
    if n == 0 {
        return Err(Error::Data("reprojection loss over an empty sequence".into()));
    }
    if pass.inv_depths.len() != n || pass.depths.len() != n || pass.rel_mats.len() + 1 != n {
        return Err(Error::shape("multi_view_reprojection", "sequence field lengths disagree"));
    }
    let channels = tape.shape(pass.images[0])[0];
    let mut total: Option<TensorId> = None;
    let mut pairs = Vec::new();
    let mut masks = Vec::new();
    for t in 1..n {
        let mut mat = pass.rel_mats[t - 1];
        for i in (0..t).rev() {
            if i != t - 1 {
                mat = tape.matmul(pass.rel_mats[i], mat)?;
            }
            let lambda = lambda_weight(t - i);
            let out = warp(tape, pass.images[i], pass.depths[t], mat, k)?;
            masks.push(out.mask);
            if out.valid_count == 0 {
                pairs.push(PairReport { target: t, source: i, lambda, valid: 0, value: 0.0 });
                if mode == PairMode::Consecutive {
                    break;
                }
                continue;
            }
            let diff = tape.sub(pass.images[t], out.warped)?;
            let adiff = tape.abs(diff)?;
            let masked = tape.mul_bcast_chan(adiff, out.mask)?;
            let sum = tape.sum(masked)?;
            let scale = lambda / (out.valid_count * channels) as f64;
            let term = tape.affine(sum, scale, 0.0)?;
            pairs.push(PairReport {
                target: t,
                source: i,
                lambda,
                valid: out.valid_count,
                value: tape.scalar_value(term),
            });
            total = Some(match total {
                None => term,
                Some(acc) => tape.add(acc, term)?,
            });
            if mode == PairMode::Consecutive {
                break;
            }
        }
    }
    let loss = match total {
        Some(id) => id,
        None => tape.scalar(0.0),
    };
    Ok(ReprojectionOutput { loss, pairs, masks })
}

/// Depths and mutual poses of one consecutive frame pair.
pub struct FlowPair {
    pub depth_a: TensorId,
    pub depth_b: TensorId,
    pub mat_a_to_b: TensorId,
    pub mat_b_to_a: TensorId,
}

/// Forward-backward flow consistency over consecutive pairs: each side
/// compares its direct flow against the pseudo-inverse interpolated from the
/// negated opposite flow, masked-mean normalized, then averaged over pairs.
pub fn flow_consistency<T: Real>(
    tape: &mut Tape<T>,
    pairs: &[FlowPair],
    k: &Intrinsics,
) -> Result<TensorId> {
    if pairs.is_empty() {
        return Ok(tape.scalar(0.0));
    }
    fn side<T: Real>(
        tape: &mut Tape<T>,
        flow: TensorId,
        other_flow: TensorId,
        coords: TensorId,
        mask: TensorId,
        valid: usize,
    ) -> Result<TensorId> {
        if valid == 0 {
            return Ok(tape.scalar(0.0));
        }
        let neg = tape.neg(other_flow)?;
        let interp = tape.grid_sample(neg, coords)?;
        let diff = tape.sub(flow, interp)?;
        let adiff = tape.abs(diff)?;
        let masked = tape.mul_bcast_chan(adiff, mask)?;
        let sum = tape.sum(masked)?;
        tape.affine(sum, 1.0 / (2 * valid) as f64, 0.0)
    }
    let mut total: Option<TensorId> = None;
    for pair in pairs {
        let (_, h, w) = tape.tensor(pair.depth_a).chw()?;
        let base = pixel_grid(tape, h, w)?;
        let (coords_ab, mask_ab, valid_ab) =
            projected_coords(tape, pair.depth_a, pair.mat_a_to_b, k)?;
        let f_ab = tape.sub(coords_ab, base)?;
        let (coords_ba, mask_ba, valid_ba) =
            projected_coords(tape, pair.depth_b, pair.mat_b_to_a, k)?;
        let f_ba = tape.sub(coords_ba, base)?;

        let term_ab = side(tape, f_ab, f_ba, coords_ab, mask_ab, valid_ab)?;
        let term_ba = side(tape, f_ba, f_ab, coords_ba, mask_ba, valid_ba)?;
        let pair_term = tape.add(term_ab, term_ba)?;
        total = Some(match total {
            None => pair_term,
            Some(acc) => tape.add(acc, pair_term)?,
        });
    }
    tape.affine(total.unwrap(), 1.0 / pairs.len() as f64, 0.0)
}

/// Smoothness flavor: edge-aware (unsupervised) or gradient similarity to
/// ground-truth inverse depth (supervised).
pub enum SmoothnessMode<'a> {
    EdgeAware { images: &'a [TensorId] },
    GtGradient { gt_inv_depths: &'a [TensorId], valid_masks: &'a [TensorId] },
}

/// Per-frame smoothness, mean-normalized and averaged over frames.
///
/// Edge-aware: `mean(|dx xi| e^{-|dx I|} + |dy xi| e^{-|dy I|})` with the
/// image gradient magnitude averaged over color channels. Gt-gradient:
/// `|d xi - d xi_gt|` masked to pixels where both forward-difference
/// endpoints carry valid ground truth.
pub fn smoothness<T: Real>(
    tape: &mut Tape<T>,
    inv_depths: &[TensorId],
    mode: SmoothnessMode<'_>,
) -> Result<TensorId> {
    if inv_depths.is_empty() {
        return Err(Error::Data("smoothness over an empty sequence".into()));
    }
    let mut total: Option<TensorId> = None;
    for (t, &xi) in inv_depths.iter().enumerate() {
        let gx = tape.grad_x(xi)?;
        let gy = tape.grad_y(xi)?;
        let term = match &mode {
            SmoothnessMode::EdgeAware { images } => {
                let igx = tape.grad_x(images[t])?;
                let aigx = tape.abs(igx)?;
                let mgx = tape.mean_chan(aigx)?;
                let igy = tape.grad_y(images[t])?;
                let aigy = tape.abs(igy)?;
                let mgy = tape.mean_chan(aigy)?;
                let nx = tape.neg(mgx)?;
                let ex = tape.exp(nx)?;
                let ny = tape.neg(mgy)?;
                let ey = tape.exp(ny)?;
                let agx = tape.abs(gx)?;
                let agy = tape.abs(gy)?;
                let wx = tape.mul(agx, ex)?;
                let wy = tape.mul(agy, ey)?;
                let both = tape.add(wx, wy)?;
                tape.mean(both)?
            }
            SmoothnessMode::GtGradient { gt_inv_depths, valid_masks } => {
                let (_, h, w) = tape.tensor(xi).chw()?;
                let gt = gt_inv_depths[t];
                let vm = tape.values(valid_masks[t]).to_vec();
                // A forward difference is supervised only when both its
                // endpoints carry valid ground truth.
                let mut mx = vec![T::zero(); h * w];
                let mut my = vec![T::zero(); h * w];
                let mut count = 0usize;
                for y in 0..h {
                    for x in 0..w {
                        let i = y * w + x;
                        if x + 1 < w && vm[i] > T::zero() && vm[i + 1] > T::zero() {
                            mx[i] = T::one();
                            count += 1;
                        }
                        if y + 1 < h && vm[i] > T::zero() && vm[i + w] > T::zero() {
                            my[i] = T::one();
                            count += 1;
                        }
                    }
                }
                let ggx = tape.grad_x(gt)?;
                let ggy = tape.grad_y(gt)?;
                let dx = tape.sub(gx, ggx)?;
                let dy = tape.sub(gy, ggy)?;
                let adx = tape.abs(dx)?;
                let ady = tape.abs(dy)?;
                if count == 0 {
                    tape.scalar(0.0)
                } else {
                    let mxt = tape.constant(crate::ad::Tensor::new(vec![1, h, w], mx)?);
                    let myt = tape.constant(crate::ad::Tensor::new(vec![1, h, w], my)?);
                    let wx = tape.mul(adx, mxt)?;
                    let wy = tape.mul(ady, myt)?;
                    let both = tape.add(wx, wy)?;
                    let sum = tape.sum(both)?;
                    tape.affine(sum, 1.0 / count as f64, 0.0)?
                }
            }
        };
        total = Some(match total {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    tape.affine(total.unwrap(), 1.0 / inv_depths.len() as f64, 0.0)
}

/// Mean `|xi - xi_gt|` over valid ground-truth pixels across the sequence.
pub fn depth_supervision<T: Real>(
    tape: &mut Tape<T>,
    inv_depths: &[TensorId],
    gt_inv_depths: &[TensorId],
    valid_masks: &[TensorId],
) -> Result<TensorId> {
    if inv_depths.len() != gt_inv_depths.len() || inv_depths.len() != valid_masks.len() {
        return Err(Error::shape("depth_supervision", "sequence lengths disagree"));
    }
    let mut total: Option<TensorId> = None;
    let mut count = 0usize;
    for t in 0..inv_depths.len() {
        let diff = tape.sub(inv_depths[t], gt_inv_depths[t])?;
        let adiff = tape.abs(diff)?;
        let masked = tape.mul(adiff, valid_masks[t])?;
        let sum = tape.sum(masked)?;
        count += tape.values(valid_masks[t]).iter().filter(|v| **v > T::zero()).count();
        total = Some(match total {
            None => sum,
            Some(acc) => tape.add(acc, sum)?,
        });
    }
    if count == 0 {
        return Err(Error::Numeric("depth supervision: zero valid ground-truth pixels".into()));
    }
    tape.affine(total.unwrap(), 1.0 / count as f64, 0.0)
}

/// Mean fraction of masked-out pixels, `mean(1 - omega)`, averaged over
/// masks. Constant (inert) while the visibility masks are geometric.
pub fn mask_regularization<T: Real>(tape: &mut Tape<T>, masks: &[TensorId]) -> Result<TensorId> {
    if masks.is_empty() {
        return Ok(tape.scalar(0.0));
    }
    let mut total: Option<TensorId> = None;
    for &m in masks {
        let inv = tape.affine(m, -1.0, 1.0)?;
        let term = tape.mean(inv)?;
        total = Some(match total {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    tape.affine(total.unwrap(), 1.0 / masks.len() as f64, 0.0)
}

/// Ground truth for supervised training, in forward (original) frame order.
pub struct Supervision<'a> {
    pub gt_inv_depths: &'a [TensorId],
    pub valid_masks: &'a [TensorId],
}

pub struct TotalLossInputs<'a> {
    pub fw: &'a SequencePass,
    pub bw: &'a SequencePass,
    /// Consecutive-pair inputs for flow consistency.
    pub flow_pairs: &'a [FlowPair],
    pub supervision: Option<Supervision<'a>>,
    pub pair_mode: PairMode,
}

/// Per-term scalars plus the weighted total of one training step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub reprojection_fw: f64,
    pub reprojection_bw: f64,
    pub flow_consistency: f64,
    pub smoothness: f64,
    pub depth: f64,
    pub mask_reg: f64,
    pub total: f64,
}

impl LossReport {
    /// The weighted sum of the stored terms (for cross-checking `total`).
    pub fn weighted_sum(&self, w: &LossWeights, supervised: bool) -> f64 {
        let mut s = self.reprojection_fw
            + self.reprojection_bw
            + w.smooth * self.smoothness
            + w.flow_consistency * self.flow_consistency
            + w.mask_reg * self.mask_reg;
        if supervised {
            s += w.depth * self.depth;
        }
        s
    }
}

/// Assemble the full objective on the tape. The unsupervised total is
/// `L_fw + L_bw + w_smooth L_smooth + w_fc L_fc + w_reg L_reg`; supervision
/// adds `w_depth L_depth` and switches smoothness to gt-gradient mode.
/// Smoothness and depth supervision cover the depth maps of both passes.
pub fn total_loss<T: Real>(
    tape: &mut Tape<T>,
    inputs: &TotalLossInputs<'_>,
    k: &Intrinsics,
    weights: &LossWeights,
) -> Result<(TensorId, LossReport)> {
    let n = inputs.fw.images.len();
    let fw = multi_view_reprojection(tape, inputs.fw, k, inputs.pair_mode)?;
    let bw = multi_view_reprojection(tape, inputs.bw, k, inputs.pair_mode)?;
    let fc = flow_consistency(tape, inputs.flow_pairs, k)?;

    // Both passes' depth estimates, with ground truth re-indexed for the
    // reversed pass when supervised.
    let mut all_inv_depths: Vec<TensorId> = inputs.fw.inv_depths.clone();
    all_inv_depths.extend(inputs.bw.inv_depths.iter().copied());

    let (smooth, depth_term) = match &inputs.supervision {
        None => {
            let mut images: Vec<TensorId> = inputs.fw.images.clone();
            images.extend(inputs.bw.images.iter().copied());
            let s =
                smoothness(tape, &all_inv_depths, SmoothnessMode::EdgeAware { images: &images })?;
            (s, None)
        }
        Some(sup) => {
            let mut gts: Vec<TensorId> = sup.gt_inv_depths.to_vec();
            gts.extend((0..n).rev().map(|j| sup.gt_inv_depths[j]));
            let mut masks: Vec<TensorId> = sup.valid_masks.to_vec();
            masks.extend((0..n).rev().map(|j| sup.valid_masks[j]));
            let s = smoothness(
                tape,
                &all_inv_depths,
                SmoothnessMode::GtGradient { gt_inv_depths: &gts, valid_masks: &masks },
            )?;
            let d = depth_supervision(tape, &all_inv_depths, &gts, &masks)?;
            (s, Some(d))
        }
    };

    let mut all_masks = fw.masks.clone();
    all_masks.extend(bw.masks.iter().copied());
    let reg = mask_regularization(tape, &all_masks)?;

    let ws = tape.affine(smooth, weights.smooth, 0.0)?;
    let wfc = tape.affine(fc, weights.flow_consistency, 0.0)?;
    let wreg = tape.affine(reg, weights.mask_reg, 0.0)?;
    let mut total = tape.add(fw.loss, bw.loss)?;
    total = tape.add(total, ws)?;
    total = tape.add(total, wfc)?;
    total = tape.add(total, wreg)?;
    let mut report = LossReport {
        reprojection_fw: tape.scalar_value(fw.loss),
        reprojection_bw: tape.scalar_value(bw.loss),
        flow_consistency: tape.scalar_value(fc),
        smoothness: tape.scalar_value(smooth),
        depth: 0.0,
        mask_reg: tape.scalar_value(reg),
        total: 0.0,
    };
    if let Some(d) = depth_term {
        let wd = tape.affine(d, weights.depth, 0.0)?;
        total = tape.add(total, wd)?;
        report.depth = tape.scalar_value(d);
    }
    report.total = tape.scalar_value(total);
    Ok((total, report))
}
