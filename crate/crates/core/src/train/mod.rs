//! Two-stage training: stage 1 restricts the reprojection loss to
//! consecutive pairs, stage 2 enables the full multi-view pair set. Each
//! window trains on its forward and backward variants through shared-weight
//! passes on one tape; one window is one optimizer step.

mod adam;
mod checkpoint;
mod config;

pub use adam::{adam_step, clip_global_norm, AdamConfig, AdamState};
pub use checkpoint::{load as checkpoint_load, save as checkpoint_save, Checkpoint};
pub use config::TrainConfig;

use crate::ad::Tape;
use crate::data::{reverse_sample, SequenceSample};
use crate::error::{Error, Result};
use crate::losses::{
    total_loss, FlowPair, LossReport, PairMode, SequencePass, Supervision, TotalLossInputs,
};
use crate::nets::{collect_grads, BnMode, Bound, Model, StateKey};
use crate::real::Real;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Roll the model over a sample's frames on one tape, collecting the
/// per-frame artifacts the losses need. Hidden states start at zero and the
/// relative pose of frame t is `P_{t->t-1}` (the t=0 output is discarded).
pub fn run_sequence_pass<T: Real>(
    tape: &mut Tape<T>,
    model: &Model<T>,
    bound: &Bound,
    mode: &mut BnMode<'_, T>,
    sample: &SequenceSample,
) -> Result<SequencePass> {
    let mut images = Vec::with_capacity(sample.frames.len());
    let mut inv_depths = Vec::with_capacity(sample.frames.len());
    let mut depths = Vec::with_capacity(sample.frames.len());
    let mut rel_mats = Vec::with_capacity(sample.frames.len().saturating_sub(1));
    let mut states = model.zero_states(tape);
    for (t, frame) in sample.frames.iter().enumerate() {
        let img = tape.constant(frame.to_tensor());
        images.push(img);
        let (step, next) = model.step(tape, bound, mode, img, &states)?;
        states = next;
        inv_depths.push(step.depth.inv_depth);
        depths.push(step.depth.depth);
        if t > 0 {
            rel_mats.push(step.pose.pose.matrix);
        }
    }
    Ok(SequencePass { images, inv_depths, depths, rel_mats })
}

/// One optimizer step over one window (both directions).
pub fn train_step<T: Real>(
    model: &mut Model<T>,
    adam: &mut AdamState<T>,
    sample: &SequenceSample,
    cfg: &TrainConfig,
    pair_mode: PairMode,
) -> Result<LossReport> {
    let n = sample.frames.len();
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape, true);
    let mut updates = Vec::new();
    let (fw_pass, bw_pass) = {
        let mut mode = BnMode::Train { updates: &mut updates };
        let fw = run_sequence_pass(&mut tape, model, &bound, &mut mode, sample)?;
        let bw_sample = reverse_sample(sample);
        let bw = run_sequence_pass(&mut tape, model, &bound, &mut mode, &bw_sample)?;
        (fw, bw)
    };

    // Flow-consistency pairs (A = t-1, B = t): each direction's flow comes
    // from the pass that traversed the pair in that direction.
    let mut flow_pairs = Vec::with_capacity(n.saturating_sub(1));
    for t in 1..n {
        flow_pairs.push(FlowPair {
            depth_a: bw_pass.depths[n - t],
            depth_b: fw_pass.depths[t],
            mat_a_to_b: bw_pass.rel_mats[n - 1 - t],
            mat_b_to_a: fw_pass.rel_mats[t - 1],
        });
    }

    let sup_data = if cfg.supervised {
        let gt = sample
            .gt_depths
            .as_ref()
            .ok_or_else(|| Error::Data("supervised training requires ground-truth depth".into()))?;
        let mut gts = Vec::with_capacity(n);
        let mut masks = Vec::with_capacity(n);
        for d in gt {
            let (xi, m) = d.to_inv_depth_tensors::<T>();
            gts.push(tape.constant(xi));
            masks.push(tape.constant(m));
        }
        Some((gts, masks))
    } else {
        None
    };
    let supervision = sup_data
        .as_ref()
        .map(|(g, m)| Supervision { gt_inv_depths: g, valid_masks: m });

    let (loss, report) = total_loss(
        &mut tape,
        &TotalLossInputs {
            fw: &fw_pass,
            bw: &bw_pass,
            flow_pairs: &flow_pairs,
            supervision,
            pair_mode,
        },
        &sample.intrinsics,
        &cfg.weights,
    )?;
    tape.backward(loss)?;
    let mut grads = collect_grads(&tape, &bound);
    clip_global_norm(&mut grads, cfg.grad_clip);
    adam_step(&mut model.params, &grads, adam, &cfg.adam)?;
    model.apply_bn_updates(updates);
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct EpochReport {
    pub epoch: usize,
    pub stage: u8,
    pub report: LossReport,
}

pub struct TrainOutcome<T: Real> {
    pub model: Model<T>,
    pub adam: AdamState<T>,
    pub reports: Vec<EpochReport>,
    /// Set when training aborted on a non-finite loss; the model and
    /// optimizer are rolled back to the last completed epoch.
    pub diverged_at: Option<usize>,
}

struct Snapshot<T: Real> {
    params: Vec<Vec<T>>,
    stats: Vec<Vec<T>>,
    adam: AdamState<T>,
}

impl<T: Real> Snapshot<T> {
    fn take(model: &Model<T>, adam: &AdamState<T>) -> Self {
        Snapshot {
            params: model.params.entries().iter().map(|e| e.tensor.values().to_vec()).collect(),
            stats: model.stats.entries().iter().map(|e| e.values.clone()).collect(),
            adam: adam.clone(),
        }
    }

    fn restore(&self, model: &mut Model<T>, adam: &mut AdamState<T>) {
        for (k, vals) in self.params.iter().enumerate() {
            model
                .params
                .set_values(crate::nets::ParamKey(k), vals.clone())
                .expect("snapshot shapes match");
        }
        for (k, vals) in self.stats.iter().enumerate() {
            *model.stats.get_mut(StateKey(k)) = vals.clone();
        }
        *adam = self.adam.clone();
    }
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(
        seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64),
    );
    order.shuffle(&mut rng);
    order
}

fn mean_reports(reports: &[LossReport]) -> LossReport {
    let n = reports.len().max(1) as f64;
    let mut acc = LossReport::default();
    for r in reports {
        acc.reprojection_fw += r.reprojection_fw;
        acc.reprojection_bw += r.reprojection_bw;
        acc.flow_consistency += r.flow_consistency;
        acc.smoothness += r.smoothness;
        acc.depth += r.depth;
        acc.mask_reg += r.mask_reg;
        acc.total += r.total;
    }
    acc.reprojection_fw /= n;
    acc.reprojection_bw /= n;
    acc.flow_consistency /= n;
    acc.smoothness /= n;
    acc.depth /= n;
    acc.mask_reg /= n;
    acc.total /= n;
    acc
}

/// Stage boundaries from the schedule: epochs `[0, E1)` use consecutive
/// pairs, `[E1, E1+E2)` the full multi-view pair set.
pub fn stage_of(epoch: usize, cfg: &TrainConfig) -> (u8, PairMode) {
    if epoch < cfg.epochs_stage1 {
        (1, PairMode::Consecutive)
    } else {
        (2, PairMode::All)
    }
}

/// Run the two-stage schedule over the sample set, optionally resuming from
/// a checkpoint (the epoch counter continues and the stage boundary is
/// respected). Divergence rolls back to the last completed epoch and sets
/// `diverged_at` instead of erroring.
pub fn train_two_stage<T: Real>(
    samples: &[SequenceSample],
    cfg: &TrainConfig,
    resume: Option<Checkpoint<T>>,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<TrainOutcome<T>> {
    if samples.is_empty() {
        return Err(Error::Data("training dataset is empty".into()));
    }
    let (mut model, mut adam, start_epoch) = match resume {
        Some(ck) => {
            if ck.model.cfg != cfg.net {
                return Err(Error::Config(
                    "checkpoint network configuration differs from the requested one".into(),
                ));
            }
            (ck.model, ck.adam, ck.epoch)
        }
        None => {
            let model = Model::new(cfg.net.clone(), cfg.seed)?;
            let adam = AdamState::new(&model.params);
            (model, adam, 0)
        }
    };
    let total = cfg.epochs_stage1 + cfg.epochs_stage2;
    let mut reports = Vec::new();
    let mut snapshot = Snapshot::take(&model, &adam);
    let mut diverged_at = None;

    'epochs: for epoch in start_epoch..total {
        let (stage, pair_mode) = stage_of(epoch, cfg);
        let mut step_reports = Vec::with_capacity(samples.len());
        for idx in epoch_order(samples.len(), cfg.seed, epoch) {
            match train_step(&mut model, &mut adam, &samples[idx], cfg, pair_mode) {
                Ok(report) => step_reports.push(report),
                Err(Error::NonFinite(_)) | Err(Error::Numeric(_)) => {
                    snapshot.restore(&mut model, &mut adam);
                    diverged_at = Some(epoch);
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let report = EpochReport { epoch, stage, report: mean_reports(&step_reports) };
        on_epoch(&report);
        reports.push(report);
        snapshot = Snapshot::take(&model, &adam);
    }
    Ok(TrainOutcome { model, adam, reports, diverged_at })
}

/// Harness over sliding-window sizes: retrain briefly at each size on the
/// same scene. Window sizes larger than the scene contribute an empty
/// report list.
pub fn window_sweep<T: Real>(
    scene: &crate::data::synthetic::SyntheticScene,
    sizes: &[usize],
    base_cfg: &TrainConfig,
) -> Result<Vec<(usize, Vec<EpochReport>)>> {
    let mut results = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut cfg = base_cfg.clone();
        cfg.window = n;
        let samples = crate::data::synthetic::scene_to_samples(scene, n, cfg.stride)?;
        if samples.is_empty() {
            results.push((n, Vec::new()));
            continue;
        }
        let outcome = train_two_stage::<T>(&samples, &cfg, None, |_| {})?;
        results.push((n, outcome.reports));
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::{render_plane_scene, scene_to_samples, PlaneSceneSpec};
    use crate::geometry::Intrinsics;
    use crate::nets::NetConfig;

    fn tiny_scene(frames: usize) -> crate::data::synthetic::SyntheticScene {
        let spec = PlaneSceneSpec {
            width: 24,
            height: 16,
            intrinsics: Intrinsics::new(20.0, 20.0, 11.5, 7.5).unwrap(),
            n_frames: frames,
            z0: 10.0,
            tilt_x: 0.4,
            tilt_y: 0.1,
            step: [0.5, 0.0, 0.0],
            yaw_rate: 0.0,
        };
        render_plane_scene(&spec).unwrap()
    }

    fn tiny_cfg(e1: usize, e2: usize) -> TrainConfig {
        TrainConfig {
            net: NetConfig::tiny(16, 24),
            epochs_stage1: e1,
            epochs_stage2: e2,
            window: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn adam_zero_grads_leave_fresh_params_unchanged() {
        let model = Model::<f64>::new(NetConfig::tiny(8, 12), 1).unwrap();
        let mut params = model.params.clone();
        let before: Vec<Vec<f64>> =
            params.entries().iter().map(|e| e.tensor.values().to_vec()).collect();
        let grads: Vec<Vec<f64>> =
            params.entries().iter().map(|e| vec![0.0; e.tensor.numel()]).collect();
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &grads, &mut state, &AdamConfig::default()).unwrap();
        for (k, e) in params.entries().iter().enumerate() {
            assert_eq!(e.tensor.values(), &before[k][..]);
        }
        assert!(state.m.iter().flatten().all(|&v| v == 0.0));
    }

    /// First step with unit gradient: bias correction cancels and the
    /// update is -lr to within eps.
    #[test]
    fn adam_first_unit_step_is_minus_lr() {
        let mut params = crate::nets::ParamSet::<f64>::new();
        params.register("x", crate::ad::Tensor::scalar(1.0));
        let mut state = AdamState::new(&params);
        let cfg = AdamConfig::default();
        adam_step(&mut params, &[vec![1.0]], &mut state, &cfg).unwrap();
        let got = params.entries()[0].tensor.values()[0];
        let expect = 1.0 - cfg.lr * 1.0 / (1.0 + cfg.eps);
        assert!((got - expect).abs() < 1e-15, "{got} vs {expect}");
        assert!((got - (1.0 - cfg.lr)).abs() < 1e-10);
    }

    /// Several steps with constant gradient match a standalone scalar
    /// reference implementation.
    #[test]
    fn adam_matches_scalar_reference() {
        let cfg = AdamConfig { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 };
        // Reference.
        let (mut x, mut m, mut v) = (0.7f64, 0.0f64, 0.0f64);
        let g = -0.3;
        for t in 1..=5 {
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let mh = m / (1.0 - cfg.beta1.powi(t));
            let vh = v / (1.0 - cfg.beta2.powi(t));
            x -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        }
        // Implementation.
        let mut params = crate::nets::ParamSet::<f64>::new();
        params.register("x", crate::ad::Tensor::scalar(0.7));
        let mut state = AdamState::new(&params);
        for _ in 0..5 {
            adam_step(&mut params, &[vec![g]], &mut state, &cfg).unwrap();
        }
        let got = params.entries()[0].tensor.values()[0];
        assert!((got - x).abs() < 1e-14, "{got} vs {x}");
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let mut params = crate::nets::ParamSet::<f64>::new();
        params.register("x", crate::ad::Tensor::scalar(1.0));
        let mut state = AdamState::new(&params);
        let err = adam_step(&mut params, &[vec![f64::NAN]], &mut state, &AdamConfig::default());
        assert!(err.is_err());
        assert_eq!(params.entries()[0].tensor.values()[0], 1.0);
        assert_eq!(state.step, 0);
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let scene = tiny_scene(4);
        let samples = scene_to_samples(&scene, 3, 1).unwrap();
        let cfg = tiny_cfg(1, 0);
        let outcome = train_two_stage::<f32>(&samples, &cfg, None, |_| {}).unwrap();
        let path = dir.path().join("model.ckpt");
        checkpoint_save(&path, &outcome.model, &outcome.adam, 1, cfg.seed).unwrap();
        let loaded = checkpoint_load::<f32>(&path).unwrap();
        assert_eq!(loaded.epoch, 1);
        for (a, b) in outcome.model.params.entries().iter().zip(loaded.model.params.entries()) {
            assert_eq!(a.name, b.name);
            let ab: Vec<u32> = a.tensor.values().iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u32> = b.tensor.values().iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb, "parameter {} not bit-identical", a.name);
        }
        assert_eq!(loaded.adam.step, outcome.adam.step);
    }

    #[test]
    fn checkpoint_rejects_truncation_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let scene = tiny_scene(3);
        let samples = scene_to_samples(&scene, 2, 1).unwrap();
        let cfg = TrainConfig { window: 2, ..tiny_cfg(1, 0) };
        let outcome = train_two_stage::<f32>(&samples, &cfg, None, |_| {}).unwrap();
        let path = dir.path().join("model.ckpt");
        checkpoint_save(&path, &outcome.model, &outcome.adam, 1, cfg.seed).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        let trunc = dir.path().join("trunc.ckpt");
        std::fs::write(&trunc, &bytes[..bytes.len() - 64]).unwrap();
        assert!(matches!(
            checkpoint_load::<f32>(&trunc),
            Err(crate::Error::Checkpoint(_))
        ));

        let garbage = dir.path().join("garbage.ckpt");
        std::fs::write(&garbage, b"not a checkpoint at all").unwrap();
        assert!(matches!(
            checkpoint_load::<f32>(&garbage),
            Err(crate::Error::Checkpoint(_))
        ));
    }

    #[test]
    fn config_kv_round_trip_and_unknown_key() {
        let mut cfg = TrainConfig::default();
        cfg.adam.lr = 0.001;
        cfg.net.lstm_placement = crate::nets::LstmPlacement::Full;
        cfg.epochs_stage1 = 7;
        let text = cfg.to_kv();
        let parsed = TrainConfig::from_kv(&text).unwrap();
        assert_eq!(parsed, cfg);
        assert!(TrainConfig::from_kv("nonsense.key=3\n").is_err());
        assert!(TrainConfig::from_kv("# comment\n\nadam.lr=0.01\n").is_ok());
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let cfg = tiny_cfg(1, 1);
        assert!(train_two_stage::<f32>(&[], &cfg, None, |_| {}).is_err());
    }

    /// One optimizer step at a small learning rate strictly decreases the
    /// loss on a frozen batch.
    #[test]
    fn single_step_decreases_frozen_batch_loss() {
        let scene = tiny_scene(3);
        let samples = scene_to_samples(&scene, 3, 1).unwrap();
        let mut cfg = tiny_cfg(1, 0);
        cfg.adam.lr /= 10.0;
        let mut model = Model::<f64>::new(cfg.net.clone(), cfg.seed).unwrap();
        let mut adam = AdamState::new(&model.params);
        let before = train_step(&mut model, &mut adam, &samples[0], &cfg, PairMode::Consecutive)
            .unwrap()
            .total;
        let after = train_step(&mut model, &mut adam, &samples[0], &cfg, PairMode::Consecutive)
            .unwrap()
            .total;
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn identical_seeds_give_identical_loss_curves() {
        let scene = tiny_scene(4);
        let samples = scene_to_samples(&scene, 3, 1).unwrap();
        let cfg = tiny_cfg(2, 1);
        let run = || {
            train_two_stage::<f32>(&samples, &cfg, None, |_| {})
                .unwrap()
                .reports
                .iter()
                .map(|r| r.report.total)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    /// Training split across a checkpoint equals an unbroken run, and the
    /// stage boundary lands where the schedule says.
    #[test]
    fn resume_from_checkpoint_matches_unbroken_run() {
        let dir = tempfile::tempdir().unwrap();
        let scene = tiny_scene(4);
        let samples = scene_to_samples(&scene, 3, 1).unwrap();
        let cfg = tiny_cfg(2, 2);

        let unbroken = train_two_stage::<f32>(&samples, &cfg, None, |_| {}).unwrap();
        assert_eq!(
            unbroken.reports.iter().map(|r| r.stage).collect::<Vec<_>>(),
            vec![1, 1, 2, 2]
        );

        let mut first_half_cfg = cfg.clone();
        first_half_cfg.epochs_stage1 = 2;
        first_half_cfg.epochs_stage2 = 0;
        let half = train_two_stage::<f32>(&samples, &first_half_cfg, None, |_| {}).unwrap();
        let path = dir.path().join("half.ckpt");
        checkpoint_save(&path, &half.model, &half.adam, 2, cfg.seed).unwrap();
        let resumed = train_two_stage::<f32>(
            &samples,
            &cfg,
            Some(checkpoint_load::<f32>(&path).unwrap()),
            |_| {},
        )
        .unwrap();

        let merged: Vec<f64> = half
            .reports
            .iter()
            .chain(resumed.reports.iter())
            .map(|r| r.report.total)
            .collect();
        let full: Vec<f64> = unbroken.reports.iter().map(|r| r.report.total).collect();
        assert_eq!(merged, full);
        assert_eq!(resumed.reports[0].stage, 2);
    }
}
