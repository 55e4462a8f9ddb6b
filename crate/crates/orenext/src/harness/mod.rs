//! Training and evaluation harness: model assembly, SGD with a step decay,
//! the per-scene forward/backward wiring, AP50 metrics, and checkpoints.

pub mod checkpoint;
pub mod eval;
pub mod pipeline;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use eval::{eval_ap50, iou, scene_gt, EvalResult, GtInstance, Prediction, Region};
pub use pipeline::{infer_scene, scene_step};

use crate::backbone::{BackboneConfig, BackboneParams};
use crate::error::{Error, Result};
use crate::fpn::{FpnConfig, FpnParams};
use crate::loss::{loss_total, LossBreakdown, LossConfig};
use crate::point_head::{CoarseHeadParams, PointMlpParams};
use crate::synth::{Scene, SceneRng};
use crate::tensor::{LinearMap, ParamGroup};

/// Everything needed to rebuild the model: architecture plus the image
/// geometry the pyramid was sized for.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub image_h: usize,
    pub image_w: usize,
    pub backbone: BackboneConfig,
    pub fpn: FpnConfig,
    /// Hidden width of the coarse mask head.
    pub coarse_hidden: usize,
    /// Hidden width of the per-point MLPs.
    pub point_hidden: usize,
    /// RoI crop resolution; also the coarse logit grid size.
    pub roi_res: usize,
    /// Resolution of the RoI crop that feeds per-point fine features.
    pub fine_res: usize,
    /// Points refined per instance during training.
    pub train_points: usize,
    /// Over-sampling factor for training point selection.
    pub oversample_k: f64,
    /// Fraction of training points taken by uncertainty.
    pub importance_frac: f64,
    /// Coarse cells re-classified at inference.
    pub infer_points: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            image_h: 64,
            image_w: 64,
            backbone: BackboneConfig::default(),
            fpn: FpnConfig::default(),
            coarse_hidden: 32,
            point_hidden: 32,
            roi_res: 7,
            fine_res: 14,
            train_points: 64,
            oversample_k: 3.0,
            importance_frac: 0.75,
            infer_points: 16,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.fpn.validate()?;
        let needed = self.backbone.patch_size << (self.backbone.depths.len() - 1);
        if self.image_h % needed != 0 || self.image_w % needed != 0 {
            return Err(Error::config(format!(
                "image {}x{} is not divisible by the backbone stride {needed}",
                self.image_h, self.image_w
            )));
        }
        if self.coarse_hidden == 0 || self.point_hidden == 0 {
            return Err(Error::config("hidden widths must be positive"));
        }
        if self.roi_res < 2 || self.fine_res < 2 {
            return Err(Error::config("crop resolutions must be at least 2"));
        }
        if self.train_points == 0 {
            return Err(Error::config("train_points must be positive"));
        }
        if self.oversample_k < 1.0 {
            return Err(Error::config("oversample_k must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.importance_frac) {
            return Err(Error::config("importance_frac must lie in [0,1]"));
        }
        if self.infer_points == 0 || self.infer_points > self.roi_res * self.roi_res {
            return Err(Error::config(format!(
                "infer_points must lie in [1, {}]",
                self.roi_res * self.roi_res
            )));
        }
        Ok(())
    }

    /// `(channels, h, w)` of every backbone stage at the configured image
    /// size.
    pub fn stage_dims(&self) -> Vec<(usize, usize, usize)> {
        (0..self.backbone.depths.len())
            .map(|k| {
                let s = self.backbone.stride_at(k);
                (self.backbone.widths[k], self.image_h / s, self.image_w / s)
            })
            .collect()
    }
}

/// Full training configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Multiplier applied to the learning rate at the milestone.
    pub decay_factor: f64,
    /// Milestone position as a fraction of `total_steps`.
    pub milestone_frac: f64,
    pub total_steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            decay_factor: 0.1,
            milestone_frac: 2.0 / 3.0,
            total_steps: 1000,
            batch_size: 2,
            seed: 0,
            loss: LossConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        if self.total_steps == 0 || self.batch_size == 0 {
            return Err(Error::config("total_steps and batch_size must be positive"));
        }
        let m = self.milestone();
        if m == 0 || m >= self.total_steps {
            return Err(Error::config(format!(
                "milestone step {m} must lie strictly inside (0, {})",
                self.total_steps
            )));
        }
        self.loss.validate()?;
        self.model.validate()
    }

    /// The step index at which the learning rate decays.
    pub fn milestone(&self) -> usize {
        (self.milestone_frac * self.total_steps as f64).round() as usize
    }

    /// Learning rate for a 0-based step index.
    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.milestone() {
            self.lr
        } else {
            self.lr * self.decay_factor
        }
    }
}

/// All learnable state of the model.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub backbone: BackboneParams,
    pub fpn: FpnParams,
    pub coarse: CoarseHeadParams,
    /// Per-point foreground classifier, (c+1) → 1.
    pub point_cls: PointMlpParams,
    /// Per-point coordinate offsets, (c+1) → 2.
    pub offset: PointMlpParams,
    /// Foreground/background box logits from mean-pooled RoI features.
    pub box_cls: LinearMap,
}

impl ModelParams {
    pub fn init(cfg: &ModelConfig, rng: &mut impl FnMut() -> f64) -> Result<Self> {
        cfg.validate()?;
        let oc = cfg.fpn.out_channels;
        Ok(ModelParams {
            backbone: BackboneParams::init(&cfg.backbone, rng)?,
            fpn: FpnParams::init(&cfg.fpn, &cfg.stage_dims(), rng)?,
            coarse: CoarseHeadParams::init(oc, cfg.coarse_hidden, rng),
            point_cls: PointMlpParams::init(oc + 1, cfg.point_hidden, 1, rng),
            offset: PointMlpParams::init(oc + 1, cfg.point_hidden, 2, rng),
            box_cls: LinearMap::init(oc, 2, rng),
        })
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            backbone: self.backbone.zeros_like(),
            fpn: self.fpn.zeros_like(),
            coarse: self.coarse.zeros_like(),
            point_cls: self.point_cls.zeros_like(),
            offset: self.offset.zeros_like(),
            box_cls: LinearMap::zeros(self.box_cls.in_dim, self.box_cls.out_dim),
        }
    }
}

impl ParamGroup for ModelParams {
    fn for_each_param(&self, f: &mut dyn FnMut(f64)) {
        self.backbone.for_each_param(f);
        self.fpn.for_each_param(f);
        self.coarse.for_each_param(f);
        self.point_cls.for_each_param(f);
        self.offset.for_each_param(f);
        self.box_cls.for_each_param(f);
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut f64)) {
        self.backbone.for_each_param_mut(f);
        self.fpn.for_each_param_mut(f);
        self.coarse.for_each_param_mut(f);
        self.point_cls.for_each_param_mut(f);
        self.offset.for_each_param_mut(f);
        self.box_cls.for_each_param_mut(f);
    }
}

/// One plain SGD update: `p ← p − lr·g`.
pub fn sgd_step<P: ParamGroup + ?Sized>(params: &mut P, grads: &P, lr: f64) -> Result<()> {
    if params.param_count() != grads.param_count() {
        return Err(Error::shape(format!(
            "{} parameters but {} gradients",
            params.param_count(),
            grads.param_count()
        )));
    }
    let g = grads.flatten();
    let mut i = 0;
    params.for_each_param_mut(&mut |p| {
        *p -= lr * g[i];
        i += 1;
    });
    Ok(())
}

/// Loss and learning rate of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepTrace {
    pub step: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
}

/// Final parameters plus the per-step loss trace.
pub struct TrainOutcome {
    pub params: ModelParams,
    pub trace: Vec<StepTrace>,
}

/// PRNG stream reserved for parameter initialization; training-point
/// selection streams are derived per (step, batch slot, instance) and stay
/// well below this.
const PARAM_STREAM: u64 = u64::MAX;

/// Draws for model initialization, mapped to the weight-init range.
pub fn init_rng(seed: u64) -> impl FnMut() -> f64 {
    let mut rng = SceneRng::for_scene(seed, PARAM_STREAM);
    move || rng.next_f64()
}

/// Trains on the dataset: batches cycle through the scenes in index order,
/// gradients average over the batch, and every random choice derives from
/// `cfg.seed`, so a rerun reproduces the trace bit for bit.
pub fn train_loop(dataset: &[Scene], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::config("training needs at least one scene"));
    }
    for scene in dataset {
        if (scene.h, scene.w) != (cfg.model.image_h, cfg.model.image_w) {
            return Err(Error::shape(format!(
                "scene {} is {}x{} but the model is configured for {}x{}",
                scene.index, scene.h, scene.w, cfg.model.image_h, cfg.model.image_w
            )));
        }
    }
    let mut params = ModelParams::init(&cfg.model, &mut init_rng(cfg.seed))?;
    let mut trace = Vec::with_capacity(cfg.total_steps);
    for step in 0..cfg.total_steps {
        let lr = cfg.lr_at(step);
        let mut grads = params.zeros_like();
        let scale = 1.0 / cfg.batch_size as f64;
        let (mut cls, mut ploc, mut coarse, mut pmat) = (0.0, 0.0, 0.0, 0.0);
        for slot in 0..cfg.batch_size {
            let scene = &dataset[(step * cfg.batch_size + slot) % dataset.len()];
            let bd = scene_step(&params, cfg, scene, step, slot, scale, &mut grads)?;
            cls += scale * bd.l_cls_b;
            ploc += scale * bd.l_ploc_b;
            coarse += scale * bd.l_coarse_m;
            pmat += scale * bd.l_pmat_m;
        }
        let loss = loss_total(cls, ploc, coarse, pmat, &cfg.loss);
        for (term, value) in [
            ("l_cls_b", loss.l_cls_b),
            ("l_ploc_b", loss.l_ploc_b),
            ("l_coarse_m", loss.l_coarse_m),
            ("l_pmat_m", loss.l_pmat_m),
            ("total", loss.total),
        ] {
            if !value.is_finite() {
                return Err(Error::NonFinite { term, step });
            }
        }
        sgd_step(&mut params, &grads, lr)?;
        trace.push(StepTrace { step, lr, loss });
    }
    Ok(TrainOutcome { params, trace })
}
