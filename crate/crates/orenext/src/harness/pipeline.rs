//! Per-scene model wiring.
//!
//! For every ground-truth instance the pipeline crops its pyramid level,
//! predicts a coarse mask, classifies the box from mean-pooled crop
//! features, refines sampled uncertain points with the shared MLPs, and
//! offsets those points toward the instance boundary. Ground-truth boxes
//! stand in for a region-proposal stage throughout.

use crate::error::Result;
use crate::fpn::fpn_forward;
use crate::geometry::{BoxF, Pt};
use crate::harness::eval::Prediction;
use crate::harness::{ModelConfig, ModelParams, TrainConfig};
use crate::loss::{
    loss_coarse, loss_coarse_backward, loss_pg_with_grad, loss_pmat, loss_ploc_with_grad,
    loss_total, nearest_match, resample_boundary, LossBreakdown,
};
use crate::point_head::{
    assign_level, coarse_mask_head, coarse_mask_head_backward, point_classify, point_features,
    point_features_backward, point_mlp_backward, point_mlp_forward, roi_extract,
    roi_extract_backward, rows_project, rows_project_backward, select_points_infer,
    select_points_train, CoarseMask, RoI,
};
use crate::synth::{Mask, Scene, SceneRng};
use crate::tensor::activation::sigmoid;
use crate::tensor::entropy::{
    mean_bce, mean_bce_backward, softmax_cross_entropy, softmax_cross_entropy_backward,
};
use crate::tensor::sample::bilinear_sample;
use crate::tensor::{Matrix, Tensor4};
use crate::{backbone, fpn};

/// PRNG stream for the training points of one (step, batch slot, instance).
fn point_stream(step: usize, slot: usize, roi: usize) -> u64 {
    debug_assert!(slot < 1 << 10 && roi < 1 << 10);
    ((step as u64 + 1) << 20) | ((slot as u64) << 10) | roi as u64
}

/// Ground-truth occupancy at an RoI-normalized point: the mask bit of the
/// image pixel the point falls into.
fn occupancy(mask: &Mask, box_: &BoxF, p: Pt) -> f64 {
    let x = box_.x0 + p.x * box_.width();
    let y = box_.y0 + p.y * box_.height();
    let j = ((x * mask.w as f64).floor() as isize).clamp(0, mask.w as isize - 1) as usize;
    let i = ((y * mask.h as f64).floor() as isize).clamp(0, mask.h as isize - 1) as usize;
    f64::from(mask.get(i, j))
}

/// The instance polygon mapped from image coordinates into RoI coordinates.
fn roi_polygon(polygon: &[Pt], box_: &BoxF) -> Vec<Pt> {
    polygon
        .iter()
        .map(|p| Pt::new((p.x - box_.x0) / box_.width(), (p.y - box_.y0) / box_.height()))
        .collect()
}

/// Centers of the m×m coarse cells, row-major, in RoI coordinates.
fn cell_centers(m: usize) -> Vec<Pt> {
    (0..m * m)
        .map(|idx| {
            Pt::new(((idx % m) as f64 + 0.5) / m as f64, ((idx / m) as f64 + 0.5) / m as f64)
        })
        .collect()
}

/// One scene's forward and backward pass. Parameter gradients of the
/// scene's loss, scaled by `scale`, accumulate into `grads`; the returned
/// breakdown is unscaled.
pub fn scene_step(
    params: &ModelParams,
    cfg: &TrainConfig,
    scene: &Scene,
    step: usize,
    slot: usize,
    scale: f64,
    grads: &mut ModelParams,
) -> Result<LossBreakdown> {
    let mc = &cfg.model;
    let img = scene.image_tensor();
    let (stages, bb_cache) = backbone::backbone_forward(&img, &mc.backbone, &params.backbone)?;
    let (pyr, fpn_cache) = fpn_forward(&stages, &mc.fpn, &params.fpn)?;
    let rois = scene.instances.len();
    let oc = mc.fpn.out_channels;
    let res = mc.roi_res;

    // Forward over instances, keeping what the backward pass needs.
    struct RoiPass {
        roi: RoI,
        coarse: CoarseMask,
        coarse_cache: crate::point_head::CoarseHeadCache,
        fine: Tensor4,
        pts: Vec<Pt>,
        pt_targets: Vec<f64>,
        pt_logits: Vec<f64>,
        cls_cache: crate::point_head::PointMlpCache,
        off_cache: crate::point_head::PointMlpCache,
        pred_pts: Vec<Pt>,
        grid_target: Matrix,
        gt_ipt: Vec<Pt>,
        match_idx: Vec<usize>,
        gt_paired: Vec<Pt>,
    }

    let mut passes: Vec<RoiPass> = Vec::with_capacity(rois);
    let mut pooled = Matrix::zeros(rois, oc);
    let (mut l_ploc, mut l_coarse, mut l_pmat) = (0.0, 0.0, 0.0);
    for (r, ann) in scene.instances.iter().enumerate() {
        let roi = RoI::new(ann.box_, assign_level(&ann.box_, pyr.len())?);
        let crop = roi_extract(&pyr, &roi, res)?;
        let (coarse, coarse_cache) = coarse_mask_head(&crop, &params.coarse)?;
        let fine = roi_extract(&pyr, &roi, mc.fine_res)?;

        for c in 0..oc {
            let mut acc = 0.0;
            for i in 0..res {
                for j in 0..res {
                    acc += crop.at(0, c, i, j);
                }
            }
            *pooled.at_mut(r, c) = acc / (res * res) as f64;
        }

        let mut srng = SceneRng::for_scene(cfg.seed, point_stream(step, slot, r));
        let mut draw = || srng.next_f64();
        let pts = select_points_train(
            &coarse,
            mc.train_points,
            mc.oversample_k,
            mc.importance_frac,
            &mut draw,
        )?;
        let feats = point_features(&fine, &coarse, &pts)?;
        let (pt_logits, cls_cache) = point_classify(&feats, &params.point_cls)?;
        let (offsets, off_cache) = point_mlp_forward(&feats, &params.offset)?;
        let pred_pts: Vec<Pt> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| Pt::new(p.x + offsets.at(i, 0), p.y + offsets.at(i, 1)))
            .collect();

        let pt_targets: Vec<f64> =
            pts.iter().map(|&p| occupancy(&ann.mask, &ann.box_, p)).collect();
        let l_pcls = mean_bce(&pt_logits, &pt_targets)?;

        let grid_target = Matrix {
            rows: res,
            cols: res,
            data: cell_centers(res)
                .into_iter()
                .map(|p| occupancy(&ann.mask, &ann.box_, p))
                .collect(),
        };
        l_coarse += loss_coarse(&coarse, &grid_target)?;

        let gt_poly = roi_polygon(&ann.polygon, &ann.box_);
        // Matching runs on the current prediction values and is held fixed
        // (non-differentiable) while the smooth-L1 term supervises them.
        let gt_ipt = resample_boundary(&gt_poly, cfg.loss.gt_resample)?;
        let match_idx = nearest_match(&pred_pts, &gt_ipt)?;
        let (l_pg, _) = loss_pg_with_grad(&pred_pts, &gt_ipt, &match_idx, cfg.loss.smooth_l1_delta)?;
        let gt_paired = resample_boundary(&gt_poly, pred_pts.len())?;
        let (l_ploc_r, _) = loss_ploc_with_grad(&pred_pts, &gt_paired)?;

        l_ploc += l_ploc_r;
        l_pmat += loss_pmat(l_pcls, l_pg);
        passes.push(RoiPass {
            roi,
            coarse,
            coarse_cache,
            fine,
            pts,
            pt_targets,
            pt_logits,
            cls_cache,
            off_cache,
            pred_pts,
            grid_target,
            gt_ipt,
            match_idx,
            gt_paired,
        });
    }
    if rois > 0 {
        l_ploc /= rois as f64;
        l_coarse /= rois as f64;
        l_pmat /= rois as f64;
    }

    let box_logits = rows_project(&pooled, &params.box_cls)?;
    let box_labels = vec![1usize; rois]; // every ground-truth box is foreground
    let l_cls = softmax_cross_entropy(&box_logits, &box_labels)?;
    let breakdown = loss_total(l_cls, l_ploc, l_coarse, l_pmat, &cfg.loss);

    // ---- backward ----
    let g_box_logits = softmax_cross_entropy_backward(&box_logits, &box_labels, scale);
    let g_pooled = rows_project_backward(&pooled, &params.box_cls, &g_box_logits, &mut grads.box_cls)?;

    let mut g_pyr: Vec<Tensor4> = pyr.iter().map(Tensor4::zeros_like).collect();
    for (r, pass) in passes.iter().enumerate() {
        let w_ploc = scale * cfg.loss.alpha / rois as f64;
        let w_coarse = scale * cfg.loss.beta / rois as f64;
        let w_pmat = scale / rois as f64;

        // Point coordinate gradients: guidance plus localization, both
        // acting on pred = pts + offset, so they land on the offset head.
        let (_, g_pg) =
            loss_pg_with_grad(&pass.pred_pts, &pass.gt_ipt, &pass.match_idx, cfg.loss.smooth_l1_delta)?;
        let (_, g_pl) = loss_ploc_with_grad(&pass.pred_pts, &pass.gt_paired)?;
        let mut g_off = Matrix::zeros(pass.pred_pts.len(), 2);
        for i in 0..pass.pred_pts.len() {
            *g_off.at_mut(i, 0) = w_pmat * 0.5 * g_pg[i].x + w_ploc * g_pl[i].x;
            *g_off.at_mut(i, 1) = w_pmat * 0.5 * g_pg[i].y + w_ploc * g_pl[i].y;
        }
        let g_feats_off = point_mlp_backward(&params.offset, &pass.off_cache, &g_off, &mut grads.offset)?;

        let g_logit_vec = mean_bce_backward(&pass.pt_logits, &pass.pt_targets, w_pmat * 0.5);
        let g_logits = Matrix { rows: pass.pt_logits.len(), cols: 1, data: g_logit_vec };
        let g_feats_cls =
            point_mlp_backward(&params.point_cls, &pass.cls_cache, &g_logits, &mut grads.point_cls)?;

        let mut g_feats = g_feats_off;
        for (a, b) in g_feats.data.iter_mut().zip(&g_feats_cls.data) {
            *a += b;
        }
        let (g_fine, g_coarse_pf) =
            point_features_backward(&pass.fine, &pass.coarse, &pass.pts, &g_feats)?;

        let mut g_coarse_logits = loss_coarse_backward(&pass.coarse, &pass.grid_target, w_coarse);
        for (a, b) in g_coarse_logits.data.iter_mut().zip(&g_coarse_pf.data) {
            *a += b;
        }
        let mut g_crop =
            coarse_mask_head_backward(&params.coarse, &pass.coarse_cache, &g_coarse_logits, &mut grads.coarse)?;
        // Mean-pool branch of the box classifier.
        let inv = 1.0 / (res * res) as f64;
        for c in 0..oc {
            let g = g_pooled.at(r, c) * inv;
            for i in 0..res {
                for j in 0..res {
                    *g_crop.at_mut(0, c, i, j) += g;
                }
            }
        }
        g_pyr[pass.roi.level].add_assign(&roi_extract_backward(&pyr, &pass.roi, &g_crop)?)?;
        g_pyr[pass.roi.level].add_assign(&roi_extract_backward(&pyr, &pass.roi, &g_fine)?)?;
    }

    let g_stages = fpn::fpn_backward(&mc.fpn, &params.fpn, &fpn_cache, &g_pyr, &mut grads.fpn)?;
    backbone::backbone_backward(&mc.backbone, &params.backbone, &bb_cache, &g_stages, &mut grads.backbone)?;
    Ok(breakdown)
}

/// Runs the model on an image with externally supplied instance boxes
/// (ground truth stands in for a proposal stage). Each box yields a
/// full-image mask rendered from its refined coarse grid, thresholded at
/// probability 0.5, and a confidence score.
pub fn infer_scene(
    params: &ModelParams,
    mc: &ModelConfig,
    img: &Tensor4,
    boxes: &[BoxF],
) -> Result<Vec<Prediction>> {
    let (stages, _) = backbone::backbone_forward(img, &mc.backbone, &params.backbone)?;
    let (pyr, _) = fpn_forward(&stages, &mc.fpn, &params.fpn)?;
    let (h, w) = (img.h, img.w);
    let mut out = Vec::with_capacity(boxes.len());
    for box_ in boxes {
        let roi = RoI::new(*box_, assign_level(box_, pyr.len())?);
        let crop = roi_extract(&pyr, &roi, mc.roi_res)?;
        let (coarse, _) = coarse_mask_head(&crop, &params.coarse)?;
        let fine = roi_extract(&pyr, &roi, mc.fine_res)?;

        // Re-classify the most uncertain cells individually.
        let pts = select_points_infer(&coarse, mc.infer_points)?;
        let feats = point_features(&fine, &coarse, &pts)?;
        let (logits, _) = point_classify(&feats, &params.point_cls)?;
        let m = coarse.m();
        let mut refined = coarse.logits.clone();
        for (p, z) in pts.iter().zip(&logits) {
            let j = (p.x * m as f64).floor() as usize;
            let i = (p.y * m as f64).floor() as usize;
            *refined.at_mut(i.min(m - 1), j.min(m - 1)) = *z;
        }
        let refined = CoarseMask::new(refined)?;

        // Rasterize: bilinearly upsample the refined grid over the box
        // interior and threshold.
        let mut interior = Vec::new();
        let mut roi_pts = Vec::new();
        for i in 0..h {
            for j in 0..w {
                let x = (j as f64 + 0.5) / w as f64;
                let y = (i as f64 + 0.5) / h as f64;
                if x >= box_.x0 && x < box_.x1 && y >= box_.y0 && y < box_.y1 {
                    interior.push((i, j));
                    roi_pts.push(Pt::new(
                        (x - box_.x0) / box_.width(),
                        (y - box_.y0) / box_.height(),
                    ));
                }
            }
        }
        let mut mask = Mask::empty(h, w);
        let mut score_acc = 0.0;
        let mut score_n = 0usize;
        if !roi_pts.is_empty() {
            let sampled = bilinear_sample(&refined.as_tensor(), &roi_pts)?;
            for (idx, &(i, j)) in interior.iter().enumerate() {
                let p = sigmoid(sampled.at(idx, 0));
                if p >= 0.5 {
                    mask.data[i * w + j] = true;
                    score_acc += p;
                    score_n += 1;
                }
            }
        }
        let score = if score_n == 0 { 0.0 } else { score_acc / score_n as f64 };
        out.push(Prediction { score, box_: *box_, mask });
    }
    Ok(out)
}
