//! Detection-style evaluation: AP at IoU 0.5 over boxes and masks.

use crate::error::{Error, Result};
use crate::geometry::BoxF;
use crate::synth::{InstanceAnnotation, Mask, Scene};

/// A predicted instance: confidence, box, and a full-image mask.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub score: f64,
    pub box_: BoxF,
    pub mask: Mask,
}

/// A ground-truth instance reduced to what evaluation needs.
#[derive(Debug, Clone)]
pub struct GtInstance {
    pub box_: BoxF,
    pub mask: Mask,
}

impl From<&InstanceAnnotation> for GtInstance {
    fn from(a: &InstanceAnnotation) -> Self {
        GtInstance { box_: a.box_, mask: a.mask.clone() }
    }
}

/// The ground truth of a scene in evaluation form.
pub fn scene_gt(scene: &Scene) -> Vec<GtInstance> {
    scene.instances.iter().map(GtInstance::from).collect()
}

/// A region to overlap-compare: either an axis-aligned box or a pixel mask.
#[derive(Debug, Clone, Copy)]
pub enum Region<'a> {
    Box(&'a BoxF),
    Mask(&'a Mask),
}

/// Intersection over union of two regions of the same kind.
pub fn iou(a: &Region, b: &Region) -> Result<f64> {
    match (a, b) {
        (Region::Box(a), Region::Box(b)) => Ok(a.iou(b)),
        (Region::Mask(a), Region::Mask(b)) => {
            if a.h != b.h || a.w != b.w {
                return Err(Error::shape(format!(
                    "mask IoU: {}x{} vs {}x{}",
                    a.h, a.w, b.h, b.w
                )));
            }
            Ok(a.iou(b))
        }
        _ => Err(Error::shape("region IoU: cannot compare a box with a mask")),
    }
}

/// Evaluation summary. Precision/recall points are recorded after each
/// prediction in global score order; per-scene IoU lists hold each
/// prediction's matched IoU (0 for unmatched), in the same order.
#[derive(Debug, Clone)]
pub struct EvalResult {
    pub ap50_box: f64,
    pub ap50_mask: f64,
    pub pr_box: Vec<(f64, f64)>,
    pub pr_mask: Vec<(f64, f64)>,
    pub box_ious: Vec<Vec<f64>>,
    pub mask_ious: Vec<Vec<f64>>,
}

fn ap_one<F>(
    preds: &[Vec<Prediction>],
    gts: &[Vec<GtInstance>],
    iou_of: F,
) -> Result<(f64, Vec<(f64, f64)>, Vec<Vec<f64>>)>
where
    F: Fn(&Prediction, &GtInstance) -> Result<f64>,
{
    let n_gt: usize = gts.iter().map(Vec::len).sum();
    let mut order: Vec<(usize, usize)> = Vec::new();
    for (s, ps) in preds.iter().enumerate() {
        for i in 0..ps.len() {
            order.push((s, i));
        }
    }
    // Score descending; ties broken by scene then prediction index so the
    // result is independent of any monotone rescaling of the scores.
    order.sort_by(|&(sa, ia), &(sb, ib)| {
        preds[sb][ib]
            .score
            .partial_cmp(&preds[sa][ia].score)
            .expect("scores must not be NaN")
            .then(sa.cmp(&sb))
            .then(ia.cmp(&ib))
    });

    let mut matched: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
    let mut scene_ious: Vec<Vec<f64>> = preds.iter().map(|_| Vec::new()).collect();
    let mut tp_flags = Vec::with_capacity(order.len());
    for &(s, i) in &order {
        let p = &preds[s][i];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts[s].iter().enumerate() {
            if matched[s][g] {
                continue;
            }
            let v = iou_of(p, gt)?;
            if v >= 0.5 && best.map_or(true, |(_, bv)| v > bv) {
                best = Some((g, v));
            }
        }
        match best {
            Some((g, v)) => {
                matched[s][g] = true;
                tp_flags.push(true);
                scene_ious[s].push(v);
            }
            None => {
                tp_flags.push(false);
                scene_ious[s].push(0.0);
            }
        }
    }

    if n_gt == 0 {
        let ap = if order.is_empty() { 1.0 } else { 0.0 };
        let pr = order.iter().map(|_| (0.0, 0.0)).collect();
        return Ok((ap, pr, scene_ious));
    }

    let mut pr = Vec::with_capacity(order.len());
    let mut tp = 0usize;
    for (k, &hit) in tp_flags.iter().enumerate() {
        if hit {
            tp += 1;
        }
        pr.push((tp as f64 / (k + 1) as f64, tp as f64 / n_gt as f64));
    }
    // All-point interpolation: integrate recall against the running
    // maximum of precision taken from the right.
    let mut env = vec![0.0; pr.len()];
    let mut run = 0.0f64;
    for k in (0..pr.len()).rev() {
        run = run.max(pr[k].0);
        env[k] = run;
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 0..pr.len() {
        if pr[k].1 > prev_recall {
            ap += (pr[k].1 - prev_recall) * env[k];
            prev_recall = pr[k].1;
        }
    }
    Ok((ap, pr, scene_ious))
}

/// Average precision at IoU 0.5 for boxes and masks over a whole dataset.
/// `preds[s]` and `gts[s]` describe the same scene. A dataset with no
/// ground truth scores 1.0 when nothing is predicted and 0.0 otherwise.
pub fn eval_ap50(preds: &[Vec<Prediction>], gts: &[Vec<GtInstance>]) -> Result<EvalResult> {
    if preds.len() != gts.len() {
        return Err(Error::shape(format!(
            "eval_ap50: {} prediction scenes vs {} ground-truth scenes",
            preds.len(),
            gts.len()
        )));
    }
    let (ap50_box, pr_box, box_ious) =
        ap_one(preds, gts, |p, g| iou(&Region::Box(&p.box_), &Region::Box(&g.box_)))?;
    let (ap50_mask, pr_mask, mask_ious) =
        ap_one(preds, gts, |p, g| iou(&Region::Mask(&p.mask), &Region::Mask(&g.mask)))?;
    Ok(EvalResult { ap50_box, ap50_mask, pr_box, pr_mask, box_ious, mask_ious })
}
