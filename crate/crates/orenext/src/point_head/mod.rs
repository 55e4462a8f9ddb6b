//! Point-based mask refinement head.
//!
//! A coarse per-RoI mask is predicted on a small logit grid; the most
//! uncertain locations (probability near 0.5, i.e. near the decision
//! boundary) are then re-classified individually by a small shared MLP fed
//! with fine bilinear features plus the coarse logit at each point.

use crate::error::{Error, Result};
use crate::geometry::{BoxF, Pt, PointSet};
use crate::tensor::activation::{gelu, gelu_grad, sigmoid};
use crate::tensor::linear::{channel_project, channel_project_backward};
use crate::tensor::sample::{bilinear_sample, bilinear_sample_backward};
use crate::tensor::{LinearMap, Matrix, ParamGroup, Tensor4};

/// A region of interest: a normalized box plus the pyramid level that will
/// provide its features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoI {
    /// Box in normalized [0,1]² image coordinates.
    pub box_: BoxF,
    /// Index into the feature pyramid.
    pub level: usize,
}

impl RoI {
    pub fn new(box_: BoxF, level: usize) -> Self {
        RoI { box_, level }
    }

    pub fn validate(&self, levels: usize) -> Result<()> {
        if !self.box_.is_valid() {
            return Err(Error::geometry(format!(
                "degenerate box ({}, {}, {}, {})",
                self.box_.x0, self.box_.y0, self.box_.x1, self.box_.y1
            )));
        }
        if self.level >= levels {
            return Err(Error::shape(format!(
                "RoI level {} out of range for {levels}-level pyramid",
                self.level
            )));
        }
        Ok(())
    }
}

/// Coarse mask prediction on a square logit grid.
#[derive(Debug, Clone)]
pub struct CoarseMask {
    /// Row-major m×m logits.
    pub logits: Matrix,
}

impl CoarseMask {
    pub fn new(logits: Matrix) -> Result<Self> {
        if logits.rows != logits.cols {
            return Err(Error::shape(format!(
                "coarse grid must be square, got {}x{}",
                logits.rows, logits.cols
            )));
        }
        if logits.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::shape("coarse logits must be finite".to_string()));
        }
        Ok(CoarseMask { logits })
    }

    /// Grid side length.
    pub fn m(&self) -> usize {
        self.logits.rows
    }

    /// Foreground probability of cell `(i, j)`.
    pub fn prob(&self, i: usize, j: usize) -> f64 {
        sigmoid(self.logits.at(i, j))
    }

    /// The logit grid as a 1×1×m×m map, so it can be bilinearly sampled.
    /// Cell `(i, j)` sits at normalized position `((j+0.5)/m, (i+0.5)/m)`.
    pub fn as_tensor(&self) -> Tensor4 {
        Tensor4 { n: 1, c: 1, h: self.m(), w: self.m(), data: self.logits.data.clone() }
    }

    /// The probability grid as a 1×1×m×m map.
    pub fn prob_tensor(&self) -> Tensor4 {
        let mut t = self.as_tensor();
        for v in &mut t.data {
            *v = sigmoid(*v);
        }
        t
    }
}

/// The `out_res`×`out_res` grid of box-interior sample points for an RoI, in
/// normalized image coordinates (row-major).
fn roi_grid(box_: &BoxF, out_res: usize) -> Vec<Pt> {
    let mut pts = Vec::with_capacity(out_res * out_res);
    for i in 0..out_res {
        for j in 0..out_res {
            pts.push(Pt::new(
                box_.x0 + (j as f64 + 0.5) / out_res as f64 * box_.width(),
                box_.y0 + (i as f64 + 0.5) / out_res as f64 * box_.height(),
            ));
        }
    }
    pts
}

/// Crops an RoI from its pyramid level by bilinear resampling on an
/// `out_res`×`out_res` grid of box-interior points.
pub fn roi_extract(pyr: &[Tensor4], roi: &RoI, out_res: usize) -> Result<Tensor4> {
    roi.validate(pyr.len())?;
    if out_res == 0 {
        return Err(Error::config("out_res must be positive"));
    }
    let level = &pyr[roi.level];
    let pts = roi_grid(&roi.box_, out_res);
    let sampled = bilinear_sample(level, &pts)?;
    // Row r of `sampled` holds the c feature values at grid point r.
    let mut out = Tensor4::zeros(1, level.c, out_res, out_res);
    for i in 0..out_res {
        for j in 0..out_res {
            for c in 0..level.c {
                *out.at_mut(0, c, i, j) = sampled.at(i * out_res + j, c);
            }
        }
    }
    Ok(out)
}

/// Backward of [`roi_extract`]: scatters the crop gradient back onto the
/// source level, returning a gradient tensor of the level's shape.
pub fn roi_extract_backward(pyr: &[Tensor4], roi: &RoI, grad_crop: &Tensor4) -> Result<Tensor4> {
    roi.validate(pyr.len())?;
    let level = &pyr[roi.level];
    let out_res = grad_crop.h;
    if grad_crop.shape() != (1, level.c, out_res, out_res) {
        return Err(Error::shape(format!(
            "crop gradient {:?} does not match a square crop of a {}-channel level",
            grad_crop.shape(),
            level.c
        )));
    }
    let pts = roi_grid(&roi.box_, out_res);
    let mut grad_rows = Matrix::zeros(pts.len(), level.c);
    for i in 0..out_res {
        for j in 0..out_res {
            for c in 0..level.c {
                *grad_rows.at_mut(i * out_res + j, c) = grad_crop.at(0, c, i, j);
            }
        }
    }
    bilinear_sample_backward(level, &pts, &grad_rows)
}

/// Learnable state of the coarse mask head: two 1×1 channel projections
/// with a GELU in between, ending in a single logit channel.
#[derive(Debug, Clone)]
pub struct CoarseHeadParams {
    pub proj1: LinearMap,
    pub proj2: LinearMap,
}

impl CoarseHeadParams {
    pub fn init(in_channels: usize, hidden: usize, rng: &mut impl FnMut() -> f64) -> Self {
        CoarseHeadParams {
            proj1: LinearMap::init(in_channels, hidden, rng),
            proj2: LinearMap::init(hidden, 1, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        CoarseHeadParams {
            proj1: LinearMap::zeros(self.proj1.in_dim, self.proj1.out_dim),
            proj2: LinearMap::zeros(self.proj2.in_dim, self.proj2.out_dim),
        }
    }
}

impl ParamGroup for CoarseHeadParams {
    fn for_each_param(&self, f: &mut dyn FnMut(f64)) {
        self.proj1.for_each_param(f);
        self.proj2.for_each_param(f);
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut f64)) {
        self.proj1.for_each_param_mut(f);
        self.proj2.for_each_param_mut(f);
    }
}

/// Forward intermediates of the coarse head.
#[derive(Debug, Clone)]
pub struct CoarseHeadCache {
    input: Tensor4,
    pre: Tensor4,
    act: Tensor4,
    /// MACs executed by the two projections.
    pub macs: u64,
}

/// Predicts the coarse logit grid from an RoI crop; the grid resolution
/// equals the crop resolution.
pub fn coarse_mask_head(
    roi_feat: &Tensor4,
    params: &CoarseHeadParams,
) -> Result<(CoarseMask, CoarseHeadCache)> {
    if roi_feat.n != 1 || roi_feat.h != roi_feat.w {
        return Err(Error::shape(format!(
            "expected a single square crop, got {:?}",
            roi_feat.shape()
        )));
    }
    let pre = channel_project(roi_feat, &params.proj1)?;
    let mut act = pre.clone();
    for v in &mut act.data {
        *v = gelu(*v);
    }
    let out = channel_project(&act, &params.proj2)?;
    let m = roi_feat.h;
    let logits = Matrix::from_vec(m, m, out.data)?;
    let macs = crate::tensor::linear::channel_project_macs(roi_feat, &params.proj1)
        + crate::tensor::linear::channel_project_macs(&act, &params.proj2);
    let cache = CoarseHeadCache { input: roi_feat.clone(), pre, act, macs };
    Ok((CoarseMask::new(logits)?, cache))
}

/// Backward of [`coarse_mask_head`]: accumulates parameter gradients and
/// returns the gradient w.r.t. the RoI crop.
pub fn coarse_mask_head_backward(
    params: &CoarseHeadParams,
    cache: &CoarseHeadCache,
    grad_logits: &Matrix,
    grads: &mut CoarseHeadParams,
) -> Result<Tensor4> {
    let m = cache.input.h;
    if grad_logits.rows != m || grad_logits.cols != m {
        return Err(Error::shape(format!(
            "logit gradient {}x{} does not match grid {m}x{m}",
            grad_logits.rows, grad_logits.cols
        )));
    }
    let g_out = Tensor4 { n: 1, c: 1, h: m, w: m, data: grad_logits.data.clone() };
    let mut g_act = channel_project_backward(&cache.act, &params.proj2, &g_out, &mut grads.proj2)?;
    for (g, z) in g_act.data.iter_mut().zip(&cache.pre.data) {
        *g *= gelu_grad(*z);
    }
    channel_project_backward(&cache.input, &params.proj1, &g_act, &mut grads.proj1)
}

/// Uncertainty of a foreground probability: highest at the decision
/// boundary p = 0.5, lowest at confident 0 or 1.
pub fn uncertainty(p: f64) -> f64 {
    -(p - 0.5).abs()
}

/// Indices of the `k` largest scores, ordered by descending score with ties
/// broken by ascending index. The result depends only on the ordering of
/// the scores, so it is invariant under monotone transforms.
pub fn top_k_by_score(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b].partial_cmp(&scores[a]).expect("scores must be comparable").then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// Samples the coarse probability field at RoI-normalized points.
fn coarse_prob_at(coarse: &CoarseMask, pts: &[Pt]) -> Result<Vec<f64>> {
    let sampled = bilinear_sample(&coarse.prob_tensor(), pts)?;
    Ok(sampled.data)
}

/// Training-time point selection: over-sample `k·n` uniform points, keep
/// the `⌈beta_frac·n⌉` most uncertain under the coarse prediction (in draw
/// order), and top up to `n` with fresh uniform points.
pub fn select_points_train(
    coarse: &CoarseMask,
    n: usize,
    k: f64,
    beta_frac: f64,
    rng: &mut dyn FnMut() -> f64,
) -> Result<PointSet> {
    if n == 0 {
        return Err(Error::config("need at least one point"));
    }
    if k < 1.0 {
        return Err(Error::config(format!("over-sampling factor k={k} must be >= 1")));
    }
    if !(0.0..=1.0).contains(&beta_frac) {
        return Err(Error::config(format!("beta_frac={beta_frac} must lie in [0,1]")));
    }
    let candidates = (k * n as f64).ceil() as usize;
    let keep = (beta_frac * n as f64).ceil() as usize;
    let mut pool = Vec::with_capacity(candidates);
    for _ in 0..candidates {
        let x = rng();
        let y = rng();
        pool.push(Pt::new(x, y));
    }
    let scores: Vec<f64> =
        coarse_prob_at(coarse, &pool)?.into_iter().map(uncertainty).collect();
    let mut chosen = top_k_by_score(&scores, keep);
    chosen.sort_unstable(); // keep draw order among the retained points
    let mut pts: PointSet = chosen.into_iter().map(|i| pool[i]).collect();
    while pts.len() < n {
        let x = rng();
        let y = rng();
        pts.push(Pt::new(x, y));
    }
    Ok(pts)
}

/// Inference-time point selection: centers of the `n` most uncertain grid
/// cells, ties broken by row-major cell index.
pub fn select_points_infer(coarse: &CoarseMask, n: usize) -> Result<PointSet> {
    let m = coarse.m();
    if n > m * m {
        return Err(Error::config(format!(
            "cannot select {n} points from a {m}x{m} grid"
        )));
    }
    let scores: Vec<f64> = (0..m * m)
        .map(|idx| uncertainty(coarse.prob(idx / m, idx % m)))
        .collect();
    Ok(top_k_by_score(&scores, n)
        .into_iter()
        .map(|idx| {
            Pt::new(((idx % m) as f64 + 0.5) / m as f64, ((idx / m) as f64 + 0.5) / m as f64)
        })
        .collect())
}

/// Per-point features: `c` bilinear fine-feature values concatenated with
/// the bilinear coarse logit, one row per point. Both maps are sampled at
/// the same RoI-normalized coordinates, so the fine tensor must be
/// RoI-aligned (e.g. a [`roi_extract`] crop).
pub fn point_features(fine: &Tensor4, coarse: &CoarseMask, pts: &[Pt]) -> Result<Matrix> {
    let f = bilinear_sample(fine, pts)?;
    let l = bilinear_sample(&coarse.as_tensor(), pts)?;
    let c = fine.c;
    let mut out = Matrix::zeros(pts.len(), c + 1);
    for r in 0..pts.len() {
        out.row_mut(r)[..c].copy_from_slice(f.row(r));
        out.row_mut(r)[c] = l.at(r, 0);
    }
    Ok(out)
}

/// Backward of [`point_features`]: splits the per-point gradient into a
/// gradient on the fine map and one on the coarse logit grid.
pub fn point_features_backward(
    fine: &Tensor4,
    coarse: &CoarseMask,
    pts: &[Pt],
    grad_out: &Matrix,
) -> Result<(Tensor4, Matrix)> {
    let c = fine.c;
    if grad_out.cols != c + 1 || grad_out.rows != pts.len() {
        return Err(Error::shape(format!(
            "feature gradient {}x{} does not match {} points with {} fine channels",
            grad_out.rows, grad_out.cols, pts.len(), c
        )));
    }
    let mut g_fine_rows = Matrix::zeros(pts.len(), c);
    let mut g_logit_rows = Matrix::zeros(pts.len(), 1);
    for r in 0..pts.len() {
        g_fine_rows.row_mut(r).copy_from_slice(&grad_out.row(r)[..c]);
        *g_logit_rows.at_mut(r, 0) = grad_out.row(r)[c];
    }
    let g_fine = bilinear_sample_backward(fine, pts, &g_fine_rows)?;
    let g_coarse_t = bilinear_sample_backward(&coarse.as_tensor(), pts, &g_logit_rows)?;
    let m = coarse.m();
    Ok((g_fine, Matrix::from_vec(m, m, g_coarse_t.data)?))
}

/// A three-layer MLP applied independently to each feature row, with GELU
/// after the first two layers. Used for per-point classification (1 output)
/// and per-point coordinate offsets (2 outputs).
#[derive(Debug, Clone)]
pub struct PointMlpParams {
    pub l1: LinearMap,
    pub l2: LinearMap,
    pub l3: LinearMap,
}

impl PointMlpParams {
    pub fn init(
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        rng: &mut impl FnMut() -> f64,
    ) -> Self {
        PointMlpParams {
            l1: LinearMap::init(in_dim, hidden, rng),
            l2: LinearMap::init(hidden, hidden, rng),
            l3: LinearMap::init(hidden, out_dim, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        PointMlpParams {
            l1: LinearMap::zeros(self.l1.in_dim, self.l1.out_dim),
            l2: LinearMap::zeros(self.l2.in_dim, self.l2.out_dim),
            l3: LinearMap::zeros(self.l3.in_dim, self.l3.out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.l1.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.l3.out_dim
    }

    /// MACs for one forward pass over `rows` feature rows.
    pub fn macs(&self, rows: usize) -> u64 {
        rows as u64 * (self.l1.macs_per_vec() + self.l2.macs_per_vec() + self.l3.macs_per_vec())
    }
}

impl ParamGroup for PointMlpParams {
    fn for_each_param(&self, f: &mut dyn FnMut(f64)) {
        self.l1.for_each_param(f);
        self.l2.for_each_param(f);
        self.l3.for_each_param(f);
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut f64)) {
        self.l1.for_each_param_mut(f);
        self.l2.for_each_param_mut(f);
        self.l3.for_each_param_mut(f);
    }
}

/// Forward intermediates of the per-point MLP.
#[derive(Debug, Clone)]
pub struct PointMlpCache {
    input: Matrix,
    pre1: Matrix,
    act1: Matrix,
    pre2: Matrix,
    act2: Matrix,
}

pub(crate) fn rows_project(x: &Matrix, map: &LinearMap) -> Result<Matrix> {
    if x.cols != map.in_dim {
        return Err(Error::shape(format!(
            "{}-wide rows into a {}->{} map",
            x.cols, map.in_dim, map.out_dim
        )));
    }
    let mut out = Matrix::zeros(x.rows, map.out_dim);
    for r in 0..x.rows {
        map.apply_vec(x.row(r), out.row_mut(r));
    }
    Ok(out)
}

/// Accumulates map gradients and returns the input-rows gradient.
pub(crate) fn rows_project_backward(
    x: &Matrix,
    map: &LinearMap,
    grad_out: &Matrix,
    grad_map: &mut LinearMap,
) -> Result<Matrix> {
    if grad_out.rows != x.rows || grad_out.cols != map.out_dim {
        return Err(Error::shape(format!(
            "row-gradient {}x{} does not match {} rows of a {}->{} map",
            grad_out.rows, grad_out.cols, x.rows, map.in_dim, map.out_dim
        )));
    }
    let mut grad_in = Matrix::zeros(x.rows, map.in_dim);
    for r in 0..x.rows {
        for o in 0..map.out_dim {
            let g = grad_out.at(r, o);
            if g == 0.0 {
                continue;
            }
            grad_map.bias[o] += g;
            for i in 0..map.in_dim {
                grad_map.weight[i * map.out_dim + o] += x.at(r, i) * g;
                *grad_in.at_mut(r, i) += map.w(i, o) * g;
            }
        }
    }
    Ok(grad_in)
}

fn gelu_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for v in &mut out.data {
        *v = gelu(*v);
    }
    out
}

/// Runs the shared MLP over every feature row.
pub fn point_mlp_forward(feats: &Matrix, p: &PointMlpParams) -> Result<(Matrix, PointMlpCache)> {
    let pre1 = rows_project(feats, &p.l1)?;
    let act1 = gelu_rows(&pre1);
    let pre2 = rows_project(&act1, &p.l2)?;
    let act2 = gelu_rows(&pre2);
    let out = rows_project(&act2, &p.l3)?;
    let cache = PointMlpCache { input: feats.clone(), pre1, act1, pre2, act2 };
    Ok((out, cache))
}

/// Backward of [`point_mlp_forward`]: accumulates parameter gradients and
/// returns the gradient w.r.t. the input rows.
pub fn point_mlp_backward(
    p: &PointMlpParams,
    cache: &PointMlpCache,
    grad_out: &Matrix,
    grads: &mut PointMlpParams,
) -> Result<Matrix> {
    let mut g = rows_project_backward(&cache.act2, &p.l3, grad_out, &mut grads.l3)?;
    for (gv, z) in g.data.iter_mut().zip(&cache.pre2.data) {
        *gv *= gelu_grad(*z);
    }
    let mut g = rows_project_backward(&cache.act1, &p.l2, &g, &mut grads.l2)?;
    for (gv, z) in g.data.iter_mut().zip(&cache.pre1.data) {
        *gv *= gelu_grad(*z);
    }
    rows_project_backward(&cache.input, &p.l1, &g, &mut grads.l1)
}

/// Per-point foreground logits: the shared MLP restricted to a single
/// output column.
pub fn point_classify(feats: &Matrix, p: &PointMlpParams) -> Result<(Vec<f64>, PointMlpCache)> {
    if p.out_dim() != 1 {
        return Err(Error::config(format!(
            "point classifier must have one output, got {}",
            p.out_dim()
        )));
    }
    let (out, cache) = point_mlp_forward(feats, p)?;
    Ok((out.data, cache))
}

/// Maps a normalized box to the pyramid level it should read features from:
/// `⌊(levels−1) + log₂(√area)⌋` clamped to the valid range, so a full-image
/// box lands on the coarsest level and small boxes on the finest.
pub fn assign_level(box_: &BoxF, levels: usize) -> Result<usize> {
    if levels == 0 {
        return Err(Error::config("pyramid has no levels"));
    }
    if !box_.is_valid() {
        return Err(Error::geometry("cannot assign a level to a degenerate box".to_string()));
    }
    let raw = (levels as f64 - 1.0 + box_.area().sqrt().log2()).floor();
    Ok(raw.clamp(0.0, levels as f64 - 1.0) as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::{finite_diff_grad, max_rel_err};

    fn lcg(seed: u64) -> impl FnMut() -> f64 {
        let mut state = seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
        move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    fn full_box() -> BoxF {
        BoxF::new(0.0, 0.0, 1.0, 1.0)
    }

    #[test]
    fn full_image_crop_at_native_resolution_is_identity() {
        let mut rng = lcg(1);
        let level = Tensor4::from_fn(1, 3, 6, 6, |_, _, _, _| rng());
        let crop = roi_extract(&[level.clone()], &RoI::new(full_box(), 0), 6).unwrap();
        for (a, b) in crop.data.iter().zip(&level.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_map_gives_constant_crop() {
        let level = Tensor4::from_fn(1, 2, 5, 7, |_, c, _, _| c as f64 + 3.0);
        let roi = RoI::new(BoxF::new(0.1, 0.2, 0.9, 0.7), 0);
        let crop = roi_extract(&[level], &roi, 4).unwrap();
        for c in 0..2 {
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(crop.at(0, c, i, j), c as f64 + 3.0);
                }
            }
        }
    }

    #[test]
    fn linear_field_is_cropped_exactly() {
        // f(x, y) = 2x + 3y in normalized coordinates, evaluated at pixel
        // centers; bilinear interpolation is exact inside the center hull,
        // so an interior box reproduces the affine field at its own grid.
        let h = 8;
        let w = 8;
        let level = Tensor4::from_fn(1, 1, h, w, |_, _, i, j| {
            2.0 * ((j as f64 + 0.5) / w as f64) + 3.0 * ((i as f64 + 0.5) / h as f64)
        });
        let box_ = BoxF::new(0.25, 0.25, 0.75, 0.75);
        let crop = roi_extract(&[level], &RoI::new(box_, 0), 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let x = box_.x0 + (j as f64 + 0.5) / 4.0 * box_.width();
                let y = box_.y0 + (i as f64 + 0.5) / 4.0 * box_.height();
                assert!((crop.at(0, 0, i, j) - (2.0 * x + 3.0 * y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_boxes_are_rejected() {
        let level = Tensor4::zeros(1, 1, 4, 4);
        let flat = RoI::new(BoxF::new(0.3, 0.5, 0.3, 0.9), 0);
        assert!(roi_extract(&[level.clone()], &flat, 3).is_err());
        let inverted = RoI::new(BoxF::new(0.8, 0.1, 0.2, 0.9), 0);
        assert!(roi_extract(&[level.clone()], &inverted, 3).is_err());
        let bad_level = RoI::new(full_box(), 3);
        assert!(roi_extract(&[level], &bad_level, 3).is_err());
    }

    #[test]
    fn crop_backward_matches_finite_differences() {
        let mut rng = lcg(2);
        let level = Tensor4::from_fn(1, 2, 5, 5, |_, _, _, _| rng());
        let roi = RoI::new(BoxF::new(0.15, 0.3, 0.8, 0.95), 0);
        let mix: Vec<f64> = (0..2 * 3 * 3).map(|_| rng() - 0.5).collect();
        let grad_crop = Tensor4 { n: 1, c: 2, h: 3, w: 3, data: mix.clone() };
        let analytic = roi_extract_backward(&[level.clone()], &roi, &grad_crop).unwrap();
        let numeric = finite_diff_grad(
            &mut |v| {
                let probe = Tensor4 { data: v.to_vec(), ..level.clone() };
                let crop = roi_extract(&[probe], &roi, 3)?;
                Ok(crop.data.iter().zip(&mix).map(|(a, b)| a * b).sum())
            },
            &level.data,
            1e-6,
        )
        .unwrap();
        assert!(max_rel_err(&analytic.data, &numeric) < 1e-8);
    }

    #[test]
    fn zero_weight_coarse_head_outputs_its_bias() {
        let mut params = CoarseHeadParams {
            proj1: LinearMap::zeros(4, 3),
            proj2: LinearMap::zeros(3, 1),
        };
        params.proj2.bias[0] = -1.25;
        let mut rng = lcg(3);
        let feat = Tensor4::from_fn(1, 4, 7, 7, |_, _, _, _| rng());
        let (coarse, _) = coarse_mask_head(&feat, &params).unwrap();
        assert_eq!(coarse.m(), 7);
        assert!(coarse.logits.data.iter().all(|&v| v == -1.25));
    }

    #[test]
    fn coarse_head_grid_matches_crop_resolution() {
        let mut rng = lcg(4);
        let params = CoarseHeadParams::init(64, 16, &mut rng);
        let feat = Tensor4::from_fn(1, 64, 7, 7, |_, _, _, _| rng() - 0.5);
        let (coarse, _) = coarse_mask_head(&feat, &params).unwrap();
        assert_eq!((coarse.logits.rows, coarse.logits.cols), (7, 7));
    }

    #[test]
    fn coarse_head_backward_matches_finite_differences() {
        let mut rng = lcg(5);
        let params = CoarseHeadParams::init(5, 4, &mut rng);
        let feat = Tensor4::from_fn(1, 5, 3, 3, |_, _, _, _| rng() - 0.5);
        let mix: Vec<f64> = (0..9).map(|_| rng() - 0.5).collect();

        let objective = |f: &Tensor4, p: &CoarseHeadParams| -> f64 {
            let (coarse, _) = coarse_mask_head(f, p).unwrap();
            coarse.logits.data.iter().zip(&mix).map(|(a, b)| a * b).sum()
        };

        let (_, cache) = coarse_mask_head(&feat, &params).unwrap();
        let grad_logits = Matrix::from_vec(3, 3, mix.clone()).unwrap();
        let mut grads = params.zeros_like();
        let g_feat =
            coarse_mask_head_backward(&params, &cache, &grad_logits, &mut grads).unwrap();

        let flat = params.flatten();
        let num_p = finite_diff_grad(
            &mut |v| {
                let mut probe = params.clone();
                probe.load_flat(v).unwrap();
                Ok(objective(&feat, &probe))
            },
            &flat,
            1e-6,
        )
        .unwrap();
        assert!(max_rel_err(&grads.flatten(), &num_p) < 1e-8);

        let num_f = finite_diff_grad(
            &mut |v| Ok(objective(&Tensor4 { data: v.to_vec(), ..feat.clone() }, &params)),
            &feat.data,
            1e-6,
        )
        .unwrap();
        assert!(max_rel_err(&g_feat.data, &num_f) < 1e-8);
    }

    #[test]
    fn uncertainty_peaks_at_the_decision_boundary() {
        assert_eq!(uncertainty(0.5), 0.0);
        assert_eq!(uncertainty(0.0), -0.5);
        assert_eq!(uncertainty(1.0), -0.5);
        // Most-to-least uncertain ordering of [0.1, 0.45, 0.8] is
        // [0.45, 0.8, 0.1].
        let order = top_k_by_score(&[0.1, 0.45, 0.8].map(uncertainty), 3);
        assert_eq!(order, vec![1, 2, 0]);
    }

    #[test]
    fn top_k_is_invariant_under_monotone_transforms() {
        let mut rng = lcg(6);
        let scores: Vec<f64> = (0..30).map(|_| rng() - 0.5).collect();
        let warped: Vec<f64> = scores.iter().map(|s| 3.0 * s.tanh() + 7.0).collect();
        for k in [1, 5, 17, 30] {
            assert_eq!(top_k_by_score(&scores, k), top_k_by_score(&warped, k));
        }
    }

    fn ramp_coarse() -> CoarseMask {
        // Logits rise left to right, so the uncertain band sits mid-grid.
        let m = 7;
        let logits = Matrix::from_vec(
            m,
            m,
            (0..m * m).map(|idx| (idx % m) as f64 - 3.0).collect(),
        )
        .unwrap();
        CoarseMask::new(logits).unwrap()
    }

    #[test]
    fn train_selection_counts_importance_and_random_points() {
        let coarse = ramp_coarse();
        let (n, k, beta) = (4usize, 3.0, 0.75);
        let pts = select_points_train(&coarse, n, k, beta, &mut lcg(7)).unwrap();
        assert_eq!(pts.len(), n);

        // Replay the draws: 12 candidates, then one fill point.
        let mut replay = lcg(7);
        let pool: Vec<Pt> = (0..12)
            .map(|_| {
                let x = replay();
                let y = replay();
                Pt::new(x, y)
            })
            .collect();
        let scores: Vec<f64> =
            coarse_prob_at(&coarse, &pool).unwrap().into_iter().map(uncertainty).collect();
        let mut keep = top_k_by_score(&scores, 3);
        keep.sort_unstable();
        let expected: Vec<Pt> = keep.iter().map(|&i| pool[i]).collect();
        assert_eq!(&pts[..3], &expected[..]);
        let fill = Pt::new(replay(), replay());
        assert_eq!(pts[3], fill);
    }

    #[test]
    fn zero_importance_fraction_gives_uniform_points() {
        let coarse = ramp_coarse();
        let pts = select_points_train(&coarse, 6, 2.0, 0.0, &mut lcg(8)).unwrap();
        assert_eq!(pts.len(), 6);
        assert!(pts.iter().all(|p| (0.0..1.0).contains(&p.x) && (0.0..1.0).contains(&p.y)));
    }

    #[test]
    fn train_selection_is_deterministic_for_a_seed() {
        let coarse = ramp_coarse();
        let a = select_points_train(&coarse, 16, 3.0, 0.75, &mut lcg(9)).unwrap();
        let b = select_points_train(&coarse, 16, 3.0, 0.75, &mut lcg(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn infer_selection_breaks_ties_row_major() {
        let coarse = CoarseMask::new(Matrix::zeros(3, 3)).unwrap();
        let pts = select_points_infer(&coarse, 2).unwrap();
        let cell = 1.0 / 3.0;
        assert_eq!(pts, vec![Pt::new(0.5 * cell, 0.5 * cell), Pt::new(1.5 * cell, 0.5 * cell)]);
    }

    #[test]
    fn infer_selection_finds_the_unique_uncertain_cell() {
        let m = 4;
        let mut logits = Matrix::zeros(m, m);
        for v in &mut logits.data {
            *v = 9.0; // p ≈ 1: confidently foreground
        }
        *logits.at_mut(2, 1) = 0.0; // p = 0.5: maximally uncertain
        let coarse = CoarseMask::new(logits).unwrap();
        let pts = select_points_infer(&coarse, 1).unwrap();
        assert_eq!(pts, vec![Pt::new(1.5 / 4.0, 2.5 / 4.0)]);
    }

    #[test]
    fn infer_selection_bounds() {
        let coarse = CoarseMask::new(Matrix::zeros(3, 3)).unwrap();
        assert_eq!(select_points_infer(&coarse, 9).unwrap().len(), 9);
        assert!(select_points_infer(&coarse, 10).is_err());
    }

    #[test]
    fn point_features_width_and_grid_node_exactness() {
        let mut rng = lcg(10);
        let fine = Tensor4::from_fn(1, 5, 7, 7, |_, _, _, _| rng());
        let coarse = ramp_coarse();
        // Coarse cell centers are interpolation nodes of the logit grid.
        let pts = vec![Pt::new(2.5 / 7.0, 4.5 / 7.0), Pt::new(0.5 / 7.0, 0.5 / 7.0)];
        let feats = point_features(&fine, &coarse, &pts).unwrap();
        assert_eq!((feats.rows, feats.cols), (2, 6));
        assert_eq!(feats.at(0, 5), coarse.logits.at(4, 2));
        assert_eq!(feats.at(1, 5), coarse.logits.at(0, 0));
    }

    #[test]
    fn point_features_match_two_sampler_composition() {
        let mut rng = lcg(11);
        let fine = Tensor4::from_fn(1, 4, 6, 6, |_, _, _, _| rng() - 0.5);
        let coarse = ramp_coarse();
        let pts: Vec<Pt> = (0..9).map(|_| Pt::new(rng(), rng())).collect();
        let feats = point_features(&fine, &coarse, &pts).unwrap();
        let f = bilinear_sample(&fine, &pts).unwrap();
        let l = bilinear_sample(&coarse.as_tensor(), &pts).unwrap();
        for r in 0..9 {
            for c in 0..4 {
                assert!((feats.at(r, c) - f.at(r, c)).abs() < 1e-12);
            }
            assert!((feats.at(r, 4) - l.at(r, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn point_features_backward_matches_finite_differences() {
        let mut rng = lcg(12);
        let fine = Tensor4::from_fn(1, 3, 4, 4, |_, _, _, _| rng());
        let coarse = CoarseMask::new(
            Matrix::from_vec(3, 3, (0..9).map(|_| rng() - 0.5).collect()).unwrap(),
        )
        .unwrap();
        let pts: Vec<Pt> = (0..5).map(|_| Pt::new(rng(), rng())).collect();
        let mix: Vec<f64> = (0..5 * 4).map(|_| rng() - 0.5).collect();
        let grad_out = Matrix::from_vec(5, 4, mix.clone()).unwrap();
        let (g_fine, g_logits) =
            point_features_backward(&fine, &coarse, &pts, &grad_out).unwrap();

        let num_fine = finite_diff_grad(
            &mut |v| {
                let probe = Tensor4 { data: v.to_vec(), ..fine.clone() };
                let feats = point_features(&probe, &coarse, &pts)?;
                Ok(feats.data.iter().zip(&mix).map(|(a, b)| a * b).sum())
            },
            &fine.data,
            1e-6,
        )
        .unwrap();
        assert!(max_rel_err(&g_fine.data, &num_fine) < 1e-8);

        let num_logits = finite_diff_grad(
            &mut |v| {
                let probe =
                    CoarseMask::new(Matrix::from_vec(3, 3, v.to_vec()).unwrap()).unwrap();
                let feats = point_features(&fine, &probe, &pts)?;
                Ok(feats.data.iter().zip(&mix).map(|(a, b)| a * b).sum())
            },
            &coarse.logits.data,
            1e-6,
        )
        .unwrap();
        assert!(max_rel_err(&g_logits.data, &num_logits) < 1e-8);
    }

    #[test]
    fn zero_weight_classifier_outputs_its_bias() {
        let mut p = PointMlpParams {
            l1: LinearMap::zeros(6, 4),
            l2: LinearMap::zeros(4, 4),
            l3: LinearMap::zeros(4, 1),
        };
        p.l3.bias[0] = 0.75;
        let mut rng = lcg(13);
        let feats = Matrix::from_vec(5, 6, (0..30).map(|_| rng()).collect()).unwrap();
        let (logits, _) = point_classify(&feats, &p).unwrap();
        assert_eq!(logits, vec![0.75; 5]);
    }

    #[test]
    fn classifier_is_permutation_equivariant() {
        let mut rng = lcg(14);
        let p = PointMlpParams::init(5, 8, 1, &mut rng);
        let feats = Matrix::from_vec(6, 5, (0..30).map(|_| rng() - 0.5).collect()).unwrap();
        let (logits, _) = point_classify(&feats, &p).unwrap();
        let perm = [4usize, 0, 5, 2, 1, 3];
        let mut shuffled = Matrix::zeros(6, 5);
        for (r, &src) in perm.iter().enumerate() {
            shuffled.row_mut(r).copy_from_slice(feats.row(src));
        }
        let (shuffled_logits, _) = point_classify(&shuffled, &p).unwrap();
        for (r, &src) in perm.iter().enumerate() {
            assert_eq!(shuffled_logits[r], logits[src]);
        }
    }

    #[test]
    fn point_mlp_backward_matches_finite_differences() {
        let mut rng = lcg(15);
        let p = PointMlpParams::init(4, 5, 2, &mut rng);
        let feats = Matrix::from_vec(3, 4, (0..12).map(|_| rng() - 0.5).collect()).unwrap();
        let mix: Vec<f64> = (0..6).map(|_| rng() - 0.5).collect();

        let objective = |f: &Matrix, pp: &PointMlpParams| -> f64 {
            let (out, _) = point_mlp_forward(f, pp).unwrap();
            out.data.iter().zip(&mix).map(|(a, b)| a * b).sum()
        };

        let (out, cache) = point_mlp_forward(&feats, &p).unwrap();
        let grad_out = Matrix { data: mix.clone(), ..out };
        let mut grads = p.zeros_like();
        let g_in = point_mlp_backward(&p, &cache, &grad_out, &mut grads).unwrap();

        let flat = p.flatten();
        let num_p = finite_diff_grad(
            &mut |v| {
                let mut probe = p.clone();
                probe.load_flat(v).unwrap();
                Ok(objective(&feats, &probe))
            },
            &flat,
            1e-6,
        )
        .unwrap();
        assert!(max_rel_err(&grads.flatten(), &num_p) < 1e-8);

        let num_in = finite_diff_grad(
            &mut |v| Ok(objective(&Matrix { data: v.to_vec(), ..feats.clone() }, &p)),
            &feats.data,
            1e-6,
        )
        .unwrap();
        assert!(max_rel_err(&g_in.data, &num_in) < 1e-8);
    }

    #[test]
    fn level_assignment_scales_with_box_area() {
        let levels = 4;
        assert_eq!(assign_level(&full_box(), levels).unwrap(), 3);
        assert_eq!(assign_level(&BoxF::new(0.0, 0.0, 0.5, 0.5), levels).unwrap(), 2);
        assert_eq!(assign_level(&BoxF::new(0.0, 0.0, 0.25, 0.25), levels).unwrap(), 1);
        assert_eq!(assign_level(&BoxF::new(0.0, 0.0, 0.01, 0.01), levels).unwrap(), 0);
        // Single-level pyramids take everything.
        assert_eq!(assign_level(&BoxF::new(0.2, 0.2, 0.3, 0.3), 1).unwrap(), 0);
    }
}
