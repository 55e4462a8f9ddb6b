//! Edge-guided training loss.
//!
//! The total objective combines four terms: box classification (softmax
//! cross-entropy), boundary point localization (mean Euclidean distance
//! over canonically ordered pairs), coarse mask supervision (mean binary
//! cross-entropy), and a point-match term that averages per-point
//! classification with a smooth-L1 pull of each predicted boundary point
//! toward its nearest resampled ground-truth boundary point.

use crate::error::{Error, Result};
use crate::geometry::{polygon_perimeter, PointSet, Pt};
use crate::point_head::CoarseMask;
use crate::tensor::entropy::{mean_bce, mean_bce_backward, softmax_cross_entropy};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Weight of the point-localization term.
    pub alpha: f64,
    /// Weight of the coarse-mask term.
    pub beta: f64,
    /// Smooth-L1 transition point.
    pub smooth_l1_delta: f64,
    /// Number of points the ground-truth boundary is resampled to.
    pub gt_resample: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { alpha: 0.5, beta: 1.0, smooth_l1_delta: 1.0, gt_resample: 32 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::config("loss weights must be non-negative"));
        }
        if self.smooth_l1_delta <= 0.0 {
            return Err(Error::config("smooth_l1_delta must be positive"));
        }
        if self.gt_resample < 3 {
            return Err(Error::config("gt_resample must be at least 3"));
        }
        Ok(())
    }
}

/// The four weighted terms and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_cls_b: f64,
    pub l_ploc_b: f64,
    pub l_coarse_m: f64,
    pub l_pmat_m: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn zero() -> Self {
        LossBreakdown { l_cls_b: 0.0, l_ploc_b: 0.0, l_coarse_m: 0.0, l_pmat_m: 0.0, total: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.l_cls_b.is_finite()
            && self.l_ploc_b.is_finite()
            && self.l_coarse_m.is_finite()
            && self.l_pmat_m.is_finite()
            && self.total.is_finite()
    }
}

/// A predicted boundary paired with its ground truth: the prediction is
/// matched (detached) against the resampled boundary, and the resulting
/// index assignment supervises the live prediction.
#[derive(Debug, Clone)]
pub struct BoundaryPair {
    pub pred: PointSet,
    pub gt_polygon: PointSet,
    pub gt_resampled: PointSet,
    pub match_idx: Vec<usize>,
}

impl BoundaryPair {
    /// Matches `pred` against `gt_polygon` resampled to `m` points.
    pub fn build(pred: PointSet, gt_polygon: PointSet, m: usize) -> Result<Self> {
        let gt_resampled = resample_boundary(&gt_polygon, m)?;
        let match_idx = nearest_match(&pred, &gt_resampled)?;
        Ok(BoundaryPair { pred, gt_polygon, gt_resampled, match_idx })
    }
}

/// Box classification loss: softmax cross-entropy over per-box logits.
pub fn loss_cls_box(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    softmax_cross_entropy(logits, labels)
}

/// Mean Euclidean distance between two equally sized point sets after
/// sorting both lexicographically by (x, then y).
pub fn loss_ploc(pred: &[Pt], gt: &[Pt]) -> Result<f64> {
    Ok(loss_ploc_with_grad(pred, gt)?.0)
}

/// [`loss_ploc`] plus its gradient w.r.t. each predicted point, returned in
/// the caller's original `pred` order.
pub fn loss_ploc_with_grad(pred: &[Pt], gt: &[Pt]) -> Result<(f64, Vec<Pt>)> {
    if pred.is_empty() || pred.len() != gt.len() {
        return Err(Error::shape(format!(
            "point sets of size {} and {} cannot be index-paired",
            pred.len(),
            gt.len()
        )));
    }
    let n = pred.len();
    let by_xy = |a: &Pt, b: &Pt| {
        a.x.partial_cmp(&b.x).expect("coordinates must be comparable").then(
            a.y.partial_cmp(&b.y).expect("coordinates must be comparable"),
        )
    };
    let mut pred_order: Vec<usize> = (0..n).collect();
    pred_order.sort_by(|&a, &b| by_xy(&pred[a], &pred[b]));
    let mut gt_sorted: Vec<Pt> = gt.to_vec();
    gt_sorted.sort_by(by_xy);

    let mut total = 0.0;
    let mut grad = vec![Pt::new(0.0, 0.0); n];
    for (rank, &pi) in pred_order.iter().enumerate() {
        let d = pred[pi].dist(gt_sorted[rank]);
        total += d;
        if d > 0.0 {
            grad[pi].x = (pred[pi].x - gt_sorted[rank].x) / (d * n as f64);
            grad[pi].y = (pred[pi].y - gt_sorted[rank].y) / (d * n as f64);
        }
    }
    Ok((total / n as f64, grad))
}

/// Mean per-cell binary cross-entropy of the coarse logits against a {0,1}
/// target grid.
pub fn loss_coarse(coarse: &CoarseMask, gt_grid: &Matrix) -> Result<f64> {
    if gt_grid.rows != coarse.logits.rows || gt_grid.cols != coarse.logits.cols {
        return Err(Error::shape(format!(
            "target grid {}x{} does not match logit grid {}x{}",
            gt_grid.rows, gt_grid.cols, coarse.logits.rows, coarse.logits.cols
        )));
    }
    mean_bce(&coarse.logits.data, &gt_grid.data)
}

/// Gradient of [`loss_coarse`] w.r.t. the logit grid.
pub fn loss_coarse_backward(coarse: &CoarseMask, gt_grid: &Matrix, upstream: f64) -> Matrix {
    let g = mean_bce_backward(&coarse.logits.data, &gt_grid.data, upstream);
    Matrix { rows: coarse.logits.rows, cols: coarse.logits.cols, data: g }
}

/// Resamples a closed polygon to `m` points uniformly spaced by arc length,
/// starting at vertex 0.
pub fn resample_boundary(polygon: &[Pt], m: usize) -> Result<PointSet> {
    if polygon.len() < 3 {
        return Err(Error::geometry(format!(
            "cannot resample a {}-vertex polygon",
            polygon.len()
        )));
    }
    if m == 0 {
        return Err(Error::config("cannot resample to zero points"));
    }
    let perimeter = polygon_perimeter(polygon);
    if perimeter <= 0.0 {
        return Err(Error::geometry("zero-perimeter polygon".to_string()));
    }
    let v = polygon.len();
    // Cumulative arc length at the start of each edge, plus the total.
    let mut cum = Vec::with_capacity(v + 1);
    let mut acc = 0.0;
    for i in 0..v {
        cum.push(acc);
        acc += polygon[i].dist(polygon[(i + 1) % v]);
    }
    cum.push(acc);

    let mut out = Vec::with_capacity(m);
    let mut edge = 0;
    for k in 0..m {
        let s = k as f64 / m as f64 * perimeter;
        while edge + 1 < v && cum[edge + 1] <= s {
            edge += 1;
        }
        let len = cum[edge + 1] - cum[edge];
        let t = if len > 0.0 { (s - cum[edge]) / len } else { 0.0 };
        let a = polygon[edge];
        let b = polygon[(edge + 1) % v];
        out.push(Pt::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
    }
    Ok(out)
}

/// For every predicted point, the index of its Euclidean-nearest resampled
/// ground-truth point. Ties go to the lowest index; many-to-one is allowed.
pub fn nearest_match(pred_in: &[Pt], gt_ipt: &[Pt]) -> Result<Vec<usize>> {
    if gt_ipt.is_empty() {
        return Err(Error::geometry("cannot match against an empty boundary".to_string()));
    }
    Ok(pred_in
        .iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d2 = p.dist2(gt_ipt[0]);
            for (i, g) in gt_ipt.iter().enumerate().skip(1) {
                let d2 = p.dist2(*g);
                if d2 < best_d2 {
                    best = i;
                    best_d2 = d2;
                }
            }
            best
        })
        .collect())
}

/// Smooth-L1: quadratic inside `|d| < delta`, linear outside, continuous at
/// the transition.
pub fn smooth_l1(d: f64, delta: f64) -> f64 {
    if d.abs() < delta {
        0.5 * d * d / delta
    } else {
        d.abs() - 0.5 * delta
    }
}

/// Derivative of [`smooth_l1`] in `d`.
pub fn smooth_l1_grad(d: f64, delta: f64) -> f64 {
    if d.abs() < delta {
        d / delta
    } else {
        d.signum()
    }
}

/// Point-guidance loss: mean over points of the smooth-L1 applied to each
/// coordinate of `pred_out[i] − gt_ipt[match[i]]`. Empty prediction sets
/// contribute zero (the instance is skipped).
pub fn loss_pg(pred_out: &[Pt], gt_ipt: &[Pt], match_idx: &[usize], delta: f64) -> Result<f64> {
    Ok(loss_pg_with_grad(pred_out, gt_ipt, match_idx, delta)?.0)
}

/// [`loss_pg`] plus its gradient w.r.t. each predicted point.
pub fn loss_pg_with_grad(
    pred_out: &[Pt],
    gt_ipt: &[Pt],
    match_idx: &[usize],
    delta: f64,
) -> Result<(f64, Vec<Pt>)> {
    if match_idx.len() != pred_out.len() {
        return Err(Error::shape(format!(
            "{} match indices for {} predicted points",
            match_idx.len(),
            pred_out.len()
        )));
    }
    if pred_out.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    if let Some(&bad) = match_idx.iter().find(|&&i| i >= gt_ipt.len()) {
        return Err(Error::shape(format!(
            "match index {bad} out of range for {} boundary points",
            gt_ipt.len()
        )));
    }
    let n = pred_out.len() as f64;
    let mut total = 0.0;
    let mut grad = vec![Pt::new(0.0, 0.0); pred_out.len()];
    for (i, (p, &mi)) in pred_out.iter().zip(match_idx).enumerate() {
        let g = gt_ipt[mi];
        total += smooth_l1(p.x - g.x, delta) + smooth_l1(p.y - g.y, delta);
        grad[i].x = smooth_l1_grad(p.x - g.x, delta) / n;
        grad[i].y = smooth_l1_grad(p.y - g.y, delta) / n;
    }
    Ok((total / n, grad))
}

/// Point-match loss: the arithmetic mean of the per-point classification
/// loss and the point-guidance loss.
pub fn loss_pmat(l_pcls: f64, l_pg: f64) -> f64 {
    0.5 * (l_pcls + l_pg)
}

/// Combines the four terms into the weighted total.
pub fn loss_total(
    l_cls_b: f64,
    l_ploc_b: f64,
    l_coarse_m: f64,
    l_pmat_m: f64,
    cfg: &LossConfig,
) -> LossBreakdown {
    LossBreakdown {
        l_cls_b,
        l_ploc_b,
        l_coarse_m,
        l_pmat_m,
        total: l_cls_b + cfg.alpha * l_ploc_b + cfg.beta * l_coarse_m + l_pmat_m,
    }
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

    fn unit_square() -> Vec<Pt> {
        vec![Pt::new(0.0, 0.0), Pt::new(1.0, 0.0), Pt::new(1.0, 1.0), Pt::new(0.0, 1.0)]
    }

    #[test]
    fn box_classification_degenerate_and_separated_cases() {
        // Margin-10 separation: loss is below 1e-4.
        let logits = Matrix::from_vec(2, 2, vec![10.0, 0.0, 0.0, 10.0]).unwrap();
        assert!(loss_cls_box(&logits, &[0, 1]).unwrap() < 1e-4);
        // Uniform logits over two classes: exactly ln 2.
        let flat = Matrix::from_vec(3, 2, vec![0.0; 6]).unwrap();
        let l = loss_cls_box(&flat, &[0, 1, 0]).unwrap();
        assert!((l - 0.6931471805599453).abs() < 1e-12);
        // Empty batch contributes nothing.
        assert_eq!(loss_cls_box(&Matrix::zeros(0, 2), &[]).unwrap(), 0.0);
    }

    #[test]
    fn point_localization_basics() {
        let a = vec![Pt::new(0.2, 0.7), Pt::new(0.5, 0.1)];
        assert_eq!(loss_ploc(&a, &a).unwrap(), 0.0);
        // Single 3-4-5 pair.
        let l = loss_ploc(&[Pt::new(0.0, 0.0)], &[Pt::new(3.0, 4.0)]).unwrap();
        assert_eq!(l, 5.0);
        // Size mismatch is an error.
        assert!(loss_ploc(&a, &[Pt::new(0.0, 0.0)]).is_err());
        assert!(loss_ploc(&[], &[]).is_err());
    }

    #[test]
    fn point_localization_matches_sort_and_average_oracle() {
        let mut rng = lcg(1);
        for _ in 0..10 {
            let pred: Vec<Pt> = (0..16).map(|_| Pt::new(rng(), rng())).collect();
            let gt: Vec<Pt> = (0..16).map(|_| Pt::new(rng(), rng())).collect();
            let l = loss_ploc(&pred, &gt).unwrap();

            let key = |p: &Pt| (p.x, p.y);
            let mut ps = pred.clone();
            ps.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
            let mut gs = gt.clone();
            gs.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
            let want: f64 =
                ps.iter().zip(&gs).map(|(p, g)| p.dist(*g)).sum::<f64>() / 16.0;
            assert!((l - want).abs() < 1e-12);
        }
    }

    #[test]
    fn point_localization_is_translation_covariant() {
        let mut rng = lcg(2);
        let pred: Vec<Pt> = (0..8).map(|_| Pt::new(rng(), rng())).collect();
        let gt: Vec<Pt> = (0..8).map(|_| Pt::new(rng(), rng())).collect();
        let l0 = loss_ploc(&pred, &gt).unwrap();
        let shift = |ps: &[Pt]| -> Vec<Pt> {
            ps.iter().map(|p| Pt::new(p.x + 2.25, p.y - 0.5)).collect()
        };
        let l1 = loss_ploc(&shift(&pred), &shift(&gt)).unwrap();
        assert!((l0 - l1).abs() < 1e-12);
    }

    #[test]
    fn point_localization_gradient_matches_finite_differences() {
        // Spread the x coordinates so a 1e-6 probe cannot change the sort
        // order, keeping the objective smooth around the sample.
        let pred = vec![Pt::new(0.1, 0.8), Pt::new(0.4, 0.2), Pt::new(0.7, 0.5)];
        let gt = vec![Pt::new(0.25, 0.3), Pt::new(0.55, 0.9), Pt::new(0.9, 0.1)];
        let (_, grad) = loss_ploc_with_grad(&pred, &gt).unwrap();
        let flat: Vec<f64> = pred.iter().flat_map(|p| [p.x, p.y]).collect();
        let analytic: Vec<f64> = grad.iter().flat_map(|g| [g.x, g.y]).collect();
        let numeric = finite_diff_grad(
            &mut |v| {
                let probe: Vec<Pt> =
                    v.chunks(2).map(|c| Pt::new(c[0], c[1])).collect();
                loss_ploc(&probe, &gt)
            },
            &flat,
            1e-6,
        )
        .unwrap();
        assert!(max_rel_err(&analytic, &numeric) < 1e-8);
    }

    #[test]
    fn coarse_loss_separated_uniform_and_mismatched() {
        let target = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let strong = CoarseMask::new(
            Matrix::from_vec(2, 2, vec![10.0, -10.0, -10.0, 10.0]).unwrap(),
        )
        .unwrap();
        assert!(loss_coarse(&strong, &target).unwrap() < 1e-4);

        let flat = CoarseMask::new(Matrix::zeros(2, 2)).unwrap();
        let l = loss_coarse(&flat, &target).unwrap();
        assert!((l - 0.6931471805599453).abs() < 1e-12);

        let bad = Matrix::zeros(3, 2);
        assert!(loss_coarse(&flat, &bad).is_err());
    }

    #[test]
    fn coarse_loss_gradient_matches_finite_differences() {
        let mut rng = lcg(3);
        let logits: Vec<f64> = (0..9).map(|_| 4.0 * (rng() - 0.5)).collect();
        let target =
            Matrix::from_vec(3, 3, (0..9).map(|_| f64::from(rng() > 0.5)).collect()).unwrap();
        let coarse = CoarseMask::new(Matrix::from_vec(3, 3, logits.clone()).unwrap()).unwrap();
        let analytic = loss_coarse_backward(&coarse, &target, 1.0);
        let numeric = finite_diff_grad(
            &mut |v| {
                let probe = CoarseMask::new(Matrix::from_vec(3, 3, v.to_vec()).unwrap()).unwrap();
                loss_coarse(&probe, &target)
            },
            &logits,
            1e-6,
        )
        .unwrap();
        assert!(max_rel_err(&analytic.data, &numeric) < 1e-8);
    }

    #[test]
    fn square_resampling_hits_corners_and_midpoints() {
        let sq = unit_square();
        let four = resample_boundary(&sq, 4).unwrap();
        for (a, b) in four.iter().zip(&sq) {
            assert!(a.dist(*b) < 1e-12);
        }
        let eight = resample_boundary(&sq, 8).unwrap();
        let want = [
            (0.0, 0.0),
            (0.5, 0.0),
            (1.0, 0.0),
            (1.0, 0.5),
            (1.0, 1.0),
            (0.5, 1.0),
            (0.0, 1.0),
            (0.0, 0.5),
        ];
        for (a, (x, y)) in eight.iter().zip(want) {
            assert!(a.dist(Pt::new(x, y)) < 1e-12);
        }
    }

    #[test]
    fn resampled_gaps_sum_to_the_perimeter() {
        // Exact perimeter oracle: the square's edge lengths are commensurate
        // with the sample spacing, so every vertex is hit and the chord sum
        // equals the perimeter.
        let sq = resample_boundary(&unit_square(), 16).unwrap();
        let sq_gaps: f64 = (0..16).map(|i| sq[i].dist(sq[(i + 1) % 16])).sum();
        assert!((sq_gaps - 4.0).abs() < 1e-9);

        // On an irregular polygon the samples must lie exactly on the
        // boundary, start at vertex 0, and their chord sum can only shave
        // corners — never exceed the true perimeter.
        let mut rng = lcg(4);
        let v = 9;
        let poly: Vec<Pt> = (0..v)
            .map(|i| {
                let ang = i as f64 / v as f64 * std::f64::consts::TAU;
                let r = 0.5 + 0.4 * rng();
                Pt::new(r * ang.cos(), r * ang.sin())
            })
            .collect();
        let m = 37;
        let pts = resample_boundary(&poly, m).unwrap();
        assert_eq!(pts.len(), m);
        assert!(pts[0].dist(poly[0]) < 1e-12);
        let seg_dist = |p: Pt, a: Pt, b: Pt| -> f64 {
            let (ex, ey) = (b.x - a.x, b.y - a.y);
            let t = (((p.x - a.x) * ex + (p.y - a.y) * ey) / (ex * ex + ey * ey)).clamp(0.0, 1.0);
            p.dist(Pt::new(a.x + t * ex, a.y + t * ey))
        };
        for p in &pts {
            let on_edge = (0..v).any(|i| seg_dist(*p, poly[i], poly[(i + 1) % v]) < 1e-12);
            assert!(on_edge, "sample off the boundary");
        }
        let gaps: f64 = (0..m).map(|i| pts[i].dist(pts[(i + 1) % m])).sum();
        let perim = polygon_perimeter(&poly);
        assert!(gaps <= perim + 1e-12 && gaps > 0.9 * perim);
    }

    #[test]
    fn degenerate_polygons_are_rejected() {
        assert!(resample_boundary(&[Pt::new(0.0, 0.0), Pt::new(1.0, 1.0)], 8).is_err());
        let collapsed = vec![Pt::new(0.3, 0.3); 5];
        assert!(resample_boundary(&collapsed, 8).is_err());
    }

    #[test]
    fn matching_prefers_zero_distance_and_low_indices() {
        let gt: Vec<Pt> = (0..8).map(|i| Pt::new(i as f64, 0.0)).collect();
        // Coincident point.
        assert_eq!(nearest_match(&[Pt::new(5.0, 0.0)], &gt).unwrap(), vec![5]);
        // (3, 0) sits exactly between indices 2 and 5 with everything else
        // farther away: the tie goes to index 2.
        let spread = vec![
            Pt::new(0.0, 5.0),
            Pt::new(9.0, 9.0),
            Pt::new(1.0, 0.0),
            Pt::new(7.0, 7.0),
            Pt::new(8.0, 3.0),
            Pt::new(5.0, 0.0),
            Pt::new(6.0, 6.0),
            Pt::new(2.0, 8.0),
        ];
        assert_eq!(nearest_match(&[Pt::new(3.0, 0.0)], &spread).unwrap(), vec![2]);
        assert!(nearest_match(&[Pt::new(0.0, 0.0)], &[]).is_err());
    }

    #[test]
    fn matching_agrees_with_brute_force_on_random_sets() {
        let mut rng = lcg(5);
        let pred: Vec<Pt> = (0..64).map(|_| Pt::new(rng(), rng())).collect();
        let gt: Vec<Pt> = (0..128).map(|_| Pt::new(rng(), rng())).collect();
        let fast = nearest_match(&pred, &gt).unwrap();
        for (p, &idx) in pred.iter().zip(&fast) {
            let best = (0..gt.len())
                .min_by(|&a, &b| p.dist2(gt[a]).partial_cmp(&p.dist2(gt[b])).unwrap())
                .unwrap();
            assert_eq!(p.dist2(gt[idx]), p.dist2(gt[best]));
            // No lower index achieves the same distance.
            assert!((0..idx).all(|j| p.dist2(gt[j]) > p.dist2(gt[idx])));
        }
    }

    #[test]
    fn smooth_l1_closed_forms() {
        assert_eq!(smooth_l1(0.0, 1.0), 0.0);
        assert_eq!(smooth_l1(0.5, 1.0), 0.125);
        assert_eq!(smooth_l1(2.0, 1.0), 1.5);
        assert_eq!(smooth_l1(-2.0, 1.0), 1.5);
        // Continuity at the transition.
        let eps = 1e-9;
        assert!((smooth_l1(1.0 - eps, 1.0) - smooth_l1(1.0 + eps, 1.0)).abs() < 1e-8);
        assert_eq!(smooth_l1_grad(0.5, 1.0), 0.5);
        assert_eq!(smooth_l1_grad(-3.0, 1.0), -1.0);
    }

    #[test]
    fn point_guidance_basics() {
        let gt = vec![Pt::new(0.1, 0.1), Pt::new(0.9, 0.9)];
        // Exact matches cost nothing.
        let l = loss_pg(&gt, &gt, &[0, 1], 1.0).unwrap();
        assert_eq!(l, 0.0);
        // One point displaced by (0.5, 0).
        let l = loss_pg(&[Pt::new(0.6, 0.1)], &gt, &[0], 1.0).unwrap();
        assert_eq!(l, 0.125);
        // Empty prediction sets are skipped.
        assert_eq!(loss_pg(&[], &gt, &[], 1.0).unwrap(), 0.0);
        assert!(loss_pg(&[Pt::new(0.0, 0.0)], &gt, &[0, 1], 1.0).is_err());
        assert!(loss_pg(&[Pt::new(0.0, 0.0)], &gt, &[7], 1.0).is_err());
    }

    #[test]
    fn point_guidance_matches_loop_oracle() {
        let mut rng = lcg(6);
        let gt: Vec<Pt> = (0..32).map(|_| Pt::new(rng(), rng())).collect();
        let pred: Vec<Pt> = (0..16).map(|_| Pt::new(rng(), rng())).collect();
        let m = nearest_match(&pred, &gt).unwrap();
        let l = loss_pg(&pred, &gt, &m, 1.0).unwrap();
        let mut want = 0.0;
        for (p, &mi) in pred.iter().zip(&m) {
            want += smooth_l1(p.x - gt[mi].x, 1.0) + smooth_l1(p.y - gt[mi].y, 1.0);
        }
        want /= 16.0;
        assert!((l - want).abs() < 1e-12);
    }

    #[test]
    fn point_guidance_is_invariant_under_joint_permutation() {
        let mut rng = lcg(7);
        let gt: Vec<Pt> = (0..24).map(|_| Pt::new(rng(), rng())).collect();
        let pred: Vec<Pt> = (0..12).map(|_| Pt::new(rng(), rng())).collect();
        let m = nearest_match(&pred, &gt).unwrap();
        let l0 = loss_pg(&pred, &gt, &m, 1.0).unwrap();

        let perm: Vec<usize> = (0..12).map(|i| (5 * i + 3) % 12).collect();
        let pred_p: Vec<Pt> = perm.iter().map(|&i| pred[i]).collect();
        let m_p = nearest_match(&pred_p, &gt).unwrap();
        let l1 = loss_pg(&pred_p, &gt, &m_p, 1.0).unwrap();
        assert!((l0 - l1).abs() < 1e-12);
    }

    #[test]
    fn point_guidance_is_translation_covariant() {
        let mut rng = lcg(8);
        let poly: Vec<Pt> = vec![
            Pt::new(0.1, 0.1),
            Pt::new(0.8, 0.2),
            Pt::new(0.7, 0.9),
            Pt::new(0.2, 0.8),
        ];
        let pred: Vec<Pt> = (0..10).map(|_| Pt::new(rng(), rng())).collect();
        let pair = BoundaryPair::build(pred.clone(), poly.clone(), 32).unwrap();
        let l0 = loss_pg(&pair.pred, &pair.gt_resampled, &pair.match_idx, 1.0).unwrap();

        let dxy = Pt::new(-1.5, 0.75);
        let shift = |ps: &[Pt]| -> Vec<Pt> {
            ps.iter().map(|p| Pt::new(p.x + dxy.x, p.y + dxy.y)).collect()
        };
        let pair2 = BoundaryPair::build(shift(&pred), shift(&poly), 32).unwrap();
        let l1 = loss_pg(&pair2.pred, &pair2.gt_resampled, &pair2.match_idx, 1.0).unwrap();
        assert!((l0 - l1).abs() < 1e-12);
    }

    #[test]
    fn point_guidance_gradient_matches_finite_differences() {
        let mut rng = lcg(9);
        let gt: Vec<Pt> = (0..16).map(|_| Pt::new(rng(), rng())).collect();
        // Keep every coordinate difference away from the smooth-L1 kink at
        // |d| = delta and away from match-assignment flips.
        let pred: Vec<Pt> = (0..6).map(|_| Pt::new(rng(), rng())).collect();
        let m = nearest_match(&pred, &gt).unwrap();
        for (p, &mi) in pred.iter().zip(&m) {
            for d in [p.x - gt[mi].x, p.y - gt[mi].y] {
                assert!(!(0.99..=1.01).contains(&d.abs()), "kink-adjacent sample");
            }
        }
        let (_, grad) = loss_pg_with_grad(&pred, &gt, &m, 1.0).unwrap();
        let flat: Vec<f64> = pred.iter().flat_map(|p| [p.x, p.y]).collect();
        let analytic: Vec<f64> = grad.iter().flat_map(|g| [g.x, g.y]).collect();
        let numeric = finite_diff_grad(
            &mut |v| {
                let probe: Vec<Pt> = v.chunks(2).map(|c| Pt::new(c[0], c[1])).collect();
                loss_pg(&probe, &gt, &m, 1.0)
            },
            &flat,
            1e-6,
        )
        .unwrap();
        assert!(max_rel_err(&analytic, &numeric) < 1e-8);
    }

    #[test]
    fn point_match_term_is_the_mean() {
        assert_eq!(loss_pmat(0.0, 0.0), 0.0);
        assert_eq!(loss_pmat(0.2, 0.1), 0.15000000000000002);
        assert!((loss_pmat(0.2, 0.1) - 0.15).abs() < 1e-12);
        // Homogeneity.
        assert_eq!(loss_pmat(0.8, 0.4), 2.0 * loss_pmat(0.4, 0.2));
    }

    #[test]
    fn total_combines_terms_with_default_weights() {
        let cfg = LossConfig::default();
        assert_eq!(cfg.alpha, 0.5);
        assert_eq!(cfg.beta, 1.0);
        let b = loss_total(1.0, 2.0, 3.0, 4.0, &cfg);
        assert_eq!(b.total, 9.0);
        let z = loss_total(0.0, 0.0, 0.0, 0.0, &cfg);
        assert_eq!(z.total, 0.0);
    }

    #[test]
    fn total_decomposition_holds_for_random_weights() {
        let mut rng = lcg(10);
        for _ in 0..20 {
            let cfg = LossConfig {
                alpha: 2.0 * rng(),
                beta: 2.0 * rng(),
                ..LossConfig::default()
            };
            let parts: Vec<f64> = (0..4).map(|_| 3.0 * (rng() - 0.5)).collect();
            let b = loss_total(parts[0], parts[1], parts[2], parts[3], &cfg);
            let want = parts[0] + cfg.alpha * parts[1] + cfg.beta * parts[2] + parts[3];
            assert!((b.total - want).abs() < 1e-12);
        }
    }

    #[test]
    fn heavier_coarse_weighting_variant() {
        // The beta = 2.5 ablation setting: only the coarse term scales.
        let cfg = LossConfig { beta: 2.5, ..LossConfig::default() };
        cfg.validate().unwrap();
        let b = loss_total(1.0, 2.0, 3.0, 4.0, &cfg);
        assert!((b.total - 13.5).abs() < 1e-12);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        assert!(LossConfig { alpha: -0.1, ..LossConfig::default() }.validate().is_err());
        assert!(LossConfig { smooth_l1_delta: 0.0, ..LossConfig::default() }
            .validate()
            .is_err());
        assert!(LossConfig { gt_resample: 2, ..LossConfig::default() }.validate().is_err());
        LossConfig::default().validate().unwrap();
    }
}
