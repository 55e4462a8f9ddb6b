//! Bilinear sampling of feature maps at continuous points.
//!
//! Convention: a point is `(x, y)` in `[0,1]^2` over the map, and pixel
//! `(i, j)` has its center at `((j + 0.5) / w, (i + 0.5) / h)`. Coordinates
//! beyond the outermost pixel centers clamp to the border value, so sampling
//! never extrapolates.

use crate::error::{Error, Result};
use crate::geometry::Pt;
use crate::tensor::{Matrix, Tensor4};

/// The four corner taps and their weights for one sample point.
#[derive(Debug, Clone, Copy)]
struct Taps {
    i0: usize,
    i1: usize,
    j0: usize,
    j1: usize,
    ty: f64,
    tx: f64,
}

fn taps(h: usize, w: usize, p: Pt) -> Taps {
    // Map to continuous pixel coordinates where integer k is the center of
    // pixel k, then clamp inside the center hull.
    let u = (p.x * w as f64 - 0.5).clamp(0.0, (w - 1) as f64);
    let v = (p.y * h as f64 - 0.5).clamp(0.0, (h - 1) as f64);
    let j0 = (u.floor() as usize).min(w - 1);
    let i0 = (v.floor() as usize).min(h - 1);
    let j1 = (j0 + 1).min(w - 1);
    let i1 = (i0 + 1).min(h - 1);
    Taps { i0, i1, j0, j1, ty: v - i0 as f64, tx: u - j0 as f64 }
}

/// Samples every channel of `feat` (batch must be 1) at each point.
///
/// Returns a `|pts| x c` matrix: row `k` holds the channel vector
/// interpolated at `pts[k]`.
pub fn bilinear_sample(feat: &Tensor4, pts: &[Pt]) -> Result<Matrix> {
    if feat.h == 0 || feat.w == 0 || feat.c == 0 {
        return Err(Error::shape("bilinear_sample: empty feature map".to_string()));
    }
    if feat.n != 1 {
        return Err(Error::shape(format!(
            "bilinear_sample expects a single batch item, got n={}",
            feat.n
        )));
    }
    let mut out = Matrix::zeros(pts.len(), feat.c);
    for (k, &p) in pts.iter().enumerate() {
        let t = taps(feat.h, feat.w, p);
        for c in 0..feat.c {
            let v00 = feat.at(0, c, t.i0, t.j0);
            let v01 = feat.at(0, c, t.i0, t.j1);
            let v10 = feat.at(0, c, t.i1, t.j0);
            let v11 = feat.at(0, c, t.i1, t.j1);
            let top = v00 + t.tx * (v01 - v00);
            let bot = v10 + t.tx * (v11 - v10);
            *out.at_mut(k, c) = top + t.ty * (bot - top);
        }
    }
    Ok(out)
}

/// Backward of [`bilinear_sample`] with respect to the feature map: scatters
/// each point's upstream gradient onto its four taps.
///
/// Point positions are treated as constants everywhere in this crate, so no
/// coordinate gradient is produced.
pub fn bilinear_sample_backward(feat: &Tensor4, pts: &[Pt], grad_out: &Matrix) -> Result<Tensor4> {
    if grad_out.rows != pts.len() || grad_out.cols != feat.c {
        return Err(Error::shape(format!(
            "bilinear_sample_backward: gradient {}x{} does not match {} points x {} channels",
            grad_out.rows,
            grad_out.cols,
            pts.len(),
            feat.c
        )));
    }
    let mut grad = feat.zeros_like();
    for (k, &p) in pts.iter().enumerate() {
        let t = taps(feat.h, feat.w, p);
        for c in 0..feat.c {
            let g = grad_out.at(k, c);
            *grad.at_mut(0, c, t.i0, t.j0) += g * (1.0 - t.tx) * (1.0 - t.ty);
            *grad.at_mut(0, c, t.i0, t.j1) += g * t.tx * (1.0 - t.ty);
            *grad.at_mut(0, c, t.i1, t.j0) += g * (1.0 - t.tx) * t.ty;
            *grad.at_mut(0, c, t.i1, t.j1) += g * t.tx * t.ty;
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::{finite_diff_grad, max_rel_err};

    #[test]
    fn pixel_centers_are_interpolation_nodes() {
        let feat = Tensor4::from_fn(1, 1, 3, 4, |_, _, i, j| (10 * i + j) as f64);
        for i in 0..3 {
            for j in 0..4 {
                let p = Pt::new((j as f64 + 0.5) / 4.0, (i as f64 + 0.5) / 3.0);
                let m = bilinear_sample(&feat, &[p]).unwrap();
                assert_eq!(m.at(0, 0), (10 * i + j) as f64);
            }
        }
    }

    #[test]
    fn center_of_2x2_is_the_mean() {
        let feat = Tensor4::from_vec(1, 1, 2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let m = bilinear_sample(&feat, &[Pt::new(0.5, 0.5)]).unwrap();
        assert!((m.at(0, 0) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn constant_maps_stay_constant_everywhere() {
        let feat = Tensor4::from_fn(1, 2, 3, 3, |_, c, _, _| if c == 0 { 7.5 } else { -2.0 });
        for &p in &[
            Pt::new(0.0, 0.0),
            Pt::new(1.0, 1.0),
            Pt::new(0.013, 0.77),
            Pt::new(-0.5, 2.0), // clamps to the border
        ] {
            let m = bilinear_sample(&feat, &[p]).unwrap();
            assert_eq!(m.at(0, 0), 7.5);
            assert_eq!(m.at(0, 1), -2.0);
        }
    }

    #[test]
    fn exact_on_affine_fields_inside_center_hull() {
        // feat[i][j] = 2 i - 3 j + 0.25 must be reproduced exactly.
        let (h, w) = (5, 7);
        let feat = Tensor4::from_fn(1, 1, h, w, |_, _, i, j| 2.0 * i as f64 - 3.0 * j as f64 + 0.25);
        let mut state = 42u64;
        let mut rng = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..50 {
            // Stay inside the pixel-center hull so no clamping occurs.
            let x = (0.5 + rng() * (w as f64 - 1.0)) / w as f64;
            let y = (0.5 + rng() * (h as f64 - 1.0)) / h as f64;
            let gi = y * h as f64 - 0.5;
            let gj = x * w as f64 - 0.5;
            let want = 2.0 * gi - 3.0 * gj + 0.25;
            let got = bilinear_sample(&feat, &[Pt::new(x, y)]).unwrap().at(0, 0);
            assert!((got - want).abs() < 1e-12, "affine field at ({x},{y}): {got} vs {want}");
        }
    }

    #[test]
    fn empty_map_is_rejected() {
        let feat = Tensor4::zeros(1, 0, 2, 2);
        assert!(matches!(bilinear_sample(&feat, &[]), Err(Error::Shape(_))));
        let feat = Tensor4::zeros(1, 1, 0, 2);
        assert!(bilinear_sample(&feat, &[]).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut state = 3u64;
        let mut rng = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let feat = Tensor4::from_fn(1, 2, 3, 3, |_, _, _, _| rng() - 0.5);
        let pts = vec![Pt::new(0.2, 0.9), Pt::new(0.51, 0.5), Pt::new(0.97, 0.03)];
        let mix: Vec<f64> = (0..pts.len() * 2).map(|_| rng() - 0.5).collect();

        let grad_out = Matrix::from_vec(3, 2, mix.clone()).unwrap();
        let grad = bilinear_sample_backward(&feat, &pts, &grad_out).unwrap();

        let num = finite_diff_grad(
            &mut |v| {
                let probe = Tensor4::from_vec(1, 2, 3, 3, v.to_vec()).unwrap();
                let m = bilinear_sample(&probe, &pts)?;
                Ok(m.data.iter().zip(&mix).map(|(a, b)| a * b).sum())
            },
            &feat.data,
            1e-5,
        )
        .unwrap();
        assert!(max_rel_err(&grad.data, &num) < 1e-9);
    }
}
