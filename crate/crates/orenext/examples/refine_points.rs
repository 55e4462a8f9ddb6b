//! Walk through the point refinement head on a hand-made coarse mask:
//! uncertainty scoring, training-time and inference-time point selection,
//! and per-point feature assembly.
//!
//! ```bash
//! cargo run --example refine_points
//! ```
//!
//! The coarse grid below is confident foreground in the middle, confident
//! background at the border, and ambiguous on the ring between them — so
//! every selected point lands on that ring.

use orenext::geometry::Pt;
use orenext::point_head::{
    point_features, select_points_infer, select_points_train, uncertainty, CoarseMask,
};
use orenext::tensor::{Matrix, Tensor4};

fn main() -> orenext::Result<()> {
    // 7x7 logits: +4 inside, -4 outside, ~0 on the boundary ring.
    let m = 7;
    let mut logits = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let di = (i as f64 - 3.0).abs();
            let dj = (j as f64 - 3.0).abs();
            let ring = di.max(dj);
            *logits.at_mut(i, j) = if ring <= 1.0 {
                4.0
            } else if ring <= 2.0 {
                0.3 * (i as f64 - j as f64) / m as f64 // slightly varied ambiguity
            } else {
                -4.0
            };
        }
    }
    let coarse = CoarseMask::new(logits)?;

    println!("uncertainty = -|p - 0.5| per cell (higher = closer to the boundary):");
    for i in 0..m {
        let row: Vec<String> = (0..m)
            .map(|j| format!("{:>6.2}", uncertainty(coarse.prob(i, j))))
            .collect();
        println!("  {}", row.join(" "));
    }

    // Inference: deterministic top-n most uncertain cell centers.
    let infer_pts = select_points_infer(&coarse, 8)?;
    println!("\ninference picks the 8 most uncertain cell centers:");
    for p in &infer_pts {
        let (i, j) = ((p.y * m as f64) as usize, (p.x * m as f64) as usize);
        println!("  ({:.3}, {:.3}) = cell ({i}, {j}), p = {:.3}", p.x, p.y, coarse.prob(i, j));
    }

    // Training: oversample k·n random candidates, keep the most uncertain
    // beta fraction, fill the rest with fresh uniform draws.
    let mut state = 5u64;
    let mut rng = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let train_pts = select_points_train(&coarse, 12, 3.0, 0.75, &mut rng)?;
    println!("\ntraining draws 36 candidates, keeps the 9 most uncertain, adds 3 random:");
    for p in &train_pts {
        println!("  ({:.3}, {:.3})", p.x, p.y);
    }

    // Per-point features: bilinear fine features plus the coarse logit.
    let fine = Tensor4::from_fn(1, 4, 14, 14, |_, c, i, j| {
        (c as f64 + 1.0) * (i as f64 - j as f64) / 14.0
    });
    let feats = point_features(&fine, &coarse, &train_pts)?;
    println!(
        "\npoint features: {} points x ({} fine channels + 1 coarse logit) = {}x{}",
        train_pts.len(),
        fine.c,
        feats.rows,
        feats.cols
    );
    let p0 = Pt::new(train_pts[0].x, train_pts[0].y);
    println!(
        "first point ({:.3}, {:.3}) -> features {:?}",
        p0.x,
        p0.y,
        &feats.data[..feats.cols]
    );
    Ok(())
}
