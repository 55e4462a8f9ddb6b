//! Take the edge guidance loss apart on a toy instance: arc-length
//! boundary resampling, nearest matching, and the four weighted terms.
//!
//! ```bash
//! cargo run --example boundary_loss
//! ```

use orenext::geometry::Pt;
use orenext::loss::{
    loss_pg_with_grad, loss_pmat, loss_ploc_with_grad, loss_total, nearest_match,
    resample_boundary, LossConfig,
};

fn main() -> orenext::Result<()> {
    // Ground truth boundary: the unit square, resampled to 8 points by
    // arc length starting at vertex 0 — corners plus edge midpoints.
    let square =
        vec![Pt::new(0.0, 0.0), Pt::new(1.0, 0.0), Pt::new(1.0, 1.0), Pt::new(0.0, 1.0)];
    let gt = resample_boundary(&square, 8)?;
    println!("unit square resampled to 8 boundary points:");
    for p in &gt {
        println!("  ({:.2}, {:.2})", p.x, p.y);
    }

    // Predictions: slightly-off boundary guesses.
    let pred = vec![
        Pt::new(0.1, 0.05),
        Pt::new(0.9, -0.02),
        Pt::new(1.04, 0.5),
        Pt::new(0.5, 1.1),
    ];
    let matches = nearest_match(&pred, &gt)?;
    println!("\neach prediction pairs with its nearest resampled target:");
    for (p, &m) in pred.iter().zip(&matches) {
        let g = gt[m];
        let d = ((p.x - g.x).powi(2) + (p.y - g.y).powi(2)).sqrt();
        println!("  ({:.2}, {:.2}) -> target {m} ({:.2}, {:.2}), distance {d:.3}", p.x, p.y, g.x, g.y);
    }

    // Point guidance: smooth-L1 over the matched pairs. The matching is
    // held fixed; only the coordinates carry gradient.
    let (l_pg, grad) = loss_pg_with_grad(&pred, &gt, &matches, 1.0)?;
    println!("\npoint-guidance loss {l_pg:.5}; gradient on the first point ({:.4}, {:.4})", grad[0].x, grad[0].y);

    // Sorted localization: order-insensitive pairing by lexicographic sort.
    let gt4 = resample_boundary(&square, 4)?;
    let (l_ploc, _) = loss_ploc_with_grad(&pred, &gt4)?;
    println!("sorted localization loss vs 4 resampled targets: {l_ploc:.5}");

    // Combine with a box-classification and coarse-mask term.
    let cfg = LossConfig::default();
    let l_pmat = loss_pmat(0.40, l_pg);
    let breakdown = loss_total(0.65, l_ploc, 0.69, l_pmat, &cfg);
    println!(
        "\ntotal = cls + {}*ploc + {}*coarse + pmat\n      = {:.4} + {}*{:.4} + {}*{:.4} + {:.4} = {:.4}",
        cfg.alpha,
        cfg.beta,
        breakdown.l_cls_b,
        cfg.alpha,
        breakdown.l_ploc_b,
        cfg.beta,
        breakdown.l_coarse_m,
        breakdown.l_pmat_m,
        breakdown.total
    );
    Ok(())
}
