//! Verify the closed-form cost of both mixing blocks against instrumented
//! forward passes over a sweep of shapes.
//!
//! ```bash
//! cargo run --example complexity
//! ```
//!
//! A backbone block at expansion ratio 1 performs four channel projections
//! (two shift branches, two MLP layers), so its multiply-accumulate count
//! is exactly 4·h·w·c². The three-branch block adds row mixing (h·w·c·h),
//! column mixing (h·w·c·w), an identity branch c→c, and a 3c→c fusion:
//! h·w·c·(h+w) + 3·h·w·c² in total. Biases and norms are excluded by
//! convention.

use orenext::backbone::{stone_block_forward, StoneBlockParams};
use orenext::fpn::{sparse_mlp_forward, SparseMLPParams};
use orenext::tensor::Tensor4;

fn main() -> orenext::Result<()> {
    let mut state = 7u64;
    let mut rng = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };

    println!("{:<14} {:>4} {:>4} {:>4} {:>12} {:>12}", "block", "c", "h", "w", "counted", "formula");
    for &(c, h, w) in &[(48usize, 8usize, 8usize), (12, 16, 16), (6, 5, 7), (24, 3, 11)] {
        let x = Tensor4::from_fn(1, c, h, w, |_, _, _, _| rng());
        let p = StoneBlockParams::init(c, 3, 1, &mut rng);
        let (_, cache) = stone_block_forward(&x, &p)?;
        let formula = 4 * (h * w * c * c) as u64;
        assert_eq!(cache.macs, formula);
        println!("{:<14} {c:>4} {h:>4} {w:>4} {:>12} {formula:>12}", "axial_shift", cache.macs);
    }
    for &(c, h, w) in &[(16usize, 8usize, 8usize), (16, 16, 16), (4, 5, 9), (32, 4, 4)] {
        let x = Tensor4::from_fn(1, c, h, w, |_, _, _, _| rng());
        let p = SparseMLPParams::init(c, h, w, &mut rng);
        let (_, cache) = sparse_mlp_forward(&x, &p)?;
        let formula = (h * w * c * (h + w) + 3 * h * w * c * c) as u64;
        assert_eq!(cache.macs, formula);
        println!("{:<14} {c:>4} {h:>4} {w:>4} {:>12} {formula:>12}", "three_branch", cache.macs);
    }

    println!("\nevery counter equals its closed form, including the two anchor");
    println!("values 589824 = 4·8·8·48² and 65536 = 8·8·16·16 + 3·8·8·16².");
    Ok(())
}
