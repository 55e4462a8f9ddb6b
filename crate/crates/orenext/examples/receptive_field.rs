//! Show how the three-branch mixing block grows a receptive field: one
//! block reaches its own row and column, a second block reaches the full
//! grid through the intermediate cross.
//!
//! ```bash
//! cargo run --example receptive_field
//! ```
//!
//! The mask is measured, not asserted: it is the Jacobian support of the
//! output at the probe position with respect to the input grid, computed
//! by one backward pass.

use orenext::fpn::receptive_field_mask;

fn render(mask: &[bool], h: usize, w: usize, probe: (usize, usize)) {
    for i in 0..h {
        let mut row = String::new();
        for j in 0..w {
            row.push(if (i, j) == probe {
                'O'
            } else if mask[i * w + j] {
                '#'
            } else {
                '.'
            });
        }
        println!("  {row}");
    }
}

fn main() -> orenext::Result<()> {
    let (h, w) = (7, 9);
    let probe = (2, 3);
    for depth in 1..=2 {
        let mask = receptive_field_mask(depth, 4, h, w, probe, 42)?;
        let reached = mask.iter().filter(|&&b| b).count();
        println!(
            "after {depth} block{} the output at {probe:?} sees {reached} of {} positions:",
            if depth == 1 { "" } else { "s" },
            h * w
        );
        render(&mask, h, w, probe);
        println!();
    }
    println!("one block = the row/column cross; two blocks = everything,");
    println!("because every position lies on the cross of some cross member.");
    Ok(())
}
