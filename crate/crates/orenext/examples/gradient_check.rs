//! Sweep every hand-written backward pass against central differences.
//!
//! ```bash
//! cargo run --example gradient_check
//! ```
//!
//! There is no autograd in this crate: each operation implements its own
//! backward pass, and this suite is the proof that they are all correct.
//! Probes avoid the known non-smooth sets (sort-order flips in the sorted
//! localization loss, the smooth-L1 transition, fixed point matching), as
//! a finite difference straddling a kink says nothing about the gradient.

fn main() -> orenext::Result<()> {
    let reports = orenext::verify::run_all(2024)?;
    for r in &reports {
        println!("{r}");
    }
    assert!(orenext::verify::all_passed(&reports));
    println!("\nall {} operations agree with the numeric oracle", reports.len());
    Ok(())
}
