//! Axial channel-group shifts.
//!
//! The token mixer moves information between neighboring positions by
//! translating channel groups along one spatial axis before a channel
//! projection. Channels are split into `s` equal groups; group `g`
//! (0-based) is translated by `g - (s-1)/2` pixels, so the offsets are the
//! centered range `{-(s-1)/2, ..., +(s-1)/2}`. Vacated positions are
//! zero-filled.

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Horizontal,
    Vertical,
}

/// One axial shift: which axis to translate along and how many channel
/// groups to split into. `size` must be odd so the offsets center on zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftSpec {
    pub axis: Axis,
    pub size: usize,
}

impl ShiftSpec {
    pub fn horizontal(size: usize) -> Self {
        ShiftSpec { axis: Axis::Horizontal, size }
    }

    pub fn vertical(size: usize) -> Self {
        ShiftSpec { axis: Axis::Vertical, size }
    }

    fn validate(&self, c: usize) -> Result<()> {
        if self.size == 0 || self.size % 2 == 0 {
            return Err(Error::config(format!(
                "shift size must be odd and positive, got {}",
                self.size
            )));
        }
        if c % self.size != 0 {
            return Err(Error::config(format!(
                "channel count {c} is not divisible by shift size {}",
                self.size
            )));
        }
        Ok(())
    }

    /// Offset applied to the group containing channel `ch`.
    fn offset_for_channel(&self, ch: usize, c: usize) -> isize {
        let group = ch / (c / self.size);
        group as isize - ((self.size - 1) / 2) as isize
    }
}

/// Translates each channel group by its offset along the spec's axis,
/// zero-filling vacated positions. Shape is preserved.
pub fn axial_shift(x: &Tensor4, spec: ShiftSpec) -> Result<Tensor4> {
    spec.validate(x.c)?;
    let mut out = x.zeros_like();
    for n in 0..x.n {
        for ch in 0..x.c {
            let d = spec.offset_for_channel(ch, x.c);
            for i in 0..x.h {
                for j in 0..x.w {
                    // out[pos] = in[pos - d] along the shifted axis
                    let (si, sj) = match spec.axis {
                        Axis::Horizontal => (i as isize, j as isize - d),
                        Axis::Vertical => (i as isize - d, j as isize),
                    };
                    if si >= 0 && si < x.h as isize && sj >= 0 && sj < x.w as isize {
                        *out.at_mut(n, ch, i, j) = x.at(n, ch, si as usize, sj as usize);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Backward of [`axial_shift`]: routes each upstream gradient back to the
/// position it was read from (the opposite translation, also zero-filled).
pub fn axial_shift_backward(grad_out: &Tensor4, spec: ShiftSpec) -> Tensor4 {
    let x = grad_out;
    let mut grad_in = x.zeros_like();
    for n in 0..x.n {
        for ch in 0..x.c {
            let d = spec.offset_for_channel(ch, x.c);
            for i in 0..x.h {
                for j in 0..x.w {
                    let (ti, tj) = match spec.axis {
                        Axis::Horizontal => (i as isize, j as isize + d),
                        Axis::Vertical => (i as isize + d, j as isize),
                    };
                    if ti >= 0 && ti < x.h as isize && tj >= 0 && tj < x.w as isize {
                        *grad_in.at_mut(n, ch, i, j) =
                            x.at(n, ch, ti as usize, tj as usize);
                    }
                }
            }
        }
    }
    grad_in
}
