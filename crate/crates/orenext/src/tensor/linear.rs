//! Channel projection: the 1x1-convolution workhorse.
//!
//! Every learned mixing step in the crate that acts "per position" is a
//! [`channel_project`]: at each spatial site `(n, i, j)` the channel vector
//! is pushed through one [`LinearMap`]. The backward pass accumulates weight
//! and bias gradients and returns the input gradient.

use crate::error::{Error, Result};
use crate::tensor::{LinearMap, Tensor4};

/// Applies `m` to the channel vector at every spatial position.
///
/// `out[n, o, i, j] = sum_c x[n, c, i, j] * w[c, o] + b[o]`
pub fn channel_project(x: &Tensor4, m: &LinearMap) -> Result<Tensor4> {
    if x.c != m.in_dim {
        return Err(Error::shape(format!(
            "channel_project: input has {} channels, map expects {}",
            x.c, m.in_dim
        )));
    }
    let mut out = Tensor4::zeros(x.n, m.out_dim, x.h, x.w);
    let plane = x.h * x.w;
    for n in 0..x.n {
        // Bias first, then accumulate one input channel at a time; the inner
        // loop is a contiguous AXPY over the spatial plane.
        for o in 0..m.out_dim {
            let start = out.idx(n, o, 0, 0);
            out.data[start..start + plane].fill(m.bias[o]);
        }
        for c in 0..x.c {
            let xs = x.idx(n, c, 0, 0);
            for o in 0..m.out_dim {
                let w = m.w(c, o);
                if w == 0.0 {
                    continue;
                }
                let os = out.idx(n, o, 0, 0);
                for p in 0..plane {
                    out.data[os + p] += w * x.data[xs + p];
                }
            }
        }
    }
    Ok(out)
}

/// MAC count of one [`channel_project`] call under the projection-only
/// accounting convention (biases excluded).
pub fn channel_project_macs(x: &Tensor4, m: &LinearMap) -> u64 {
    (x.n * x.h * x.w) as u64 * m.macs_per_vec()
}

/// Backward pass of [`channel_project`].
///
/// Accumulates `d loss / d weight` and `d loss / d bias` into `grad_m`
/// (which must have the same dimensions as the forward map) and returns
/// `d loss / d x`.
pub fn channel_project_backward(
    x: &Tensor4,
    m: &LinearMap,
    grad_out: &Tensor4,
    grad_m: &mut LinearMap,
) -> Result<Tensor4> {
    if grad_out.shape() != (x.n, m.out_dim, x.h, x.w) {
        return Err(Error::shape(format!(
            "channel_project_backward: upstream gradient {:?} does not match output shape",
            grad_out.shape()
        )));
    }
    debug_assert_eq!(grad_m.in_dim, m.in_dim);
    debug_assert_eq!(grad_m.out_dim, m.out_dim);

    let mut grad_x = x.zeros_like();
    let plane = x.h * x.w;
    for n in 0..x.n {
        for o in 0..m.out_dim {
            let gs = grad_out.idx(n, o, 0, 0);
            let g = &grad_out.data[gs..gs + plane];
            grad_m.bias[o] += g.iter().sum::<f64>();
            for c in 0..x.c {
                let xs = x.idx(n, c, 0, 0);
                let xv = &x.data[xs..xs + plane];
                // dW[c,o] = sum over positions of x * g
                let mut acc = 0.0;
                for p in 0..plane {
                    acc += xv[p] * g[p];
                }
                grad_m.weight[c * m.out_dim + o] += acc;
                // dX[c] += W[c,o] * g
                let w = m.w(c, o);
                if w != 0.0 {
                    let dst = grad_x.idx(n, c, 0, 0);
                    for p in 0..plane {
                        grad_x.data[dst + p] += w * g[p];
                    }
                }
            }
        }
    }
    Ok(grad_x)
}
