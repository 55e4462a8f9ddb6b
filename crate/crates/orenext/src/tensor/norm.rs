//! Layer normalization over the channel dimension.
//!
//! At every spatial position `(n, i, j)` the channel vector is normalized to
//! zero mean and unit (population) variance, eps-stabilized, then scaled by
//! `gamma` and shifted by `beta`.

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Stabilizer used by every layer norm in the crate.
pub const LN_EPS: f64 = 1e-6;

/// Per-channel affine parameters of a layer norm.
#[derive(Debug, Clone, PartialEq)]
pub struct NormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl NormParams {
    /// gamma = 1, beta = 0: the identity-affine starting point.
    pub fn unit(c: usize) -> Self {
        NormParams { gamma: vec![1.0; c], beta: vec![0.0; c] }
    }
}

impl crate::tensor::ParamGroup for NormParams {
    fn for_each_param(&self, f: &mut dyn FnMut(f64)) {
        self.gamma.iter().for_each(|&v| f(v));
        self.beta.iter().for_each(|&v| f(v));
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut f64)) {
        self.gamma.iter_mut().for_each(|v| f(v));
        self.beta.iter_mut().for_each(|v| f(v));
    }
}

/// Intermediates the backward pass needs: the normalized values and the
/// inverse standard deviation at every position.
#[derive(Debug, Clone)]
pub struct NormCache {
    pub xhat: Tensor4,
    pub inv_std: Vec<f64>, // one per (n, i, j), row-major over n, i, j
}

/// Forward layer norm. `eps` must be positive; channel count must be > 0.
pub fn layer_norm(x: &Tensor4, p: &NormParams, eps: f64) -> Result<(Tensor4, NormCache)> {
    if x.c == 0 {
        return Err(Error::shape("layer_norm: zero channels".to_string()));
    }
    if p.gamma.len() != x.c || p.beta.len() != x.c {
        return Err(Error::shape(format!(
            "layer_norm: gamma/beta length {}/{} does not match {} channels",
            p.gamma.len(),
            p.beta.len(),
            x.c
        )));
    }
    assert!(eps > 0.0, "layer_norm requires eps > 0");

    let mut out = x.zeros_like();
    let mut xhat = x.zeros_like();
    let mut inv_std = Vec::with_capacity(x.n * x.h * x.w);
    let cf = x.c as f64;
    for n in 0..x.n {
        for i in 0..x.h {
            for j in 0..x.w {
                let mut mean = 0.0;
                for c in 0..x.c {
                    mean += x.at(n, c, i, j);
                }
                mean /= cf;
                let mut var = 0.0;
                for c in 0..x.c {
                    let d = x.at(n, c, i, j) - mean;
                    var += d * d;
                }
                var /= cf;
                let istd = 1.0 / (var + eps).sqrt();
                inv_std.push(istd);
                for c in 0..x.c {
                    let xh = (x.at(n, c, i, j) - mean) * istd;
                    *xhat.at_mut(n, c, i, j) = xh;
                    *out.at_mut(n, c, i, j) = p.gamma[c] * xh + p.beta[c];
                }
            }
        }
    }
    Ok((out, NormCache { xhat, inv_std }))
}

/// Backward layer norm. Accumulates gamma/beta gradients into `grad_p` and
/// returns the input gradient.
pub fn layer_norm_backward(
    p: &NormParams,
    cache: &NormCache,
    grad_out: &Tensor4,
    grad_p: &mut NormParams,
) -> Tensor4 {
    let x = &cache.xhat;
    assert_eq!(grad_out.shape(), x.shape(), "layer_norm_backward shape mismatch");
    let mut grad_x = x.zeros_like();
    let cf = x.c as f64;
    let mut pos = 0;
    for n in 0..x.n {
        for i in 0..x.h {
            for j in 0..x.w {
                let istd = cache.inv_std[pos];
                pos += 1;
                // dxhat = g * gamma; dx = istd * (dxhat - mean(dxhat)
                //                                 - xhat * mean(dxhat * xhat))
                let mut mean_dxh = 0.0;
                let mut mean_dxh_xh = 0.0;
                for c in 0..x.c {
                    let g = grad_out.at(n, c, i, j);
                    let xh = x.at(n, c, i, j);
                    grad_p.gamma[c] += g * xh;
                    grad_p.beta[c] += g;
                    let dxh = g * p.gamma[c];
                    mean_dxh += dxh;
                    mean_dxh_xh += dxh * xh;
                }
                mean_dxh /= cf;
                mean_dxh_xh /= cf;
                for c in 0..x.c {
                    let dxh = grad_out.at(n, c, i, j) * p.gamma[c];
                    let xh = x.at(n, c, i, j);
                    *grad_x.at_mut(n, c, i, j) = istd * (dxh - mean_dxh - xh * mean_dxh_xh);
                }
            }
        }
    }
    grad_x
}
