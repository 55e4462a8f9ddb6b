//! The StoneMLP residual block.
//!
//! One block applies two pre-norm residual sublayers:
//!
//! ```text
//! y   = x + shift_token_mix(layer_norm(x))
//! out = y + mlp(layer_norm(y))
//! ```
//!
//! where the token mixer projects the horizontally- and vertically-shifted
//! input through two square channel maps and sums them, and the MLP is
//! project -> GELU -> project. The forward pass counts multiply-accumulates
//! of its four channel projections so complexity claims can be checked
//! against an instrumented run.

use crate::error::{Error, Result};
use crate::tensor::linear::{channel_project, channel_project_backward, channel_project_macs};
use crate::tensor::norm::{layer_norm, layer_norm_backward, NormCache, NormParams, LN_EPS};
use crate::tensor::{activation, LinearMap, ParamGroup, Tensor4};

use super::shift::{axial_shift, axial_shift_backward, ShiftSpec};

/// Learnable state of one block.
#[derive(Debug, Clone)]
pub struct StoneBlockParams {
    pub norm1: NormParams,
    pub norm2: NormParams,
    /// Channel-group count of the two axial shifts.
    pub shift_size: usize,
    /// Projection applied to the horizontally shifted tensor (`c -> c`).
    pub w_h: LinearMap,
    /// Projection applied to the vertically shifted tensor (`c -> c`).
    pub w_v: LinearMap,
    /// MLP expansion (`c -> r*c`).
    pub mlp_in: LinearMap,
    /// MLP contraction (`r*c -> c`).
    pub mlp_out: LinearMap,
}

impl StoneBlockParams {
    /// Fan-in initialization of all projections; norms start at identity.
    pub fn init(c: usize, shift_size: usize, mlp_ratio: usize, rng: &mut impl FnMut() -> f64) -> Self {
        let hidden = c * mlp_ratio;
        StoneBlockParams {
            norm1: NormParams::unit(c),
            norm2: NormParams::unit(c),
            shift_size,
            w_h: LinearMap::init(c, c, rng),
            w_v: LinearMap::init(c, c, rng),
            mlp_in: LinearMap::init(c, hidden, rng),
            mlp_out: LinearMap::init(hidden, c, rng),
        }
    }

    /// Same shapes, all learnable values zero — a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        StoneBlockParams {
            norm1: NormParams { gamma: vec![0.0; self.norm1.gamma.len()], beta: vec![0.0; self.norm1.beta.len()] },
            norm2: NormParams { gamma: vec![0.0; self.norm2.gamma.len()], beta: vec![0.0; self.norm2.beta.len()] },
            shift_size: self.shift_size,
            w_h: LinearMap::zeros(self.w_h.in_dim, self.w_h.out_dim),
            w_v: LinearMap::zeros(self.w_v.in_dim, self.w_v.out_dim),
            mlp_in: LinearMap::zeros(self.mlp_in.in_dim, self.mlp_in.out_dim),
            mlp_out: LinearMap::zeros(self.mlp_out.in_dim, self.mlp_out.out_dim),
        }
    }

    pub fn channels(&self) -> usize {
        self.w_h.in_dim
    }
}

impl ParamGroup for StoneBlockParams {
    fn for_each_param(&self, f: &mut dyn FnMut(f64)) {
        self.norm1.for_each_param(f);
        self.w_h.for_each_param(f);
        self.w_v.for_each_param(f);
        self.norm2.for_each_param(f);
        self.mlp_in.for_each_param(f);
        self.mlp_out.for_each_param(f);
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut f64)) {
        self.norm1.for_each_param_mut(f);
        self.w_h.for_each_param_mut(f);
        self.w_v.for_each_param_mut(f);
        self.norm2.for_each_param_mut(f);
        self.mlp_in.for_each_param_mut(f);
        self.mlp_out.for_each_param_mut(f);
    }
}

/// Intermediates kept for the backward pass, plus the MAC count of the
/// projections executed during the forward pass.
#[derive(Debug, Clone)]
pub struct StoneBlockCache {
    ln1: NormCache,
    x_h: Tensor4,
    x_v: Tensor4,
    ln2: NormCache,
    /// Output of the second norm — the MLP's projection input.
    yn2: Tensor4,
    mid: Tensor4,
    act: Tensor4,
    pub macs: u64,
}

/// The token mixer on its own: project the horizontally and vertically
/// shifted tensors and sum.
///
/// `Y_S = shift_h(x) W_h + shift_v(x) W_v`
pub fn shift_token_mix(x: &Tensor4, p: &StoneBlockParams) -> Result<Tensor4> {
    if p.w_h.in_dim != x.c || p.w_h.out_dim != x.c || p.w_v.in_dim != x.c || p.w_v.out_dim != x.c {
        return Err(Error::shape(format!(
            "shift_token_mix: projections must be square over {} channels",
            x.c
        )));
    }
    let x_h = axial_shift(x, ShiftSpec::horizontal(p.shift_size))?;
    let x_v = axial_shift(x, ShiftSpec::vertical(p.shift_size))?;
    let ph = channel_project(&x_h, &p.w_h)?;
    let pv = channel_project(&x_v, &p.w_v)?;
    ph.add(&pv)
}

/// Forward pass of one block. Shape is preserved.
pub fn stone_block_forward(x: &Tensor4, p: &StoneBlockParams) -> Result<(Tensor4, StoneBlockCache)> {
    let mut macs = 0u64;

    let (xn1, ln1) = layer_norm(x, &p.norm1, LN_EPS)?;
    let x_h = axial_shift(&xn1, ShiftSpec::horizontal(p.shift_size))?;
    let x_v = axial_shift(&xn1, ShiftSpec::vertical(p.shift_size))?;
    macs += channel_project_macs(&x_h, &p.w_h);
    let ph = channel_project(&x_h, &p.w_h)?;
    macs += channel_project_macs(&x_v, &p.w_v);
    let pv = channel_project(&x_v, &p.w_v)?;
    let y = x.add(&ph.add(&pv)?)?;

    let (yn2, ln2) = layer_norm(&y, &p.norm2, LN_EPS)?;
    macs += channel_project_macs(&yn2, &p.mlp_in);
    let mid = channel_project(&yn2, &p.mlp_in)?;
    let act = Tensor4 { data: mid.data.iter().map(|&v| activation::gelu(v)).collect(), ..mid };
    macs += channel_project_macs(&act, &p.mlp_out);
    let mlp = channel_project(&act, &p.mlp_out)?;
    let out = y.add(&mlp)?;

    Ok((out, StoneBlockCache { ln1, x_h, x_v, ln2, yn2, mid, act, macs }))
}

/// Backward pass of one block: accumulates parameter gradients into `grads`
/// and returns the gradient with respect to the block input.
pub fn stone_block_backward(
    p: &StoneBlockParams,
    cache: &StoneBlockCache,
    grad_out: &Tensor4,
    grads: &mut StoneBlockParams,
) -> Result<Tensor4> {
    // out = y + mlp(norm2(y))
    let g_act = channel_project_backward(&cache.act, &p.mlp_out, grad_out, &mut grads.mlp_out)?;
    let g_mid = Tensor4 {
        data: g_act
            .data
            .iter()
            .zip(&cache.mid.data)
            .map(|(&g, &m)| g * activation::gelu_grad(m))
            .collect(),
        ..g_act
    };
    let g_yn2 = channel_project_backward(&cache.yn2, &p.mlp_in, &g_mid, &mut grads.mlp_in)?;
    let g_y_mlp = layer_norm_backward(&p.norm2, &cache.ln2, &g_yn2, &mut grads.norm2);
    let g_y = grad_out.add(&g_y_mlp)?;

    // y = x + proj_h(shift_h(norm1(x))) + proj_v(shift_v(norm1(x)))
    let g_xh = channel_project_backward(&cache.x_h, &p.w_h, &g_y, &mut grads.w_h)?;
    let g_xv = channel_project_backward(&cache.x_v, &p.w_v, &g_y, &mut grads.w_v)?;
    let s = p.shift_size;
    let g_xn1 = axial_shift_backward(&g_xh, ShiftSpec::horizontal(s))
        .add(&axial_shift_backward(&g_xv, ShiftSpec::vertical(s)))?;
    let g_x_mix = layer_norm_backward(&p.norm1, &cache.ln1, &g_xn1, &mut grads.norm1);
    g_y.add(&g_x_mix)
}
