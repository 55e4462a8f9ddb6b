//! The SparseFPN neck.
//!
//! A standard feature pyramid — per-level lateral 1x1 projections to a
//! common channel width, coarse-to-fine top-down fusion with 2x
//! nearest-neighbor upsampling — followed at every level by two SparseMLP
//! blocks and a final 1x1 output projection.

pub mod sparse;

pub use sparse::{
    count_macs_sparse, sparse_mlp_backward, sparse_mlp_forward, SparseCache, SparseMLPParams,
};

use crate::error::{Error, Result};
use crate::tensor::linear::{channel_project, channel_project_backward};
use crate::tensor::{LinearMap, ParamGroup, Tensor4};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct FpnConfig {
    /// Channel width of every pyramid level.
    pub out_channels: usize,
    /// Number of SparseMLP blocks appended per level.
    pub sparse_blocks: usize,
}

impl Default for FpnConfig {
    fn default() -> Self {
        FpnConfig { out_channels: 64, sparse_blocks: 2 }
    }
}

impl FpnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.out_channels == 0 {
            return Err(Error::config("out_channels must be positive"));
        }
        Ok(())
    }
}

/// Learnable state of the neck. The SparseMLP row/column maps are sized for
/// a specific per-level resolution, so the parameters record the spatial
/// dimensions they were built for.
#[derive(Debug, Clone)]
pub struct FpnParams {
    /// One `stage_width -> out_channels` projection per backbone stage.
    pub laterals: Vec<LinearMap>,
    /// Per level: `sparse_blocks` SparseMLP blocks.
    pub blocks: Vec<Vec<SparseMLPParams>>,
    /// Per level: the final 1x1 output projection.
    pub out_proj: Vec<LinearMap>,
}

impl FpnParams {
    /// `stage_dims` holds each backbone stage's `(channels, h, w)`.
    pub fn init(
        cfg: &FpnConfig,
        stage_dims: &[(usize, usize, usize)],
        rng: &mut impl FnMut() -> f64,
    ) -> Result<Self> {
        cfg.validate()?;
        if stage_dims.is_empty() {
            return Err(Error::config("FPN needs at least one backbone stage"));
        }
        let oc = cfg.out_channels;
        let laterals = stage_dims.iter().map(|&(c, _, _)| LinearMap::init(c, oc, rng)).collect();
        let blocks = stage_dims
            .iter()
            .map(|&(_, h, w)| {
                (0..cfg.sparse_blocks).map(|_| SparseMLPParams::init(oc, h, w, rng)).collect()
            })
            .collect();
        let out_proj = stage_dims.iter().map(|_| LinearMap::init(oc, oc, rng)).collect();
        Ok(FpnParams { laterals, blocks, out_proj })
    }

    pub fn zeros_like(&self) -> Self {
        FpnParams {
            laterals: self.laterals.iter().map(|m| LinearMap::zeros(m.in_dim, m.out_dim)).collect(),
            blocks: self
                .blocks
                .iter()
                .map(|level| level.iter().map(|b| b.zeros_like()).collect())
                .collect(),
            out_proj: self.out_proj.iter().map(|m| LinearMap::zeros(m.in_dim, m.out_dim)).collect(),
        }
    }

    pub fn levels(&self) -> usize {
        self.laterals.len()
    }
}

impl ParamGroup for FpnParams {
    fn for_each_param(&self, f: &mut dyn FnMut(f64)) {
        for m in &self.laterals {
            m.for_each_param(f);
        }
        for level in &self.blocks {
            for b in level {
                b.for_each_param(f);
            }
        }
        for m in &self.out_proj {
            m.for_each_param(f);
        }
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut f64)) {
        for m in &mut self.laterals {
            m.for_each_param_mut(f);
        }
        for level in &mut self.blocks {
            for b in level {
                b.for_each_param_mut(f);
            }
        }
        for m in &mut self.out_proj {
            m.for_each_param_mut(f);
        }
    }
}

/// 2x nearest-neighbor upsampling: `out[i, j] = in[i/2, j/2]`.
pub fn upsample2x_nearest(x: &Tensor4) -> Tensor4 {
    let mut out = Tensor4::zeros(x.n, x.c, 2 * x.h, 2 * x.w);
    for n in 0..x.n {
        for c in 0..x.c {
            for i in 0..2 * x.h {
                for j in 0..2 * x.w {
                    *out.at_mut(n, c, i, j) = x.at(n, c, i / 2, j / 2);
                }
            }
        }
    }
    out
}

/// Adjoint of [`upsample2x_nearest`]: sums each 2x2 cell.
pub fn upsample2x_nearest_backward(grad_out: &Tensor4) -> Tensor4 {
    let mut grad_in = Tensor4::zeros(grad_out.n, grad_out.c, grad_out.h / 2, grad_out.w / 2);
    for n in 0..grad_out.n {
        for c in 0..grad_out.c {
            for i in 0..grad_out.h {
                for j in 0..grad_out.w {
                    *grad_in.at_mut(n, c, i / 2, j / 2) += grad_out.at(n, c, i, j);
                }
            }
        }
    }
    grad_in
}

/// The multi-scale output feature maps, finest level first.
pub type FeaturePyramid = Vec<Tensor4>;

/// Forward intermediates of one neck pass.
#[derive(Debug, Clone)]
pub struct FpnCache {
    /// Backbone stage inputs (the lateral projection inputs).
    stages: Vec<Tensor4>,
    /// Per level, per block.
    sparse: Vec<Vec<SparseCache>>,
    /// Output of the last SparseMLP block per level (output projection input).
    mixed: Vec<Tensor4>,
    /// Total MACs executed by the SparseMLP blocks.
    pub macs: u64,
}

/// Runs the neck over the backbone stages, producing one output map per
/// level, all with `cfg.out_channels` channels.
pub fn fpn_forward(
    stages: &[Tensor4],
    cfg: &FpnConfig,
    params: &FpnParams,
) -> Result<(FeaturePyramid, FpnCache)> {
    cfg.validate()?;
    if stages.len() != params.levels() {
        return Err(Error::shape(format!(
            "{} stages but {} lateral projections",
            stages.len(),
            params.levels()
        )));
    }
    // Lateral projections.
    let mut laterals = Vec::with_capacity(stages.len());
    for (s, m) in stages.iter().zip(&params.laterals) {
        laterals.push(channel_project(s, m)?);
    }
    // Top-down pathway, coarsest to finest.
    let levels = stages.len();
    let mut fused = laterals;
    for k in (0..levels.saturating_sub(1)).rev() {
        let up = upsample2x_nearest(&fused[k + 1]);
        if up.shape() != fused[k].shape() {
            return Err(Error::shape(format!(
                "level {k} is {:?} but 2x-upsampled level {} is {:?}: resolutions must nest",
                fused[k].shape(),
                k + 1,
                up.shape()
            )));
        }
        fused[k] = fused[k].add(&up)?;
    }
    // Per-level SparseMLP blocks and output projection.
    let mut outputs = Vec::with_capacity(levels);
    let mut sparse = Vec::with_capacity(levels);
    let mut mixed = Vec::with_capacity(levels);
    let mut macs = 0u64;
    for k in 0..levels {
        let mut x = fused[k].clone();
        let mut caches = Vec::with_capacity(params.blocks[k].len());
        for b in &params.blocks[k] {
            let (next, cache) = sparse_mlp_forward(&x, b)?;
            macs += cache.macs;
            caches.push(cache);
            x = next;
        }
        mixed.push(x.clone());
        sparse.push(caches);
        outputs.push(channel_project(&x, &params.out_proj[k])?);
    }
    let cache = FpnCache { stages: stages.to_vec(), sparse, mixed, macs };
    Ok((outputs, cache))
}

/// Backward through the neck: accumulates parameter gradients into `grads`
/// and returns per-stage input gradients.
pub fn fpn_backward(
    cfg: &FpnConfig,
    params: &FpnParams,
    cache: &FpnCache,
    grad_outs: &[Tensor4],
    grads: &mut FpnParams,
) -> Result<Vec<Tensor4>> {
    let levels = params.levels();
    if grad_outs.len() != levels {
        return Err(Error::shape(format!(
            "expected {levels} output gradients, got {}",
            grad_outs.len()
        )));
    }
    let _ = cfg;
    // Per-level heads in reverse: out_proj, then the SparseMLP blocks.
    let mut g_fused = Vec::with_capacity(levels);
    for k in 0..levels {
        let mut g = channel_project_backward(
            &cache.mixed[k],
            &params.out_proj[k],
            &grad_outs[k],
            &mut grads.out_proj[k],
        )?;
        for b in (0..params.blocks[k].len()).rev() {
            g = sparse_mlp_backward(
                &params.blocks[k][b],
                &cache.sparse[k][b],
                &g,
                &mut grads.blocks[k][b],
            )?;
        }
        g_fused.push(g);
    }
    // Top-down pathway reversal: finest to coarsest, pushing gradients up.
    for k in 0..levels.saturating_sub(1) {
        let up_grad = upsample2x_nearest_backward(&g_fused[k]);
        g_fused[k + 1].add_assign(&up_grad)?;
    }
    // Lateral projections.
    let mut grad_stages = Vec::with_capacity(levels);
    for k in 0..levels {
        grad_stages.push(channel_project_backward(
            &cache.stages[k],
            &params.laterals[k],
            &g_fused[k],
            &mut grads.laterals[k],
        )?);
    }
    Ok(grad_stages)
}

/// Jacobian-support receptive field of a stack of `depth` SparseMLP blocks.
///
/// Builds `depth` randomly-initialized blocks over a `c x h x w` input (the
/// stack is linear, so one backward pass computes the exact Jacobian row),
/// then marks every input position `(i', j')` where some channel's
/// derivative of the summed output channels at `probe` exceeds `1e-12`.
///
/// Returns a row-major `h*w` boolean grid.
pub fn receptive_field_mask(
    depth: usize,
    c: usize,
    h: usize,
    w: usize,
    probe: (usize, usize),
    seed: u64,
) -> Result<Vec<bool>> {
    if probe.0 >= h || probe.1 >= w {
        return Err(Error::config(format!(
            "probe ({}, {}) outside {h}x{w} grid",
            probe.0, probe.1
        )));
    }
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
    let mut rng = move || {
        // splitmix64, mapped to [0, 1)
        state = state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64
    };
    let blocks: Vec<SparseMLPParams> =
        (0..depth).map(|_| SparseMLPParams::init(c, h, w, &mut rng)).collect();

    let x = Tensor4::from_fn(1, c, h, w, |_, _, _, _| rng() - 0.5);
    let mut caches = Vec::with_capacity(depth);
    let mut cur = x;
    for b in &blocks {
        let (next, cache) = sparse_mlp_forward(&cur, b)?;
        caches.push(cache);
        cur = next;
    }
    let mut g = Tensor4::zeros(1, c, h, w);
    for ch in 0..c {
        *g.at_mut(0, ch, probe.0, probe.1) = 1.0;
    }
    for (b, cache) in blocks.iter().zip(&caches).rev() {
        let mut sink = b.zeros_like();
        g = sparse_mlp_backward(b, cache, &g, &mut sink)?;
    }
    let mut mask = vec![false; h * w];
    for i in 0..h {
        for j in 0..w {
            mask[i * w + j] = (0..c).any(|ch| g.at(0, ch, i, j).abs() > 1e-12);
        }
    }
    Ok(mask)
}
