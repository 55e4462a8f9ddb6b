//! The StoneMLP backbone: patch embedding, shift-mixing residual blocks,
//! and staged downsampling into multi-scale feature maps.

pub mod block;
pub mod shift;

pub use block::{
    shift_token_mix, stone_block_backward, stone_block_forward, StoneBlockCache, StoneBlockParams,
};
pub use shift::{axial_shift, axial_shift_backward, Axis, ShiftSpec};

use crate::error::{Error, Result};
use crate::tensor::{LinearMap, ParamGroup, Tensor4};

/// Stage plan of the backbone.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct BackboneConfig {
    /// Side of the square input patches consumed by the stem.
    pub patch_size: usize,
    /// Channel width of each stage.
    pub widths: Vec<usize>,
    /// Number of residual blocks per stage.
    pub depths: Vec<usize>,
    /// Channel-group count of the axial shifts.
    pub shift_size: usize,
    /// Expansion ratio of each block's MLP.
    pub mlp_ratio: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            patch_size: 4,
            widths: vec![48, 96, 192, 384],
            depths: vec![2, 2, 4, 2],
            shift_size: 3,
            mlp_ratio: 4,
        }
    }
}

impl BackboneConfig {
    pub fn stages(&self) -> usize {
        self.widths.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(Error::config("patch_size must be positive"));
        }
        if self.widths.is_empty() || self.widths.len() != self.depths.len() {
            return Err(Error::config(format!(
                "widths ({}) and depths ({}) must be non-empty and the same length",
                self.widths.len(),
                self.depths.len()
            )));
        }
        if self.mlp_ratio == 0 {
            return Err(Error::config("mlp_ratio must be positive"));
        }
        for (k, &w) in self.widths.iter().enumerate() {
            if self.depths[k] > 0 && w % self.shift_size != 0 {
                return Err(Error::config(format!(
                    "stage {k} width {w} is not divisible by shift size {}",
                    self.shift_size
                )));
            }
        }
        Ok(())
    }

    /// Spatial downsampling factor from the image to stage `k`.
    pub fn stride_at(&self, k: usize) -> usize {
        self.patch_size << k
    }
}

/// All learnable state of the backbone.
#[derive(Debug, Clone)]
pub struct BackboneParams {
    /// Stem: one flattened `patch_size x patch_size x 3` patch to `widths[0]`.
    pub embed: LinearMap,
    /// Residual blocks, outer index = stage.
    pub stages: Vec<Vec<StoneBlockParams>>,
    /// Between-stage merges: flattened 2x2 neighborhoods to the next width.
    pub merges: Vec<LinearMap>,
}

impl BackboneParams {
    pub fn init(cfg: &BackboneConfig, rng: &mut impl FnMut() -> f64) -> Result<Self> {
        cfg.validate()?;
        let embed = LinearMap::init(cfg.patch_size * cfg.patch_size * 3, cfg.widths[0], rng);
        let stages = cfg
            .widths
            .iter()
            .zip(&cfg.depths)
            .map(|(&w, &d)| {
                (0..d).map(|_| StoneBlockParams::init(w, cfg.shift_size, cfg.mlp_ratio, rng)).collect()
            })
            .collect();
        let merges = (0..cfg.stages().saturating_sub(1))
            .map(|k| LinearMap::init(4 * cfg.widths[k], cfg.widths[k + 1], rng))
            .collect();
        Ok(BackboneParams { embed, stages, merges })
    }

    pub fn zeros_like(&self) -> Self {
        BackboneParams {
            embed: LinearMap::zeros(self.embed.in_dim, self.embed.out_dim),
            stages: self
                .stages
                .iter()
                .map(|blocks| blocks.iter().map(|b| b.zeros_like()).collect())
                .collect(),
            merges: self.merges.iter().map(|m| LinearMap::zeros(m.in_dim, m.out_dim)).collect(),
        }
    }
}

impl ParamGroup for BackboneParams {
    fn for_each_param(&self, f: &mut dyn FnMut(f64)) {
        self.embed.for_each_param(f);
        for blocks in &self.stages {
            for b in blocks {
                b.for_each_param(f);
            }
        }
        for m in &self.merges {
            m.for_each_param(f);
        }
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut f64)) {
        self.embed.for_each_param_mut(f);
        for blocks in &mut self.stages {
            for b in blocks {
                b.for_each_param_mut(f);
            }
        }
        for m in &mut self.merges {
            m.for_each_param_mut(f);
        }
    }
}

/// Flattens each non-overlapping `ps x ps` spatial patch into the channel
/// dimension (order: channel-major, then row, then column within the patch)
/// and projects it with `map`. This is both the stem (`ps = patch_size`
/// over 3 input channels) and the between-stage merge (`ps = 2`).
pub fn space_to_channel_project(x: &Tensor4, ps: usize, map: &LinearMap) -> Result<Tensor4> {
    if x.h % ps != 0 || x.w % ps != 0 {
        return Err(Error::shape(format!(
            "spatial dims {}x{} not divisible by patch size {ps}",
            x.h, x.w
        )));
    }
    if map.in_dim != x.c * ps * ps {
        return Err(Error::shape(format!(
            "patch projection expects {} inputs, got {} channels x {ps}x{ps}",
            map.in_dim, x.c
        )));
    }
    let (oh, ow) = (x.h / ps, x.w / ps);
    let mut out = Tensor4::zeros(x.n, map.out_dim, oh, ow);
    let mut patch = vec![0.0; map.in_dim];
    let mut proj = vec![0.0; map.out_dim];
    for n in 0..x.n {
        for i in 0..oh {
            for j in 0..ow {
                for c in 0..x.c {
                    for di in 0..ps {
                        for dj in 0..ps {
                            patch[(c * ps + di) * ps + dj] = x.at(n, c, i * ps + di, j * ps + dj);
                        }
                    }
                }
                map.apply_vec(&patch, &mut proj);
                for (o, &v) in proj.iter().enumerate() {
                    *out.at_mut(n, o, i, j) = v;
                }
            }
        }
    }
    Ok(out)
}

/// Backward of [`space_to_channel_project`].
pub fn space_to_channel_backward(
    x: &Tensor4,
    ps: usize,
    map: &LinearMap,
    grad_out: &Tensor4,
    grad_map: &mut LinearMap,
) -> Result<Tensor4> {
    let (oh, ow) = (x.h / ps, x.w / ps);
    if grad_out.shape() != (x.n, map.out_dim, oh, ow) {
        return Err(Error::shape(format!(
            "space_to_channel_backward: upstream gradient {:?} does not match output",
            grad_out.shape()
        )));
    }
    let mut grad_x = x.zeros_like();
    let mut patch = vec![0.0; map.in_dim];
    for n in 0..x.n {
        for i in 0..oh {
            for j in 0..ow {
                for c in 0..x.c {
                    for di in 0..ps {
                        for dj in 0..ps {
                            patch[(c * ps + di) * ps + dj] = x.at(n, c, i * ps + di, j * ps + dj);
                        }
                    }
                }
                for o in 0..map.out_dim {
                    let g = grad_out.at(n, o, i, j);
                    if g == 0.0 {
                        continue;
                    }
                    grad_map.bias[o] += g;
                    for (k, &pv) in patch.iter().enumerate() {
                        grad_map.weight[k * map.out_dim + o] += pv * g;
                    }
                }
                for c in 0..x.c {
                    for di in 0..ps {
                        for dj in 0..ps {
                            let k = (c * ps + di) * ps + dj;
                            let mut acc = 0.0;
                            for o in 0..map.out_dim {
                                acc += map.w(k, o) * grad_out.at(n, o, i, j);
                            }
                            *grad_x.at_mut(n, c, i * ps + di, j * ps + dj) += acc;
                        }
                    }
                }
            }
        }
    }
    Ok(grad_x)
}

/// The stem on its own: an image `[n, 3, h, w]` to `[n, widths[0], h/ps, w/ps]`.
pub fn patch_embed(img: &Tensor4, cfg: &BackboneConfig, embed: &LinearMap) -> Result<Tensor4> {
    if img.c != 3 {
        return Err(Error::shape(format!("patch_embed expects 3 input channels, got {}", img.c)));
    }
    space_to_channel_project(img, cfg.patch_size, embed)
}

/// Everything the backward pass needs from one forward run.
#[derive(Debug, Clone)]
pub struct BackboneCache {
    img: Tensor4,
    /// Per stage, per block.
    blocks: Vec<Vec<StoneBlockCache>>,
    /// Final output of each stage (the merge inputs).
    stage_outputs: Vec<Tensor4>,
    /// Total projection MACs executed by the blocks.
    pub macs: u64,
}

/// Runs the backbone, returning one feature map per stage.
pub fn backbone_forward(
    img: &Tensor4,
    cfg: &BackboneConfig,
    params: &BackboneParams,
) -> Result<(Vec<Tensor4>, BackboneCache)> {
    cfg.validate()?;
    let needed = cfg.patch_size << (cfg.stages() - 1);
    if img.h % needed != 0 || img.w % needed != 0 {
        return Err(Error::shape(format!(
            "image {}x{} not divisible by patch size x 2^(stages-1) = {needed}",
            img.h, img.w
        )));
    }

    let mut x = patch_embed(img, cfg, &params.embed)?;
    let mut outputs = Vec::with_capacity(cfg.stages());
    let mut blocks = Vec::with_capacity(cfg.stages());
    let mut macs = 0u64;
    for k in 0..cfg.stages() {
        let mut stage_caches = Vec::with_capacity(params.stages[k].len());
        for bp in &params.stages[k] {
            let (next, cache) = stone_block_forward(&x, bp)?;
            macs += cache.macs;
            stage_caches.push(cache);
            x = next;
        }
        blocks.push(stage_caches);
        outputs.push(x.clone());
        if k + 1 < cfg.stages() {
            x = space_to_channel_project(&x, 2, &params.merges[k])?;
        }
    }
    let cache = BackboneCache { img: img.clone(), blocks, stage_outputs: outputs.clone(), macs };
    Ok((outputs, cache))
}

/// Backward through the whole backbone. `grad_stages` holds one gradient per
/// stage output (zeros where a stage receives no upstream signal). Parameter
/// gradients accumulate into `grads`; the image gradient is returned.
pub fn backbone_backward(
    cfg: &BackboneConfig,
    params: &BackboneParams,
    cache: &BackboneCache,
    grad_stages: &[Tensor4],
    grads: &mut BackboneParams,
) -> Result<Tensor4> {
    if grad_stages.len() != cfg.stages() {
        return Err(Error::shape(format!(
            "expected {} stage gradients, got {}",
            cfg.stages(),
            grad_stages.len()
        )));
    }
    let last = cfg.stages() - 1;
    let mut g = grad_stages[last].clone();
    for k in (0..cfg.stages()).rev() {
        for b in (0..params.stages[k].len()).rev() {
            g = stone_block_backward(
                &params.stages[k][b],
                &cache.blocks[k][b],
                &g,
                &mut grads.stages[k][b],
            )?;
        }
        if k > 0 {
            let g_merge = space_to_channel_backward(
                &cache.stage_outputs[k - 1],
                2,
                &params.merges[k - 1],
                &g,
                &mut grads.merges[k - 1],
            )?;
            g = grad_stages[k - 1].add(&g_merge)?;
        }
    }
    space_to_channel_backward(&cache.img, cfg.patch_size, &params.embed, &g, &mut grads.embed)
}

/// Closed-form MAC count of one block's four channel projections at
/// expansion ratio 1: `4 h w c^2`.
pub fn count_macs_stone(h: usize, w: usize, c: usize) -> u64 {
    4 * (h as u64) * (w as u64) * (c as u64) * (c as u64)
}
