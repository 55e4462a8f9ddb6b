//! Run the axial-shift MLP backbone and the sparse feature pyramid on one
//! synthetic scene and print every feature map's shape and cost.
//!
//! ```bash
//! cargo run --example backbone_features
//! ```
//!
//! The backbone patch-embeds the image and alternates axial-shift token
//! mixing with per-token channel MLPs, halving resolution between stages.
//! The neck projects each stage to a common width, adds a top-down
//! pathway, and runs row/column/identity mixing blocks per level.

use orenext::backbone::{backbone_forward, BackboneConfig, BackboneParams};
use orenext::fpn::{fpn_forward, FpnConfig, FpnParams};
use orenext::harness::init_rng;
use orenext::synth::{generate_scene, SceneSpec};

fn main() -> orenext::Result<()> {
    let spec = SceneSpec { seed: 3, ..SceneSpec::default() };
    let scene = generate_scene(&spec, 0)?;
    let img = scene.image_tensor();
    println!("image: 3x{}x{} (RGB replicated from gray)", img.h, img.w);

    let bb_cfg = BackboneConfig {
        patch_size: 4,
        widths: vec![12, 24, 48],
        depths: vec![1, 1, 2],
        shift_size: 3,
        mlp_ratio: 1,
    };
    let mut rng = init_rng(1);
    let bb_params = BackboneParams::init(&bb_cfg, &mut rng)?;
    let (stages, bb_cache) = backbone_forward(&img, &bb_cfg, &bb_params)?;
    println!("\nbackbone stages (after {} blocks total):", bb_cfg.depths.iter().sum::<usize>());
    for (k, s) in stages.iter().enumerate() {
        println!("  stage {k}: {}x{}x{} tokens", s.c, s.h, s.w);
    }
    println!("  token-mixing + channel-MLP cost: {} MACs", bb_cache.macs);

    let fpn_cfg = FpnConfig { out_channels: 16, sparse_blocks: 2 };
    let dims: Vec<(usize, usize, usize)> = stages.iter().map(|s| (s.c, s.h, s.w)).collect();
    let fpn_params = FpnParams::init(&fpn_cfg, &dims, &mut rng)?;
    let (pyramid, fpn_cache) = fpn_forward(&stages, &fpn_cfg, &fpn_params)?;
    println!("\npyramid levels (lateral + top-down + mixing blocks):");
    for (k, p) in pyramid.iter().enumerate() {
        let energy: f64 = p.data.iter().map(|v| v * v).sum::<f64>() / p.data.len() as f64;
        println!("  level {k}: {}x{}x{}, mean squared activation {energy:.4}", p.c, p.h, p.w);
    }
    println!("  mixing cost: {} MACs", fpn_cache.macs);
    Ok(())
}
