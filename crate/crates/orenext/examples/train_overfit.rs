//! Overfit a small model on one synthetic scene, then reload the saved
//! checkpoint and score the training scene with AP50.
//!
//! ```bash
//! cargo run --example train_overfit
//! ```
//!
//! Training minimizes the four-term objective (box classification, sorted
//! point localization, coarse mask cross-entropy, and the point-match
//! term) with plain SGD and one step-decay milestone. Everything is
//! seeded, so this example prints the same numbers on every run.

use orenext::backbone::BackboneConfig;
use orenext::fpn::FpnConfig;
use orenext::harness::{
    eval_ap50, infer_scene, load_checkpoint, save_checkpoint, scene_gt, train_loop, ModelConfig,
    TrainConfig,
};
use orenext::synth::{generate_scene, SceneSpec};

fn main() -> orenext::Result<()> {
    let spec = SceneSpec {
        height: 32,
        width: 32,
        min_instances: 2,
        max_instances: 3,
        min_axis: 4.0,
        max_axis: 7.0,
        seed: 21,
        ..SceneSpec::default()
    };
    let scene = generate_scene(&spec, 0)?;
    println!("training scene: {} instances on {}x{} pixels", scene.instances.len(), scene.h, scene.w);

    let cfg = TrainConfig {
        lr: 0.05,
        total_steps: 60,
        batch_size: 1,
        seed: 2,
        model: ModelConfig {
            image_h: 32,
            image_w: 32,
            backbone: BackboneConfig {
                patch_size: 4,
                widths: vec![6, 12],
                depths: vec![1, 1],
                shift_size: 3,
                mlp_ratio: 1,
            },
            fpn: FpnConfig { out_channels: 8, sparse_blocks: 1 },
            coarse_hidden: 8,
            point_hidden: 8,
            roi_res: 7,
            fine_res: 14,
            train_points: 16,
            oversample_k: 3.0,
            importance_frac: 0.75,
            infer_points: 8,
        },
        ..TrainConfig::default()
    };

    let outcome = train_loop(std::slice::from_ref(&scene), &cfg)?;
    for t in outcome.trace.iter().step_by(10) {
        println!(
            "step {:>3}  lr {:<7.4}  total {:.4}  (cls {:.4} | ploc {:.4} | coarse {:.4} | pmat {:.4})",
            t.step + 1,
            t.lr,
            t.loss.total,
            t.loss.l_cls_b,
            t.loss.l_ploc_b,
            t.loss.l_coarse_m,
            t.loss.l_pmat_m
        );
    }
    let first = outcome.trace.first().expect("nonempty trace").loss.total;
    let last = outcome.trace.last().expect("nonempty trace").loss.total;
    println!("loss {first:.4} -> {last:.4} ({:.0}% of the start)", 100.0 * last / first);

    // Round-trip through a checkpoint and evaluate on the training scene.
    let path = std::env::temp_dir().join("orenext_example_overfit.ornx");
    save_checkpoint(&path, &cfg.model, &outcome.params)?;
    let (mc, params) = load_checkpoint(&path)?;
    println!("checkpoint round trip: {}", path.display());

    let boxes: Vec<_> = scene.instances.iter().map(|a| a.box_).collect();
    let preds = infer_scene(&params, &mc, &scene.image_tensor(), &boxes)?;
    let result = eval_ap50(&[preds], &[scene_gt(&scene)])?;
    println!("AP50 on the training scene: box {} mask {}", result.ap50_box, result.ap50_mask);
    Ok(())
}
