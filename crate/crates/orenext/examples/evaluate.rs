//! Explore how AP50 reacts to prediction quality: perfect predictions,
//! jittered boxes, duplicates, and misses.
//!
//! ```bash
//! cargo run --example evaluate
//! ```
//!
//! Matching is greedy in score order against the highest-IoU unmatched
//! ground truth at a 0.5 threshold; average precision integrates the
//! all-point interpolated precision envelope over recall.

use orenext::geometry::BoxF;
use orenext::harness::{eval_ap50, scene_gt, Prediction};
use orenext::synth::{generate_dataset, SceneSpec};

fn main() -> orenext::Result<()> {
    let spec = SceneSpec { seed: 8, ..SceneSpec::default() };
    let scenes = generate_dataset(&spec, 4)?;
    let gts: Vec<_> = scenes.iter().map(scene_gt).collect();
    let total: usize = gts.iter().map(Vec::len).sum();
    println!("{} scenes, {total} ground-truth instances", scenes.len());

    // Perfect: predictions are the ground truth with arbitrary scores.
    let perfect: Vec<Vec<Prediction>> = gts
        .iter()
        .map(|g| {
            g.iter()
                .enumerate()
                .map(|(k, inst)| Prediction {
                    score: 0.9 - 0.1 * k as f64,
                    box_: inst.box_,
                    mask: inst.mask.clone(),
                })
                .collect()
        })
        .collect();
    let r = eval_ap50(&perfect, &gts)?;
    println!("perfect predictions: AP50 box {} mask {}", r.ap50_box, r.ap50_mask);

    // Jitter: shift every box right by 30% of its width. Box IoU drops
    // but usually stays above 0.5; the masks are left exact.
    let jittered: Vec<Vec<Prediction>> = perfect
        .iter()
        .map(|ps| {
            ps.iter()
                .map(|p| {
                    let b = p.box_;
                    let dx = 0.3 * (b.x1 - b.x0);
                    Prediction {
                        score: p.score,
                        box_: BoxF::new(b.x0 + dx, b.y0, (b.x1 + dx).min(1.0), b.y1),
                        mask: p.mask.clone(),
                    }
                })
                .collect()
        })
        .collect();
    let r = eval_ap50(&jittered, &gts)?;
    println!("boxes shifted by 30%: AP50 box {:.4} mask {}", r.ap50_box, r.ap50_mask);

    // Drop every second prediction: recall is capped, precision stays 1.
    let half: Vec<Vec<Prediction>> = perfect
        .iter()
        .map(|ps| ps.iter().step_by(2).cloned().collect())
        .collect();
    let r = eval_ap50(&half, &gts)?;
    println!("every second prediction dropped: AP50 box {:.4}", r.ap50_box);

    // No predictions at all.
    let none: Vec<Vec<Prediction>> = scenes.iter().map(|_| Vec::new()).collect();
    let r = eval_ap50(&none, &gts)?;
    println!("no predictions: AP50 box {}", r.ap50_box);

    // Duplicates do not help: each ground truth matches at most once.
    let doubled: Vec<Vec<Prediction>> = perfect
        .iter()
        .map(|ps| {
            let mut v = ps.clone();
            v.extend(ps.iter().map(|p| Prediction {
                score: p.score * 0.5,
                box_: p.box_,
                mask: p.mask.clone(),
            }));
            v
        })
        .collect();
    let r = eval_ap50(&doubled, &gts)?;
    println!("every prediction duplicated at half score: AP50 box {}", r.ap50_box);
    Ok(())
}
